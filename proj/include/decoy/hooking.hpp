#pragma once

#include <any>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "decoy/device.hpp"

namespace decoy {

using HookId = std::uint64_t;

struct HookContext {
  std::string app_id;
  PermissionKind permission = PermissionKind::Location;
  ActivityState activity_state = ActivityState::Background;
  VirtualMs time = 0;
};

/// State shared by every hook on one call.
struct MethodHookParam {
  ArgList args;
  std::optional<Value> result;
  /// Set by dispatch when a before-hook supplied the result.
  bool return_early = false;
  HookContext context;
  /// Per-call scratch space keyed by hook owner.
  std::map<std::string, std::any, std::less<>> extra;
};

using HookBehavior = std::function<void(MethodHookParam&)>;

struct HookDescriptor {
  HookId id = 0;
  std::string target;  // method key
  HookBehavior before;
  HookBehavior after;
  std::string owner;
  int priority = 0;
};

struct HookHandle {
  HookId id = 0;
  std::string app_id;
  std::string method;
  friend bool operator==(const HookHandle&, const HookHandle&) = default;
};

/// Capability that lets one installer hook hidden methods.
class HiddenApiBypass {
 public:
  const std::string& owner() const { return owner_; }

 private:
  friend class HookEngine;
  HiddenApiBypass(std::string owner, std::uint64_t token) : owner_(std::move(owner)), token_(token) {}
  std::string owner_;
  std::uint64_t token_ = 0;
};

struct DispatchOutcome {
  Value value;
  AccessAction action = AccessAction::Original;
  bool original_ran = false;
};

/// Runs the hook chain of `slot` around its original target.
///
/// Before-hooks run in chain order until one supplies a result; the original is then skipped.
/// After-hooks of every hook whose before phase ran execute in reverse chain order. A hook that
/// throws is recorded as a HookFault on the device and the call completes through the original.
DispatchOutcome dispatch_hooked(VirtualDevice& device, const FunctionSlot& slot,
                                const CallContext& ctx, const ArgList& args);

class HookEngine {
 public:
  explicit HookEngine(VirtualDevice& device) : device_(device) {}

  HiddenApiBypass bypass_hidden_api(std::string_view owner);

  /// `descriptor.id` is assigned here. Chain order: higher priority first, ties LIFO.
  HookHandle install_hook(AppProcess& process, HookDescriptor descriptor,
                          const HiddenApiBypass* bypass = nullptr);
  void uninstall_hook(const HookHandle& handle);

  std::size_t installed() const { return live_.size(); }

 private:
  VirtualDevice& device_;
  HookId next_id_ = 1;
  std::uint64_t next_token_ = 0x5eed;
  std::map<std::string, std::uint64_t, std::less<>> granted_;
  std::set<HookId> live_;
};

}  // namespace decoy
