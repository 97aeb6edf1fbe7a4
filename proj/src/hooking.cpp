#include "decoy/hooking.hpp"

#include <algorithm>
#include <exception>

#include "decoy/error.hpp"

namespace decoy {
namespace {

std::string describe(std::exception_ptr ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const std::exception& e) {
    return e.what();
  } catch (...) {
    return "non-standard exception";
  }
}

}  // namespace

DispatchOutcome dispatch_hooked(VirtualDevice& device, const FunctionSlot& slot, const CallContext& ctx,
                                const ArgList& args) {
  // Copy so a hook that (un)installs hooks cannot invalidate iteration.
  const auto chain = slot.hook_chain;

  MethodHookParam param;
  param.args = args;
  param.context = HookContext{ctx.app_id, ctx.permission, ctx.state, ctx.now};

  std::optional<Value> original;
  auto run_original = [&]() -> const Value& {
    if (!original) original = slot.original_target(device, ctx, args);
    return *original;
  };
  auto fall_back = [&](const HookDescriptor& hook, std::exception_ptr ep) {
    device.record_fault(HookFault{hook.owner, describe(ep), ctx.app_id, slot.method.key(), ctx.now});
    DispatchOutcome out;
    out.value = run_original();
    out.action = AccessAction::Original;
    out.original_ran = true;
    return out;
  };

  // Number of hooks whose before phase ran; their after phases run in reverse.
  std::size_t entered = 0;
  for (; entered < chain.size(); ++entered) {
    const auto& hook = *chain[entered];
    if (hook.before) {
      try {
        hook.before(param);
      } catch (...) {
        return fall_back(hook, std::current_exception());
      }
    }
    if (param.result.has_value()) {
      param.return_early = true;
      ++entered;
      break;
    }
  }

  if (!param.return_early) param.result = run_original();

  for (std::size_t i = entered; i-- > 0;) {
    const auto& hook = *chain[i];
    if (!hook.after) continue;
    try {
      hook.after(param);
    } catch (...) {
      return fall_back(hook, std::current_exception());
    }
  }

  DispatchOutcome out;
  out.original_ran = original.has_value();
  out.value = param.result ? std::move(*param.result) : Value{Null{}};
  if (param.return_early)
    out.action = AccessAction::Blocked;
  else if (!(out.value == *original))
    out.action = AccessAction::Spoofed;
  else
    out.action = AccessAction::Original;
  return out;
}

HiddenApiBypass HookEngine::bypass_hidden_api(std::string_view owner) {
  auto it = granted_.find(owner);
  if (it == granted_.end()) it = granted_.emplace(std::string(owner), next_token_++).first;
  return HiddenApiBypass(it->first, it->second);
}

HookHandle HookEngine::install_hook(AppProcess& process, HookDescriptor descriptor, const HiddenApiBypass* bypass) {
  if (!descriptor.before && !descriptor.after)
    throw Error(ErrorCode::InvalidHook, "hook needs a before or after behavior");
  FunctionSlot* slot = process.table.find(descriptor.target);
  if (!slot) throw Error(ErrorCode::UnknownMethod, descriptor.target);
  if (slot->method.hidden) {
    const bool ok = bypass && bypass->owner() == descriptor.owner && granted_.contains(bypass->owner()) &&
                    granted_.at(bypass->owner()) == bypass->token_;
    if (!ok) throw Error(ErrorCode::HiddenApiDenied, descriptor.target + " for " + descriptor.owner);
  }

  descriptor.id = next_id_++;
  const HookHandle handle{descriptor.id, process.app_id, descriptor.target};
  auto& chain = slot->hook_chain;
  // First position whose priority is <= ours: equal priorities end up LIFO.
  auto pos = std::find_if(chain.begin(), chain.end(),
                          [&](const auto& h) { return h->priority <= descriptor.priority; });
  chain.insert(pos, std::make_shared<const HookDescriptor>(std::move(descriptor)));
  live_.insert(handle.id);
  return handle;
}

void HookEngine::uninstall_hook(const HookHandle& handle) {
  if (!live_.contains(handle.id)) throw Error(ErrorCode::UnknownHandle, std::to_string(handle.id));
  auto& proc = device_.process(handle.app_id);
  FunctionSlot* slot = proc.table.find(handle.method);
  if (!slot) throw Error(ErrorCode::UnknownHandle, std::to_string(handle.id));
  std::erase_if(slot->hook_chain, [&](const auto& h) { return h->id == handle.id; });
  live_.erase(handle.id);
}

}  // namespace decoy
