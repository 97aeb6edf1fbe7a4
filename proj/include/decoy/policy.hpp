#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "decoy/hooking.hpp"
#include "decoy/types.hpp"
#include "decoy/value.hpp"

namespace decoy {

// ---- actions -------------------------------------------------------------

struct Allow {
  friend bool operator==(const Allow&, const Allow&) = default;
};
struct Block {
  friend bool operator==(const Block&, const Block&) = default;
};
struct SpoofStatic {
  Value value;
  friend bool operator==(const SpoofStatic&, const SpoofStatic&) = default;
};
struct SpoofPool {
  std::string pool_id;
  friend bool operator==(const SpoofPool&, const SpoofPool&) = default;
};
struct ConstantSensor {
  std::array<double, 3> value{};
  friend bool operator==(const ConstantSensor&, const ConstantSensor&) = default;
};
struct BlurFrame {
  int radius = 0;
  friend bool operator==(const BlurFrame&, const BlurFrame&) = default;
};
struct NoiseAudio {
  friend bool operator==(const NoiseAudio&, const NoiseAudio&) = default;
};
struct MaskSmsBodyKeepSender {
  friend bool operator==(const MaskSmsBodyKeepSender&, const MaskSmsBodyKeepSender&) = default;
};
struct MaskCalendarFields {
  std::vector<std::string> fields;  // any of: title, location, start, end
  friend bool operator==(const MaskCalendarFields&, const MaskCalendarFields&) = default;
};
struct FixedLocation {
  double lat = 0.0;
  double lon = 0.0;
  friend bool operator==(const FixedLocation&, const FixedLocation&) = default;
};
struct ReplayTrace {
  std::string trace_id;
  friend bool operator==(const ReplayTrace&, const ReplayTrace&) = default;
};

using DeceitAction = std::variant<Allow, Block, SpoofStatic, SpoofPool, ConstantSensor, BlurFrame,
                                  NoiseAudio, MaskSmsBodyKeepSender, MaskCalendarFields,
                                  FixedLocation, ReplayTrace>;

inline constexpr std::string_view kSmsMask = "(redacted)";
inline constexpr std::string_view kCalendarMask = "(masked)";

bool is_block(const DeceitAction& a) noexcept;
bool is_allow(const DeceitAction& a) noexcept;
/// SpoofStatic, SpoofPool or any transform.
bool is_spoof(const DeceitAction& a) noexcept;
/// 2 for Block, 1 for spoofing, 0 for Allow.
int severity(const DeceitAction& a) noexcept;
std::string_view action_kind(const DeceitAction& a) noexcept;

/// Throws IncompatibleTransform when `a` cannot apply to permission `p`.
void check_compatible(const DeceitAction& a, PermissionKind p);

/// The spoof each permission gets when nothing more specific is configured.
DeceitAction default_spoof(PermissionKind p);

nlohmann::json action_to_json(const DeceitAction& a);
DeceitAction action_from_json(const nlohmann::json& j);

// ---- policies ------------------------------------------------------------

struct ContextCondition {
  enum class Kind { Always, BackgroundOnly, ForegroundOnly, ManualToggle };
  Kind kind = Kind::Always;
  std::string toggle;  // ManualToggle only

  static ContextCondition always() { return {}; }
  static ContextCondition background_only() { return {Kind::BackgroundOnly, {}}; }
  static ContextCondition foreground_only() { return {Kind::ForegroundOnly, {}}; }
  static ContextCondition manual(std::string name) { return {Kind::ManualToggle, std::move(name)}; }

  friend bool operator==(const ContextCondition&, const ContextCondition&) = default;
};

nlohmann::json context_to_json(const ContextCondition& c);
ContextCondition context_from_json(const nlohmann::json& j);

inline constexpr std::string_view kAnyApp = "*";

struct DeceitPolicy {
  std::string app_id{kAnyApp};
  PermissionKind permission = PermissionKind::Location;
  DeceitAction action = Allow{};
  ContextCondition context;
  bool enabled = true;

  friend bool operator==(const DeceitPolicy&, const DeceitPolicy&) = default;
};

nlohmann::json policy_to_json(const DeceitPolicy& p);
DeceitPolicy policy_from_json(const nlohmann::json& j);

struct PoolDefinition {
  std::string pool_id;
  PermissionKind permission = PermissionKind::Contacts;
  std::vector<Value> values;
  friend bool operator==(const PoolDefinition&, const PoolDefinition&) = default;
};

/// Recorded sensor samples per channel, replayed in order and wrapped at the end.
struct SensorTrace {
  std::string trace_id;
  std::map<PermissionKind, std::vector<SensorReading>> channels;
  friend bool operator==(const SensorTrace&, const SensorTrace&) = default;
};

inline constexpr std::string_view kContactPoolId = "contacts-100";

/// 100 synthetic contacts from a fixed seed.
PoolDefinition default_contact_pool();

/// Immutable snapshot of the policy database.
struct PolicyDocument {
  std::int64_t version = 0;
  std::vector<DeceitPolicy> policies;
  std::map<std::string, bool> toggles;
  std::map<std::string, PoolDefinition> pools;
  std::map<std::string, SensorTrace> traces;

  friend bool operator==(const PolicyDocument&, const PolicyDocument&) = default;
};

/// Schema: { version, policies:[{app,permission,action,context,enabled}], toggles, pools, traces }.
nlohmann::json document_to_json(const PolicyDocument& d);
PolicyDocument document_from_json(const nlohmann::json& j);

struct ResolvedAction {
  DeceitAction action = Allow{};
  /// The policy that produced the action; empty for the default Allow.
  std::optional<DeceitPolicy> source;
};

/// Pure resolution over one snapshot: app-specific beats wildcard, then Block > spoof > Allow,
/// then conditional contexts beat Always, then the most recently stored policy wins.
ResolvedAction resolve(const PolicyDocument& doc, std::string_view app_id, PermissionKind permission,
                       ActivityState state);

struct DeceitQuery {
  std::string app_id;
  PermissionKind permission = PermissionKind::Location;
  ActivityState activity_state = ActivityState::Background;
};

struct DeceitResponse {
  ResolvedAction resolved;
  std::int64_t policy_version = 0;
};

/// Versioned policy database. Many readers, one writer at a time; writes persist atomically
/// when a path is configured.
class PolicyStore {
 public:
  PolicyStore();
  explicit PolicyStore(std::filesystem::path path);

  std::shared_ptr<const PolicyDocument> snapshot() const;
  std::int64_t version() const { return snapshot()->version; }

  /// Upserts by (app, permission, context). Storing an identical policy is a no-op.
  std::int64_t set_policy(const DeceitPolicy& policy);
  /// Returns the new version, or nullopt when nothing matched.
  std::optional<std::int64_t> remove_policy(std::string_view app_id, PermissionKind permission,
                                            const ContextCondition& context);
  std::int64_t set_toggle(const std::string& name, bool on);
  std::int64_t add_pool(PoolDefinition pool);
  std::int64_t add_trace(SensorTrace trace);
  /// Replaces everything; the incoming version is ignored and the store's version bumps.
  std::int64_t replace(PolicyDocument doc);
  std::int64_t clear_policies();

  ResolvedAction resolve(std::string_view app_id, PermissionKind permission, ActivityState state) const;
  DeceitResponse query_bridge(const DeceitQuery& query) const;
  std::uint64_t queries_served() const { return queries_.load(); }

  const std::optional<std::filesystem::path>& path() const { return path_; }

 private:
  template <class Fn>
  std::int64_t mutate(Fn&& fn);
  void persist(const PolicyDocument& doc) const;

  mutable std::shared_mutex mu_;
  std::mutex write_mu_;
  std::shared_ptr<const PolicyDocument> doc_;
  std::optional<std::filesystem::path> path_;
  mutable std::atomic<std::uint64_t> queries_{0};
};

/// Synthesises deceived values. Holds the seeded RNG for pool picks and noise plus the replay
/// cursors, so identical seeds give identical spoofed streams.
class Deceiver {
 public:
  explicit Deceiver(const PolicyStore& store, std::uint64_t seed = 1);

  Value spoof_value(PermissionKind permission, const DeceitAction& action,
                    const std::optional<Value>& original);

 private:
  const PolicyStore& store_;
  std::mutex mu_;
  std::mt19937_64 rng_;
  std::map<std::pair<std::string, PermissionKind>, std::size_t> cursors_;
};

/// Stateless pieces of spoof_value, usable without a store.
Frame box_blur(const Frame& frame, int radius);
AudioChunk noise_audio(std::mt19937_64& rng);
SmsList mask_sms_bodies(const SmsList& inbox);
CalendarList mask_calendar(const CalendarList& events, const std::vector<std::string>& fields);

inline constexpr std::string_view kDeceiverOwner = "deceiver";

/// Installs one call-time-resolving hook per guarded method the manifest grants.
std::vector<HookHandle> install_deceiving_hooks(HookEngine& engine, AppProcess& process,
                                                const PolicyStore& store, Deceiver& deceiver,
                                                const HiddenApiBypass* bypass);

}  // namespace decoy
