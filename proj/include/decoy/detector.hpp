#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "decoy/access_log.hpp"
#include "decoy/device.hpp"
#include "decoy/policy.hpp"

namespace decoy {

enum class DetectionRule {
  BgSensorAccess,
  MicWithoutIndicator,
  BgUpload,
  SmsSendNoInteraction,
  LocationPolling,
  UnnecessaryAccess,
  BgCameraAccess,
};

inline constexpr std::array<DetectionRule, 7> kAllRules = {
    DetectionRule::BgSensorAccess,       DetectionRule::MicWithoutIndicator,
    DetectionRule::BgUpload,             DetectionRule::SmsSendNoInteraction,
    DetectionRule::LocationPolling,      DetectionRule::UnnecessaryAccess,
    DetectionRule::BgCameraAccess,
};

std::string_view to_string(DetectionRule r) noexcept;
std::optional<DetectionRule> rule_from_string(std::string_view s) noexcept;

struct DetectionConfig {
  int bg_sensor_reads = 20;
  VirtualMs bg_sensor_window_ms = 60'000;
  std::int64_t bg_upload_bytes = 64 * 1024;
  VirtualMs bg_upload_window_ms = 60'000;
  VirtualMs interaction_window_ms = 5'000;
  int location_reads_per_minute = 6;
  int location_sustained_minutes = 3;
};

struct PolicyChange {
  std::vector<DeceitPolicy> policies;
  friend bool operator==(const PolicyChange&, const PolicyChange&) = default;
};

struct Alert {
  DetectionRule rule = DetectionRule::BgUpload;
  std::string app_id;
  std::vector<std::uint64_t> evidence;
  /// Permissions appearing in the evidence.
  std::set<PermissionKind> permissions;
  VirtualMs t_raised = 0;
  PolicyChange recommended;

  /// Stable identifier "<rule>:<app>".
  std::string id() const;
};

nlohmann::json alert_to_json(const Alert& a);

struct TimeWindow {
  VirtualMs from = std::numeric_limits<VirtualMs>::min();
  VirtualMs to = std::numeric_limits<VirtualMs>::max();
  bool contains(VirtualMs t) const { return t >= from && t <= to; }
};

/// Everything the rules may look at. Rules are pure functions of this.
struct DetectionInput {
  std::span<const AccessLogEntry> entries;
  std::map<std::string, AppManifest> manifests;
  std::vector<UserInteractionEvent> interactions;
};

/// Only entries with action=Original count as privacy-affecting evidence. One alert per
/// (rule, app), carrying every matching entry.
std::vector<Alert> evaluate(const DetectionInput& input, TimeWindow window = {},
                            const DetectionConfig& config = {});

/// Mitigation template for the alert's rule, instantiated for its app.
PolicyChange recommend_action(const Alert& alert);

/// Independent per-entry predicate used to validate evidence.
bool evidence_matches(DetectionRule rule, const AccessLogEntry& e, const DetectionInput& input,
                      const DetectionConfig& config = {});

}  // namespace decoy
