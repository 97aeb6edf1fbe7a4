#include "decoy/detector.hpp"

#include <algorithm>
#include <deque>

namespace decoy {

std::string_view to_string(DetectionRule r) noexcept {
  switch (r) {
    case DetectionRule::BgSensorAccess: return "BgSensorAccess";
    case DetectionRule::MicWithoutIndicator: return "MicWithoutIndicator";
    case DetectionRule::BgUpload: return "BgUpload";
    case DetectionRule::SmsSendNoInteraction: return "SmsSendNoInteraction";
    case DetectionRule::LocationPolling: return "LocationPolling";
    case DetectionRule::UnnecessaryAccess: return "UnnecessaryAccess";
    case DetectionRule::BgCameraAccess: return "BgCameraAccess";
  }
  return "?";
}

std::optional<DetectionRule> rule_from_string(std::string_view s) noexcept {
  for (auto r : kAllRules)
    if (to_string(r) == s) return r;
  return std::nullopt;
}

std::string Alert::id() const { return std::string(to_string(rule)) + ":" + app_id; }

nlohmann::json alert_to_json(const Alert& a) {
  nlohmann::json policies = nlohmann::json::array();
  for (const auto& p : a.recommended.policies) policies.push_back(policy_to_json(p));
  nlohmann::json perms = nlohmann::json::array();
  for (auto p : a.permissions) perms.push_back(to_string(p));
  return {{"id", a.id()},
          {"rule", to_string(a.rule)},
          {"app", a.app_id},
          {"evidence", a.evidence},
          {"permissions", perms},
          {"t_raised", a.t_raised},
          {"recommended", {{"policies", policies}}}};
}

namespace {

bool interacted_recently(const DetectionInput& input, const std::string& app, VirtualMs t, VirtualMs window) {
  return std::any_of(input.interactions.begin(), input.interactions.end(), [&](const UserInteractionEvent& ev) {
    return ev.app_id == app && ev.timestamp <= t && ev.timestamp >= t - window;
  });
}

/// Entries that lie in some span of `width` ms whose total weight exceeds (or reaches) the limit.
std::vector<const AccessLogEntry*> dense_spans(const std::vector<const AccessLogEntry*>& xs, VirtualMs width,
                                               std::int64_t limit, bool strictly_greater,
                                               std::int64_t (*weight)(const AccessLogEntry&)) {
  std::vector<bool> flagged(xs.size(), false);
  std::int64_t sum = 0;
  std::size_t lo = 0;
  for (std::size_t hi = 0; hi < xs.size(); ++hi) {
    sum += weight(*xs[hi]);
    while (xs[hi]->t - xs[lo]->t >= width) sum -= weight(*xs[lo++]);
    if (strictly_greater ? sum > limit : sum >= limit)
      for (std::size_t k = lo; k <= hi; ++k) flagged[k] = true;
  }
  std::vector<const AccessLogEntry*> out;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (flagged[i]) out.push_back(xs[i]);
  return out;
}

std::int64_t count_one(const AccessLogEntry&) { return 1; }
std::int64_t count_bytes(const AccessLogEntry& e) { return e.bytes; }

}  // namespace

bool evidence_matches(DetectionRule rule, const AccessLogEntry& e, const DetectionInput& input,
                      const DetectionConfig& config) {
  if (e.action != AccessAction::Original) return false;
  const bool bg = e.state == ActivityState::Background;
  switch (rule) {
    case DetectionRule::BgSensorAccess: return bg && is_motion_sensor(e.permission);
    case DetectionRule::MicWithoutIndicator: return e.permission == PermissionKind::Microphone && !e.indicator_shown;
    case DetectionRule::BgUpload: return bg && e.permission == PermissionKind::Internet && e.bytes > 0;
    case DetectionRule::SmsSendNoInteraction:
      return e.permission == PermissionKind::SmsSend &&
             !interacted_recently(input, e.app_id, e.t, config.interaction_window_ms);
    case DetectionRule::LocationPolling: return e.permission == PermissionKind::Location;
    case DetectionRule::UnnecessaryAccess: {
      auto it = input.manifests.find(e.app_id);
      return it != input.manifests.end() && !it->second.feature_needs(e.permission);
    }
    case DetectionRule::BgCameraAccess: return bg && e.permission == PermissionKind::Camera;
  }
  return false;
}

std::vector<Alert> evaluate(const DetectionInput& input, TimeWindow window, const DetectionConfig& config) {
  std::map<std::string, std::vector<const AccessLogEntry*>> by_app;
  for (const auto& e : input.entries)
    if (window.contains(e.t) && e.action == AccessAction::Original) by_app[e.app_id].push_back(&e);

  std::vector<Alert> alerts;
  for (const auto& [app, entries] : by_app) {
    auto matching = [&](DetectionRule rule) {
      std::vector<const AccessLogEntry*> out;
      for (const auto* e : entries)
        if (evidence_matches(rule, *e, input, config)) out.push_back(e);
      return out;
    };

    for (auto rule : kAllRules) {
      auto candidates = matching(rule);
      std::vector<const AccessLogEntry*> evidence;
      switch (rule) {
        case DetectionRule::BgSensorAccess:
          evidence = dense_spans(candidates, config.bg_sensor_window_ms, config.bg_sensor_reads, false, count_one);
          break;
        case DetectionRule::BgUpload:
          evidence = dense_spans(candidates, config.bg_upload_window_ms, config.bg_upload_bytes, true, count_bytes);
          break;
        case DetectionRule::LocationPolling: {
          std::map<VirtualMs, std::vector<const AccessLogEntry*>> minutes;
          for (const auto* e : candidates) minutes[e->t / 60'000].push_back(e);
          // Runs of consecutive minutes each above the rate.
          std::vector<std::vector<const AccessLogEntry*>> run;
          VirtualMs prev = 0;
          auto flush = [&] {
            if (static_cast<int>(run.size()) >= config.location_sustained_minutes)
              for (auto& m : run) evidence.insert(evidence.end(), m.begin(), m.end());
            run.clear();
          };
          for (auto& [minute, es] : minutes) {
            const bool hot = static_cast<int>(es.size()) > config.location_reads_per_minute;
            if (!hot || (!run.empty() && minute != prev + 1)) flush();
            if (hot) run.push_back(es);
            prev = minute;
          }
          flush();
          break;
        }
        default:
          evidence = std::move(candidates);
          break;
      }
      if (evidence.empty()) continue;

      Alert a;
      a.rule = rule;
      a.app_id = app;
      for (const auto* e : evidence) {
        a.evidence.push_back(e->seq);
        a.permissions.insert(e->permission);
        a.t_raised = std::max(a.t_raised, e->t);
      }
      a.recommended = recommend_action(a);
      alerts.push_back(std::move(a));
    }
  }
  return alerts;
}

PolicyChange recommend_action(const Alert& alert) {
  using Ctx = ContextCondition;
  PolicyChange change;
  auto add = [&](PermissionKind p, DeceitAction action, Ctx ctx) {
    change.policies.push_back(DeceitPolicy{alert.app_id, p, std::move(action), std::move(ctx), true});
  };
  switch (alert.rule) {
    case DetectionRule::BgSensorAccess:
      for (auto p : alert.permissions) add(p, ConstantSensor{{0.0, 0.0, 0.0}}, Ctx::background_only());
      break;
    case DetectionRule::MicWithoutIndicator:
      add(PermissionKind::Microphone, NoiseAudio{}, Ctx::always());
      break;
    case DetectionRule::BgUpload:
      add(PermissionKind::Internet, Block{}, Ctx::always());
      break;
    case DetectionRule::SmsSendNoInteraction:
      add(PermissionKind::SmsSend, Block{}, Ctx::always());
      break;
    case DetectionRule::LocationPolling:
      add(PermissionKind::Location, default_spoof(PermissionKind::Location), Ctx::always());
      break;
    case DetectionRule::UnnecessaryAccess:
      for (auto p : alert.permissions) add(p, default_spoof(p), Ctx::always());
      break;
    case DetectionRule::BgCameraAccess:
      add(PermissionKind::Camera, BlurFrame{4}, Ctx::background_only());
      break;
  }
  return change;
}

}  // namespace decoy
