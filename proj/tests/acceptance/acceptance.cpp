// One PASS/FAIL line per acceptance criterion. Exit status is non-zero if any line fails.

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>

#include "decoy/gateway.hpp"
#include "decoy/metrics.hpp"
#include "decoy/scenarios.hpp"
#include "hook_properties.hpp"

using namespace decoy;
using nlohmann::json;
using P = PermissionKind;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

DeceitPolicy policy(std::string app, P p, DeceitAction a, ContextCondition c = {}) {
  DeceitPolicy d;
  d.app_id = std::move(app);
  d.permission = p;
  d.action = std::move(a);
  d.context = std::move(c);
  return d;
}

Outcome hook_semantics() {
  const auto t0 = Clock::now();
  int cases = 0, checks = 0;
  std::vector<std::string> failures;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = decoy::testing::run_hook_properties(seed, 500);
    cases += r.cases;
    checks += r.checks;
    failures.insert(failures.end(), r.failures.begin(), r.failures.end());
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << cases << " chains, " << checks << " checks, " << failures.size() << " failures, " << secs << " s";
  if (!failures.empty()) d << " (first: " << failures.front() << ")";
  return {failures.empty() && cases > 0 && secs < 10.0, d.str()};
}

Outcome clipboard_equivalence() {
  const auto& script = find_scenario("clipboard-notes");
  const auto app = script.manifest.app_id;
  auto clip_of = [&](PolicyStore& store) {
    ScenarioConfig cfg;
    cfg.store = &store;
    const auto r = execute_scenario(script, cfg);
    if (r.failed_step || r.call_results.size() != 1) throw std::runtime_error("clipboard run did not complete");
    return r.call_results[0]["value"];
  };
  VirtualDevice reference(DeviceConfig{});
  const auto truth = value_to_json(Value{reference.truth().clipboard()});

  PolicyStore none;
  const auto untouched = clip_of(none);

  PolicyStore toggled;
  toggled.set_policy(policy(app, P::Clipboard, Block{}, ContextCondition::manual("blockClipboard")));
  toggled.set_toggle("blockClipboard", true);
  const auto blocked = clip_of(toggled);

  PolicyStore deceit;
  deceit.set_policy(policy(app, P::Clipboard, SpoofStatic{ClipData{"dummyLabel", "dummyText"}}));
  const auto spoofed = clip_of(deceit);
  const auto expected_spoof = value_to_json(Value{ClipData{"dummyLabel", "dummyText"}});

  const bool ok = untouched == truth && blocked == value_to_json(Value{Null{}}) && spoofed == expected_spoof;
  return {ok, "none=" + untouched.dump() + " toggle=" + blocked.dump() + " deceit=" + spoofed.dump()};
}

Outcome side_channel_collapse() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::ostringstream d;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    GyrosecConfig c;
    c.seed = seed;
    const auto plain = gyrosec_experiment(45, 90, false, c);
    const auto spoofed = gyrosec_experiment(45, 90, true, c);
    ok = ok && plain.accuracy >= 0.70 && spoofed.accuracy <= 0.15;
    d << "seed " << seed << ": " << plain.accuracy << " -> " << spoofed.accuracy << "; ";
  }
  const double secs = seconds_since(t0);
  d << secs << " s (reference 0.8122 -> 0.0536)";
  return {ok && secs < 60.0, d.str()};
}

Outcome auth_bypass() {
  int trials = 0, accepted = 0, rejected = 0;
  bool replay_every_seed = true;
  std::ostringstream d;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto tmpl = auth_enroll(auth_record_trace(genuine_holder(), seed * 1000));
    for (int i = 1; i <= 100; ++i) {
      const auto s = seed * 1000 + static_cast<std::uint64_t>(i);
      ++trials;
      accepted += auth_verify(tmpl, auth_record_trace(genuine_holder(), s)) ? 1 : 0;
      rejected += auth_verify(tmpl, auth_record_trace(random_impostor(s), s)) ? 0 : 1;
    }
    const bool replay = auth_replay_attack(tmpl, seed);
    replay_every_seed = replay_every_seed && replay;
    d << "seed " << seed << " replay " << (replay ? "accepted" : "rejected") << "; ";
  }
  const double acc = static_cast<double>(accepted) / trials, rej = static_cast<double>(rejected) / trials;
  d << "genuine accepted " << acc << ", impostors rejected " << rej;
  return {acc >= 0.95 && rej >= 0.95 && replay_every_seed, d.str()};
}

Outcome detector_completeness() {
  bool ok = true;
  std::ostringstream d;
  int malicious = 0, benign = 0;
  for (const auto& s : catalog()) {
    const auto r = execute_scenario(s);
    if (r.failed_step) {
      ok = false;
      d << s.name << " assertion failed; ";
      continue;
    }
    if (!s.designated_rule) {
      ++benign;
      if (!r.alerts.empty()) {
        ok = false;
        d << s.name << " raised " << r.alerts.front().id() << "; ";
      }
      continue;
    }
    ++malicious;
    const auto it = std::find_if(r.alerts.begin(), r.alerts.end(),
                                 [&](const Alert& a) { return a.rule == *s.designated_rule; });
    if (it == r.alerts.end()) {
      ok = false;
      d << s.name << " missed " << to_string(*s.designated_rule) << "; ";
      continue;
    }
    // Apply the recommendation and replay the same script and seed.
    PolicyStore store;
    for (const auto& p : it->recommended.policies) store.set_policy(p);
    ScenarioConfig cfg;
    cfg.store = &store;
    const auto replay = execute_scenario(s, cfg);
    const auto input = replay.detection_input();
    const auto offending = std::count_if(replay.log.begin(), replay.log.end(), [&](const AccessLogEntry& e) {
      return evidence_matches(*s.designated_rule, e, input);
    });
    const bool still = std::any_of(replay.alerts.begin(), replay.alerts.end(),
                                   [&](const Alert& a) { return a.rule == *s.designated_rule; });
    if (replay.failed_step || offending > 0 || still) {
      ok = false;
      d << s.name << " not mitigated (" << offending << " Original offending entries); ";
    }
    if (s.name == "sms-fraud") {
      int sends_blocked = 0, reads_original = 0;
      for (const auto& e : replay.log) {
        sends_blocked += e.permission == P::SmsSend && e.action == AccessAction::Blocked;
        reads_original += e.permission == P::SmsRead && e.action == AccessAction::Original;
      }
      ok = ok && sends_blocked == 3 && reads_original == 4;
      d << "sms-fraud mitigated: " << sends_blocked << " sends blocked, " << reads_original
        << " inbox reads flowing; ";
    }
  }
  d << malicious << " malicious, " << benign << " benign";
  return {ok && malicious >= 6 && benign > 0, d.str()};
}

Outcome battery_arithmetic() {
  const auto r = bench_battery_saver(1000, EnergyModel::calibrated());
  const bool exact = r.saver == r.baseline - 1000 * from_micro_ah(4.08);
  std::ostringstream d;
  d << "baseline " << r.baseline_uah() << " uAh, saver " << r.saver_uah() << " uAh, savings_pct " << r.savings_pct;
  return {std::abs(r.savings_pct - 60.83) <= 0.01 && exact, d.str()};
}

Outcome overhead_ordering() {
  bool ok = true;
  std::ostringstream d;
  for (int run = 1; run <= 3; ++run) {
    OverheadOptions o;
    o.n_per_permission = 1000;
    o.seed = static_cast<std::uint64_t>(run);
    const auto s = bench_api_overhead(o);
    const double contacts = s.at(P::Contacts).mean_added_ns, clipboard = s.at(P::Clipboard).mean_added_ns;
    const double camera = s.at(P::Camera).mean_added_ns, tracking = s.at(P::Tracking).mean_added_ns;
    ok = ok && contacts > clipboard && camera > tracking;
    d << "run " << run << " added ns: Contacts " << std::lround(contacts) << " Clipboard " << std::lround(clipboard)
      << " Camera " << std::lround(camera) << " Tracking " << std::lround(tracking) << "; ";
  }
  return {ok, d.str()};
}

Outcome crash_proof_coverage() {
  PolicyStore store;
  for (auto p : kAllPermissions) store.set_policy(policy(std::string(kAnyApp), p, default_spoof(p)));
  std::vector<ScenarioReport> reports;
  int failed = 0, faults = 0;
  for (const auto& s : catalog()) {
    ScenarioConfig cfg;
    cfg.store = &store;
    reports.push_back(execute_scenario(s, cfg));
    failed += reports.back().failed_step ? 1 : 0;
    faults += static_cast<int>(reports.back().faults.size());
  }
  const auto m = coverage_matrix(reports);
  // Independent labelling check from the raw logs.
  int granted_not_used = 0, mislabelled = 0;
  for (const auto& r : reports) {
    for (auto p : kAllPermissions) {
      const bool granted = r.manifest.grants(p);
      const bool used = std::any_of(r.log.begin(), r.log.end(), [&](const AccessLogEntry& e) { return e.permission == p; });
      const auto status = m.at(r.manifest.app_id, p);
      if (granted && !used) {
        ++granted_not_used;
        mislabelled += status != CoverageStatus::GrantedNotUsed;
      } else if (!granted) {
        mislabelled += status != CoverageStatus::NotRequested;
      }
    }
  }
  const bool csv_ok = CoverageMatrix::from_csv(m.to_csv()) == m;
  const double frac = m.deceived_fraction_exercised();
  std::ostringstream d;
  d << reports.size() << " scenarios, " << failed << " assertion failures, " << faults << " hook faults, deceived "
    << frac * 100 << "% of exercised pairs, " << granted_not_used << " GrantedNotUsed cells, " << mislabelled
    << " mislabelled, CSV round-trip " << (csv_ok ? "lossless" : "lossy");
  return {failed == 0 && faults == 0 && frac == 1.0 && granted_not_used > 0 && mislabelled == 0 && csv_ok, d.str()};
}

Outcome isolation() {
  namespace fs = std::filesystem;
  const auto home = fs::temp_directory_path() / ("decoy-acceptance-" + std::to_string(::getpid()));
  int requests = 0;
  {
    Service svc(home);
    HttpGateway gw(svc);
    const int port = gw.start("127.0.0.1", 0);
    httplib::Client c("127.0.0.1", port);
    for (const auto* path : {"/apps", "/policies", "/alerts", "/scenarios", "/coverage", "/coverage?format=csv"})
      requests += c.Get(path) ? 1 : 0;
    if (auto r = c.Post("/scenarios/sms-fraud/start", "{}", "application/json"); r && r->status == 202) ++requests;
    svc.wait("sms-fraud");
    requests += c.Get("/logs/stream?follow=false") ? 1 : 0;
    requests += c.Post("/alerts/SmsSendNoInteraction%3Acom.example.privatesms/apply", "{}", "application/json") ? 1 : 0;
    gw.stop();
  }
  std::error_code ec;
  fs::remove_all(home, ec);
  const auto outbound = net_audit::outbound_connections();
  const auto loopback = net_audit::loopback_connections();
  std::ostringstream d;
  d << "outbound " << outbound << ", loopback " << loopback << " after " << requests << " API requests";
  return {outbound == 0 && loopback > 0 && requests == 9, d.str()};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " | " << o.detail << std::endl;
  };

  report("hook-semantics", hook_semantics);
  report("clipboard-equivalence", clipboard_equivalence);
  report("side-channel-collapse", side_channel_collapse);
  report("continuous-auth-bypass", auth_bypass);
  report("detector-completeness", detector_completeness);
  report("battery-saver-arithmetic", battery_arithmetic);
  report("overhead-ordering", overhead_ordering);
  report("crash-proof-coverage", crash_proof_coverage);
  // Counted over everything above plus a gateway session.
  report("isolation", isolation);
  return failures == 0 ? 0 : 1;
}
