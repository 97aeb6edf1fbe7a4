#include <gtest/gtest.h>

#include <set>

#include "decoy/scenarios.hpp"
#include "test_util.hpp"

using namespace decoy;
using P = PermissionKind;

namespace {

DeceitPolicy pol(std::string app, P p, DeceitAction a) {
  DeceitPolicy d;
  d.app_id = std::move(app);
  d.permission = p;
  d.action = std::move(a);
  return d;
}

bool has_alert(const ScenarioReport& r, DetectionRule rule) {
  return std::any_of(r.alerts.begin(), r.alerts.end(), [&](const Alert& a) { return a.rule == rule; });
}

}  // namespace

TEST(Catalog, NamesAreUniqueAndRulesCovered) {
  const auto& c = catalog();
  EXPECT_EQ(c.size(), 13u);
  std::set<std::string> names;
  std::set<DetectionRule> designated;
  for (const auto& s : c) {
    EXPECT_TRUE(names.insert(s.name).second) << s.name;
    EXPECT_EQ(s.category == ScenarioCategory::Malicious, s.designated_rule.has_value()) << s.name;
    if (s.designated_rule) designated.insert(*s.designated_rule);
    EXPECT_FALSE(s.description.empty());
    EXPECT_NO_THROW(validate_script(s));
  }
  EXPECT_EQ(designated.size(), kAllRules.size());
  EXPECT_EQ(find_scenario("gyrosec").manifest.app_id, kGyrosecApp);
  EXPECT_DECOY_ERROR(find_scenario("nope"), ErrorCode::UnknownScenario);
}

TEST(Catalog, JsonRoundTrip) {
  for (const auto& s : catalog()) EXPECT_EQ(script_from_json(script_to_json(s)), s) << s.name;
}

TEST(Catalog, ShippedJsonFilesMatchBuiltins) {
  const auto loaded = load_catalog_dir(std::filesystem::path(DECOY_SOURCE_DIR) / "scenarios");
  ASSERT_EQ(loaded.size(), catalog().size());
  for (const auto& s : loaded) EXPECT_EQ(s, find_scenario(s.name)) << s.name;
}

TEST(Catalog, ScriptParsingErrors) {
  auto j = script_to_json(find_scenario("clipboard-notes"));
  auto bad_op = j;
  bad_op["steps"][0] = {{"op", "teleport"}};
  EXPECT_DECOY_ERROR(script_from_json(bad_op), ErrorCode::Parse);
  auto no_steps = j;
  no_steps.erase("steps");
  EXPECT_DECOY_ERROR(script_from_json(no_steps), ErrorCode::Parse);
  EXPECT_DECOY_ERROR(script_from_json(nlohmann::json::array()), ErrorCode::Parse);
}

TEST(Catalog, ValidationCatchesUndeclaredPermissions) {
  auto s = find_scenario("clipboard-notes");
  s.steps.push_back({step::CallApi{std::string(methods::kQueryContacts), {}}});
  EXPECT_DECOY_ERROR(validate_script(s), ErrorCode::InvalidArgument);
  auto nested = find_scenario("clipboard-notes");
  nested.steps.push_back({step::Repeat{2, {{step::CallApi{std::string(methods::kCaptureFrame), {}}}}}});
  EXPECT_DECOY_ERROR(validate_script(nested), ErrorCode::InvalidArgument);
  auto neg = find_scenario("clipboard-notes");
  neg.steps.push_back({step::Sleep{-1}});
  EXPECT_DECOY_ERROR(validate_script(neg), ErrorCode::InvalidArgument);
  auto unknown = find_scenario("clipboard-notes");
  unknown.steps.push_back({step::CallApi{"no.Such#m", {}}});
  EXPECT_DECOY_ERROR(validate_script(unknown), ErrorCode::UnknownMethod);
}

TEST(Predicates, Semantics) {
  using K = Predicate::Kind;
  EXPECT_TRUE((Predicate{K::IsNull, {}}.holds(Value{Null{}})));
  EXPECT_FALSE((Predicate{K::NotNull, {}}.holds(Value{Null{}})));
  EXPECT_TRUE((Predicate{K::KindOrNull, "clip"}.holds(Value{Null{}})));
  EXPECT_TRUE((Predicate{K::KindIs, "clip"}.holds(Value{ClipData{}})));
  EXPECT_FALSE((Predicate{K::NonEmpty, {}}.holds(Value{ContactList{}})));
  EXPECT_FALSE((Predicate{K::NonEmpty, {}}.holds(Value{Null{}})));
  EXPECT_TRUE((Predicate{K::ContainsSender, "+1"}.holds(Value{SmsList{{"+1", "x"}}})));
  EXPECT_FALSE((Predicate{K::ContainsSender, "+1"}.holds(Value{SmsList{{"+2", "x"}}})));
}

class EveryScenario : public ::testing::TestWithParam<std::string> {};

TEST_P(EveryScenario, RunsCleanAndRaisesOnlyItsRule) {
  const auto& s = find_scenario(GetParam());
  const auto r = execute_scenario(s);
  EXPECT_FALSE(r.failed_step);
  EXPECT_GT(r.assertions_passed, 0);
  EXPECT_TRUE(r.faults.empty());
  if (s.designated_rule) {
    EXPECT_TRUE(has_alert(r, *s.designated_rule)) << s.name;
  } else {
    EXPECT_TRUE(r.alerts.empty()) << s.name;
  }
  for (const auto& e : r.log) EXPECT_EQ(e.action, AccessAction::Original);
}

TEST_P(EveryScenario, SpoofEverywhereKeepsAssertionsAndDeceivesEveryUse) {
  const auto& s = find_scenario(GetParam());
  PolicyStore store;
  for (auto p : kAllPermissions) store.set_policy(pol("*", p, default_spoof(p)));
  ScenarioConfig cfg;
  cfg.store = &store;
  const auto r = execute_scenario(s, cfg);
  EXPECT_FALSE(r.failed_step) << s.name;
  EXPECT_TRUE(r.faults.empty());
  for (const auto& e : r.log) EXPECT_NE(e.action, AccessAction::Original) << s.name << " " << e.method;
  for (auto [p, status] : r.coverage) EXPECT_NE(status, CoverageStatus::Failed) << to_string(p);
  // Deceived accesses are not evidence.
  EXPECT_TRUE(r.alerts.empty()) << s.name;
}

TEST_P(EveryScenario, DeterministicPerSeed) {
  const auto& s = find_scenario(GetParam());
  ScenarioConfig cfg;
  cfg.seed = 42;
  EXPECT_EQ(report_to_json(execute_scenario(s, cfg)), report_to_json(execute_scenario(s, cfg)));
}

INSTANTIATE_TEST_SUITE_P(Catalog, EveryScenario, ::testing::ValuesIn([] {
                           std::vector<std::string> names;
                           for (const auto& s : catalog()) names.push_back(s.name);
                           return names;
                         }()),
                         [](const auto& info) {
                           std::string n = info.param;
                           std::replace(n.begin(), n.end(), '-', '_');
                           return n;
                         });

TEST(Scenarios, RideHailingGetsFixedPickup) {
  PolicyStore store;
  store.set_policy(pol("com.example.ride", P::Location, FixedLocation{40.7580, -73.9855}));
  ScenarioConfig cfg;
  cfg.store = &store;
  const auto r = run_scenario("uber-like", cfg);
  int seen = 0;
  for (const auto& c : r.call_results)
    if (c["method"].get<std::string>() == methods::kLastKnownLocation) {
      EXPECT_DOUBLE_EQ(c["value"]["lat"].get<double>(), 40.7580);
      EXPECT_DOUBLE_EQ(c["value"]["lon"].get<double>(), -73.9855);
      ++seen;
    }
  EXPECT_EQ(seen, 3);
}

TEST(Scenarios, CallerIdKeepsSendersButNotBodies) {
  PolicyStore store;
  store.set_policy(pol("com.example.callerid", P::SmsRead, MaskSmsBodyKeepSender{}));
  ScenarioConfig cfg;
  cfg.store = &store;
  const auto r = run_scenario("truecaller-like", cfg);
  for (const auto& c : r.call_results) {
    if (c["method"].get<std::string>() != methods::kSmsInbox) continue;
    for (const auto& m : c["value"]["items"]) EXPECT_EQ(m["body"].get<std::string>(), kSmsMask);
  }
}

TEST(Scenarios, SocialCalendarIsMasked) {
  PolicyStore store;
  store.set_policy(pol("com.example.social", P::Calendar, MaskCalendarFields{{"location"}}));
  ScenarioConfig cfg;
  cfg.store = &store;
  const auto r = run_scenario("facebook-like", cfg);
  bool checked = false;
  for (const auto& c : r.call_results) {
    if (c["method"].get<std::string>() != methods::kCalendarEvents) continue;
    for (const auto& ev : c["value"]["items"]) {
      EXPECT_EQ(ev["location"].get<std::string>(), kCalendarMask);
      EXPECT_NE(ev["title"].get<std::string>(), kCalendarMask);
      checked = true;
    }
  }
  EXPECT_TRUE(checked);
}

TEST(Scenarios, AssertionFailureIsReported) {
  PolicyStore store;
  store.set_policy(pol("com.example.ride", P::Location, Block{}));
  ScenarioConfig cfg;
  cfg.store = &store;
  const auto r = execute_scenario(find_scenario("uber-like"), cfg);
  ASSERT_TRUE(r.failed_step);
  EXPECT_EQ(*r.failed_step, 1u);
  EXPECT_DECOY_ERROR(run_scenario("uber-like", cfg), ErrorCode::AssertionFailed);
  EXPECT_DECOY_ERROR(run_scenario("nope"), ErrorCode::UnknownScenario);
}

TEST(Scenarios, CancellationStopsEarly) {
  std::atomic<bool> cancel{true};
  ScenarioConfig cfg;
  cfg.cancel = &cancel;
  const auto r = execute_scenario(find_scenario("geospot"), cfg);
  EXPECT_TRUE(r.cancelled);
  EXPECT_TRUE(r.log.empty());
}

TEST(Scenarios, SharedLogCarriesEveryRun) {
  auto log = std::make_shared<AccessLog>();
  ScenarioConfig cfg;
  cfg.log = log;
  const auto a = execute_scenario(find_scenario("clipboard-notes"), cfg);
  const auto b = execute_scenario(find_scenario("auth-app"), cfg);
  EXPECT_EQ(log->size(), a.log.size() + b.log.size());
  EXPECT_EQ(b.log.front().seq, a.log.back().seq + 1);
}

TEST(Scenarios, EnergyIsChargedWhenRequested) {
  ScenarioConfig cfg;
  cfg.energy = EnergyModel::calibrated();
  const auto r = execute_scenario(find_scenario("clipboard-notes"), cfg);
  ASSERT_TRUE(r.energy);
  EXPECT_EQ(r.energy->resource, 4080);
  EXPECT_EQ(r.energy->hook, 2628);
}

TEST(Scenarios, ReportJsonHasSchemaFields) {
  const auto j = report_to_json(execute_scenario(find_scenario("sms-fraud")));
  for (const char* k : {"name", "seed", "app", "log", "alerts", "assertions_passed", "failed_step",
                        "cancelled", "coverage", "faults", "truth_reads"})
    EXPECT_TRUE(j.contains(k)) << k;
}

TEST(Scenarios, CoverageAcrossReports) {
  std::vector<ScenarioReport> reports;
  for (const auto* n : {"uber-like", "clipboard-notes"}) reports.push_back(execute_scenario(find_scenario(n)));
  const auto m = coverage_matrix(reports);
  EXPECT_EQ(m.apps().size(), 2u);
  EXPECT_EQ(m.at("com.example.ride", P::Contacts), CoverageStatus::GrantedNotUsed);
  EXPECT_EQ(m.at("com.example.ride", P::Location), CoverageStatus::Failed);
}

TEST(SideChannel, FeaturesOfConstantSignal) {
  const std::vector<SensorReading> a(12, SensorReading{{1, 2, 3}}), g(12, SensorReading{{4, 5, 6}});
  const auto f = window_features(a, g);
  EXPECT_EQ(f[0], 1);
  EXPECT_EQ(f[5], 6);
  for (int i = 6; i < 12; ++i) EXPECT_EQ(f[i], 0);
}

TEST(SideChannel, BalancedLabels) {
  const auto labels = balanced_labels(90, 3, 3, 7);
  std::map<std::pair<int, int>, int> count;
  for (const auto& c : labels) ++count[{c.row, c.col}];
  EXPECT_EQ(count.size(), 9u);
  for (const auto& [_, n] : count) EXPECT_EQ(n, 10);
  EXPECT_EQ(labels, balanced_labels(90, 3, 3, 7));
  EXPECT_NE(labels, balanced_labels(90, 3, 3, 8));
}

TEST(SideChannel, ClassifierRecoversCentroids) {
  ClassifierModel m(3, 3);
  std::vector<LabeledWindow> w;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      LabeledWindow x;
      x.cell = {r, c};
      x.features[0] = r;
      x.features[1] = c;
      w.push_back(x);
    }
  m.train(w);
  FeatureVector probe{};
  probe[0] = 1.9;
  probe[1] = 0.2;
  EXPECT_EQ(m.predict(probe), (GridCell{2, 0}));
}

TEST(SideChannel, CollectFailsWithoutSensorPermission) {
  const auto r = gyrosec_collect({{0, 0}}, false, {},
                                 AppManifest{std::string(kGyrosecApp), {P::Accelerometer}, {}});
  ASSERT_TRUE(r.error);
  EXPECT_NE(r.error->find("PermissionDenied"), std::string::npos);
  EXPECT_TRUE(r.windows.empty());
}

TEST(SideChannel, SpoofingCollapsesAccuracy) {
  const auto real = gyrosec_experiment(45, 90, false);
  const auto fake = gyrosec_experiment(45, 90, true);
  EXPECT_GE(real.accuracy, 0.70);
  EXPECT_LE(fake.accuracy, 0.15);
  EXPECT_EQ(real.n_test, 90);
  const auto c = gyrosec_collect({{1, 1}}, true);
  ASSERT_EQ(c.windows.size(), 1u);
  for (const auto& e : c.log) EXPECT_EQ(e.action, AccessAction::Spoofed);
}

TEST(Auth, GenuineAcceptedImpostorRejectedReplayAccepted) {
  const auto t = auth_enroll(auth_record_trace(genuine_holder(), 1));
  EXPECT_EQ(t.tau, kAuthTau);
  EXPECT_EQ(t.enrollment.channels.at(P::Accelerometer).size(), static_cast<std::size_t>(kAuthTraceSamples));
  EXPECT_TRUE(auth_verify(t, auth_record_trace(genuine_holder(), 2)));
  EXPECT_FALSE(auth_verify(t, auth_record_trace(random_impostor(3), 3)));
  EXPECT_TRUE(auth_replay_attack(t, 4));
  EXPECT_NEAR(auth_distance(t, t.enrollment), 0.0, 1e-12);
}
