#include <gtest/gtest.h>

#include <random>

#include "decoy/metrics.hpp"
#include "test_util.hpp"

using namespace decoy;
using P = PermissionKind;

TEST(Energy, MicroAmpHourConversionIsExact) {
  EXPECT_EQ(from_micro_ah(4.08), 4080);
  EXPECT_EQ(from_micro_ah(2.628), 2628);
  EXPECT_EQ(from_micro_ah(-1.5), -1500);
  EXPECT_DOUBLE_EQ(to_micro_ah(6708), 6.708);
}

TEST(Energy, ModelsValidateAndRoundTrip) {
  for (const auto& m : {EnergyModel::defaults(), EnergyModel::calibrated(), EnergyModel::zero()}) {
    EXPECT_NO_THROW(m.validate());
    const auto back = energy_model_from_json(energy_model_to_json(m));
    EXPECT_EQ(back.resource_cost, m.resource_cost);
    EXPECT_EQ(back.hook_overhead, m.hook_overhead);
  }
  EnergyModel bad = EnergyModel::zero();
  bad.hook_overhead = -1;
  EXPECT_DECOY_ERROR(EnergyLedger{bad}, ErrorCode::InvalidArgument);
}

TEST(Energy, LedgerChargesByOutcome) {
  EnergyLedger l(EnergyModel::calibrated());
  l.charge({"a", P::Camera, AccessAction::Original, false, true});
  l.charge({"a", P::Camera, AccessAction::Spoofed, true, true});
  l.charge({"a", P::Camera, AccessAction::Blocked, true, false});
  const auto t = l.totals("a");
  EXPECT_EQ(t.resource, 2 * 4080);
  EXPECT_EQ(t.hook, 2 * 2628);
  EXPECT_EQ(t.saved, 4080);
  EXPECT_EQ(t.consumed(), 2 * 4080 + 2 * 2628);
  EXPECT_EQ(l.totals("nobody"), EnergyTotals{});
}

// Property: totals equal the sum of per-call costs regardless of order, and the zero model
// never accumulates anything.
TEST(EnergyProperty, LedgerIsAdditive) {
  std::mt19937_64 rng(4);
  for (int round = 0; round < 50; ++round) {
    EnergyLedger l(EnergyModel::defaults()), z(EnergyModel::zero());
    NanoAh expect_resource = 0, expect_hook = 0, expect_saved = 0;
    const auto model = EnergyModel::defaults();
    for (int i = 0; i < 200; ++i) {
      const auto p = kAllPermissions[rng() % kAllPermissions.size()];
      const auto action = static_cast<AccessAction>(rng() % 3);
      const bool hooked = action != AccessAction::Original || rng() % 2;
      const bool ran = action != AccessAction::Blocked;
      const CallRecord rec{rng() % 2 ? "a" : "b", p, action, hooked, ran};
      l.charge(rec);
      z.charge(rec);
      if (hooked) expect_hook += model.hook_overhead;
      if (ran) expect_resource += model.cost(p);
      if (!ran) expect_saved += model.cost(p);
    }
    const auto t = l.total();
    EXPECT_EQ(t.resource, expect_resource);
    EXPECT_EQ(t.hook, expect_hook);
    EXPECT_EQ(t.saved, expect_saved);
    EXPECT_EQ(z.total(), EnergyTotals{});
  }
}

TEST(Energy, LedgerAttachesToDevice) {
  VirtualDevice d;
  EnergyLedger l(EnergyModel::calibrated());
  l.attach(d);
  auto& app = d.spawn_process(AppManifest{"a", {P::Location}, {}});
  d.invoke(app, methods::kLastKnownLocation);
  EXPECT_EQ(l.totals("a").resource, 4080);
  EXPECT_EQ(l.totals("a").hook, 0);
}

TEST(Battery, CalibratedSavingsMatchHandComputation) {
  // n calls at 4.08 µAh plus 2.628 µAh hook overhead each; blocking removes the 4.08 part.
  const auto r = bench_battery_saver(1000, EnergyModel::calibrated());
  EXPECT_EQ(r.n, 1000);
  EXPECT_EQ(r.baseline, 1000 * (4080 + 2628));
  EXPECT_EQ(r.saver, 1000 * 2628);
  EXPECT_EQ(r.baseline - r.saver, 4'080'000);
  EXPECT_NEAR(r.savings_pct, 100.0 * 4080 / 6708, 1e-9);
  EXPECT_NEAR(r.savings_pct, 60.83, 0.01);
  EXPECT_DOUBLE_EQ(r.saved_per_call_uah(), 4.08);
  const auto j = battery_report_to_json(r);
  EXPECT_EQ(j["baseline_nah"], r.baseline);
}

TEST(Battery, ZeroModelAndBadInput) {
  const auto r = bench_battery_saver(10, EnergyModel::zero());
  EXPECT_EQ(r.baseline, 0);
  EXPECT_EQ(r.savings_pct, 0.0);
  EXPECT_DECOY_ERROR(bench_battery_saver(0, EnergyModel::calibrated()), ErrorCode::InvalidArgument);
}

TEST(Battery, DefaultModelSavesSomething) {
  const auto r = bench_battery_saver(64, EnergyModel::defaults());
  EXPECT_GT(r.baseline, r.saver);
  EXPECT_GT(r.savings_pct, 0.0);
  EXPECT_LT(r.savings_pct, 100.0);
}

namespace {

AccessLogEntry e(std::string app, P p, AccessAction a) {
  AccessLogEntry x;
  x.app_id = std::move(app);
  x.permission = p;
  x.action = a;
  return x;
}

}  // namespace

TEST(Coverage, StatusesFollowDefinitions) {
  std::vector<AppUsage> usage = {
      {AppManifest{"a", {P::Location, P::Camera, P::Contacts}, {}},
       {e("a", P::Location, AccessAction::Original), e("a", P::Location, AccessAction::Spoofed),
        e("a", P::Camera, AccessAction::Original), e("b", P::Contacts, AccessAction::Blocked)}},
  };
  const auto m = coverage_matrix(usage);
  EXPECT_EQ(m.at("a", P::Location), CoverageStatus::Deceived);
  EXPECT_EQ(m.at("a", P::Camera), CoverageStatus::Failed);
  EXPECT_EQ(m.at("a", P::Contacts), CoverageStatus::GrantedNotUsed);
  EXPECT_EQ(m.at("a", P::Microphone), CoverageStatus::NotRequested);
  EXPECT_EQ(m.apps(), (std::vector<std::string>{"a"}));
  EXPECT_DOUBLE_EQ(m.deceived_fraction_exercised(), 0.5);
  EXPECT_DOUBLE_EQ(m.deceived_fraction_requested(), 1.0 / 3);
}

TEST(Coverage, MergesUsagesOfTheSameApp) {
  std::vector<AppUsage> usage = {
      {AppManifest{"a", {P::Location}, {}}, {e("a", P::Location, AccessAction::Original)}},
      {AppManifest{"a", {P::Location, P::Camera}, {}}, {e("a", P::Location, AccessAction::Blocked)}},
  };
  const auto m = coverage_matrix(usage);
  EXPECT_EQ(m.at("a", P::Location), CoverageStatus::Deceived);
  EXPECT_EQ(m.at("a", P::Camera), CoverageStatus::GrantedNotUsed);
}

TEST(Coverage, CsvRoundTripAndErrors) {
  CoverageMatrix m;
  m.set("com.x", P::Camera, CoverageStatus::Deceived);
  m.set("odd,app", P::Location, CoverageStatus::Failed);
  const auto csv = m.to_csv();
  EXPECT_EQ(csv.rfind("app,permission,status\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * static_cast<long>(kAllPermissions.size()));
  const auto back = CoverageMatrix::from_csv(csv);
  for (const auto& app : {"com.x", "odd,app"})
    for (auto p : kAllPermissions) EXPECT_EQ(back.at(app, p), m.at(app, p));
  EXPECT_EQ(CoverageMatrix::from_csv(back.to_csv()), back);
  EXPECT_DECOY_ERROR(CoverageMatrix::from_csv("nope\n"), ErrorCode::Parse);
  EXPECT_DECOY_ERROR(CoverageMatrix::from_csv("app,permission,status\na,Camera\n"), ErrorCode::Parse);
  EXPECT_DECOY_ERROR(CoverageMatrix::from_csv("app,permission,status\na,Camera,Meh\n"), ErrorCode::Parse);
}

TEST(Coverage, StatusNamesRoundTrip) {
  for (auto s : {CoverageStatus::Deceived, CoverageStatus::GrantedNotUsed, CoverageStatus::NotRequested,
                 CoverageStatus::Failed})
    EXPECT_EQ(coverage_status_from_string(to_string(s)), s);
}

TEST(Overhead, MeasuresEveryRequestedPermission) {
  OverheadOptions o;
  o.n_per_permission = 200;
  o.unhooked_controls = {P::Tracking};
  const auto r = bench_api_overhead(o);
  ASSERT_EQ(r.size(), 4u);
  for (const auto& [p, s] : r) {
    EXPECT_GT(s.mean_hooked_ns, 0) << to_string(p);
    EXPECT_GT(s.mean_unhooked_ns, 0) << to_string(p);
    EXPECT_GE(s.p95_unhooked_ns, 0) << to_string(p);
  }
  EXPECT_GT(r.at(P::Camera).mean_added_ns, r.at(P::Tracking).mean_added_ns);
  OverheadOptions tiny;
  tiny.n_per_permission = 10;
  EXPECT_DECOY_ERROR(bench_api_overhead(tiny), ErrorCode::InvalidArgument);
}

TEST(Overhead, ReferenceTableIsMetadata) {
  const auto ref = reference_overhead_ms();
  EXPECT_FALSE(ref.empty());
  for (const auto& [p, ms] : ref) EXPECT_GT(ms, 0) << to_string(p);
}
