#include "decoy/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "decoy/error.hpp"
#include "decoy/hooking.hpp"
#include "decoy/policy.hpp"

namespace decoy {

// ---- energy ----------------------------------------------------------------

NanoAh EnergyModel::cost(PermissionKind p) const {
  auto it = resource_cost.find(p);
  return it == resource_cost.end() ? 0 : it->second;
}

void EnergyModel::validate() const {
  if (hook_overhead < 0) throw Error(ErrorCode::InvalidArgument, "hook overhead must be >= 0");
  for (const auto& [p, c] : resource_cost)
    if (c < 0) throw Error(ErrorCode::InvalidArgument, std::string(to_string(p)) + " cost must be >= 0");
}

EnergyModel EnergyModel::defaults() {
  EnergyModel m;
  m.resource_cost = {
      {PermissionKind::Location, from_micro_ah(6.5)},   {PermissionKind::Accelerometer, from_micro_ah(0.8)},
      {PermissionKind::Gyroscope, from_micro_ah(0.9)},  {PermissionKind::Magnetometer, from_micro_ah(0.7)},
      {PermissionKind::Light, from_micro_ah(0.2)},      {PermissionKind::Microphone, from_micro_ah(5.0)},
      {PermissionKind::Camera, from_micro_ah(12.0)},    {PermissionKind::Contacts, from_micro_ah(2.2)},
      {PermissionKind::Clipboard, from_micro_ah(0.3)},  {PermissionKind::SmsRead, from_micro_ah(1.5)},
      {PermissionKind::SmsSend, from_micro_ah(9.0)},    {PermissionKind::Calendar, from_micro_ah(1.4)},
      {PermissionKind::Storage, from_micro_ah(3.2)},    {PermissionKind::Internet, from_micro_ah(7.5)},
      {PermissionKind::DeviceInfo, from_micro_ah(0.2)}, {PermissionKind::Tracking, from_micro_ah(0.4)},
  };
  m.hook_overhead = from_micro_ah(0.35);
  return m;
}

EnergyModel EnergyModel::calibrated() {
  EnergyModel m;
  for (auto p : kAllPermissions) m.resource_cost[p] = from_micro_ah(4.08);
  m.hook_overhead = from_micro_ah(2.628);
  return m;
}

EnergyModel EnergyModel::zero() {
  EnergyModel m;
  for (auto p : kAllPermissions) m.resource_cost[p] = 0;
  return m;
}

nlohmann::json energy_model_to_json(const EnergyModel& m) {
  nlohmann::json costs = nlohmann::json::object();
  for (const auto& [p, c] : m.resource_cost) costs[std::string(to_string(p))] = to_micro_ah(c);
  return {{"resource_uah", costs}, {"hook_overhead_uah", to_micro_ah(m.hook_overhead)}};
}

EnergyModel energy_model_from_json(const nlohmann::json& j) {
  EnergyModel m;
  try {
    for (const auto& [name, v] : j.at("resource_uah").items()) {
      auto p = permission_from_string(name);
      if (!p) throw Error(ErrorCode::Parse, "unknown permission " + name);
      m.resource_cost[*p] = from_micro_ah(v.get<double>());
    }
    m.hook_overhead = from_micro_ah(j.at("hook_overhead_uah").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("energy model: ") + e.what());
  }
  m.validate();
  return m;
}

void EnergyLedger::attach(VirtualDevice& device) {
  device.on_call([this](const CallRecord& c) { charge(c); });
}

void EnergyLedger::charge(const CallRecord& call) {
  auto& t = per_app_[call.app_id];
  const auto cost = model_.cost(call.permission);
  if (call.hooked) t.hook += model_.hook_overhead;
  if (call.original_ran)
    t.resource += cost;
  else if (call.action == AccessAction::Blocked)
    t.saved += cost;
}

const EnergyTotals& EnergyLedger::totals(const std::string& app_id) const {
  static const EnergyTotals kEmpty{};
  auto it = per_app_.find(app_id);
  return it == per_app_.end() ? kEmpty : it->second;
}

EnergyTotals EnergyLedger::total() const {
  EnergyTotals sum;
  for (const auto& [_, t] : per_app_) {
    sum.resource += t.resource;
    sum.hook += t.hook;
    sum.saved += t.saved;
  }
  return sum;
}

// ---- coverage --------------------------------------------------------------

std::string_view to_string(CoverageStatus s) noexcept {
  switch (s) {
    case CoverageStatus::Deceived: return "Deceived";
    case CoverageStatus::GrantedNotUsed: return "GrantedNotUsed";
    case CoverageStatus::NotRequested: return "NotRequested";
    case CoverageStatus::Failed: return "Failed";
  }
  return "?";
}

std::optional<CoverageStatus> coverage_status_from_string(std::string_view s) noexcept {
  for (auto c : {CoverageStatus::Deceived, CoverageStatus::GrantedNotUsed, CoverageStatus::NotRequested,
                 CoverageStatus::Failed})
    if (to_string(c) == s) return c;
  return std::nullopt;
}

CoverageStatus CoverageMatrix::at(const std::string& app, PermissionKind p) const {
  auto a = cells_.find(app);
  if (a == cells_.end()) return CoverageStatus::NotRequested;
  auto c = a->second.find(p);
  return c == a->second.end() ? CoverageStatus::NotRequested : c->second;
}

std::vector<std::string> CoverageMatrix::apps() const {
  std::vector<std::string> out;
  for (const auto& [a, _] : cells_) out.push_back(a);
  return out;
}

double CoverageMatrix::deceived_fraction_exercised() const {
  int deceived = 0, exercised = 0;
  for (const auto& [_, row] : cells_)
    for (const auto& [__, s] : row) {
      if (s == CoverageStatus::Deceived || s == CoverageStatus::Failed) ++exercised;
      if (s == CoverageStatus::Deceived) ++deceived;
    }
  return exercised ? static_cast<double>(deceived) / exercised : 0.0;
}

double CoverageMatrix::deceived_fraction_requested() const {
  int deceived = 0, requested = 0;
  for (const auto& [_, row] : cells_)
    for (const auto& [__, s] : row) {
      if (s != CoverageStatus::NotRequested) ++requested;
      if (s == CoverageStatus::Deceived) ++deceived;
    }
  return requested ? static_cast<double>(deceived) / requested : 0.0;
}

std::string CoverageMatrix::to_csv() const {
  std::ostringstream out;
  out << "app,permission,status\n";
  for (const auto& [app, row] : cells_)
    for (auto p : kAllPermissions) out << app << ',' << to_string(p) << ',' << to_string(at(app, p)) << '\n';
  return out.str();
}

CoverageMatrix CoverageMatrix::from_csv(std::string_view csv) {
  CoverageMatrix m;
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || line != "app,permission,status")
    throw Error(ErrorCode::Parse, "coverage CSV needs header app,permission,status");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    // Permission and status never contain commas; the app id may.
    auto c2 = line.rfind(',');
    auto c1 = c2 == std::string::npos || c2 == 0 ? std::string::npos : line.rfind(',', c2 - 1);
    if (c1 == std::string::npos) throw Error(ErrorCode::Parse, "bad coverage row");
    auto p = permission_from_string(std::string_view(line).substr(c1 + 1, c2 - c1 - 1));
    auto s = coverage_status_from_string(std::string_view(line).substr(c2 + 1));
    if (!p || !s) throw Error(ErrorCode::Parse, "bad coverage row: " + line);
    m.set(line.substr(0, c1), *p, *s);
  }
  return m;
}

nlohmann::json CoverageMatrix::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [app, _] : cells_) {
    nlohmann::json cells = nlohmann::json::object();
    for (auto p : kAllPermissions) cells[std::string(to_string(p))] = to_string(at(app, p));
    rows.push_back({{"app", app}, {"cells", cells}});
  }
  return {{"rows", rows},
          {"deceived_fraction_exercised", deceived_fraction_exercised()},
          {"deceived_fraction_requested", deceived_fraction_requested()}};
}

CoverageMatrix coverage_matrix(std::span<const AppUsage> usage) {
  std::map<std::string, AppManifest> manifests;
  std::map<std::string, std::map<PermissionKind, std::pair<int, int>>> counts;  // (total, deceived)
  for (const auto& u : usage) {
    auto& m = manifests[u.manifest.app_id];
    m.app_id = u.manifest.app_id;
    for (auto p : u.manifest.permissions)
      if (!m.grants(p)) m.permissions.push_back(p);
    for (const auto& e : u.entries) {
      if (e.app_id != u.manifest.app_id) continue;
      auto& [total, deceived] = counts[e.app_id][e.permission];
      ++total;
      if (e.action != AccessAction::Original) ++deceived;
    }
  }
  CoverageMatrix out;
  for (const auto& [app, m] : manifests) {
    for (auto p : kAllPermissions) {
      CoverageStatus s = CoverageStatus::NotRequested;
      if (m.grants(p)) {
        auto [total, deceived] = counts[app][p];
        s = total == 0 ? CoverageStatus::GrantedNotUsed
                       : deceived > 0 ? CoverageStatus::Deceived : CoverageStatus::Failed;
      }
      out.set(app, p, s);
    }
  }
  return out;
}

// ---- benchmarks --------------------------------------------------------------

namespace {

double percentile(std::vector<double> xs, double q) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const auto idx = static_cast<std::size_t>(q * static_cast<double>(xs.size() - 1) + 0.5);
  return xs[std::min(idx, xs.size() - 1)];
}

double mean(const std::vector<double>& xs) {
  return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

std::string primary_method(PermissionKind p) {
  auto slots = zygote_template().slots_for(p);
  for (const auto* s : slots)
    if (!s->method.hidden) return s->method.key();
  throw Error(ErrorCode::UnknownMethod, "no method for " + std::string(to_string(p)));
}

}  // namespace

std::map<PermissionKind, OverheadStats> bench_api_overhead(const OverheadOptions& options) {
  if (options.n_per_permission < 100) throw Error(ErrorCode::InvalidArgument, "n_per_permission must be >= 100");

  std::vector<PermissionKind> measured = options.permissions;
  for (auto p : options.unhooked_controls)
    if (std::find(measured.begin(), measured.end(), p) == measured.end()) measured.push_back(p);

  DeviceConfig cfg;
  cfg.seed = options.seed;
  cfg.record_latency = true;
  VirtualDevice device(cfg);
  PolicyStore store;
  for (auto p : measured) store.set_policy(DeceitPolicy{std::string(kAnyApp), p, default_spoof(p), {}, true});
  Deceiver deceiver(store, options.seed);
  HookEngine engine(device);
  auto bypass = engine.bypass_hidden_api(kDeceiverOwner);

  AppManifest hooked_m{"bench-hooked", measured, {{"bench", measured}}};
  AppManifest plain_m{"bench-plain", measured, {{"bench", measured}}};
  auto& hooked = device.spawn_process(hooked_m, "bench");
  auto& plain = device.spawn_process(plain_m, "bench");
  for (const auto& h : install_deceiving_hooks(engine, hooked, store, deceiver, &bypass)) {
    const auto p = method_info(h.method).permission;
    if (std::find(options.unhooked_controls.begin(), options.unhooked_controls.end(), p) !=
        options.unhooked_controls.end())
      engine.uninstall_hook(h);
  }

  std::map<PermissionKind, OverheadStats> out;
  constexpr int kWarmup = 50;
  for (auto p : measured) {
    const auto method = primary_method(p);
    const ArgList args = p == PermissionKind::Storage ? ArgList{std::string("/sdcard/bench.bin")} : ArgList{};
    for (int i = 0; i < kWarmup; ++i) {
      device.invoke(plain, method, args);
      device.invoke(hooked, method, args);
    }
    const auto start_seq = device.log().last_seq();
    for (int i = 0; i < options.n_per_permission; ++i) {
      device.invoke(plain, method, args);
      device.invoke(hooked, method, args);
    }
    std::vector<double> plain_ns, hooked_ns, diff_ns;
    for (const auto& e : device.log().entries_after(start_seq))
      (e.app_id == plain.app_id ? plain_ns : hooked_ns).push_back(static_cast<double>(e.latency_ns));
    for (std::size_t i = 0; i < std::min(plain_ns.size(), hooked_ns.size()); ++i)
      diff_ns.push_back(hooked_ns[i] - plain_ns[i]);
    OverheadStats s;
    s.mean_hooked_ns = mean(hooked_ns);
    s.mean_unhooked_ns = mean(plain_ns);
    s.mean_added_ns = s.mean_hooked_ns - s.mean_unhooked_ns;
    s.p95_added_ns = percentile(diff_ns, 0.95);
    s.p95_unhooked_ns = percentile(plain_ns, 0.95);
    out[p] = s;
    device.log().clear();
  }
  return out;
}

std::map<PermissionKind, double> reference_overhead_ms() {
  return {{PermissionKind::Contacts, 3.87},
          {PermissionKind::Camera, 3.23},
          {PermissionKind::Tracking, 0.83},
          {PermissionKind::Clipboard, 1.07}};
}

nlohmann::json battery_report_to_json(const BatteryReport& r) {
  return {{"n", r.n},
          {"baseline_nah", r.baseline},
          {"saver_nah", r.saver},
          {"baseline_uah", r.baseline_uah()},
          {"saver_uah", r.saver_uah()},
          {"saved_per_call_uah", r.saved_per_call_uah()},
          {"savings_pct", r.savings_pct},
          {"reference", {{"saved_per_call_uah", 4.08}, {"savings_pct", 60.83}}}};
}

BatteryReport bench_battery_saver(int n, const EnergyModel& model, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "n must be >= 1");
  model.validate();
  static const std::vector<PermissionKind> kFetched = {
      PermissionKind::Location, PermissionKind::Camera,   PermissionKind::Contacts, PermissionKind::Microphone,
      PermissionKind::Accelerometer, PermissionKind::Calendar, PermissionKind::SmsRead, PermissionKind::Clipboard};

  auto run = [&](bool block) {
    DeviceConfig cfg;
    cfg.seed = seed;
    VirtualDevice device(cfg);
    PolicyStore store;
    if (block)
      for (auto p : kFetched) store.set_policy(DeceitPolicy{std::string(kAnyApp), p, Block{}, {}, true});
    Deceiver deceiver(store, seed);
    HookEngine engine(device);
    EnergyLedger ledger(model);
    ledger.attach(device);
    auto& app = device.spawn_process(AppManifest{"battery-bench", kFetched, {{"fetch", kFetched}}}, "battery");
    install_deceiving_hooks(engine, app, store, deceiver, nullptr);
    device.set_activity_state(app, ActivityState::Foreground);
    for (int i = 0; i < n; ++i) {
      device.invoke(app, primary_method(kFetched[static_cast<std::size_t>(i) % kFetched.size()]));
      device.advance(10);
    }
    return ledger.totals(app.app_id);
  };

  const auto allow = run(false);
  const auto saver = run(true);
  BatteryReport r;
  r.n = n;
  r.baseline = allow.consumed();
  r.saver = saver.consumed();
  r.savings_pct = r.baseline > 0 ? 100.0 * static_cast<double>(r.baseline - r.saver) / static_cast<double>(r.baseline) : 0.0;
  return r;
}

}  // namespace decoy
