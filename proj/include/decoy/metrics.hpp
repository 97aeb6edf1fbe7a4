#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "decoy/access_log.hpp"
#include "decoy/device.hpp"
#include "decoy/types.hpp"

namespace decoy {

/// Energy in nano-ampere-hours (1 µAh = 1000 nAh) so ledger arithmetic is exact.
using NanoAh = std::int64_t;

constexpr NanoAh from_micro_ah(double uah) { return static_cast<NanoAh>(uah * 1000.0 + (uah >= 0 ? 0.5 : -0.5)); }
constexpr double to_micro_ah(NanoAh n) { return static_cast<double>(n) / 1000.0; }

struct EnergyModel {
  std::map<PermissionKind, NanoAh> resource_cost;
  NanoAh hook_overhead = 0;

  NanoAh cost(PermissionKind p) const;
  /// Throws InvalidArgument if any cost is negative.
  void validate() const;

  static EnergyModel defaults();
  /// Resource cost 4.08 µAh for every permission, hook overhead 2.628 µAh: a hooked call
  /// then costs 6.708 µAh and blocking saves 4.08 µAh of it.
  static EnergyModel calibrated();
  static EnergyModel zero();
};

nlohmann::json energy_model_to_json(const EnergyModel& m);
EnergyModel energy_model_from_json(const nlohmann::json& j);

struct EnergyTotals {
  NanoAh resource = 0;
  NanoAh hook = 0;
  NanoAh saved = 0;
  NanoAh consumed() const { return resource + hook; }
  friend bool operator==(const EnergyTotals&, const EnergyTotals&) = default;
};

class EnergyLedger {
 public:
  explicit EnergyLedger(EnergyModel model) : model_(std::move(model)) { model_.validate(); }

  /// Subscribes to the device's call records.
  void attach(VirtualDevice& device);
  void charge(const CallRecord& call);

  const EnergyTotals& totals(const std::string& app_id) const;
  EnergyTotals total() const;
  const EnergyModel& model() const { return model_; }

 private:
  EnergyModel model_;
  std::map<std::string, EnergyTotals> per_app_;
};

// ---- coverage ------------------------------------------------------------

enum class CoverageStatus { Deceived, GrantedNotUsed, NotRequested, Failed };

std::string_view to_string(CoverageStatus s) noexcept;
std::optional<CoverageStatus> coverage_status_from_string(std::string_view s) noexcept;

/// One app's manifest plus the log entries it produced.
struct AppUsage {
  AppManifest manifest;
  std::vector<AccessLogEntry> entries;
};

class CoverageMatrix {
 public:
  void set(const std::string& app, PermissionKind p, CoverageStatus s) { cells_[app][p] = s; }
  CoverageStatus at(const std::string& app, PermissionKind p) const;
  std::vector<std::string> apps() const;

  /// Over every (app, permission) with entries: fraction with status Deceived.
  double deceived_fraction_exercised() const;
  /// Over every requested (app, permission): fraction with status Deceived.
  double deceived_fraction_requested() const;

  /// Header "app,permission,status"; one row per app per permission in enum order.
  std::string to_csv() const;
  static CoverageMatrix from_csv(std::string_view csv);
  nlohmann::json to_json() const;

  friend bool operator==(const CoverageMatrix&, const CoverageMatrix&) = default;

 private:
  std::map<std::string, std::map<PermissionKind, CoverageStatus>> cells_;
};

/// Deceived: ≥1 Spoofed/Blocked entry. Failed: entries exist but all Original.
/// GrantedNotUsed: granted, no entries. NotRequested: not in the manifest.
CoverageMatrix coverage_matrix(std::span<const AppUsage> usage);

// ---- benchmarks ----------------------------------------------------------

struct OverheadStats {
  double mean_added_ns = 0;
  double p95_added_ns = 0;
  double mean_hooked_ns = 0;
  double mean_unhooked_ns = 0;
  double p95_unhooked_ns = 0;
};

struct OverheadOptions {
  int n_per_permission = 1000;
  std::vector<PermissionKind> permissions = {PermissionKind::Contacts, PermissionKind::Camera,
                                             PermissionKind::Clipboard, PermissionKind::Tracking};
  /// Measured on both processes but left unhooked in the "hooked" one.
  std::vector<PermissionKind> unhooked_controls;
  std::uint64_t seed = 1;
};

std::map<PermissionKind, OverheadStats> bench_api_overhead(const OverheadOptions& options);

/// Reference per-call overheads reported for real devices, in milliseconds; metadata only.
std::map<PermissionKind, double> reference_overhead_ms();

struct BatteryReport {
  int n = 0;
  NanoAh baseline = 0;
  NanoAh saver = 0;
  double savings_pct = 0;
  double baseline_uah() const { return to_micro_ah(baseline); }
  double saver_uah() const { return to_micro_ah(saver); }
  double saved_per_call_uah() const { return n ? to_micro_ah(baseline - saver) / n : 0.0; }
};

nlohmann::json battery_report_to_json(const BatteryReport& r);

/// Runs a benchmark app doing n data-fetching calls twice: Allow-all, then Block-all.
BatteryReport bench_battery_saver(int n, const EnergyModel& model, std::uint64_t seed = 1);

}  // namespace decoy
