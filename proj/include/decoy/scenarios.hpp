#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "decoy/detector.hpp"
#include "decoy/device.hpp"
#include "decoy/metrics.hpp"
#include "decoy/policy.hpp"

namespace decoy {

// ---- scripts -------------------------------------------------------------

/// Checks applied to the result of the most recent CallApi step.
struct Predicate {
  enum class Kind { NotNull, IsNull, KindIs, KindOrNull, NonEmpty, ContainsSender };
  Kind kind = Kind::NotNull;
  std::string arg;  // value kind for KindIs/KindOrNull, sender for ContainsSender

  bool holds(const Value& v) const;
  friend bool operator==(const Predicate&, const Predicate&) = default;
};

struct ScriptStep;

namespace step {
struct CallApi {
  std::string method;
  ArgList args;
  friend bool operator==(const CallApi&, const CallApi&) = default;
};
struct Sleep {
  VirtualMs ms = 0;
  friend bool operator==(const Sleep&, const Sleep&) = default;
};
struct GoForeground {
  friend bool operator==(const GoForeground&, const GoForeground&) = default;
};
struct GoBackground {
  friend bool operator==(const GoBackground&, const GoBackground&) = default;
};
struct EmitInteraction {
  InteractionKind kind = InteractionKind::Touch;
  friend bool operator==(const EmitInteraction&, const EmitInteraction&) = default;
};
/// A touch by the user on another app's screen, injected at the device level.
struct InjectTouch {
  GridCell cell;
  friend bool operator==(const InjectTouch&, const InjectTouch&) = default;
};
struct Assert {
  Predicate predicate;
  friend bool operator==(const Assert&, const Assert&) = default;
};
struct Repeat {
  int times = 1;
  std::vector<ScriptStep> steps;
  friend bool operator==(const Repeat&, const Repeat&);
};
}  // namespace step

struct ScriptStep {
  std::variant<step::CallApi, step::Sleep, step::GoForeground, step::GoBackground,
               step::EmitInteraction, step::InjectTouch, step::Assert, step::Repeat>
      op;
  friend bool operator==(const ScriptStep&, const ScriptStep&) = default;
};

enum class ScenarioCategory { Benign, Malicious };

struct ScenarioScript {
  std::string name;
  ScenarioCategory category = ScenarioCategory::Benign;
  std::optional<DetectionRule> designated_rule;
  std::string description;
  AppManifest manifest;
  std::vector<ScriptStep> steps;
  std::uint64_t seed = 1;

  friend bool operator==(const ScenarioScript&, const ScenarioScript&) = default;
};

nlohmann::json script_to_json(const ScenarioScript& s);
ScenarioScript script_from_json(const nlohmann::json& j);

/// Throws InvalidArgument when a step calls a method whose permission the manifest lacks.
void validate_script(const ScenarioScript& s);

const std::vector<ScenarioScript>& catalog();
const ScenarioScript& find_scenario(std::string_view name);
std::vector<ScenarioScript> load_catalog_dir(const std::filesystem::path& dir);

// ---- running -------------------------------------------------------------

struct ScenarioConfig {
  std::optional<std::uint64_t> seed;
  /// Policies in force; a private empty store is used when null.
  PolicyStore* store = nullptr;
  /// Entries are also appended here when set (the live stream).
  std::shared_ptr<AccessLog> log;
  bool install_hooks = true;
  bool record_latency = false;
  std::optional<EnergyModel> energy;
  DetectionConfig detection;
  const std::atomic<bool>* cancel = nullptr;
  /// Wall-clock milliseconds slept per virtual millisecond of Sleep; 0 runs as fast as possible.
  double realtime_factor = 0.0;
};

struct ScenarioReport {
  std::string name;
  std::uint64_t seed = 0;
  AppManifest manifest;
  std::vector<AccessLogEntry> log;
  std::vector<UserInteractionEvent> interactions;
  std::vector<Alert> alerts;
  int assertions_passed = 0;
  std::optional<std::size_t> failed_step;
  bool cancelled = false;
  std::vector<nlohmann::json> call_results;
  std::map<PermissionKind, CoverageStatus> coverage;
  std::vector<HookFault> faults;
  std::map<PermissionKind, std::uint64_t> truth_reads;
  std::optional<EnergyTotals> energy;

  AppUsage usage() const { return {manifest, log}; }
  DetectionInput detection_input() const;
};

nlohmann::json report_to_json(const ScenarioReport& r);

/// Runs the script and reports; never throws on assertion failure (see failed_step).
ScenarioReport execute_scenario(const ScenarioScript& script, const ScenarioConfig& config = {});

/// Catalog lookup plus execute; throws UnknownScenario / AssertionFailed.
ScenarioReport run_scenario(std::string_view name, const ScenarioConfig& config = {});

CoverageMatrix coverage_matrix(const std::vector<ScenarioReport>& reports);

// ---- touch side channel ----------------------------------------------------

inline constexpr int kFeatureDim = 12;  // mean and variance of accel xyz, gyro xyz
using FeatureVector = std::array<double, kFeatureDim>;

/// Per-axis mean and population variance over paired accelerometer/gyroscope samples.
FeatureVector window_features(const std::vector<SensorReading>& accel,
                              const std::vector<SensorReading>& gyro);

struct LabeledWindow {
  GridCell cell;
  FeatureVector features{};
};

struct GyrosecConfig {
  std::uint64_t seed = 1;
  int grid_rows = 3;
  int grid_cols = 3;
  SignalModel signal;
  /// The constant reported to the attacker when spoofing.
  std::array<double, 3> constant{0.0, 0.0, 0.0};
};

inline constexpr std::string_view kGyrosecApp = "gyrosec";

struct CollectResult {
  std::vector<LabeledWindow> windows;
  std::vector<AccessLogEntry> log;
  std::optional<std::string> error;  // e.g. PermissionDenied when the attacker lacks a sensor
};

/// Background attacker samples both sensors over each touch window through invoke.
CollectResult gyrosec_collect(const std::vector<GridCell>& labels, bool spoofed,
                              const GyrosecConfig& config = {},
                              std::optional<AppManifest> attacker = std::nullopt);

class ClassifierModel {
 public:
  ClassifierModel(int rows, int cols) : rows_(rows), cols_(cols) {}

  void train(const std::vector<LabeledWindow>& windows);
  /// Nearest centroid; ties go to the lowest cell index.
  GridCell predict(const FeatureVector& f) const;
  const std::vector<FeatureVector>& centroids() const { return centroids_; }

 private:
  int rows_;
  int cols_;
  std::vector<FeatureVector> centroids_;
};

struct GyrosecResult {
  double accuracy = 0;
  int n_train = 0;
  int n_test = 0;
  bool spoofed = false;
  /// Reported device accuracies, recorded for comparison only.
  double reference_unspoofed = 0.8122;
  double reference_spoofed = 0.0536;
};

nlohmann::json gyrosec_result_to_json(const GyrosecResult& r);

/// Balanced labels for n windows over the grid, shuffled by seed.
std::vector<GridCell> balanced_labels(int n, int rows, int cols, std::uint64_t seed);

/// Trains on genuine windows (the attacker's own profiling), tests on fresh windows delivered
/// through the victim device, spoofed or not.
GyrosecResult gyrosec_experiment(int n_train, int n_test, bool spoofed, const GyrosecConfig& config = {});

// ---- continuous authentication ------------------------------------------

inline constexpr std::string_view kAuthApp = "auth-app";

struct HolderProfile {
  std::array<double, 6> bias{};
  double sigma = 0.25;
};

HolderProfile genuine_holder();
HolderProfile random_impostor(std::uint64_t seed);

struct AuthTemplate {
  FeatureVector features{};
  double tau = 0.2;
  SensorTrace enrollment;
};

inline constexpr int kAuthTraceSamples = 200;
inline constexpr double kAuthTau = 0.2;

/// The authenticator app reads `samples` accel+gyro pairs at 100 Hz while `holder` holds the
/// device. Any policies in `store` apply.
SensorTrace auth_record_trace(const HolderProfile& holder, std::uint64_t seed,
                              int samples = kAuthTraceSamples, PolicyStore* store = nullptr);

AuthTemplate auth_enroll(const SensorTrace& trace, double tau = kAuthTau);
double auth_distance(const AuthTemplate& t, const SensorTrace& trace);
bool auth_verify(const AuthTemplate& t, const SensorTrace& trace);
/// An impostor holds the device while a ReplayTrace policy feeds the enrolled trace.
bool auth_replay_attack(const AuthTemplate& t, std::uint64_t seed);

}  // namespace decoy
