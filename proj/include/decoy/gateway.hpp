#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "decoy/detector.hpp"
#include "decoy/policy.hpp"
#include "decoy/scenarios.hpp"

namespace decoy {

/// Process-wide audit of network connections made by this code base. Everything except the
/// loopback operator API counts as outbound.
namespace net_audit {
bool is_loopback(std::string_view host) noexcept;
void note_connection(std::string_view host) noexcept;
std::uint64_t outbound_connections() noexcept;
std::uint64_t loopback_connections() noexcept;
}  // namespace net_audit

struct PackageInfo {
  std::string app_id;
  std::vector<PermissionKind> requested;
  std::vector<PermissionKind> granted;
  std::map<std::string, std::vector<PermissionKind>> features;
};

nlohmann::json package_to_json(const PackageInfo& p);

/// WHITELIE_HOME if set, else ./.whitelie
std::filesystem::path data_home();

struct ApiError {
  int status = 400;
  std::string message;
};

/// Shared state behind both the CLI and the HTTP API. Reads are concurrent; every mutation goes
/// through one writer lock, so policy versions are linearizable.
class Service {
 public:
  explicit Service(std::filesystem::path home);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  PolicyStore& store() { return *store_; }
  std::shared_ptr<AccessLog> log() const { return log_; }
  const std::filesystem::path& home() const { return home_; }

  std::vector<PackageInfo> packages() const;
  nlohmann::json policies_json() const;
  /// Validates and replaces the whole document. Throws on schema errors.
  std::int64_t put_policies(const nlohmann::json& doc);

  std::vector<Alert> alerts() const;
  /// Applies the alert's recommendation. Returns the new policy version.
  std::optional<std::int64_t> apply_alert(const std::string& alert_id);

  /// Starts the scenario on its own thread. Errors: 404 unknown, 409 already running.
  std::optional<ApiError> start_scenario(const std::string& name, std::optional<std::uint64_t> seed,
                                        double realtime_factor = 0.0);
  std::optional<ApiError> stop_scenario(const std::string& name);
  bool running(const std::string& name) const;
  /// Blocks until the named run finishes (tests and the CLI).
  void wait(const std::string& name);
  std::vector<ScenarioReport> reports() const;

  /// Synchronous run used by the CLI; also recorded as the latest report for that scenario.
  ScenarioReport run_now(const std::string& name, std::optional<std::uint64_t> seed);

  CoverageMatrix coverage() const;

  /// Persists log.jsonl and session.json (the latest run per app) under home.
  void save_session() const;
  void load_session();
  /// Forgets every run and empties the persisted session.
  void reset_session();

 private:
  struct Run {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> cancel;
    bool done = false;
  };

  /// Where one app's latest run sits in the shared log.
  struct RunSlice {
    std::string scenario;
    std::uint64_t seed = 0;
    AppManifest manifest;
    std::uint64_t first_seq = 0;
    std::uint64_t last_seq = 0;
    std::vector<UserInteractionEvent> interactions;
  };

  void record(ScenarioReport report);
  std::vector<AppUsage> latest_usage(std::vector<UserInteractionEvent>* interactions) const;

  std::filesystem::path home_;
  std::unique_ptr<PolicyStore> store_;
  std::shared_ptr<AccessLog> log_;
  mutable std::mutex mu_;
  mutable std::mutex write_mu_;
  std::map<std::string, ScenarioReport> reports_;
  std::map<std::string, RunSlice> latest_;  // by app id
  std::map<std::string, Run> runs_;
};

/// Loopback HTTP/1.1 JSON API with a server-sent event log stream.
class HttpGateway {
 public:
  explicit HttpGateway(Service& service);
  ~HttpGateway();

  /// Refuses non-loopback hosts. Port 0 picks a free port. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace decoy
