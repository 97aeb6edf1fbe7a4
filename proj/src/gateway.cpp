#include "decoy/gateway.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "decoy/error.hpp"

namespace decoy {

using json = nlohmann::json;

// ---- network audit ---------------------------------------------------------------

namespace net_audit {
namespace {
std::atomic<std::uint64_t> g_outbound{0};
std::atomic<std::uint64_t> g_loopback{0};
}  // namespace

bool is_loopback(std::string_view host) noexcept {
  return host == "localhost" || host == "::1" || host.starts_with("127.") || host.starts_with("::ffff:127.");
}

void note_connection(std::string_view host) noexcept {
  (is_loopback(host) ? g_loopback : g_outbound).fetch_add(1);
}

std::uint64_t outbound_connections() noexcept { return g_outbound.load(); }
std::uint64_t loopback_connections() noexcept { return g_loopback.load(); }
}  // namespace net_audit

// ---- service -------------------------------------------------------------------

json package_to_json(const PackageInfo& p) {
  auto perms = [](const std::vector<PermissionKind>& ps) {
    json a = json::array();
    for (auto x : ps) a.push_back(to_string(x));
    return a;
  };
  json features = json::object();
  for (const auto& [f, ps] : p.features) features[f] = perms(ps);
  return {{"app", p.app_id}, {"requested", perms(p.requested)}, {"granted", perms(p.granted)}, {"features", features}};
}

std::filesystem::path data_home() {
  if (const char* env = std::getenv("WHITELIE_HOME"); env && *env) return env;
  return ".whitelie";
}

namespace {

json interaction_to_json(const UserInteractionEvent& e) {
  return {{"t", e.timestamp}, {"app", e.app_id}, {"kind", to_string(e.kind)}, {"row", e.cell.row}, {"col", e.cell.col}};
}

UserInteractionEvent interaction_from_json(const json& j) {
  UserInteractionEvent e;
  e.timestamp = j.at("t").get<VirtualMs>();
  e.app_id = j.at("app").get<std::string>();
  auto k = interaction_kind_from_string(j.at("kind").get<std::string>());
  if (!k) throw Error(ErrorCode::Parse, "unknown interaction kind");
  e.kind = *k;
  e.cell = GridCell{j.value("row", 0), j.value("col", 0)};
  return e;
}

void write_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Service::Service(std::filesystem::path home) : home_(std::move(home)) {
  std::filesystem::create_directories(home_);
  store_ = std::make_unique<PolicyStore>(home_ / "policies.json");
  log_ = std::make_shared<AccessLog>();
  load_session();
}

Service::~Service() {
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(mu_);
    for (auto& [_, run] : runs_) {
      if (run.cancel) run.cancel->store(true);
      if (run.thread.joinable()) threads.push_back(std::move(run.thread));
    }
  }
  for (auto& t : threads) t.join();
}

std::vector<PackageInfo> Service::packages() const {
  std::map<std::string, AppManifest> manifests;
  for (const auto& s : catalog()) manifests[s.manifest.app_id] = s.manifest;
  {
    std::lock_guard lock(mu_);
    for (const auto& [app, slice] : latest_) manifests[app] = slice.manifest;
  }
  std::vector<PackageInfo> out;
  for (const auto& [app, m] : manifests) out.push_back({app, m.permissions, m.permissions, m.features});
  return out;
}

json Service::policies_json() const { return document_to_json(*store_->snapshot()); }

std::int64_t Service::put_policies(const json& doc) { return store_->replace(document_from_json(doc)); }

std::vector<AppUsage> Service::latest_usage(std::vector<UserInteractionEvent>* interactions) const {
  std::map<std::string, RunSlice> latest;
  {
    std::lock_guard lock(mu_);
    latest = latest_;
  }
  const auto entries = log_->snapshot();
  std::vector<AppUsage> out;
  for (const auto& [app, slice] : latest) {
    AppUsage u{slice.manifest, {}};
    for (const auto& e : entries)
      if (e.app_id == app && e.seq >= slice.first_seq && e.seq <= slice.last_seq) u.entries.push_back(e);
    out.push_back(std::move(u));
    if (interactions) interactions->insert(interactions->end(), slice.interactions.begin(), slice.interactions.end());
  }
  return out;
}

std::vector<Alert> Service::alerts() const {
  std::vector<UserInteractionEvent> interactions;
  const auto usage = latest_usage(&interactions);
  std::vector<AccessLogEntry> entries;
  DetectionInput input;
  for (const auto& u : usage) {
    entries.insert(entries.end(), u.entries.begin(), u.entries.end());
    input.manifests[u.manifest.app_id] = u.manifest;
  }
  input.entries = entries;
  input.interactions = std::move(interactions);
  return evaluate(input);
}

std::optional<std::int64_t> Service::apply_alert(const std::string& alert_id) {
  for (const auto& a : alerts()) {
    if (a.id() != alert_id) continue;
    std::int64_t version = store_->version();
    for (const auto& p : a.recommended.policies) version = store_->set_policy(p);
    return version;
  }
  return std::nullopt;
}

std::optional<ApiError> Service::start_scenario(const std::string& name, std::optional<std::uint64_t> seed,
                                                double realtime_factor) {
  const ScenarioScript* script = nullptr;
  try {
    script = &find_scenario(name);
  } catch (const Error&) {
    return ApiError{404, "unknown scenario " + name};
  }
  if (realtime_factor < 0) return ApiError{400, "realtime_factor must be >= 0"};

  std::lock_guard lock(mu_);
  auto& run = runs_[name];
  if (run.thread.joinable() && !run.done) return ApiError{409, name + " is already running"};
  if (run.thread.joinable()) run.thread.join();
  run.cancel = std::make_shared<std::atomic<bool>>(false);
  run.done = false;
  run.thread = std::thread([this, script, seed, realtime_factor, cancel = run.cancel, name] {
    ScenarioConfig cfg;
    cfg.seed = seed;
    cfg.store = store_.get();
    cfg.log = log_;
    cfg.cancel = cancel.get();
    cfg.realtime_factor = realtime_factor;
    try {
      record(execute_scenario(*script, cfg));
    } catch (const std::exception&) {
      // A failed run leaves no report; the log already holds whatever it produced.
    }
    std::lock_guard done_lock(mu_);
    runs_[name].done = true;
  });
  return std::nullopt;
}

std::optional<ApiError> Service::stop_scenario(const std::string& name) {
  try {
    find_scenario(name);
  } catch (const Error&) {
    return ApiError{404, "unknown scenario " + name};
  }
  {
    std::lock_guard lock(mu_);
    auto it = runs_.find(name);
    if (it == runs_.end() || it->second.done || !it->second.thread.joinable())
      return ApiError{409, name + " is not running"};
    it->second.cancel->store(true);
  }
  wait(name);
  return std::nullopt;
}

bool Service::running(const std::string& name) const {
  std::lock_guard lock(mu_);
  auto it = runs_.find(name);
  return it != runs_.end() && it->second.thread.joinable() && !it->second.done;
}

void Service::wait(const std::string& name) {
  std::thread t;
  {
    std::lock_guard lock(mu_);
    auto it = runs_.find(name);
    if (it == runs_.end() || !it->second.thread.joinable()) return;
    t = std::move(it->second.thread);
  }
  t.join();
}

std::vector<ScenarioReport> Service::reports() const {
  std::lock_guard lock(mu_);
  std::vector<ScenarioReport> out;
  for (const auto& [_, r] : reports_) out.push_back(r);
  return out;
}

ScenarioReport Service::run_now(const std::string& name, std::optional<std::uint64_t> seed) {
  const auto& script = find_scenario(name);
  if (running(name)) throw Error(ErrorCode::InvalidArgument, name + " is already running");
  ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.store = store_.get();
  cfg.log = log_;
  auto report = execute_scenario(script, cfg);
  record(report);
  return report;
}

void Service::record(ScenarioReport report) {
  {
    std::lock_guard lock(mu_);
    RunSlice slice;
    slice.scenario = report.name;
    slice.seed = report.seed;
    slice.manifest = report.manifest;
    if (!report.log.empty()) {
      slice.first_seq = report.log.front().seq;
      slice.last_seq = report.log.back().seq;
    }
    slice.interactions = report.interactions;
    latest_[report.manifest.app_id] = std::move(slice);
    reports_[report.name] = std::move(report);
  }
  save_session();
}

CoverageMatrix Service::coverage() const {
  const auto usage = latest_usage(nullptr);
  return coverage_matrix(std::span<const AppUsage>(usage));
}

void Service::save_session() const {
  std::lock_guard write_lock(write_mu_);
  json runs = json::array();
  {
    std::lock_guard lock(mu_);
    for (const auto& [app, s] : latest_) {
      json inter = json::array();
      for (const auto& i : s.interactions) inter.push_back(interaction_to_json(i));
      runs.push_back({{"scenario", s.scenario},
                      {"seed", s.seed},
                      {"manifest", manifest_to_json(s.manifest)},
                      {"first_seq", s.first_seq},
                      {"last_seq", s.last_seq},
                      {"interactions", inter}});
    }
  }
  const auto entries = log_->snapshot();
  const std::uint64_t base = entries.empty() ? log_->last_seq() : entries.front().seq - 1;
  write_atomic(home_ / "log.jsonl", export_logs(entries, ExportFormat::Jsonl));
  write_atomic(home_ / "session.json", json{{"log_base_seq", base}, {"runs", runs}}.dump(2));
}

void Service::load_session() {
  const auto session_path = home_ / "session.json";
  const auto log_path = home_ / "log.jsonl";
  if (!std::filesystem::exists(session_path)) return;
  json session;
  try {
    session = json::parse(read_file(session_path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, session_path.string() + ": " + e.what());
  }
  std::map<std::string, RunSlice> latest;
  try {
    for (const auto& r : session.at("runs")) {
      RunSlice s;
      s.scenario = r.at("scenario").get<std::string>();
      s.seed = r.at("seed").get<std::uint64_t>();
      s.manifest = manifest_from_json(r.at("manifest"));
      s.first_seq = r.at("first_seq").get<std::uint64_t>();
      s.last_seq = r.at("last_seq").get<std::uint64_t>();
      for (const auto& i : r.at("interactions")) s.interactions.push_back(interaction_from_json(i));
      latest[s.manifest.app_id] = std::move(s);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, session_path.string() + ": " + e.what());
  }
  std::vector<AccessLogEntry> entries;
  if (std::filesystem::exists(log_path)) entries = import_jsonl(read_file(log_path));

  std::lock_guard lock(mu_);
  if (log_->last_seq() == 0) log_->start_after(session.value("log_base_seq", std::uint64_t{0}));
  for (const auto& e : entries) log_->log_access(e);
  latest_ = std::move(latest);
}

void Service::reset_session() {
  {
    std::lock_guard lock(mu_);
    latest_.clear();
    reports_.clear();
  }
  log_->reset();
  save_session();
}

// ---- HTTP ----------------------------------------------------------------------

namespace {

int status_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::UnknownScenario:
    case ErrorCode::UnknownProcess:
    case ErrorCode::UnknownMethod:
    case ErrorCode::UnknownHandle:
    case ErrorCode::UnknownPool:
    case ErrorCode::UnknownTrace:
      return 404;
    case ErrorCode::Parse:
    case ErrorCode::InvalidArgument:
    case ErrorCode::IncompatibleTransform:
    case ErrorCode::EmptyPool:
    case ErrorCode::MissingOriginal:
      return 400;
    default:
      return 500;
  }
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, {{"error", message}, {"code", status}}, status);
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Parse, std::string("request body: ") + e.what());
  }
}

std::string sse_event(const AccessLogEntry& e) {
  return "id: " + std::to_string(e.seq) + "\nevent: access\ndata: " + entry_to_json(e).dump() + "\n\n";
}

}  // namespace

struct HttpGateway::Impl {
  explicit Impl(Service& s) : service(s) {}
  Service& service;
  httplib::Server server;
  std::thread thread;
  std::atomic<bool> stopping{false};
};

HttpGateway::HttpGateway(Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  auto& svc = impl_->service;
  Impl* impl = impl_.get();

  srv.set_pre_routing_handler([](const httplib::Request& req, httplib::Response&) {
    net_audit::note_connection(req.remote_addr);
    return httplib::Server::HandlerResponse::Unhandled;
  });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      send_error(res, status_for(e.code()), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  });
  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) send_error(res, res.status, res.status == 404 ? "not found" : "request failed");
  });

  srv.Get("/apps", [&svc](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& p : svc.packages()) out.push_back(package_to_json(p));
    send_json(res, out);
  });

  srv.Get("/policies", [&svc](const httplib::Request&, httplib::Response& res) { send_json(res, svc.policies_json()); });
  srv.Put("/policies", [&svc](const httplib::Request& req, httplib::Response& res) {
    send_json(res, {{"version", svc.put_policies(parse_body(req))}});
  });

  srv.Get("/logs/stream", [&svc, impl](const httplib::Request& req, httplib::Response& res) {
    std::uint64_t from = 0;
    try {
      if (req.has_header("Last-Event-ID")) from = std::stoull(req.get_header_value("Last-Event-ID"));
      else if (req.has_param("from")) from = std::stoull(req.get_param_value("from"));
    } catch (const std::exception&) {
      throw Error(ErrorCode::Parse, "Last-Event-ID / from must be a sequence number");
    }
    const bool follow = req.get_param_value("follow") != "false";
    const std::uint64_t until = svc.log()->last_seq();
    auto cursor = std::make_shared<std::uint64_t>(from);
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream", [&svc, impl, cursor, follow, until](std::size_t, httplib::DataSink& sink) {
          if (impl->stopping.load()) return false;
          auto log = svc.log();
          if (!follow && *cursor >= until) {
            sink.done();
            return true;
          }
          if (log->last_seq() <= *cursor && !log->wait_after(*cursor, std::chrono::milliseconds(250))) {
            static const std::string kKeepAlive = ": keepalive\n\n";
            return sink.write(kKeepAlive.data(), kKeepAlive.size());
          }
          for (const auto& e : log->entries_after(*cursor)) {
            if (!follow && e.seq > until) break;
            const auto msg = sse_event(e);
            if (!sink.write(msg.data(), msg.size())) return false;
            *cursor = e.seq;
          }
          return true;
        });
  });

  srv.Get("/alerts", [&svc](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& a : svc.alerts()) out.push_back(alert_to_json(a));
    send_json(res, out);
  });
  srv.Post("/alerts/:id/apply", [&svc](const httplib::Request& req, httplib::Response& res) {
    const auto id = httplib::detail::decode_url(req.path_params.at("id"), false);
    auto alerts = svc.alerts();
    auto it = std::find_if(alerts.begin(), alerts.end(), [&](const Alert& a) { return a.id() == id; });
    if (it == alerts.end()) return send_error(res, 404, "unknown alert " + id);
    const auto version = svc.apply_alert(id);
    if (!version) return send_error(res, 404, "unknown alert " + id);
    json policies = json::array();
    for (const auto& p : it->recommended.policies) policies.push_back(policy_to_json(p));
    send_json(res, {{"version", *version}, {"applied", policies}});
  });

  srv.Get("/scenarios", [&svc](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& s : catalog())
      out.push_back({{"name", s.name},
                     {"app", s.manifest.app_id},
                     {"category", s.category == ScenarioCategory::Benign ? "benign" : "malicious"},
                     {"description", s.description},
                     {"running", svc.running(s.name)}});
    send_json(res, out);
  });
  srv.Post("/scenarios/:name/start", [&svc](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    std::optional<std::uint64_t> seed;
    double factor = 0.0;
    try {
      if (body.contains("seed")) seed = body.at("seed").get<std::uint64_t>();
      factor = body.value("realtime_factor", 0.0);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Parse, e.what());
    }
    const auto name = req.path_params.at("name");
    if (auto err = svc.start_scenario(name, seed, factor)) return send_error(res, err->status, err->message);
    send_json(res, {{"name", name}, {"status", "running"}}, 202);
  });
  srv.Post("/scenarios/:name/stop", [&svc](const httplib::Request& req, httplib::Response& res) {
    const auto name = req.path_params.at("name");
    if (auto err = svc.stop_scenario(name)) return send_error(res, err->status, err->message);
    send_json(res, {{"name", name}, {"status", "stopped"}});
  });

  srv.Get("/coverage", [&svc](const httplib::Request& req, httplib::Response& res) {
    const auto m = svc.coverage();
    if (req.get_param_value("format") == "csv") {
      res.set_content(m.to_csv(), "text/csv");
      return;
    }
    send_json(res, m.to_json());
  });
}

HttpGateway::~HttpGateway() { stop(); }

int HttpGateway::start(const std::string& host, int port) {
  if (!net_audit::is_loopback(host)) throw Error(ErrorCode::InvalidArgument, "refusing to bind non-loopback " + host);
  if (impl_->thread.joinable()) throw Error(ErrorCode::InvalidArgument, "gateway already started");
  auto& srv = impl_->server;
  if (port == 0) {
    port_ = srv.bind_to_any_port(host);
  } else {
    port_ = srv.bind_to_port(host, port) ? port : -1;
  }
  if (port_ <= 0) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  impl_->stopping = false;
  impl_->thread = std::thread([&srv] { srv.listen_after_bind(); });
  return port_;
}

void HttpGateway::stop() {
  if (!impl_ || !impl_->thread.joinable()) return;
  impl_->stopping = true;
  impl_->server.stop();
  impl_->thread.join();
}

}  // namespace decoy
