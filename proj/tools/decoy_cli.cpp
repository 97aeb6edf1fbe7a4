// decoy: command-line front end for the privacy sandbox.

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "decoy/error.hpp"
#include "decoy/gateway.hpp"
#include "decoy/metrics.hpp"
#include "decoy/scenarios.hpp"

using namespace decoy;
using json = nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kAssertionFailed = 1;
constexpr int kUsage = 2;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

struct Options {
  bool json_out = false;
  std::string home;
};

std::filesystem::path home_of(const Options& o) { return o.home.empty() ? data_home() : std::filesystem::path(o.home); }

void emit(const Options& o, const json& j, const std::string& text) {
  if (o.json_out)
    std::cout << j.dump(2) << '\n';
  else
    std::cout << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << text;
}

std::string report_text(const ScenarioReport& r) {
  std::ostringstream out;
  out << r.name << " (seed " << r.seed << "): " << r.log.size() << " calls, " << r.assertions_passed
      << " assertions passed";
  if (r.failed_step) out << ", FAILED at step " << *r.failed_step;
  out << '\n';
  std::map<std::string, int> actions;
  for (const auto& e : r.log) ++actions[std::string(to_string(e.action))];
  for (const auto& [a, n] : actions) out << "  " << a << ": " << n << '\n';
  for (const auto& a : r.alerts) out << "  alert " << a.id() << " (" << a.evidence.size() << " entries)\n";
  return out.str();
}

PermissionKind parse_permission(const std::string& s) {
  auto p = permission_from_string(s);
  if (!p) throw Error(ErrorCode::Parse, "unknown permission " + s);
  return *p;
}

ContextCondition parse_context(const std::string& s) {
  if (s.empty() || s == "always") return ContextCondition::always();
  if (s == "background") return ContextCondition::background_only();
  if (s == "foreground") return ContextCondition::foreground_only();
  if (s.starts_with("toggle:")) return ContextCondition::manual(s.substr(7));
  throw Error(ErrorCode::Parse, "context must be always, background, foreground or toggle:<name>");
}

std::string overhead_text(const std::map<PermissionKind, OverheadStats>& stats) {
  std::ostringstream out;
  const auto ref = reference_overhead_ms();
  out << "permission    mean_added_us  p95_added_us  mean_hooked_us  mean_plain_us  reference_ms\n";
  for (const auto& [p, s] : stats) {
    char line[160];
    auto it = ref.find(p);
    std::snprintf(line, sizeof line, "%-12s  %13.2f  %12.2f  %14.2f  %13.2f  %12s\n", std::string(to_string(p)).c_str(),
                  s.mean_added_ns / 1e3, s.p95_added_ns / 1e3, s.mean_hooked_ns / 1e3, s.mean_unhooked_ns / 1e3,
                  it == ref.end() ? "-" : std::to_string(it->second).substr(0, 4).c_str());
    out << line;
  }
  return out.str();
}

json overhead_json(const std::map<PermissionKind, OverheadStats>& stats) {
  json out = json::object();
  const auto ref = reference_overhead_ms();
  for (const auto& [p, s] : stats) {
    json row = {{"mean_added_ns", s.mean_added_ns},
                {"p95_added_ns", s.p95_added_ns},
                {"mean_hooked_ns", s.mean_hooked_ns},
                {"mean_unhooked_ns", s.mean_unhooked_ns},
                {"p95_unhooked_ns", s.p95_unhooked_ns}};
    if (auto it = ref.find(p); it != ref.end()) row["reference_ms"] = it->second;
    out[std::string(to_string(p))] = row;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy sandbox: scripted apps, call hooking, deceit policies and audits"};
  app.require_subcommand(1);
  app.fallthrough();
  Options opt;
  app.add_flag("--json", opt.json_out, "Print JSON instead of text");
  app.add_option("--home", opt.home, "Data directory (default: $WHITELIE_HOME or ./.whitelie)");

  // sim
  auto* sim = app.add_subcommand("sim", "Run catalog scenarios");
  sim->require_subcommand(1);
  std::string scenario;
  std::optional<std::uint64_t> seed;
  auto* sim_run = sim->add_subcommand("run", "Run one scenario against the current policies");
  sim_run->add_option("scenario", scenario, "Scenario name")->required();
  sim_run->add_option("--seed", seed, "Override the scenario seed");
  bool keep = false;
  sim_run->add_flag("--keep", keep, "Append to the recorded session instead of starting a new one");
  auto* sim_list = sim->add_subcommand("list", "List catalog scenarios");
  std::string catalog_dir;
  auto* sim_export = sim->add_subcommand("export", "Write the catalog as JSON files");
  sim_export->add_option("--dir", catalog_dir, "Output directory")->required();
  auto* sim_reset = sim->add_subcommand("reset", "Forget recorded runs and logs");

  // policy
  auto* policy = app.add_subcommand("policy", "Inspect and edit deceit policies");
  policy->require_subcommand(1);
  std::string policy_json, policy_file;
  auto* pol_set = policy->add_subcommand("set", "Upsert a policy (or an array of policies) given as JSON");
  pol_set->add_option("policy", policy_json, "Policy JSON");
  pol_set->add_option("--file", policy_file, "Read the policy JSON from a file");
  auto* pol_list = policy->add_subcommand("list", "Print the policy document");
  std::string rm_app = std::string(kAnyApp), rm_perm, rm_ctx;
  auto* pol_rm = policy->add_subcommand("rm", "Remove a policy");
  pol_rm->add_option("--app", rm_app, "App id or *");
  pol_rm->add_option("--permission", rm_perm, "Permission")->required();
  pol_rm->add_option("--context", rm_ctx, "always | background | foreground | toggle:<name>");
  std::string toggle_name, toggle_state;
  auto* pol_toggle = policy->add_subcommand("toggle", "Flip a manual toggle");
  pol_toggle->add_option("name", toggle_name)->required();
  pol_toggle->add_option("state", toggle_state)->required()->check(CLI::IsMember({"on", "off"}));
  std::string put_file;
  auto* pol_put = policy->add_subcommand("put", "Replace the whole policy document from a file");
  pol_put->add_option("file", put_file)->required();

  // logs
  auto* logs = app.add_subcommand("logs", "Print the resource access log");
  bool follow = false;
  std::string export_fmt, out_path;
  logs->add_flag("--follow", follow, "Keep printing new entries");
  logs->add_option("--export", export_fmt, "jsonl or csv")->check(CLI::IsMember({"jsonl", "csv"}));
  logs->add_option("--out", out_path, "Write the export to a file");

  // alerts
  auto* alerts = app.add_subcommand("alerts", "Evaluate detection rules over the latest runs");
  std::string apply_id;
  alerts->add_option("--apply", apply_id, "Apply the recommended mitigation of this alert id");

  // bench
  auto* bench = app.add_subcommand("bench", "Benchmarks");
  bench->require_subcommand(1);
  int n = 1000;
  int runs = 1;
  std::string model_name = "calibrated";
  auto* bench_overhead = bench->add_subcommand("overhead", "Per-call latency added by hooks");
  bench_overhead->add_option("--n", n, "Calls per permission")->check(CLI::Range(100, 10'000'000));
  bench_overhead->add_option("--runs", runs, "Repetitions")->check(CLI::Range(1, 100));
  auto* bench_battery = bench->add_subcommand("battery", "Energy saved by blocking data fetches");
  bench_battery->add_option("--n", n, "Calls")->check(CLI::Range(1, 100'000'000));
  bench_battery->add_option("--model", model_name, "calibrated | default | zero")
      ->check(CLI::IsMember({"calibrated", "default", "zero"}));

  // heatmap
  auto* heatmap = app.add_subcommand("heatmap", "Coverage matrix of the latest runs as CSV");
  std::string heat_out;
  bool run_catalog = false;
  heatmap->add_option("--out", heat_out, "CSV path")->required();
  heatmap->add_flag("--run-catalog", run_catalog, "Run every catalog scenario first");

  // experiments
  auto* gyro = app.add_subcommand("gyrosec", "Touch side-channel experiment");
  int n_train = 45, n_test = 90;
  std::uint64_t exp_seed = 1;
  gyro->add_option("--n-train", n_train)->check(CLI::PositiveNumber);
  gyro->add_option("--n-test", n_test)->check(CLI::PositiveNumber);
  gyro->add_option("--seed", exp_seed);
  auto* auth = app.add_subcommand("auth", "Continuous-authentication bypass experiment");
  int trials = 100;
  auth->add_option("--trials", trials)->check(CLI::Range(1, 100'000));
  auth->add_option("--seed", exp_seed);

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the HTTP API on loopback");
  int port = 8787;
  std::string host = "127.0.0.1";
  serve->add_option("--port", port)->check(CLI::Range(0, 65535));
  serve->add_option("--host", host, "Loopback address to bind");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (sim_list->parsed()) {
      json out = json::array();
      std::ostringstream text;
      for (const auto& s : catalog()) {
        const auto cat = s.category == ScenarioCategory::Benign ? "benign" : "malicious";
        out.push_back({{"name", s.name}, {"app", s.manifest.app_id}, {"category", cat}});
        text << s.name << "  [" << cat << "]  " << s.description << '\n';
      }
      emit(opt, out, text.str());
      return kOk;
    }
    if (sim_export->parsed()) {
      std::filesystem::create_directories(catalog_dir);
      for (const auto& s : catalog())
        write_text((std::filesystem::path(catalog_dir) / (s.name + ".json")).string(), script_to_json(s).dump(2) + "\n");
      emit(opt, {{"written", catalog().size()}}, std::to_string(catalog().size()) + " scenarios written\n");
      return kOk;
    }

    Service svc(home_of(opt));

    if (sim_run->parsed()) {
      ScenarioReport r;
      try {
        find_scenario(scenario);
        if (!keep) svc.reset_session();
        r = svc.run_now(scenario, seed);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::UnknownScenario) {
          std::cerr << "unknown scenario: " << scenario << '\n';
          return kUsage;
        }
        throw;
      }
      emit(opt, report_to_json(r), report_text(r));
      return r.failed_step ? kAssertionFailed : kOk;
    }
    if (sim_reset->parsed()) {
      svc.reset_session();
      emit(opt, {{"reset", true}}, "session cleared\n");
      return kOk;
    }

    if (pol_set->parsed()) {
      const auto text = !policy_file.empty() ? read_text(policy_file) : policy_json;
      if (text.empty()) {
        std::cerr << "policy set needs a JSON argument or --file\n";
        return kUsage;
      }
      json j;
      try {
        j = json::parse(text);
      } catch (const json::parse_error& e) {
        std::cerr << "malformed policy JSON: " << e.what() << '\n';
        return kUsage;
      }
      std::int64_t version = svc.store().version();
      if (j.is_array())
        for (const auto& p : j) version = svc.store().set_policy(policy_from_json(p));
      else
        version = svc.store().set_policy(policy_from_json(j));
      emit(opt, {{"version", version}}, "policy version " + std::to_string(version) + "\n");
      return kOk;
    }
    if (pol_list->parsed()) {
      const auto doc = svc.store().snapshot();
      std::ostringstream text;
      text << "version " << doc->version << '\n';
      for (const auto& p : doc->policies)
        text << "  " << policy_to_json(p).dump() << '\n';
      for (const auto& [name, on] : doc->toggles) text << "  toggle " << name << " = " << (on ? "on" : "off") << '\n';
      json j = document_to_json(*doc);
      j.erase("pools");
      j.erase("traces");
      emit(opt, j, text.str());
      return kOk;
    }
    if (pol_rm->parsed()) {
      const auto v = svc.store().remove_policy(rm_app, parse_permission(rm_perm), parse_context(rm_ctx));
      emit(opt, {{"removed", v.has_value()}, {"version", svc.store().version()}},
           v ? "removed, policy version " + std::to_string(*v) + "\n" : "no matching policy\n");
      return kOk;
    }
    if (pol_toggle->parsed()) {
      const auto v = svc.store().set_toggle(toggle_name, toggle_state == "on");
      emit(opt, {{"version", v}}, "policy version " + std::to_string(v) + "\n");
      return kOk;
    }
    if (pol_put->parsed()) {
      json j;
      try {
        j = json::parse(read_text(put_file));
      } catch (const json::parse_error& e) {
        std::cerr << "malformed policy document: " << e.what() << '\n';
        return kUsage;
      }
      const auto v = svc.put_policies(j);
      emit(opt, {{"version", v}}, "policy version " + std::to_string(v) + "\n");
      return kOk;
    }

    if (logs->parsed()) {
      const auto entries = svc.log()->snapshot();
      if (!export_fmt.empty()) {
        const auto text = export_logs(entries, export_fmt == "csv" ? ExportFormat::Csv : ExportFormat::Jsonl);
        if (out_path.empty())
          std::cout << text;
        else
          write_text(out_path, text);
        if (!follow) return kOk;
      } else if (!follow) {
        if (opt.json_out) {
          json arr = json::array();
          for (const auto& e : entries) arr.push_back(entry_to_json(e));
          std::cout << arr.dump(2) << '\n';
        } else {
          std::cout << export_logs(entries, ExportFormat::Csv);
        }
        return kOk;
      }
      // Follow: poll the persisted session written by other processes.
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::uint64_t last = entries.empty() ? 0 : entries.back().seq;
      if (export_fmt.empty())
        for (const auto& e : entries) std::cout << entry_to_json(e).dump() << '\n';
      const auto log_path = home_of(opt) / "log.jsonl";
      while (!g_interrupted) {
        std::this_thread::sleep_for(std::chrono::milliseconds(250));
        if (!std::filesystem::exists(log_path)) continue;
        std::vector<AccessLogEntry> fresh;
        try {
          fresh = import_jsonl(read_text(log_path.string()));
        } catch (const Error&) {
          continue;  // caught mid-write
        }
        for (const auto& e : fresh)
          if (e.seq > last) {
            std::cout << entry_to_json(e).dump() << '\n' << std::flush;
            last = e.seq;
          }
      }
      return kOk;
    }

    if (alerts->parsed()) {
      if (!apply_id.empty()) {
        const auto v = svc.apply_alert(apply_id);
        if (!v) {
          std::cerr << "unknown alert: " << apply_id << '\n';
          return kUsage;
        }
        emit(opt, {{"applied", apply_id}, {"version", *v}}, "applied " + apply_id + ", policy version " + std::to_string(*v) + "\n");
        return kOk;
      }
      json arr = json::array();
      std::ostringstream text;
      const auto list = svc.alerts();
      for (const auto& a : list) {
        arr.push_back(alert_to_json(a));
        text << a.id() << "  " << a.evidence.size() << " entries, recommends";
        for (const auto& p : a.recommended.policies)
          text << ' ' << to_string(p.permission) << "=" << action_kind(p.action);
        text << '\n';
      }
      if (list.empty()) text << "no alerts\n";
      emit(opt, arr, text.str());
      return kOk;
    }

    if (bench_overhead->parsed()) {
      json all = json::array();
      std::string text;
      for (int i = 0; i < runs; ++i) {
        OverheadOptions o;
        o.n_per_permission = n;
        o.seed = static_cast<std::uint64_t>(i + 1);
        const auto stats = bench_api_overhead(o);
        all.push_back(overhead_json(stats));
        text += "run " + std::to_string(i + 1) + "\n" + overhead_text(stats);
      }
      emit(opt, runs == 1 ? all[0] : all, text);
      return kOk;
    }
    if (bench_battery->parsed()) {
      const auto model = model_name == "calibrated" ? EnergyModel::calibrated()
                         : model_name == "zero"     ? EnergyModel::zero()
                                                    : EnergyModel::defaults();
      const auto r = bench_battery_saver(n, model);
      std::ostringstream text;
      text << "calls " << r.n << "\nbaseline " << r.baseline_uah() << " uAh\nsaver " << r.saver_uah()
           << " uAh\nsaved per call " << r.saved_per_call_uah() << " uAh\nsavings_pct " << r.savings_pct << "\n";
      emit(opt, battery_report_to_json(r), text.str());
      return kOk;
    }

    if (heatmap->parsed()) {
      int failures = 0;
      if (run_catalog)
        for (const auto& s : catalog()) failures += svc.run_now(s.name, std::nullopt).failed_step ? 1 : 0;
      const auto m = svc.coverage();
      write_text(heat_out, m.to_csv());
      emit(opt, m.to_json(), "wrote " + heat_out + " (" + std::to_string(m.apps().size()) + " apps)\n");
      return failures ? kAssertionFailed : kOk;
    }

    if (gyro->parsed()) {
      GyrosecConfig c;
      c.seed = exp_seed;
      const auto plain = gyrosec_experiment(n_train, n_test, false, c);
      const auto spoofed = gyrosec_experiment(n_train, n_test, true, c);
      std::ostringstream text;
      text << "unspoofed accuracy " << plain.accuracy << " (reference " << plain.reference_unspoofed << ")\n"
           << "spoofed accuracy   " << spoofed.accuracy << " (reference " << spoofed.reference_spoofed << ")\n";
      emit(opt, {{"unspoofed", gyrosec_result_to_json(plain)}, {"spoofed", gyrosec_result_to_json(spoofed)}}, text.str());
      return kOk;
    }
    if (auth->parsed()) {
      const auto tmpl = auth_enroll(auth_record_trace(genuine_holder(), exp_seed));
      int accepted = 0, rejected = 0, replayed = 0;
      for (int i = 1; i <= trials; ++i) {
        const auto s = exp_seed + static_cast<std::uint64_t>(i);
        accepted += auth_verify(tmpl, auth_record_trace(genuine_holder(), s)) ? 1 : 0;
        rejected += auth_verify(tmpl, auth_record_trace(random_impostor(s), s)) ? 0 : 1;
        replayed += auth_replay_attack(tmpl, s) ? 1 : 0;
      }
      std::ostringstream text;
      text << "genuine accepted " << accepted << "/" << trials << "\nimpostors rejected " << rejected << "/" << trials
           << "\nreplay attacks accepted " << replayed << "/" << trials << "\n";
      emit(opt, {{"trials", trials}, {"genuine_accepted", accepted}, {"impostor_rejected", rejected},
                 {"replay_accepted", replayed}, {"tau", tmpl.tau}},
           text.str());
      return kOk;
    }

    if (serve->parsed()) {
      if (!net_audit::is_loopback(host)) {
        std::cerr << "refusing to bind non-loopback address " << host << '\n';
        return kUsage;
      }
      HttpGateway gw(svc);
      const int bound = gw.start(host, port);
      std::cerr << "listening on http://" << host << ":" << bound << '\n';
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      gw.stop();
      return kOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    return e.code() == ErrorCode::AssertionFailed ? kAssertionFailed : kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kOk;
}
