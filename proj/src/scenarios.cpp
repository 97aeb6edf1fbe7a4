#include "decoy/scenarios.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "decoy/error.hpp"
#include "decoy/hooking.hpp"

namespace decoy {

namespace step {
bool operator==(const Repeat& a, const Repeat& b) { return a.times == b.times && a.steps == b.steps; }
}  // namespace step

// ---- predicates ----------------------------------------------------------------

namespace {

constexpr std::pair<Predicate::Kind, std::string_view> kPredicateNames[] = {
    {Predicate::Kind::NotNull, "not_null"},       {Predicate::Kind::IsNull, "is_null"},
    {Predicate::Kind::KindIs, "kind_is"},         {Predicate::Kind::KindOrNull, "kind_or_null"},
    {Predicate::Kind::NonEmpty, "non_empty"},     {Predicate::Kind::ContainsSender, "contains_sender"},
};

std::string_view predicate_name(Predicate::Kind k) {
  for (const auto& [kind, name] : kPredicateNames)
    if (kind == k) return name;
  return "?";
}

Predicate::Kind predicate_kind(std::string_view s) {
  for (const auto& [kind, name] : kPredicateNames)
    if (name == s) return kind;
  throw Error(ErrorCode::Parse, "unknown predicate " + std::string(s));
}

}  // namespace

bool Predicate::holds(const Value& v) const {
  switch (kind) {
    case Kind::NotNull: return !is_null(v);
    case Kind::IsNull: return is_null(v);
    case Kind::KindIs: return kind_name(v) == arg;
    case Kind::KindOrNull: return is_null(v) || kind_name(v) == arg;
    case Kind::NonEmpty:
      return std::visit(
          [](const auto& x) -> bool {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Null>) return false;
            else if constexpr (std::is_same_v<T, std::string> || std::is_same_v<T, ContactList> ||
                               std::is_same_v<T, SmsList> || std::is_same_v<T, CalendarList>)
              return !x.empty();
            else if constexpr (std::is_same_v<T, Blob>) return !x.bytes.empty();
            else return true;
          },
          v);
    case Kind::ContainsSender: {
      const auto* inbox = std::get_if<SmsList>(&v);
      return inbox && std::any_of(inbox->begin(), inbox->end(), [&](const SmsMessage& m) { return m.sender == arg; });
    }
  }
  return false;
}

// ---- script JSON -------------------------------------------------------------

namespace {

nlohmann::json step_to_json(const ScriptStep& s) {
  return std::visit(
      [](const auto& op) -> nlohmann::json {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, step::CallApi>)
          return {{"op", "call"}, {"method", op.method}, {"args", args_to_json(op.args)}};
        else if constexpr (std::is_same_v<T, step::Sleep>)
          return {{"op", "sleep"}, {"ms", op.ms}};
        else if constexpr (std::is_same_v<T, step::GoForeground>)
          return {{"op", "foreground"}};
        else if constexpr (std::is_same_v<T, step::GoBackground>)
          return {{"op", "background"}};
        else if constexpr (std::is_same_v<T, step::EmitInteraction>)
          return {{"op", "interaction"}, {"kind", to_string(op.kind)}};
        else if constexpr (std::is_same_v<T, step::InjectTouch>)
          return {{"op", "touch"}, {"row", op.cell.row}, {"col", op.cell.col}};
        else if constexpr (std::is_same_v<T, step::Assert>) {
          nlohmann::json p = {{"kind", predicate_name(op.predicate.kind)}};
          if (!op.predicate.arg.empty()) p["arg"] = op.predicate.arg;
          return {{"op", "assert"}, {"predicate", p}};
        } else {
          nlohmann::json inner = nlohmann::json::array();
          for (const auto& s : op.steps) inner.push_back(step_to_json(s));
          return {{"op", "repeat"}, {"times", op.times}, {"steps", inner}};
        }
      },
      s.op);
}

ScriptStep step_from_json(const nlohmann::json& j) {
  const auto op = j.at("op").get<std::string>();
  if (op == "call") return {step::CallApi{j.at("method").get<std::string>(), args_from_json(j.value("args", nlohmann::json::array()))}};
  if (op == "sleep") return {step::Sleep{j.at("ms").get<VirtualMs>()}};
  if (op == "foreground") return {step::GoForeground{}};
  if (op == "background") return {step::GoBackground{}};
  if (op == "interaction") {
    auto k = interaction_kind_from_string(j.at("kind").get<std::string>());
    if (!k) throw Error(ErrorCode::Parse, "unknown interaction kind");
    return {step::EmitInteraction{*k}};
  }
  if (op == "touch") return {step::InjectTouch{GridCell{j.at("row").get<int>(), j.at("col").get<int>()}}};
  if (op == "assert") {
    const auto& p = j.at("predicate");
    return {step::Assert{Predicate{predicate_kind(p.at("kind").get<std::string>()), p.value("arg", std::string{})}}};
  }
  if (op == "repeat") {
    step::Repeat r;
    r.times = j.at("times").get<int>();
    for (const auto& s : j.at("steps")) r.steps.push_back(step_from_json(s));
    return {std::move(r)};
  }
  throw Error(ErrorCode::Parse, "unknown step op " + op);
}

}  // namespace

nlohmann::json script_to_json(const ScenarioScript& s) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& st : s.steps) steps.push_back(step_to_json(st));
  return {{"name", s.name},
          {"category", s.category == ScenarioCategory::Benign ? "benign" : "malicious"},
          {"designated_rule", s.designated_rule ? nlohmann::json(to_string(*s.designated_rule)) : nlohmann::json()},
          {"description", s.description},
          {"seed", s.seed},
          {"manifest", manifest_to_json(s.manifest)},
          {"steps", steps}};
}

ScenarioScript script_from_json(const nlohmann::json& j) {
  try {
    ScenarioScript s;
    s.name = j.at("name").get<std::string>();
    const auto cat = j.at("category").get<std::string>();
    if (cat != "benign" && cat != "malicious") throw Error(ErrorCode::Parse, "category must be benign or malicious");
    s.category = cat == "benign" ? ScenarioCategory::Benign : ScenarioCategory::Malicious;
    if (j.contains("designated_rule") && !j["designated_rule"].is_null()) {
      s.designated_rule = rule_from_string(j["designated_rule"].get<std::string>());
      if (!s.designated_rule) throw Error(ErrorCode::Parse, "unknown rule");
    }
    s.description = j.value("description", std::string{});
    s.seed = j.value("seed", std::uint64_t{1});
    s.manifest = manifest_from_json(j.at("manifest"));
    for (const auto& st : j.at("steps")) s.steps.push_back(step_from_json(st));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("scenario: ") + e.what());
  }
}

void validate_script(const ScenarioScript& s) {
  if (s.name.empty()) throw Error(ErrorCode::InvalidArgument, "scenario needs a name");
  if (s.manifest.app_id.empty()) throw Error(ErrorCode::InvalidArgument, s.name + ": manifest needs an app id");
  auto walk = [&](auto&& self, const std::vector<ScriptStep>& steps) -> void {
    for (const auto& st : steps) {
      if (const auto* call = std::get_if<step::CallApi>(&st.op)) {
        const auto& m = method_info(call->method);
        if (!s.manifest.grants(m.permission))
          throw Error(ErrorCode::InvalidArgument, s.name + ": " + call->method + " needs " +
                                                      std::string(to_string(m.permission)));
      } else if (const auto* rep = std::get_if<step::Repeat>(&st.op)) {
        if (rep->times < 0) throw Error(ErrorCode::InvalidArgument, s.name + ": negative repeat count");
        self(self, rep->steps);
      } else if (const auto* sl = std::get_if<step::Sleep>(&st.op)) {
        if (sl->ms < 0) throw Error(ErrorCode::InvalidArgument, s.name + ": negative sleep");
      }
    }
  };
  walk(walk, s.steps);
}

// ---- catalog -----------------------------------------------------------------

namespace {

using P = PermissionKind;

ScriptStep call(std::string_view method, ArgList args = {}) { return {step::CallApi{std::string(method), std::move(args)}}; }
ScriptStep sleep_ms(VirtualMs ms) { return {step::Sleep{ms}}; }
ScriptStep foreground() { return {step::GoForeground{}}; }
ScriptStep background() { return {step::GoBackground{}}; }
ScriptStep interact(InteractionKind k) { return {step::EmitInteraction{k}}; }
ScriptStep touch(int row, int col) { return {step::InjectTouch{GridCell{row, col}}}; }
ScriptStep expect(Predicate::Kind k, std::string arg = {}) { return {step::Assert{Predicate{k, std::move(arg)}}}; }
ScriptStep repeat(int times, std::vector<ScriptStep> steps) { return {step::Repeat{times, std::move(steps)}}; }

using K = Predicate::Kind;
using IK = InteractionKind;

ScenarioScript make(std::string name, ScenarioCategory cat, std::optional<DetectionRule> rule, std::string desc,
                    AppManifest manifest, std::vector<ScriptStep> steps) {
  ScenarioScript s;
  s.name = std::move(name);
  s.category = cat;
  s.designated_rule = rule;
  s.description = std::move(desc);
  s.manifest = std::move(manifest);
  s.steps = std::move(steps);
  return s;
}

std::vector<ScenarioScript> build_catalog() {
  const auto benign = ScenarioCategory::Benign;
  const auto malicious = ScenarioCategory::Malicious;
  std::vector<ScenarioScript> c;

  c.push_back(make("uber-like", benign, std::nullopt,
                   "Ride hailing: reads the pickup location and posts it while the user books a ride.",
                   {"com.example.ride", {P::Location, P::Internet, P::Contacts},
                    {{"ride", {P::Location, P::Internet}}, {"invite", {P::Contacts}}}},
                   {foreground(),
                    repeat(3, {interact(IK::Touch), call(methods::kLastKnownLocation), expect(K::KindIs, "location"),
                               call(methods::kSocketSend, {std::string("api.ride.example"), std::int64_t{512}}),
                               expect(K::KindOrNull, "bool"), sleep_ms(2000)})}));

  c.push_back(make("facebook-like", malicious, DetectionRule::MicWithoutIndicator,
                   "Social feed: records the microphone through a path that never lights the indicator "
                   "while the user scrolls, and reads calendar events with their locations.",
                   {"com.example.social", {P::Microphone, P::Calendar, P::Location, P::Internet},
                    {{"video-call", {P::Microphone}}, {"events", {P::Calendar, P::Location}}, {"feed", {P::Internet}}}},
                   {foreground(), interact(IK::Touch), call(methods::kCalendarEvents), expect(K::KindIs, "calendar"),
                    call(methods::kLastKnownLocation), expect(K::KindIs, "location"),
                    repeat(5, {interact(IK::Scroll),
                               call(methods::kSocketSend, {std::string("feed.example"), std::int64_t{2048}}),
                               expect(K::KindOrNull, "bool"), call(methods::kMediaRecorderRead),
                               expect(K::KindIs, "audio"), sleep_ms(1000)})}));

  c.push_back(make("snapchat-like", benign, std::nullopt,
                   "Camera messenger: finds friends in the address book, takes a snap and shares it.",
                   {"com.example.snap", {P::Contacts, P::Camera, P::Internet},
                    {{"friends", {P::Contacts}}, {"camera", {P::Camera}}, {"share", {P::Internet}}}},
                   {foreground(), interact(IK::Touch), call(methods::kQueryContacts), expect(K::NonEmpty),
                    interact(IK::ButtonPress), call(methods::kCaptureFrame), expect(K::KindIs, "frame"),
                    call(methods::kSocketSend, {std::string("share.example"), std::int64_t{4096}}),
                    expect(K::KindOrNull, "bool")}));

  c.push_back(make("truecaller-like", benign, std::nullopt,
                   "Caller id: scans the inbox for spam senders and resolves contacts.",
                   {"com.example.callerid", {P::SmsRead, P::Contacts},
                    {{"spam-filter", {P::SmsRead}}, {"caller-id", {P::Contacts}}}},
                   {foreground(), interact(IK::Touch), call(methods::kSmsInbox), expect(K::NonEmpty),
                    expect(K::ContainsSender, "+1-900-555-0100"), call(methods::kQueryContacts),
                    expect(K::NonEmpty)}));

  c.push_back(make("clipboard-notes", benign, std::nullopt, "Notes app: pastes the clipboard into a note.",
                   {"com.example.notes", {P::Clipboard}, {{"paste", {P::Clipboard}}}},
                   {foreground(), interact(IK::ButtonPress), call(methods::kGetPrimaryClip),
                    expect(K::KindOrNull, "clip")}));

  c.push_back(make("auth-app", benign, std::nullopt,
                   "Continuous authenticator: samples motion sensors while in use.",
                   {std::string(kAuthApp), {P::Accelerometer, P::Gyroscope},
                    {{"auth", {P::Accelerometer, P::Gyroscope}}}},
                   {foreground(), interact(IK::Touch),
                    repeat(20, {call(methods::kReadAccelerometer), expect(K::KindIs, "sensor"),
                                call(methods::kReadGyroscope), expect(K::KindIs, "sensor"), sleep_ms(10)})}));

  c.push_back(make("pdf-scanner", malicious, DetectionRule::BgUpload,
                   "Document scanner: after a scan it uploads stored files in the background.",
                   {"com.example.scanner", {P::Storage, P::Internet, P::Camera},
                    {{"scan", {P::Camera, P::Storage}}, {"sync", {P::Internet}}}},
                   {foreground(), interact(IK::Touch), call(methods::kCaptureFrame), expect(K::KindIs, "frame"),
                    call(methods::kReadFile, {std::string("/sdcard/Documents/scan1.pdf")}), expect(K::KindIs, "blob"),
                    background(),
                    repeat(4, {call(methods::kReadFile, {std::string("/sdcard/Documents/tax-return.pdf")}),
                               expect(K::KindIs, "blob"),
                               call(methods::kSocketSend, {std::string("upload.example"), std::int64_t{24576}}),
                               expect(K::KindOrNull, "bool"), sleep_ms(5000)})}));

  c.push_back(make("video-editor", malicious, DetectionRule::UnnecessaryAccess,
                   "Video editor: reads the address book, which no declared feature needs.",
                   {"com.example.videoedit", {P::Camera, P::Storage, P::Microphone, P::Contacts},
                    {{"edit", {P::Camera, P::Storage, P::Microphone}}}},
                   {foreground(), interact(IK::Touch), call(methods::kCaptureFrame), expect(K::KindIs, "frame"),
                    call(methods::kAudioRecordRead), expect(K::KindIs, "audio"),
                    call(methods::kReadFile, {std::string("/sdcard/Movies/clip.mp4")}), expect(K::KindIs, "blob"),
                    call(methods::kQueryContacts), expect(K::NonEmpty)}));

  c.push_back(make("bus-sim", malicious, DetectionRule::BgSensorAccess,
                   "Driving game: keeps sampling motion sensors after it leaves the screen.",
                   {"com.example.bussim", {P::Accelerometer, P::Gyroscope},
                    {{"steering", {P::Accelerometer, P::Gyroscope}}}},
                   {foreground(), interact(IK::Touch),
                    repeat(5, {call(methods::kReadAccelerometer), expect(K::KindIs, "sensor"), sleep_ms(20)}),
                    background(),
                    repeat(30, {call(methods::kReadAccelerometer), expect(K::KindIs, "sensor"),
                                call(methods::kReadGyroscope), expect(K::KindIs, "sensor"), sleep_ms(1000)})}));

  c.push_back(make("translator-photo", malicious, DetectionRule::BgCameraAccess,
                   "Photo translator: keeps capturing camera frames in the background.",
                   {"com.example.translate", {P::Camera, P::Internet}, {{"translate", {P::Camera, P::Internet}}}},
                   {foreground(), interact(IK::Touch), call(methods::kCaptureFrame), expect(K::KindIs, "frame"),
                    background(),
                    repeat(3, {call(methods::kCaptureFrame), expect(K::KindIs, "frame"), sleep_ms(2000)})}));

  c.push_back(make("geospot", malicious, DetectionRule::LocationPolling,
                   "Location tracker: polls the location about eight times a minute for five minutes.",
                   {"com.example.geospot", {P::Location}, {{"map", {P::Location}}}},
                   {repeat(40, {call(methods::kLastKnownLocation), expect(K::KindIs, "location"), sleep_ms(7500)})}));

  c.push_back(make("sms-fraud", malicious, DetectionRule::SmsSendNoInteraction,
                   "Messaging app: sends premium-rate SMS from the background with no user action.",
                   {"com.example.privatesms", {P::SmsRead, P::SmsSend}, {{"messaging", {P::SmsRead, P::SmsSend}}}},
                   {foreground(), interact(IK::Touch), call(methods::kSmsInbox), expect(K::NonEmpty), background(),
                    sleep_ms(10000),
                    repeat(3, {call(methods::kSendSms, {std::string("+44-7700-900123"), std::string("SUB PREMIUM")}),
                               expect(K::KindOrNull, "bool"), call(methods::kSmsInbox), expect(K::NonEmpty),
                               sleep_ms(3000)})}));

  std::vector<ScriptStep> gyro_steps;
  gyro_steps.push_back(background());
  for (int r = 0; r < 3; ++r)
    for (int col = 0; col < 3; ++col) {
      gyro_steps.push_back(touch(r, col));
      gyro_steps.push_back(repeat(12, {call(methods::kReadAccelerometer), expect(K::KindIs, "sensor"),
                                       call(methods::kReadGyroscope), expect(K::KindIs, "sensor"), sleep_ms(10)}));
      gyro_steps.push_back(sleep_ms(500));
    }
  c.push_back(make("gyrosec", malicious, DetectionRule::BgSensorAccess,
                   "Touch side channel: samples motion sensors in the background while the user types elsewhere.",
                   {std::string(kGyrosecApp), {P::Accelerometer, P::Gyroscope},
                    {{"level", {P::Accelerometer, P::Gyroscope}}}},
                   std::move(gyro_steps)));

  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i].seed = 1;
    validate_script(c[i]);
  }
  return c;
}

}  // namespace

const std::vector<ScenarioScript>& catalog() {
  static const std::vector<ScenarioScript> kCatalog = build_catalog();
  return kCatalog;
}

const ScenarioScript& find_scenario(std::string_view name) {
  for (const auto& s : catalog())
    if (s.name == name) return s;
  throw Error(ErrorCode::UnknownScenario, std::string(name));
}

std::vector<ScenarioScript> load_catalog_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<ScenarioScript> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + f.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Parse, f.string() + ": " + e.what());
    }
    out.push_back(script_from_json(j));
    validate_script(out.back());
  }
  return out;
}

// ---- execution ---------------------------------------------------------------

DetectionInput ScenarioReport::detection_input() const {
  DetectionInput in;
  in.entries = log;
  in.manifests[manifest.app_id] = manifest;
  in.interactions = interactions;
  return in;
}

nlohmann::json report_to_json(const ScenarioReport& r) {
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : r.log) log.push_back(entry_to_json(e));
  nlohmann::json alerts = nlohmann::json::array();
  for (const auto& a : r.alerts) alerts.push_back(alert_to_json(a));
  nlohmann::json coverage = nlohmann::json::object();
  for (const auto& [p, s] : r.coverage) coverage[std::string(to_string(p))] = to_string(s);
  nlohmann::json faults = nlohmann::json::array();
  for (const auto& f : r.faults)
    faults.push_back({{"owner", f.owner}, {"cause", f.cause}, {"app", f.app_id}, {"method", f.method}, {"t", f.t}});
  nlohmann::json reads = nlohmann::json::object();
  for (const auto& [p, n] : r.truth_reads) reads[std::string(to_string(p))] = n;
  nlohmann::json interactions = nlohmann::json::array();
  for (const auto& i : r.interactions)
    interactions.push_back({{"t", i.timestamp}, {"app", i.app_id}, {"kind", to_string(i.kind)}});
  nlohmann::json j = {{"name", r.name},
                      {"seed", r.seed},
                      {"app", r.manifest.app_id},
                      {"assertions_passed", r.assertions_passed},
                      {"failed_step", r.failed_step ? nlohmann::json(*r.failed_step) : nlohmann::json()},
                      {"cancelled", r.cancelled},
                      {"log", log},
                      {"interactions", interactions},
                      {"alerts", alerts},
                      {"call_results", r.call_results},
                      {"coverage", coverage},
                      {"faults", faults},
                      {"truth_reads", reads}};
  if (r.energy)
    j["energy_uah"] = {{"resource", to_micro_ah(r.energy->resource)},
                       {"hook", to_micro_ah(r.energy->hook)},
                       {"saved", to_micro_ah(r.energy->saved)}};
  return j;
}

namespace {

class Runner {
 public:
  Runner(VirtualDevice& device, AppProcess& proc, ScenarioReport& report, const std::atomic<bool>* cancel,
         double realtime_factor)
      : device_(device), proc_(proc), report_(report), cancel_(cancel), realtime_factor_(realtime_factor) {}

  /// Returns false when the run stops early (assertion failure or cancellation).
  bool run(const std::vector<ScriptStep>& steps, std::size_t top_index) {
    for (const auto& s : steps) {
      if (cancel_ && cancel_->load()) {
        report_.cancelled = true;
        return false;
      }
      if (!exec(s, top_index)) return false;
    }
    return true;
  }

  bool run_top(const std::vector<ScriptStep>& steps) {
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (cancel_ && cancel_->load()) {
        report_.cancelled = true;
        return false;
      }
      if (!exec(steps[i], i)) return false;
    }
    return true;
  }

 private:
  bool exec(const ScriptStep& s, std::size_t top_index) {
    return std::visit(
        [&](const auto& op) -> bool {
          using T = std::decay_t<decltype(op)>;
          if constexpr (std::is_same_v<T, step::CallApi>) {
            last_ = device_.invoke(proc_, op.method, op.args);
            report_.call_results.push_back(
                {{"step", top_index}, {"method", op.method}, {"t", device_.now()}, {"value", value_summary(*last_)}});
          } else if constexpr (std::is_same_v<T, step::Sleep>) {
            pace(op.ms);
            device_.advance(op.ms);
          } else if constexpr (std::is_same_v<T, step::GoForeground>) {
            device_.set_activity_state(proc_, ActivityState::Foreground);
          } else if constexpr (std::is_same_v<T, step::GoBackground>) {
            device_.set_activity_state(proc_, ActivityState::Background);
          } else if constexpr (std::is_same_v<T, step::EmitInteraction>) {
            device_.record_interaction(proc_.app_id, op.kind);
          } else if constexpr (std::is_same_v<T, step::InjectTouch>) {
            device_.inject_touch(op.cell, device_.now());
          } else if constexpr (std::is_same_v<T, step::Assert>) {
            if (!last_ || !op.predicate.holds(*last_)) {
              report_.failed_step = top_index;
              return false;
            }
            ++report_.assertions_passed;
          } else {
            for (int i = 0; i < op.times; ++i)
              if (!run(op.steps, top_index)) return false;
          }
          return true;
        },
        s.op);
  }

  void pace(VirtualMs ms) const {
    if (realtime_factor_ <= 0) return;
    const auto until = std::chrono::steady_clock::now() +
                       std::chrono::microseconds(static_cast<std::int64_t>(ms * realtime_factor_ * 1000.0));
    while (std::chrono::steady_clock::now() < until && !(cancel_ && cancel_->load()))
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }

  VirtualDevice& device_;
  AppProcess& proc_;
  ScenarioReport& report_;
  const std::atomic<bool>* cancel_;
  double realtime_factor_;
  std::optional<Value> last_;
};

}  // namespace

ScenarioReport execute_scenario(const ScenarioScript& script, const ScenarioConfig& config) {
  validate_script(script);
  ScenarioReport report;
  report.name = script.name;
  report.seed = config.seed.value_or(script.seed);
  report.manifest = script.manifest;

  DeviceConfig dc;
  dc.seed = report.seed;
  dc.record_latency = config.record_latency;
  VirtualDevice device(dc, config.log);
  PolicyStore private_store;
  const PolicyStore& store = config.store ? *config.store : private_store;
  Deceiver deceiver(store, report.seed);
  HookEngine engine(device);
  const auto bypass = engine.bypass_hidden_api(kDeceiverOwner);
  std::optional<EnergyLedger> ledger;
  if (config.energy) {
    ledger.emplace(*config.energy);
    ledger->attach(device);
  }

  const auto start_seq = device.log().last_seq();
  auto& proc = device.spawn_process(script.manifest, script.name);
  if (config.install_hooks) install_deceiving_hooks(engine, proc, store, deceiver, &bypass);

  Runner runner(device, proc, report, config.cancel, config.realtime_factor);
  runner.run_top(script.steps);
  device.set_activity_state(proc, ActivityState::Stopped);

  for (auto& e : device.log().entries_after(start_seq))
    if (e.app_id == proc.app_id) report.log.push_back(std::move(e));
  report.interactions = device.interaction_log();
  report.alerts = evaluate(report.detection_input(), {}, config.detection);
  const AppUsage usage = report.usage();
  const auto matrix = coverage_matrix(std::span<const AppUsage>(&usage, 1));
  for (auto p : kAllPermissions) report.coverage[p] = matrix.at(proc.app_id, p);
  report.faults = device.hook_faults();
  for (auto p : kAllPermissions)
    if (auto n = device.truth().reads(p)) report.truth_reads[p] = n;
  if (ledger) report.energy = ledger->totals(proc.app_id);
  return report;
}

ScenarioReport run_scenario(std::string_view name, const ScenarioConfig& config) {
  auto report = execute_scenario(find_scenario(name), config);
  if (report.failed_step)
    throw Error(ErrorCode::AssertionFailed, std::string(name) + ": assertion failed at step " +
                                                std::to_string(*report.failed_step));
  return report;
}

CoverageMatrix coverage_matrix(const std::vector<ScenarioReport>& reports) {
  std::vector<AppUsage> usage;
  usage.reserve(reports.size());
  for (const auto& r : reports) usage.push_back(r.usage());
  return coverage_matrix(std::span<const AppUsage>(usage));
}

// ---- touch side channel ----------------------------------------------------------

FeatureVector window_features(const std::vector<SensorReading>& accel, const std::vector<SensorReading>& gyro) {
  if (accel.empty() || gyro.empty()) throw Error(ErrorCode::EmptyTrace, "feature window needs samples");
  FeatureVector f{};
  auto fill = [&f](const std::vector<SensorReading>& xs, int offset) {
    const double n = static_cast<double>(xs.size());
    for (int axis = 0; axis < 3; ++axis) {
      double mean = 0;
      for (const auto& r : xs) mean += r.axes[axis];
      mean /= n;
      double var = 0;
      for (const auto& r : xs) var += (r.axes[axis] - mean) * (r.axes[axis] - mean);
      f[offset + axis] = mean;
      f[6 + offset + axis] = var / n;
    }
  };
  fill(accel, 0);
  fill(gyro, 3);
  return f;
}

namespace {

constexpr VirtualMs kGapBetweenTouchesMs = 500;

double sq_distance(const FeatureVector& a, const FeatureVector& b) {
  double d = 0;
  for (int i = 0; i < kFeatureDim; ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

}  // namespace

CollectResult gyrosec_collect(const std::vector<GridCell>& labels, bool spoofed, const GyrosecConfig& config,
                              std::optional<AppManifest> attacker) {
  DeviceConfig dc;
  dc.seed = config.seed;
  dc.grid_rows = config.grid_rows;
  dc.grid_cols = config.grid_cols;
  dc.signal = config.signal;
  VirtualDevice device(dc);
  PolicyStore store;
  if (spoofed)
    for (auto p : {P::Accelerometer, P::Gyroscope})
      store.set_policy(DeceitPolicy{std::string(kGyrosecApp), p, ConstantSensor{config.constant}, {}, true});
  Deceiver deceiver(store, config.seed);
  HookEngine engine(device);
  const auto bypass = engine.bypass_hidden_api(kDeceiverOwner);
  const auto manifest = attacker.value_or(AppManifest{std::string(kGyrosecApp),
                                                      {P::Accelerometer, P::Gyroscope},
                                                      {{"level", {P::Accelerometer, P::Gyroscope}}}});
  auto& proc = device.spawn_process(manifest, "gyrosec");
  install_deceiving_hooks(engine, proc, store, deceiver, &bypass);

  CollectResult out;
  const int samples = config.signal.samples_per_window();
  try {
    for (const auto& cell : labels) {
      device.inject_touch(cell, device.now());
      std::vector<SensorReading> accel, gyro;
      for (int k = 0; k < samples; ++k) {
        auto a = device.invoke(proc, methods::kReadAccelerometer);
        auto g = device.invoke(proc, methods::kReadGyroscope);
        if (const auto* r = std::get_if<SensorReading>(&a)) accel.push_back(*r);
        if (const auto* r = std::get_if<SensorReading>(&g)) gyro.push_back(*r);
        device.advance(config.signal.sample_period_ms());
      }
      out.windows.push_back({cell, window_features(accel, gyro)});
      device.advance(kGapBetweenTouchesMs);
    }
  } catch (const Error& e) {
    out.error = std::string(to_string(e.code())) + ": " + e.what();
  }
  out.log = device.log().snapshot();
  return out;
}

void ClassifierModel::train(const std::vector<LabeledWindow>& windows) {
  const int cells = rows_ * cols_;
  std::vector<FeatureVector> sums(static_cast<std::size_t>(cells), FeatureVector{});
  std::vector<int> counts(static_cast<std::size_t>(cells), 0);
  for (const auto& w : windows) {
    if (w.cell.row < 0 || w.cell.row >= rows_ || w.cell.col < 0 || w.cell.col >= cols_)
      throw Error(ErrorCode::OutOfGrid, "training label outside the grid");
    const auto idx = static_cast<std::size_t>(w.cell.row * cols_ + w.cell.col);
    for (int i = 0; i < kFeatureDim; ++i) sums[idx][i] += w.features[i];
    ++counts[idx];
  }
  for (int c = 0; c < cells; ++c)
    if (counts[static_cast<std::size_t>(c)] == 0)
      throw Error(ErrorCode::InvalidArgument, "every grid cell needs at least one training window");
  centroids_.assign(static_cast<std::size_t>(cells), FeatureVector{});
  for (std::size_t c = 0; c < sums.size(); ++c)
    for (int i = 0; i < kFeatureDim; ++i) centroids_[c][i] = sums[c][i] / counts[c];
}

GridCell ClassifierModel::predict(const FeatureVector& f) const {
  if (centroids_.empty()) throw Error(ErrorCode::InvalidArgument, "classifier is not trained");
  std::size_t best = 0;
  double best_d = sq_distance(f, centroids_[0]);
  for (std::size_t c = 1; c < centroids_.size(); ++c) {
    const double d = sq_distance(f, centroids_[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return GridCell{static_cast<int>(best) / cols_, static_cast<int>(best) % cols_};
}

nlohmann::json gyrosec_result_to_json(const GyrosecResult& r) {
  return {{"accuracy", r.accuracy},
          {"n_train", r.n_train},
          {"n_test", r.n_test},
          {"spoofed", r.spoofed},
          {"reference", {{"unspoofed", r.reference_unspoofed}, {"spoofed", r.reference_spoofed}}}};
}

std::vector<GridCell> balanced_labels(int n, int rows, int cols, std::uint64_t seed) {
  std::vector<GridCell> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  for (int i = 0; i < n; ++i) out.push_back(GridCell{(i % (rows * cols)) / cols, (i % (rows * cols)) % cols});
  std::mt19937_64 rng(seed);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

GyrosecResult gyrosec_experiment(int n_train, int n_test, bool spoofed, const GyrosecConfig& config) {
  const int cells = config.grid_rows * config.grid_cols;
  if (n_train < cells || n_test < cells)
    throw Error(ErrorCode::InvalidArgument, "n_train and n_test must cover every grid cell");

  auto train_cfg = config;
  auto train = gyrosec_collect(balanced_labels(n_train, config.grid_rows, config.grid_cols, config.seed), false,
                               train_cfg);
  if (train.error) throw Error(ErrorCode::InvalidArgument, *train.error);
  ClassifierModel model(config.grid_rows, config.grid_cols);
  model.train(train.windows);

  auto test_cfg = config;
  test_cfg.seed = config.seed * 7919 + 17;
  auto test = gyrosec_collect(balanced_labels(n_test, config.grid_rows, config.grid_cols, test_cfg.seed), spoofed,
                              test_cfg);
  if (test.error) throw Error(ErrorCode::InvalidArgument, *test.error);
  int hits = 0;
  for (const auto& w : test.windows) hits += model.predict(w.features) == w.cell ? 1 : 0;

  GyrosecResult r;
  r.accuracy = static_cast<double>(hits) / static_cast<double>(test.windows.size());
  r.n_train = n_train;
  r.n_test = n_test;
  r.spoofed = spoofed;
  return r;
}

// ---- continuous authentication -------------------------------------------------

HolderProfile genuine_holder() { return HolderProfile{{0.35, -0.20, 0.15, 0.05, -0.10, 0.08}, 0.25}; }

HolderProfile random_impostor(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5a17e5ULL);
  std::uniform_real_distribution<double> bias(-1.0, 1.0);
  std::uniform_real_distribution<double> sigma(0.15, 0.45);
  HolderProfile h;
  for (auto& b : h.bias) b = bias(rng);
  h.sigma = sigma(rng);
  return h;
}

SensorTrace auth_record_trace(const HolderProfile& holder, std::uint64_t seed, int samples, PolicyStore* store) {
  if (samples <= 0) throw Error(ErrorCode::InvalidArgument, "samples must be > 0");
  DeviceConfig dc;
  dc.seed = seed;
  VirtualDevice device(dc);
  device.truth().set_holder_profile(holder.bias, holder.sigma);
  PolicyStore private_store;
  const PolicyStore& policies = store ? *store : private_store;
  Deceiver deceiver(policies, seed);
  HookEngine engine(device);
  const auto bypass = engine.bypass_hidden_api(kDeceiverOwner);
  auto& proc = device.spawn_process(AppManifest{std::string(kAuthApp),
                                                {P::Accelerometer, P::Gyroscope},
                                                {{"auth", {P::Accelerometer, P::Gyroscope}}}},
                                    "auth-app");
  install_deceiving_hooks(engine, proc, policies, deceiver, &bypass);
  device.set_activity_state(proc, ActivityState::Foreground);

  SensorTrace trace;
  trace.trace_id = "auth-" + std::to_string(seed);
  auto& accel = trace.channels[P::Accelerometer];
  auto& gyro = trace.channels[P::Gyroscope];
  for (int i = 0; i < samples; ++i) {
    auto a = device.invoke(proc, methods::kReadAccelerometer);
    auto g = device.invoke(proc, methods::kReadGyroscope);
    if (const auto* r = std::get_if<SensorReading>(&a)) accel.push_back(*r);
    if (const auto* r = std::get_if<SensorReading>(&g)) gyro.push_back(*r);
    device.advance(10);
  }
  return trace;
}

namespace {

FeatureVector trace_features(const SensorTrace& trace) {
  auto a = trace.channels.find(P::Accelerometer);
  auto g = trace.channels.find(P::Gyroscope);
  if (a == trace.channels.end() || g == trace.channels.end() || a->second.empty() || g->second.empty())
    throw Error(ErrorCode::EmptyTrace, "trace needs accelerometer and gyroscope samples");
  return window_features(a->second, g->second);
}

}  // namespace

AuthTemplate auth_enroll(const SensorTrace& trace, double tau) {
  if (!(tau > 0)) throw Error(ErrorCode::InvalidArgument, "tau must be > 0");
  return AuthTemplate{trace_features(trace), tau, trace};
}

double auth_distance(const AuthTemplate& t, const SensorTrace& trace) {
  return std::sqrt(sq_distance(t.features, trace_features(trace)));
}

bool auth_verify(const AuthTemplate& t, const SensorTrace& trace) { return auth_distance(t, trace) <= t.tau; }

bool auth_replay_attack(const AuthTemplate& t, std::uint64_t seed) {
  PolicyStore store;
  auto recorded = t.enrollment;
  recorded.trace_id = "enrolled";
  store.add_trace(recorded);
  for (auto p : {P::Accelerometer, P::Gyroscope})
    store.set_policy(DeceitPolicy{std::string(kAuthApp), p, ReplayTrace{recorded.trace_id}, {}, true});
  const auto trace = auth_record_trace(random_impostor(seed), seed, kAuthTraceSamples, &store);
  return auth_verify(t, trace);
}

}  // namespace decoy
