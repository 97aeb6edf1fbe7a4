#include "decoy/device.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "decoy/error.hpp"
#include "decoy/hooking.hpp"

namespace decoy {
namespace {

struct MethodSpec {
  std::string_view key;
  PermissionKind permission;
  bool hidden = false;
  bool indicator = false;
};

constexpr MethodSpec kMethodSpecs[] = {
    {methods::kLastKnownLocation, PermissionKind::Location},
    {methods::kLocationUpdate, PermissionKind::Location},
    {methods::kReadAccelerometer, PermissionKind::Accelerometer},
    {methods::kReadGyroscope, PermissionKind::Gyroscope},
    {methods::kReadMagnetometer, PermissionKind::Magnetometer},
    {methods::kReadLight, PermissionKind::Light},
    {methods::kInputSensorInfo, PermissionKind::Accelerometer, true},
    {methods::kAudioRecordRead, PermissionKind::Microphone, false, true},
    // Recorder path that never lights the privacy indicator.
    {methods::kMediaRecorderRead, PermissionKind::Microphone, false, false},
    {methods::kCaptureFrame, PermissionKind::Camera},
    {methods::kQueryContacts, PermissionKind::Contacts},
    {methods::kGetPrimaryClip, PermissionKind::Clipboard},
    {methods::kClipFromParcel, PermissionKind::Clipboard},
    {methods::kSmsInbox, PermissionKind::SmsRead},
    {methods::kSendSms, PermissionKind::SmsSend},
    {methods::kCalendarEvents, PermissionKind::Calendar},
    {methods::kReadFile, PermissionKind::Storage},
    {methods::kSocketSend, PermissionKind::Internet},
    {methods::kGetSerial, PermissionKind::DeviceInfo},
    {methods::kAdvertisingId, PermissionKind::Tracking},
};

MethodId make_method(const MethodSpec& spec) {
  const auto hash = spec.key.find('#');
  return MethodId{std::string(spec.key.substr(0, hash)), std::string(spec.key.substr(hash + 1)), spec.hidden,
                  spec.permission, spec.indicator};
}

OriginalBehavior behavior_for(const MethodId& m) {
  const auto key = m.key();
  const auto p = m.permission;
  if (p == PermissionKind::Location)
    return [](VirtualDevice& d, const CallContext& c, const ArgList&) -> Value { return d.truth().location(c.now); };
  if (key == methods::kInputSensorInfo)
    return [](VirtualDevice& d, const CallContext&, const ArgList&) -> Value {
      return d.truth().sensor_info(PermissionKind::Accelerometer);
    };
  if (is_motion_sensor(p))
    return [p](VirtualDevice& d, const CallContext& c, const ArgList&) -> Value {
      return d.truth().motion(p, c.now, d.config(), d.touches());
    };
  if (p == PermissionKind::Microphone) {
    const bool indicator = m.indicator_setting;
    return [indicator](VirtualDevice& d, const CallContext& c, const ArgList&) -> Value {
      d.open_mic_session(c.app_id, indicator);
      return d.truth().audio_chunk();
    };
  }
  switch (p) {
    case PermissionKind::Camera:
      return [](VirtualDevice& d, const CallContext&, const ArgList&) -> Value { return d.truth().camera_frame(); };
    case PermissionKind::Contacts:
      return [](VirtualDevice& d, const CallContext&, const ArgList&) -> Value { return d.truth().contacts(); };
    case PermissionKind::Clipboard:
      return [](VirtualDevice& d, const CallContext&, const ArgList&) -> Value { return d.truth().clipboard(); };
    case PermissionKind::SmsRead:
      return [](VirtualDevice& d, const CallContext&, const ArgList&) -> Value { return d.truth().sms_inbox(); };
    case PermissionKind::SmsSend:
      return [](VirtualDevice&, const CallContext&, const ArgList&) -> Value { return true; };
    case PermissionKind::Calendar:
      return [](VirtualDevice& d, const CallContext&, const ArgList&) -> Value { return d.truth().calendar(); };
    case PermissionKind::Storage:
      return [](VirtualDevice& d, const CallContext&, const ArgList& a) -> Value {
        return d.truth().file(arg_string(a, 0, "/sdcard/Documents/scan.pdf"));
      };
    case PermissionKind::Internet:
      // Simulated transport: the payload is accounted for, nothing leaves the process.
      return [](VirtualDevice&, const CallContext&, const ArgList&) -> Value { return true; };
    case PermissionKind::DeviceInfo:
      return [](VirtualDevice& d, const CallContext&, const ArgList&) -> Value { return d.truth().serial(); };
    case PermissionKind::Tracking:
      return [](VirtualDevice& d, const CallContext&, const ArgList&) -> Value { return d.truth().advertising_id(); };
    default:
      break;
  }
  throw Error(ErrorCode::UnknownMethod, key);
}

DispatchTable build_template() {
  DispatchTable t;
  for (const auto& spec : kMethodSpecs) {
    auto m = make_method(spec);
    auto inner = behavior_for(m);
    const auto p = m.permission;
    OriginalBehavior counted = [p, inner](VirtualDevice& d, const CallContext& c, const ArgList& a) {
      d.truth().count(p);
      return inner(d, c, a);
    };
    t.add(FunctionSlot{std::move(m), std::move(counted), {}});
  }
  return t;
}

std::string fmt_number(std::mt19937_64& rng, std::string_view prefix) {
  std::uniform_int_distribution<int> digit(0, 9);
  std::string s(prefix);
  for (int i = 0; i < 7; ++i) s.push_back(static_cast<char>('0' + digit(rng)));
  return s;
}

}  // namespace

// ---- DispatchTable ---------------------------------------------------------

FunctionSlot* DispatchTable::find(std::string_view key) {
  auto it = slots_.find(key);
  return it == slots_.end() ? nullptr : &it->second;
}

const FunctionSlot* DispatchTable::find(std::string_view key) const {
  auto it = slots_.find(key);
  return it == slots_.end() ? nullptr : &it->second;
}

void DispatchTable::add(FunctionSlot slot) {
  auto key = slot.method.key();
  slots_.insert_or_assign(std::move(key), std::move(slot));
}

std::vector<std::string> DispatchTable::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : slots_) out.push_back(k);
  return out;
}

std::vector<const FunctionSlot*> DispatchTable::slots_for(PermissionKind p) const {
  std::vector<const FunctionSlot*> out;
  for (const auto& [_, s] : slots_)
    if (s.method.permission == p) out.push_back(&s);
  return out;
}

const DispatchTable& zygote_template() {
  static const DispatchTable t = build_template();
  return t;
}

const MethodId& method_info(std::string_view key) {
  const auto* slot = zygote_template().find(key);
  if (!slot) throw Error(ErrorCode::UnknownMethod, std::string(key));
  return slot->method;
}

std::vector<MethodId> all_methods() {
  std::vector<MethodId> out;
  for (const auto& k : zygote_template().keys()) out.push_back(method_info(k));
  return out;
}

// ---- manifest ---------------------------------------------------------------

bool AppManifest::grants(PermissionKind p) const {
  return std::find(permissions.begin(), permissions.end(), p) != permissions.end();
}

bool AppManifest::feature_needs(PermissionKind p) const {
  for (const auto& [_, perms] : features)
    if (std::find(perms.begin(), perms.end(), p) != perms.end()) return true;
  return false;
}

nlohmann::json manifest_to_json(const AppManifest& m) {
  nlohmann::json perms = nlohmann::json::array();
  for (auto p : m.permissions) perms.push_back(to_string(p));
  nlohmann::json features = nlohmann::json::object();
  for (const auto& [f, ps] : m.features) {
    auto& arr = features[f] = nlohmann::json::array();
    for (auto p : ps) arr.push_back(to_string(p));
  }
  return {{"app", m.app_id}, {"permissions", perms}, {"features", features}};
}

AppManifest manifest_from_json(const nlohmann::json& j) {
  auto perm = [](const nlohmann::json& v) {
    auto p = permission_from_string(v.get<std::string>());
    if (!p) throw Error(ErrorCode::Parse, "unknown permission " + v.dump());
    return *p;
  };
  AppManifest m;
  try {
    m.app_id = j.at("app").get<std::string>();
    for (const auto& p : j.at("permissions")) m.permissions.push_back(perm(p));
    if (j.contains("features"))
      for (const auto& [f, ps] : j.at("features").items())
        for (const auto& p : ps) m.features[f].push_back(perm(p));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("manifest: ") + e.what());
  }
  return m;
}

std::string_view to_string(InteractionKind k) noexcept {
  switch (k) {
    case InteractionKind::Touch: return "Touch";
    case InteractionKind::Scroll: return "Scroll";
    case InteractionKind::ButtonPress: return "ButtonPress";
  }
  return "?";
}

std::optional<InteractionKind> interaction_kind_from_string(std::string_view s) noexcept {
  if (s == "Touch") return InteractionKind::Touch;
  if (s == "Scroll") return InteractionKind::Scroll;
  if (s == "ButtonPress") return InteractionKind::ButtonPress;
  return std::nullopt;
}

std::array<double, 3> touch_signature(GridCell cell, int rows, int cols) {
  const double x = cell.col - (cols - 1) / 2.0;
  const double y = cell.row - (rows - 1) / 2.0;
  const double n = std::sqrt(x * x + y * y + 1.0);
  return {x / n, y / n, 1.0 / n};
}

// ---- truth ------------------------------------------------------------------

TruthSources::TruthSources(std::uint64_t seed) : rng_(seed) {
  static constexpr std::string_view kFirst[] = {"Asha", "Bilal", "Chen", "Dana", "Emeka", "Farah", "Goran",
                                                "Hana", "Ivan", "Jia", "Kofi", "Lena", "Mateo", "Nia"};
  static constexpr std::string_view kLast[] = {"Rao", "Khan", "Wei", "Levi", "Obi", "Haddad", "Petrov",
                                               "Sato", "Novak", "Lin", "Mensah", "Berg", "Ruiz", "Ade"};
  std::uniform_real_distribution<double> jitter(-0.01, 0.01);
  home_ = GeoFix{40.7580 + jitter(rng_), -73.9855 + jitter(rng_), 8.0};
  std::uniform_int_distribution<std::size_t> pick(0, std::size(kFirst) - 1);
  for (int i = 0; i < 50; ++i)
    contacts_.push_back({std::string(kFirst[pick(rng_)]) + " " + std::string(kLast[pick(rng_)]),
                         fmt_number(rng_, "+1-212-")});
  inbox_ = {
      {"+91-98100-00001", "Your OTP is 4321. Do not share it."},
      {"+1-900-555-0100", "You have WON a prize! Reply YES to claim."},
      {contacts_[0].number, "Dinner at 8? Table booked near the office."},
      {"+1-900-555-0100", "Final notice: claim your reward now."},
  };
  events_ = {
      {"Oncology follow-up", "St. Mary Clinic, 4th floor", 1'700'000'000, 1'700'003'600},
      {"Team offsite", "Hudson Yards, Room 12", 1'700'090'000, 1'700'110'000},
      {"Lawyer meeting", "Baker & Co, 221 B St", 1'700'200'000, 1'700'203'600},
  };
  clipboard_ = ClipData{"address", "221B Baker Street, flat 2, door code 7719"};
}

GeoFix TruthSources::location(VirtualMs) {
  std::normal_distribution<double> n(0.0, 0.00005);
  return GeoFix{home_.lat + n(rng_), home_.lon + n(rng_), home_.accuracy_m};
}

SensorReading TruthSources::motion(PermissionKind sensor, VirtualMs now, const DeviceConfig& cfg,
                                   const std::vector<std::pair<VirtualMs, GridCell>>& touches) {
  std::array<double, 3> base{};
  if (sensor == PermissionKind::Magnetometer) base = {22.0, -5.0, -40.0};
  if (sensor == PermissionKind::Light) base = {320.0, 0.0, 0.0};
  const bool accel = sensor == PermissionKind::Accelerometer;
  const bool gyro = sensor == PermissionKind::Gyroscope;
  double sigma = cfg.signal.noise_sigma;
  if (holder_bias_ && (accel || gyro)) {
    for (int i = 0; i < 3; ++i) base[i] += (*holder_bias_)[accel ? i : i + 3];
    sigma = holder_sigma_;
  }
  if (accel || gyro) {
    for (auto it = touches.rbegin(); it != touches.rend(); ++it) {
      if (it->first <= now && now < it->first + cfg.signal.window_ms) {
        const auto sig = touch_signature(it->second, cfg.grid_rows, cfg.grid_cols);
        const double amp = accel ? cfg.signal.accel_amplitude : cfg.signal.gyro_amplitude;
        for (int i = 0; i < 3; ++i) base[i] += amp * sig[i];
        break;
      }
    }
  }
  std::normal_distribution<double> noise(0.0, sigma);
  SensorReading r;
  for (int i = 0; i < 3; ++i) r.axes[i] = base[i] + noise(rng_);
  return r;
}

SensorInfo TruthSources::sensor_info(PermissionKind sensor) {
  return SensorInfo{std::string(to_string(sensor)) + " LSM6DSO", "STMicroelectronics", 78.4532};
}

Frame TruthSources::camera_frame() {
  Frame f;
  std::uniform_int_distribution<int> noise(0, 31);
  const auto shift = static_cast<int>(frame_counter_++ % 17);
  for (int r = 0; r < Frame::kSide; ++r)
    for (int c = 0; c < Frame::kSide; ++c)
      f.pixels[static_cast<std::size_t>(r * Frame::kSide + c)] =
          static_cast<std::uint8_t>(std::min(255, (r + c) * 2 + shift + noise(rng_)));
  return f;
}

AudioChunk TruthSources::audio_chunk() {
  AudioChunk a;
  std::uniform_int_distribution<int> noise(-500, 500);
  const double w = 2.0 * std::numbers::pi * 440.0 / AudioChunk::kSampleRateHz;
  const auto offset = static_cast<double>(audio_counter_++ * AudioChunk::kSamples);
  for (int i = 0; i < AudioChunk::kSamples; ++i)
    a.samples[static_cast<std::size_t>(i)] =
        static_cast<std::int16_t>(6000.0 * std::sin(w * (offset + i)) + noise(rng_));
  return a;
}

ContactList TruthSources::contacts() { return contacts_; }
ClipData TruthSources::clipboard() { return clipboard_; }
SmsList TruthSources::sms_inbox() { return inbox_; }
CalendarList TruthSources::calendar() { return events_; }

Blob TruthSources::file(std::string_view path) {
  Blob b{std::string(path), std::vector<std::uint8_t>(48 * 1024)};
  std::uint64_t h = 1469598103934665603ull;
  for (char c : path) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
  for (auto& byte : b.bytes) {
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    byte = static_cast<std::uint8_t>(h >> 56);
  }
  return b;
}

std::string TruthSources::serial() { return "R58M12ABCDE"; }
std::string TruthSources::advertising_id() { return "38400000-8cf0-11bd-b23e-10b96e40000d"; }

void TruthSources::set_holder_profile(const std::array<double, 6>& bias, double sigma) {
  holder_bias_ = bias;
  holder_sigma_ = sigma;
}

void TruthSources::clear_holder_profile() { holder_bias_.reset(); }

std::uint64_t TruthSources::reads(PermissionKind p) const {
  auto it = reads_.find(p);
  return it == reads_.end() ? 0 : it->second;
}

// ---- device -------------------------------------------------------------------

VirtualDevice::VirtualDevice(DeviceConfig config, std::shared_ptr<AccessLog> log)
    : config_(config), log_(log ? std::move(log) : std::make_shared<AccessLog>()), truth_(config.seed) {}

void VirtualDevice::advance(VirtualMs ms) {
  if (ms < 0) throw Error(ErrorCode::InvalidArgument, "virtual time cannot go backwards");
  clock_ += ms;
}

void VirtualDevice::advance_to(VirtualMs t) {
  if (t < clock_) throw Error(ErrorCode::InvalidArgument, "virtual time cannot go backwards");
  clock_ = t;
}

AppProcess& VirtualDevice::spawn_process(const AppManifest& manifest, std::string script_id) {
  if (manifest.app_id.empty()) throw Error(ErrorCode::InvalidArgument, "manifest needs an app id");
  auto it = procs_.find(manifest.app_id);
  if (it != procs_.end() && it->second->state != ActivityState::Stopped)
    throw Error(ErrorCode::DuplicateAppId, manifest.app_id);
  auto proc = std::make_unique<AppProcess>();
  proc->app_id = manifest.app_id;
  proc->manifest = manifest;
  proc->state = ActivityState::Background;
  proc->table = zygote_template();
  proc->script_id = std::move(script_id);
  auto& ref = *proc;
  procs_.insert_or_assign(manifest.app_id, std::move(proc));
  for (const auto& fn : spawn_listeners_) fn(ref);
  return ref;
}

AppProcess& VirtualDevice::process(std::string_view app_id) {
  auto it = procs_.find(app_id);
  if (it == procs_.end()) throw Error(ErrorCode::UnknownProcess, std::string(app_id));
  return *it->second;
}

const AppProcess* VirtualDevice::find_process(std::string_view app_id) const {
  auto it = procs_.find(app_id);
  return it == procs_.end() ? nullptr : it->second.get();
}

std::vector<const AppProcess*> VirtualDevice::processes() const {
  std::vector<const AppProcess*> out;
  for (const auto& [_, p] : procs_) out.push_back(p.get());
  return out;
}

Value VirtualDevice::invoke(AppProcess& proc, std::string_view method_key, const ArgList& args) {
  if (proc.state == ActivityState::Stopped) throw Error(ErrorCode::UnknownProcess, proc.app_id + " is stopped");
  const FunctionSlot* slot = proc.table.find(method_key);
  if (!slot) throw Error(ErrorCode::UnknownMethod, std::string(method_key));
  const auto permission = slot->method.permission;
  if (!proc.manifest.grants(permission))
    throw Error(ErrorCode::PermissionDenied, proc.app_id + " lacks " + std::string(to_string(permission)));

  const CallContext ctx{proc.app_id, permission, proc.state, clock_};
  const bool hooked = !slot->hook_chain.empty();

  const auto start = std::chrono::steady_clock::now();
  DispatchOutcome out;
  if (hooked) {
    out = dispatch_hooked(*this, *slot, ctx, args);
  } else {
    out.value = slot->original_target(*this, ctx, args);
    out.original_ran = true;
  }
  const auto elapsed = std::chrono::steady_clock::now() - start;

  AccessLogEntry e;
  e.t = clock_;
  e.app_id = proc.app_id;
  e.permission = permission;
  e.method = slot->method.key();
  e.state = proc.state;
  e.action = out.action;
  e.latency_ns = config_.record_latency ? std::chrono::duration_cast<std::chrono::nanoseconds>(elapsed).count() : 0;
  e.bytes = permission == PermissionKind::Internet ? std::max<std::int64_t>(0, arg_int(args, 1)) : 0;
  e.indicator_shown = active_indicators().contains(permission);
  log_->append(std::move(e));

  const CallRecord rec{proc.app_id, permission, out.action, hooked, out.original_ran};
  for (const auto& fn : call_listeners_) fn(rec);
  return std::move(out.value);
}

void VirtualDevice::set_activity_state(AppProcess& proc, ActivityState state) {
  if (proc.state == state) return;
  if (state == ActivityState::Foreground)
    for (const auto& [id, p] : procs_)
      if (p.get() != &proc && p->state == ActivityState::Foreground)
        throw Error(ErrorCode::MultipleForeground, id + " is already in the foreground");
  transitions_.push_back({clock_, proc.app_id, proc.state, state});
  proc.state = state;
  if (state == ActivityState::Stopped)
    std::erase_if(mic_sessions_, [&](const MicSession& s) { return s.app_id == proc.app_id; });
}

void VirtualDevice::inject_touch(GridCell cell, VirtualMs at) {
  if (cell.row < 0 || cell.col < 0 || cell.row >= config_.grid_rows || cell.col >= config_.grid_cols)
    throw Error(ErrorCode::OutOfGrid, "(" + std::to_string(cell.row) + "," + std::to_string(cell.col) + ")");
  if (!interactions_.empty() && at < interactions_.back().timestamp)
    throw Error(ErrorCode::InvalidArgument, "interaction timestamps must be non-decreasing");
  interactions_.push_back({at, {}, InteractionKind::Touch, cell});
  touches_.emplace_back(at, cell);
}

void VirtualDevice::record_interaction(std::string_view app_id, InteractionKind kind) {
  if (!interactions_.empty() && clock_ < interactions_.back().timestamp)
    throw Error(ErrorCode::InvalidArgument, "interaction timestamps must be non-decreasing");
  interactions_.push_back({clock_, std::string(app_id), kind, {}});
}

std::set<PermissionKind> VirtualDevice::active_indicators() const {
  std::set<PermissionKind> out;
  for (const auto& s : mic_sessions_)
    if (s.shows_indicator && s.until > clock_) out.insert(PermissionKind::Microphone);
  return out;
}

void VirtualDevice::open_mic_session(std::string_view app_id, bool shows_indicator) {
  const VirtualMs chunk_ms = AudioChunk::kSamples * 1000 / AudioChunk::kSampleRateHz;
  std::erase_if(mic_sessions_, [&](const MicSession& s) { return s.until <= clock_; });
  mic_sessions_.push_back({std::string(app_id), shows_indicator, clock_ + chunk_ms});
}

void VirtualDevice::on_process_created(std::function<void(AppProcess&)> fn) {
  spawn_listeners_.push_back(std::move(fn));
}

void VirtualDevice::on_call(std::function<void(const CallRecord&)> fn) { call_listeners_.push_back(std::move(fn)); }

void VirtualDevice::record_fault(HookFault fault) { faults_.push_back(std::move(fault)); }

}  // namespace decoy
