#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "decoy/access_log.hpp"
#include "decoy/types.hpp"
#include "decoy/value.hpp"

namespace decoy {

struct MethodId {
  std::string class_name;
  std::string method_name;
  bool hidden = false;
  PermissionKind permission = PermissionKind::Location;
  bool indicator_setting = false;

  std::string key() const { return class_name + "#" + method_name; }
  friend bool operator==(const MethodId& a, const MethodId& b) {
    return a.class_name == b.class_name && a.method_name == b.method_name;
  }
};

/// Method keys used throughout scenarios and tests.
namespace methods {
inline constexpr std::string_view kLastKnownLocation = "android.location.LocationManager#getLastKnownLocation";
inline constexpr std::string_view kLocationUpdate = "android.location.LocationManager#requestSingleUpdate";
inline constexpr std::string_view kReadAccelerometer = "android.hardware.SensorEventQueue#readAccelerometer";
inline constexpr std::string_view kReadGyroscope = "android.hardware.SensorEventQueue#readGyroscope";
inline constexpr std::string_view kReadMagnetometer = "android.hardware.SensorEventQueue#readMagnetometer";
inline constexpr std::string_view kReadLight = "android.hardware.SensorEventQueue#readLight";
inline constexpr std::string_view kInputSensorInfo = "android.hardware.input.InputSensorInfo#<init>";
inline constexpr std::string_view kAudioRecordRead = "android.media.AudioRecord#read";
inline constexpr std::string_view kMediaRecorderRead = "android.media.MediaRecorder#readAudio";
inline constexpr std::string_view kCaptureFrame = "android.hardware.camera2.CameraDevice#captureFrame";
inline constexpr std::string_view kQueryContacts = "android.content.ContentResolver#queryContacts";
inline constexpr std::string_view kGetPrimaryClip = "android.content.ClipboardManager#getPrimaryClip";
inline constexpr std::string_view kClipFromParcel = "android.content.ClipData$CREATOR#createFromParcel";
inline constexpr std::string_view kSmsInbox = "android.provider.Telephony$Sms#queryInbox";
inline constexpr std::string_view kSendSms = "android.telephony.SmsManager#sendTextMessage";
inline constexpr std::string_view kCalendarEvents = "android.provider.CalendarContract$Events#query";
inline constexpr std::string_view kReadFile = "android.os.Environment#readExternalFile";
inline constexpr std::string_view kSocketSend = "java.net.Socket#send";
inline constexpr std::string_view kGetSerial = "android.os.Build#getSerial";
inline constexpr std::string_view kAdvertisingId = "com.google.android.gms.ads.identifier.AdvertisingIdClient#getAdvertisingId";
}  // namespace methods

struct CallContext {
  std::string app_id;
  PermissionKind permission = PermissionKind::Location;
  ActivityState state = ActivityState::Background;
  VirtualMs now = 0;
};

class VirtualDevice;
struct HookDescriptor;

using OriginalBehavior = std::function<Value(VirtualDevice&, const CallContext&, const ArgList&)>;

struct FunctionSlot {
  MethodId method;
  OriginalBehavior original_target;
  std::vector<std::shared_ptr<const HookDescriptor>> hook_chain;
};

/// Per-process method table. Copies are deep: no slot is shared between tables.
class DispatchTable {
 public:
  FunctionSlot* find(std::string_view key);
  const FunctionSlot* find(std::string_view key) const;
  void add(FunctionSlot slot);
  std::vector<std::string> keys() const;
  std::vector<const FunctionSlot*> slots_for(PermissionKind p) const;
  std::size_t size() const { return slots_.size(); }

 private:
  std::map<std::string, FunctionSlot, std::less<>> slots_;
};

/// The pristine table every process is copied from.
const DispatchTable& zygote_template();
const MethodId& method_info(std::string_view key);
std::vector<MethodId> all_methods();

struct AppManifest {
  std::string app_id;
  std::vector<PermissionKind> permissions;
  /// Declared features and the permissions each one needs.
  std::map<std::string, std::vector<PermissionKind>> features;

  bool grants(PermissionKind p) const;
  bool feature_needs(PermissionKind p) const;
  friend bool operator==(const AppManifest&, const AppManifest&) = default;
};

nlohmann::json manifest_to_json(const AppManifest& m);
AppManifest manifest_from_json(const nlohmann::json& j);

struct AppProcess {
  std::string app_id;
  AppManifest manifest;
  ActivityState state = ActivityState::Background;
  DispatchTable table;
  std::string script_id;
};

enum class InteractionKind { Touch, Scroll, ButtonPress };

std::string_view to_string(InteractionKind k) noexcept;
std::optional<InteractionKind> interaction_kind_from_string(std::string_view s) noexcept;

struct UserInteractionEvent {
  VirtualMs timestamp = 0;
  std::string app_id;
  InteractionKind kind = InteractionKind::Touch;
  GridCell cell;  // meaningful for Touch only
};

/// Touch side-channel model: a per-cell unit direction scaled per sensor plus Gaussian noise.
struct SignalModel {
  double accel_amplitude = 1.0;
  double gyro_amplitude = 0.6;
  double noise_sigma = 0.25;
  VirtualMs window_ms = 120;
  int sample_hz = 100;

  int samples_per_window() const { return static_cast<int>(window_ms * sample_hz / 1000); }
  VirtualMs sample_period_ms() const { return 1000 / sample_hz; }
};

/// Unit direction that a touch on `cell` imprints on the motion sensors.
std::array<double, 3> touch_signature(GridCell cell, int rows, int cols);

struct DeviceConfig {
  std::uint64_t seed = 1;
  int grid_rows = 3;
  int grid_cols = 3;
  SignalModel signal;
  /// Wall-clock latency is recorded in log entries only when set; otherwise 0 for replayability.
  bool record_latency = false;
};

/// Seeded ground-truth data sources. Every original read bumps a per-permission counter.
class TruthSources {
 public:
  explicit TruthSources(std::uint64_t seed);

  GeoFix location(VirtualMs now);
  SensorReading motion(PermissionKind sensor, VirtualMs now, const DeviceConfig& cfg,
                       const std::vector<std::pair<VirtualMs, GridCell>>& touches);
  SensorInfo sensor_info(PermissionKind sensor);
  Frame camera_frame();
  AudioChunk audio_chunk();
  ContactList contacts();
  ClipData clipboard();
  SmsList sms_inbox();
  CalendarList calendar();
  Blob file(std::string_view path);
  std::string serial();
  std::string advertising_id();

  /// Per-axis bias of whoever is holding the device (accel xyz, gyro xyz).
  void set_holder_profile(const std::array<double, 6>& bias, double sigma);
  void clear_holder_profile();

  void set_clipboard(ClipData clip) { clipboard_ = std::move(clip); }

  std::uint64_t reads(PermissionKind p) const;
  void count(PermissionKind p) { ++reads_[p]; }

  // Static content, exposed for oracles.
  const ContactList& contact_book() const { return contacts_; }
  const SmsList& inbox() const { return inbox_; }
  const CalendarList& events() const { return events_; }
  GeoFix home() const { return home_; }

 private:
  std::mt19937_64 rng_;
  GeoFix home_;
  ContactList contacts_;
  SmsList inbox_;
  CalendarList events_;
  ClipData clipboard_;
  std::optional<std::array<double, 6>> holder_bias_;
  double holder_sigma_ = 0.25;
  std::uint64_t frame_counter_ = 0;
  std::uint64_t audio_counter_ = 0;
  std::map<PermissionKind, std::uint64_t> reads_;
};

struct StateTransition {
  VirtualMs t = 0;
  std::string app_id;
  ActivityState from = ActivityState::Background;
  ActivityState to = ActivityState::Background;
};

struct HookFault {
  std::string owner;
  std::string cause;
  std::string app_id;
  std::string method;
  VirtualMs t = 0;
};

/// Observation emitted after each guarded call; consumed by the energy ledger.
struct CallRecord {
  std::string app_id;
  PermissionKind permission = PermissionKind::Location;
  AccessAction action = AccessAction::Original;
  bool hooked = false;
  bool original_ran = false;
};

class VirtualDevice {
 public:
  explicit VirtualDevice(DeviceConfig config = {}, std::shared_ptr<AccessLog> log = nullptr);

  VirtualDevice(const VirtualDevice&) = delete;
  VirtualDevice& operator=(const VirtualDevice&) = delete;

  const DeviceConfig& config() const { return config_; }
  AccessLog& log() { return *log_; }
  std::shared_ptr<AccessLog> shared_log() const { return log_; }
  TruthSources& truth() { return truth_; }
  const TruthSources& truth() const { return truth_; }

  VirtualMs now() const { return clock_; }
  void advance(VirtualMs ms);
  void advance_to(VirtualMs t);

  AppProcess& spawn_process(const AppManifest& manifest, std::string script_id = {});
  AppProcess& process(std::string_view app_id);
  const AppProcess* find_process(std::string_view app_id) const;
  std::vector<const AppProcess*> processes() const;

  Value invoke(AppProcess& proc, std::string_view method_key, const ArgList& args = {});
  /// At most one process may be Foreground; a second one raises MultipleForeground.
  void set_activity_state(AppProcess& proc, ActivityState state);
  const std::vector<StateTransition>& transitions() const { return transitions_; }

  void inject_touch(GridCell cell, VirtualMs at);
  void record_interaction(std::string_view app_id, InteractionKind kind);
  const std::vector<UserInteractionEvent>& interaction_log() const { return interactions_; }
  const std::vector<std::pair<VirtualMs, GridCell>>& touches() const { return touches_; }

  std::set<PermissionKind> active_indicators() const;
  /// Called by microphone originals; sessions last one audio chunk.
  void open_mic_session(std::string_view app_id, bool shows_indicator);

  void on_process_created(std::function<void(AppProcess&)> fn);
  void on_call(std::function<void(const CallRecord&)> fn);

  void record_fault(HookFault fault);
  const std::vector<HookFault>& hook_faults() const { return faults_; }

 private:
  struct MicSession {
    std::string app_id;
    bool shows_indicator = false;
    VirtualMs until = 0;
  };

  DeviceConfig config_;
  std::shared_ptr<AccessLog> log_;
  TruthSources truth_;
  VirtualMs clock_ = 0;
  std::map<std::string, std::unique_ptr<AppProcess>, std::less<>> procs_;
  std::vector<UserInteractionEvent> interactions_;
  std::vector<StateTransition> transitions_;
  std::vector<std::pair<VirtualMs, GridCell>> touches_;
  std::vector<MicSession> mic_sessions_;
  std::vector<std::function<void(AppProcess&)>> spawn_listeners_;
  std::vector<std::function<void(const CallRecord&)>> call_listeners_;
  std::vector<HookFault> faults_;
};

}  // namespace decoy
