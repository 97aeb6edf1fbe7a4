#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "decoy/types.hpp"

namespace decoy {

struct Null {
  friend bool operator==(const Null&, const Null&) = default;
};

struct GeoFix {
  double lat = 0.0;
  double lon = 0.0;
  double accuracy_m = 0.0;
  friend bool operator==(const GeoFix&, const GeoFix&) = default;
};

/// Three axes for motion sensors; light uses axes[0] only.
struct SensorReading {
  std::array<double, 3> axes{};
  friend bool operator==(const SensorReading&, const SensorReading&) = default;
};

struct SensorInfo {
  std::string name;
  std::string vendor;
  double max_range = 0.0;
  friend bool operator==(const SensorInfo&, const SensorInfo&) = default;
};

/// 8-bit grayscale camera frame, row-major.
struct Frame {
  static constexpr int kSide = 64;
  std::vector<std::uint8_t> pixels = std::vector<std::uint8_t>(kSide * kSide);

  std::uint8_t at(int row, int col) const { return pixels[static_cast<std::size_t>(row * kSide + col)]; }
  friend bool operator==(const Frame&, const Frame&) = default;
};

/// Mono 16-bit PCM chunk.
struct AudioChunk {
  static constexpr int kSamples = 1024;
  static constexpr int kSampleRateHz = 16000;
  std::vector<std::int16_t> samples = std::vector<std::int16_t>(kSamples);
  friend bool operator==(const AudioChunk&, const AudioChunk&) = default;
};

struct Contact {
  std::string name;
  std::string number;
  friend bool operator==(const Contact&, const Contact&) = default;
  friend auto operator<=>(const Contact&, const Contact&) = default;
};
using ContactList = std::vector<Contact>;

struct ClipData {
  std::string label;
  std::string text;
  friend bool operator==(const ClipData&, const ClipData&) = default;
};

struct SmsMessage {
  std::string sender;
  std::string body;
  friend bool operator==(const SmsMessage&, const SmsMessage&) = default;
};
using SmsList = std::vector<SmsMessage>;

struct CalendarEvent {
  std::string title;
  std::string location;
  std::int64_t start = 0;
  std::int64_t end = 0;
  friend bool operator==(const CalendarEvent&, const CalendarEvent&) = default;
};
using CalendarList = std::vector<CalendarEvent>;

struct Blob {
  std::string path;
  std::vector<std::uint8_t> bytes;
  friend bool operator==(const Blob&, const Blob&) = default;
};

using Value = std::variant<Null, bool, std::string, GeoFix, SensorReading, SensorInfo, Frame,
                           AudioChunk, ContactList, ClipData, SmsList, CalendarList, Blob>;

inline bool is_null(const Value& v) noexcept { return std::holds_alternative<Null>(v); }

/// Stable lowercase tag used in JSON and assertion predicates.
std::string_view kind_name(const Value& v) noexcept;

/// Full-fidelity encoding; frames and audio carry every sample.
nlohmann::json value_to_json(const Value& v);
Value value_from_json(const nlohmann::json& j);

/// Report-friendly encoding: frames and audio are reduced to a digest.
nlohmann::json value_summary(const Value& v);

/// True if `v` is a plausible result for a call guarded by `p`.
bool value_fits_permission(const Value& v, PermissionKind p);

using Arg = std::variant<std::int64_t, double, std::string>;
using ArgList = std::vector<Arg>;

nlohmann::json args_to_json(const ArgList& args);
ArgList args_from_json(const nlohmann::json& j);

std::int64_t arg_int(const ArgList& args, std::size_t i, std::int64_t fallback = 0);
std::string arg_string(const ArgList& args, std::size_t i, std::string fallback = {});

}  // namespace decoy
