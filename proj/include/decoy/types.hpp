#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace decoy {

enum class PermissionKind : std::uint8_t {
  Location,
  Accelerometer,
  Gyroscope,
  Magnetometer,
  Light,
  Microphone,
  Camera,
  Contacts,
  Clipboard,
  SmsRead,
  SmsSend,
  Calendar,
  Storage,
  Internet,
  DeviceInfo,
  Tracking,
};

inline constexpr std::array<PermissionKind, 16> kAllPermissions = {
    PermissionKind::Location,   PermissionKind::Accelerometer, PermissionKind::Gyroscope,
    PermissionKind::Magnetometer, PermissionKind::Light,       PermissionKind::Microphone,
    PermissionKind::Camera,     PermissionKind::Contacts,      PermissionKind::Clipboard,
    PermissionKind::SmsRead,    PermissionKind::SmsSend,       PermissionKind::Calendar,
    PermissionKind::Storage,    PermissionKind::Internet,      PermissionKind::DeviceInfo,
    PermissionKind::Tracking,
};

/// Normal (install-time) permissions are granted without a runtime prompt.
constexpr bool is_normal(PermissionKind p) noexcept {
  switch (p) {
    case PermissionKind::Accelerometer:
    case PermissionKind::Gyroscope:
    case PermissionKind::Magnetometer:
    case PermissionKind::Light:
    case PermissionKind::Tracking:
      return true;
    default:
      return false;
  }
}

constexpr bool is_dangerous(PermissionKind p) noexcept { return !is_normal(p); }

constexpr bool is_motion_sensor(PermissionKind p) noexcept {
  return p == PermissionKind::Accelerometer || p == PermissionKind::Gyroscope ||
         p == PermissionKind::Magnetometer || p == PermissionKind::Light;
}

std::string_view to_string(PermissionKind p) noexcept;
std::optional<PermissionKind> permission_from_string(std::string_view s) noexcept;

enum class ActivityState : std::uint8_t { Foreground, Background, Stopped };

std::string_view to_string(ActivityState s) noexcept;
std::optional<ActivityState> activity_state_from_string(std::string_view s) noexcept;

/// Outcome of one guarded call as seen by the access log.
enum class AccessAction : std::uint8_t { Original, Blocked, Spoofed };

std::string_view to_string(AccessAction a) noexcept;
std::optional<AccessAction> access_action_from_string(std::string_view s) noexcept;

/// Virtual milliseconds since device boot.
using VirtualMs = std::int64_t;

struct GridCell {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

}  // namespace decoy
