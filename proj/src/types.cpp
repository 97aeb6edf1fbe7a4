#include "decoy/error.hpp"
#include "decoy/types.hpp"

#include <array>
#include <utility>

namespace decoy {
namespace {

constexpr std::array<std::pair<PermissionKind, std::string_view>, 16> kPermissionNames = {{
    {PermissionKind::Location, "Location"},
    {PermissionKind::Accelerometer, "Accelerometer"},
    {PermissionKind::Gyroscope, "Gyroscope"},
    {PermissionKind::Magnetometer, "Magnetometer"},
    {PermissionKind::Light, "Light"},
    {PermissionKind::Microphone, "Microphone"},
    {PermissionKind::Camera, "Camera"},
    {PermissionKind::Contacts, "Contacts"},
    {PermissionKind::Clipboard, "Clipboard"},
    {PermissionKind::SmsRead, "SmsRead"},
    {PermissionKind::SmsSend, "SmsSend"},
    {PermissionKind::Calendar, "Calendar"},
    {PermissionKind::Storage, "Storage"},
    {PermissionKind::Internet, "Internet"},
    {PermissionKind::DeviceInfo, "DeviceInfo"},
    {PermissionKind::Tracking, "Tracking"},
}};

}  // namespace

std::string_view to_string(PermissionKind p) noexcept {
  for (const auto& [k, name] : kPermissionNames)
    if (k == p) return name;
  return "?";
}

std::optional<PermissionKind> permission_from_string(std::string_view s) noexcept {
  for (const auto& [k, name] : kPermissionNames)
    if (name == s) return k;
  return std::nullopt;
}

std::string_view to_string(ActivityState s) noexcept {
  switch (s) {
    case ActivityState::Foreground: return "Foreground";
    case ActivityState::Background: return "Background";
    case ActivityState::Stopped: return "Stopped";
  }
  return "?";
}

std::optional<ActivityState> activity_state_from_string(std::string_view s) noexcept {
  if (s == "Foreground") return ActivityState::Foreground;
  if (s == "Background") return ActivityState::Background;
  if (s == "Stopped") return ActivityState::Stopped;
  return std::nullopt;
}

std::string_view to_string(AccessAction a) noexcept {
  switch (a) {
    case AccessAction::Original: return "Original";
    case AccessAction::Blocked: return "Blocked";
    case AccessAction::Spoofed: return "Spoofed";
  }
  return "?";
}

std::optional<AccessAction> access_action_from_string(std::string_view s) noexcept {
  if (s == "Original") return AccessAction::Original;
  if (s == "Blocked") return AccessAction::Blocked;
  if (s == "Spoofed") return AccessAction::Spoofed;
  return std::nullopt;
}

std::string_view to_string(ErrorCode c) noexcept {
  switch (c) {
    case ErrorCode::DuplicateAppId: return "DuplicateAppId";
    case ErrorCode::UnknownProcess: return "UnknownProcess";
    case ErrorCode::UnknownMethod: return "UnknownMethod";
    case ErrorCode::PermissionDenied: return "PermissionDenied";
    case ErrorCode::OutOfGrid: return "OutOfGrid";
    case ErrorCode::MultipleForeground: return "MultipleForeground";
    case ErrorCode::HiddenApiDenied: return "HiddenApiDenied";
    case ErrorCode::UnknownHandle: return "UnknownHandle";
    case ErrorCode::InvalidHook: return "InvalidHook";
    case ErrorCode::IncompatibleTransform: return "IncompatibleTransform";
    case ErrorCode::MissingOriginal: return "MissingOriginal";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::UnknownPool: return "UnknownPool";
    case ErrorCode::UnknownTrace: return "UnknownTrace";
    case ErrorCode::SequenceGap: return "SequenceGap";
    case ErrorCode::UnknownScenario: return "UnknownScenario";
    case ErrorCode::AssertionFailed: return "AssertionFailed";
    case ErrorCode::EmptyTrace: return "EmptyTrace";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Parse: return "Parse";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace decoy
