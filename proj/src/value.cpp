#include "decoy/value.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "decoy/error.hpp"

namespace decoy {
namespace {

using nlohmann::json;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::uint64_t fnv1a(const void* data, std::size_t n) {
  auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string to_hex(const std::vector<std::uint8_t>& bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

std::vector<std::uint8_t> from_hex(const std::string& s) {
  if (s.size() % 2) throw Error(ErrorCode::Parse, "odd-length hex");
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error(ErrorCode::Parse, "bad hex digit");
  };
  std::vector<std::uint8_t> out(s.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>(nib(s[2 * i]) * 16 + nib(s[2 * i + 1]));
  return out;
}

}  // namespace

std::string_view kind_name(const Value& v) noexcept {
  return std::visit(overloaded{
                        [](const Null&) -> std::string_view { return "null"; },
                        [](bool) -> std::string_view { return "bool"; },
                        [](const std::string&) -> std::string_view { return "text"; },
                        [](const GeoFix&) -> std::string_view { return "location"; },
                        [](const SensorReading&) -> std::string_view { return "sensor"; },
                        [](const SensorInfo&) -> std::string_view { return "sensor_info"; },
                        [](const Frame&) -> std::string_view { return "frame"; },
                        [](const AudioChunk&) -> std::string_view { return "audio"; },
                        [](const ContactList&) -> std::string_view { return "contacts"; },
                        [](const ClipData&) -> std::string_view { return "clip"; },
                        [](const SmsList&) -> std::string_view { return "sms"; },
                        [](const CalendarList&) -> std::string_view { return "calendar"; },
                        [](const Blob&) -> std::string_view { return "blob"; },
                    },
                    v);
}

json value_to_json(const Value& v) {
  json j = std::visit(
      overloaded{
          [](const Null&) { return json::object(); },
          [](bool b) { return json{{"value", b}}; },
          [](const std::string& s) { return json{{"value", s}}; },
          [](const GeoFix& g) { return json{{"lat", g.lat}, {"lon", g.lon}, {"accuracy_m", g.accuracy_m}}; },
          [](const SensorReading& r) { return json{{"axes", r.axes}}; },
          [](const SensorInfo& i) {
            return json{{"name", i.name}, {"vendor", i.vendor}, {"max_range", i.max_range}};
          },
          [](const Frame& f) { return json{{"side", Frame::kSide}, {"pixels", f.pixels}}; },
          [](const AudioChunk& a) { return json{{"samples", a.samples}}; },
          [](const ContactList& cs) {
            json items = json::array();
            for (const auto& c : cs) items.push_back({{"name", c.name}, {"number", c.number}});
            return json{{"items", items}};
          },
          [](const ClipData& c) { return json{{"label", c.label}, {"text", c.text}}; },
          [](const SmsList& ms) {
            json items = json::array();
            for (const auto& m : ms) items.push_back({{"sender", m.sender}, {"body", m.body}});
            return json{{"items", items}};
          },
          [](const CalendarList& es) {
            json items = json::array();
            for (const auto& e : es)
              items.push_back({{"title", e.title}, {"location", e.location}, {"start", e.start}, {"end", e.end}});
            return json{{"items", items}};
          },
          [](const Blob& b) { return json{{"path", b.path}, {"hex", to_hex(b.bytes)}}; },
      },
      v);
  j["type"] = kind_name(v);
  return j;
}

Value value_from_json(const json& j) {
  if (!j.is_object() || !j.contains("type")) throw Error(ErrorCode::Parse, "value needs a type");
  const auto type = j.at("type").get<std::string>();
  try {
    if (type == "null") return Null{};
    if (type == "bool") return j.at("value").get<bool>();
    if (type == "text") return j.at("value").get<std::string>();
    if (type == "location")
      return GeoFix{j.at("lat").get<double>(), j.at("lon").get<double>(), j.value("accuracy_m", 0.0)};
    if (type == "sensor") return SensorReading{j.at("axes").get<std::array<double, 3>>()};
    if (type == "sensor_info")
      return SensorInfo{j.at("name").get<std::string>(), j.at("vendor").get<std::string>(),
                        j.at("max_range").get<double>()};
    if (type == "frame") {
      Frame f;
      f.pixels = j.at("pixels").get<std::vector<std::uint8_t>>();
      if (f.pixels.size() != static_cast<std::size_t>(Frame::kSide * Frame::kSide))
        throw Error(ErrorCode::Parse, "frame must be 64x64");
      return f;
    }
    if (type == "audio") {
      AudioChunk a;
      a.samples = j.at("samples").get<std::vector<std::int16_t>>();
      return a;
    }
    if (type == "contacts") {
      ContactList cs;
      for (const auto& i : j.at("items")) cs.push_back({i.at("name"), i.at("number")});
      return cs;
    }
    if (type == "clip") return ClipData{j.at("label"), j.at("text")};
    if (type == "sms") {
      SmsList ms;
      for (const auto& i : j.at("items")) ms.push_back({i.at("sender"), i.at("body")});
      return ms;
    }
    if (type == "calendar") {
      CalendarList es;
      for (const auto& i : j.at("items"))
        es.push_back({i.at("title"), i.at("location"), i.at("start"), i.at("end")});
      return es;
    }
    if (type == "blob") return Blob{j.at("path").get<std::string>(), from_hex(j.at("hex").get<std::string>())};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("value '") + type + "': " + e.what());
  }
  throw Error(ErrorCode::Parse, "unknown value type '" + type + "'");
}

json value_summary(const Value& v) {
  if (const auto* f = std::get_if<Frame>(&v)) {
    double sum = 0;
    for (auto p : f->pixels) sum += p;
    return {{"type", "frame"},
            {"side", Frame::kSide},
            {"mean", sum / static_cast<double>(f->pixels.size())},
            {"digest", hex(fnv1a(f->pixels.data(), f->pixels.size()))}};
  }
  if (const auto* a = std::get_if<AudioChunk>(&v)) {
    double energy = 0;
    for (auto s : a->samples) energy += static_cast<double>(s) * s;
    return {{"type", "audio"},
            {"samples", a->samples.size()},
            {"rms", std::sqrt(energy / static_cast<double>(std::max<std::size_t>(1, a->samples.size())))},
            {"digest", hex(fnv1a(a->samples.data(), a->samples.size() * sizeof(std::int16_t)))}};
  }
  if (const auto* b = std::get_if<Blob>(&v)) {
    return {{"type", "blob"},
            {"path", b->path},
            {"size", b->bytes.size()},
            {"digest", hex(fnv1a(b->bytes.data(), b->bytes.size()))}};
  }
  return value_to_json(v);
}

bool value_fits_permission(const Value& v, PermissionKind p) {
  if (is_null(v)) return true;
  switch (p) {
    case PermissionKind::Location: return std::holds_alternative<GeoFix>(v);
    case PermissionKind::Accelerometer:
    case PermissionKind::Gyroscope:
    case PermissionKind::Magnetometer:
    case PermissionKind::Light:
      return std::holds_alternative<SensorReading>(v) || std::holds_alternative<SensorInfo>(v);
    case PermissionKind::Microphone: return std::holds_alternative<AudioChunk>(v);
    case PermissionKind::Camera: return std::holds_alternative<Frame>(v);
    case PermissionKind::Contacts: return std::holds_alternative<ContactList>(v);
    case PermissionKind::Clipboard: return std::holds_alternative<ClipData>(v);
    case PermissionKind::SmsRead: return std::holds_alternative<SmsList>(v);
    case PermissionKind::SmsSend:
    case PermissionKind::Internet: return std::holds_alternative<bool>(v);
    case PermissionKind::Calendar: return std::holds_alternative<CalendarList>(v);
    case PermissionKind::Storage: return std::holds_alternative<Blob>(v);
    case PermissionKind::DeviceInfo:
    case PermissionKind::Tracking: return std::holds_alternative<std::string>(v);
  }
  return false;
}

json args_to_json(const ArgList& args) {
  json out = json::array();
  for (const auto& a : args) std::visit([&](const auto& x) { out.push_back(x); }, a);
  return out;
}

ArgList args_from_json(const json& j) {
  ArgList out;
  if (j.is_null()) return out;
  if (!j.is_array()) throw Error(ErrorCode::Parse, "args must be an array");
  for (const auto& x : j) {
    if (x.is_number_integer()) out.emplace_back(x.get<std::int64_t>());
    else if (x.is_number()) out.emplace_back(x.get<double>());
    else if (x.is_string()) out.emplace_back(x.get<std::string>());
    else throw Error(ErrorCode::Parse, "args must be numbers or strings");
  }
  return out;
}

std::int64_t arg_int(const ArgList& args, std::size_t i, std::int64_t fallback) {
  if (i >= args.size()) return fallback;
  if (const auto* v = std::get_if<std::int64_t>(&args[i])) return *v;
  if (const auto* d = std::get_if<double>(&args[i])) return static_cast<std::int64_t>(*d);
  return fallback;
}

std::string arg_string(const ArgList& args, std::size_t i, std::string fallback) {
  if (i >= args.size()) return fallback;
  if (const auto* s = std::get_if<std::string>(&args[i])) return *s;
  return fallback;
}

}  // namespace decoy
