#include "decoy/policy.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <tuple>
#include <type_traits>

#include "decoy/error.hpp"

namespace decoy {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::string_view kCalendarFieldNames[] = {"title", "location", "start", "end"};

PermissionKind perm_from_json(const json& j) {
  auto p = permission_from_string(j.get<std::string>());
  if (!p) throw Error(ErrorCode::Parse, "unknown permission " + j.dump());
  return *p;
}

void incompatible(const DeceitAction& a, PermissionKind p) {
  throw Error(ErrorCode::IncompatibleTransform,
              std::string(action_kind(a)) + " cannot apply to " + std::string(to_string(p)));
}

}  // namespace

bool is_block(const DeceitAction& a) noexcept { return std::holds_alternative<Block>(a); }
bool is_allow(const DeceitAction& a) noexcept { return std::holds_alternative<Allow>(a); }
bool is_spoof(const DeceitAction& a) noexcept { return !is_block(a) && !is_allow(a); }
int severity(const DeceitAction& a) noexcept { return is_block(a) ? 2 : is_spoof(a) ? 1 : 0; }

std::string_view action_kind(const DeceitAction& a) noexcept {
  static constexpr std::string_view kNames[] = {"Allow",      "Block",       "SpoofStatic",
                                                "SpoofPool",  "ConstantSensor", "BlurFrame",
                                                "NoiseAudio", "MaskSmsBodyKeepSender", "MaskCalendarFields",
                                                "FixedLocation", "ReplayTrace"};
  return kNames[a.index()];
}

void check_compatible(const DeceitAction& a, PermissionKind p) {
  std::visit(overloaded{
                 [](const Allow&) {},
                 [](const Block&) {},
                 [&](const SpoofStatic& s) {
                   if (!value_fits_permission(s.value, p)) incompatible(a, p);
                 },
                 [](const SpoofPool&) {},
                 [&](const ConstantSensor&) {
                   if (!is_motion_sensor(p)) incompatible(a, p);
                 },
                 [&](const BlurFrame& b) {
                   if (p != PermissionKind::Camera) incompatible(a, p);
                   if (b.radius < 0) throw Error(ErrorCode::InvalidArgument, "blur radius must be >= 0");
                 },
                 [&](const NoiseAudio&) {
                   if (p != PermissionKind::Microphone) incompatible(a, p);
                 },
                 [&](const MaskSmsBodyKeepSender&) {
                   if (p != PermissionKind::SmsRead) incompatible(a, p);
                 },
                 [&](const MaskCalendarFields& m) {
                   if (p != PermissionKind::Calendar) incompatible(a, p);
                   for (const auto& f : m.fields)
                     if (std::find(std::begin(kCalendarFieldNames), std::end(kCalendarFieldNames), f) ==
                         std::end(kCalendarFieldNames))
                       throw Error(ErrorCode::InvalidArgument, "unknown calendar field " + f);
                 },
                 [&](const FixedLocation& f) {
                   if (p != PermissionKind::Location) incompatible(a, p);
                   if (f.lat < -90 || f.lat > 90 || f.lon < -180 || f.lon > 180)
                     throw Error(ErrorCode::InvalidArgument, "coordinates out of range");
                 },
                 [&](const ReplayTrace&) {
                   if (!is_motion_sensor(p)) incompatible(a, p);
                 },
             },
             a);
}

DeceitAction default_spoof(PermissionKind p) {
  switch (p) {
    case PermissionKind::Location: return FixedLocation{28.5459, 77.1926};
    case PermissionKind::Accelerometer:
    case PermissionKind::Gyroscope:
    case PermissionKind::Magnetometer:
    case PermissionKind::Light: return ConstantSensor{{0.0, 0.0, 0.0}};
    case PermissionKind::Microphone: return NoiseAudio{};
    case PermissionKind::Camera: return BlurFrame{4};
    case PermissionKind::Contacts: return SpoofPool{std::string(kContactPoolId)};
    case PermissionKind::Clipboard: return SpoofStatic{ClipData{"dummyLabel", "dummyText"}};
    case PermissionKind::SmsRead: return MaskSmsBodyKeepSender{};
    case PermissionKind::Calendar: return MaskCalendarFields{{"title", "location"}};
    case PermissionKind::Storage: return SpoofStatic{Blob{"/sdcard/placeholder.bin", std::vector<std::uint8_t>(64, 0)}};
    case PermissionKind::DeviceInfo: return SpoofStatic{std::string("SIM0000000000")};
    case PermissionKind::Tracking: return SpoofStatic{std::string("00000000-0000-0000-0000-000000000000")};
    // Outgoing channels have nothing to fake; they are withheld.
    case PermissionKind::SmsSend:
    case PermissionKind::Internet: return Block{};
  }
  return Block{};
}

json action_to_json(const DeceitAction& a) {
  json j = std::visit(overloaded{
                          [](const Allow&) { return json::object(); },
                          [](const Block&) { return json::object(); },
                          [](const SpoofStatic& s) { return json{{"value", value_to_json(s.value)}}; },
                          [](const SpoofPool& s) { return json{{"pool", s.pool_id}}; },
                          [](const ConstantSensor& c) { return json{{"value", c.value}}; },
                          [](const BlurFrame& b) { return json{{"radius", b.radius}}; },
                          [](const NoiseAudio&) { return json::object(); },
                          [](const MaskSmsBodyKeepSender&) { return json::object(); },
                          [](const MaskCalendarFields& m) { return json{{"fields", m.fields}}; },
                          [](const FixedLocation& f) { return json{{"lat", f.lat}, {"lon", f.lon}}; },
                          [](const ReplayTrace& r) { return json{{"trace", r.trace_id}}; },
                      },
                      a);
  j["kind"] = action_kind(a);
  return j;
}

DeceitAction action_from_json(const json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "Allow") return Allow{};
    if (kind == "Block") return Block{};
    if (kind == "SpoofStatic") return SpoofStatic{value_from_json(j.at("value"))};
    if (kind == "SpoofPool") return SpoofPool{j.at("pool").get<std::string>()};
    if (kind == "ConstantSensor") return ConstantSensor{j.at("value").get<std::array<double, 3>>()};
    if (kind == "BlurFrame") return BlurFrame{j.at("radius").get<int>()};
    if (kind == "NoiseAudio") return NoiseAudio{};
    if (kind == "MaskSmsBodyKeepSender") return MaskSmsBodyKeepSender{};
    if (kind == "MaskCalendarFields") return MaskCalendarFields{j.at("fields").get<std::vector<std::string>>()};
    if (kind == "FixedLocation") return FixedLocation{j.at("lat").get<double>(), j.at("lon").get<double>()};
    if (kind == "ReplayTrace") return ReplayTrace{j.at("trace").get<std::string>()};
    throw Error(ErrorCode::Parse, "unknown action kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("action: ") + e.what());
  }
}

json context_to_json(const ContextCondition& c) {
  switch (c.kind) {
    case ContextCondition::Kind::Always: return {{"kind", "Always"}};
    case ContextCondition::Kind::BackgroundOnly: return {{"kind", "BackgroundOnly"}};
    case ContextCondition::Kind::ForegroundOnly: return {{"kind", "ForegroundOnly"}};
    case ContextCondition::Kind::ManualToggle: return {{"kind", "ManualToggle"}, {"toggle", c.toggle}};
  }
  return {};
}

ContextCondition context_from_json(const json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "Always") return ContextCondition::always();
    if (kind == "BackgroundOnly") return ContextCondition::background_only();
    if (kind == "ForegroundOnly") return ContextCondition::foreground_only();
    if (kind == "ManualToggle") return ContextCondition::manual(j.at("toggle").get<std::string>());
    throw Error(ErrorCode::Parse, "unknown context kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("context: ") + e.what());
  }
}

json policy_to_json(const DeceitPolicy& p) {
  return {{"app", p.app_id},
          {"permission", to_string(p.permission)},
          {"action", action_to_json(p.action)},
          {"context", context_to_json(p.context)},
          {"enabled", p.enabled}};
}

DeceitPolicy policy_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::Parse, "policy must be an object");
  DeceitPolicy p;
  try {
    p.app_id = j.at("app").get<std::string>();
    p.permission = perm_from_json(j.at("permission"));
    p.action = action_from_json(j.at("action"));
    p.context = j.contains("context") ? context_from_json(j.at("context")) : ContextCondition::always();
    p.enabled = j.value("enabled", true);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("policy: ") + e.what());
  }
  if (p.app_id.empty()) throw Error(ErrorCode::Parse, "policy app must be non-empty");
  return p;
}

PoolDefinition default_contact_pool() {
  static constexpr std::string_view kFirst[] = {"Alex", "Sam", "Jordan", "Robin", "Casey", "Morgan", "Taylor",
                                                "Jamie", "Avery", "Riley"};
  static constexpr std::string_view kLast[] = {"Smith", "Garcia", "Kim", "Patel", "Nguyen", "Silva", "Cohen",
                                               "Okafor", "Muller", "Tanaka"};
  PoolDefinition pool{std::string(kContactPoolId), PermissionKind::Contacts, {}};
  std::mt19937_64 rng(100);
  std::uniform_int_distribution<int> digit(0, 9);
  for (int i = 0; i < 100; ++i) {
    // Every first/last pairing exactly once, numbers in the fictional 555-01xx block.
    std::string name = std::string(kFirst[i % 10]) + " " + std::string(kLast[i / 10]);
    std::string number = "+1-555-01" + std::to_string(i / 10) + std::to_string(i % 10);
    number += "-" + std::to_string(digit(rng)) + std::to_string(digit(rng));
    pool.values.emplace_back(ContactList{Contact{std::move(name), std::move(number)}});
  }
  return pool;
}

json document_to_json(const PolicyDocument& d) {
  json policies = json::array();
  for (const auto& p : d.policies) policies.push_back(policy_to_json(p));
  json pools = json::object();
  for (const auto& [id, pool] : d.pools) {
    json values = json::array();
    for (const auto& v : pool.values) values.push_back(value_to_json(v));
    pools[id] = {{"permission", to_string(pool.permission)}, {"values", values}};
  }
  json traces = json::object();
  for (const auto& [id, trace] : d.traces) {
    json channels = json::object();
    for (const auto& [p, samples] : trace.channels) {
      json arr = json::array();
      for (const auto& s : samples) arr.push_back(s.axes);
      channels[std::string(to_string(p))] = arr;
    }
    traces[id] = {{"channels", channels}};
  }
  return {{"version", d.version}, {"policies", policies}, {"toggles", d.toggles}, {"pools", pools}, {"traces", traces}};
}

PolicyDocument document_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::Parse, "policy document must be an object");
  PolicyDocument d;
  try {
    d.version = j.value("version", std::int64_t{0});
    if (j.contains("policies")) {
      if (!j.at("policies").is_array()) throw Error(ErrorCode::Parse, "policies must be an array");
      for (const auto& p : j.at("policies")) d.policies.push_back(policy_from_json(p));
    }
    if (j.contains("toggles")) d.toggles = j.at("toggles").get<std::map<std::string, bool>>();
    if (j.contains("pools"))
      for (const auto& [id, pj] : j.at("pools").items()) {
        PoolDefinition pool{id, perm_from_json(pj.at("permission")), {}};
        for (const auto& v : pj.at("values")) pool.values.push_back(value_from_json(v));
        d.pools.emplace(id, std::move(pool));
      }
    if (j.contains("traces"))
      for (const auto& [id, tj] : j.at("traces").items()) {
        SensorTrace trace{id, {}};
        for (const auto& [pname, arr] : tj.at("channels").items()) {
          auto& ch = trace.channels[perm_from_json(json(pname))];
          for (const auto& s : arr) ch.push_back(SensorReading{s.get<std::array<double, 3>>()});
        }
        d.traces.emplace(id, std::move(trace));
      }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("policy document: ") + e.what());
  }
  return d;
}

ResolvedAction resolve(const PolicyDocument& doc, std::string_view app_id, PermissionKind permission,
                       ActivityState state) {
  auto matches = [&](const ContextCondition& c) {
    switch (c.kind) {
      case ContextCondition::Kind::Always: return true;
      case ContextCondition::Kind::BackgroundOnly: return state == ActivityState::Background;
      case ContextCondition::Kind::ForegroundOnly: return state == ActivityState::Foreground;
      case ContextCondition::Kind::ManualToggle: {
        auto it = doc.toggles.find(c.toggle);
        return it != doc.toggles.end() && it->second;
      }
    }
    return false;
  };

  const DeceitPolicy* best = nullptr;
  std::tuple<int, int, int, std::size_t> best_rank{};
  for (std::size_t i = 0; i < doc.policies.size(); ++i) {
    const auto& p = doc.policies[i];
    if (!p.enabled || p.permission != permission) continue;
    const bool specific = p.app_id == app_id;
    if (!specific && p.app_id != kAnyApp) continue;
    if (!matches(p.context)) continue;
    const std::tuple<int, int, int, std::size_t> rank{specific ? 1 : 0, severity(p.action),
                                                      p.context.kind == ContextCondition::Kind::Always ? 0 : 1, i};
    if (!best || rank > best_rank) {
      best = &p;
      best_rank = rank;
    }
  }
  if (!best) return {};
  return ResolvedAction{best->action, *best};
}

// ---- PolicyStore -----------------------------------------------------------

namespace {

PolicyDocument fresh_document() {
  PolicyDocument d;
  auto pool = default_contact_pool();
  d.pools.emplace(pool.pool_id, std::move(pool));
  return d;
}

void validate_policy(const PolicyDocument& doc, const DeceitPolicy& p) {
  check_compatible(p.action, p.permission);
  if (const auto* s = std::get_if<SpoofPool>(&p.action)) {
    auto it = doc.pools.find(s->pool_id);
    if (it == doc.pools.end()) throw Error(ErrorCode::UnknownPool, s->pool_id);
    if (it->second.permission != p.permission)
      throw Error(ErrorCode::IncompatibleTransform, "pool " + s->pool_id + " holds " +
                                                        std::string(to_string(it->second.permission)) + " values");
  }
  if (const auto* r = std::get_if<ReplayTrace>(&p.action))
    if (!doc.traces.contains(r->trace_id)) throw Error(ErrorCode::UnknownTrace, r->trace_id);
  if (p.context.kind == ContextCondition::Kind::ManualToggle && p.context.toggle.empty())
    throw Error(ErrorCode::InvalidArgument, "manual toggle needs a name");
}

void validate_pool(const PoolDefinition& pool) {
  if (pool.values.empty()) throw Error(ErrorCode::EmptyPool, pool.pool_id);
  for (const auto& v : pool.values)
    if (!value_fits_permission(v, pool.permission) || is_null(v))
      throw Error(ErrorCode::IncompatibleTransform, "pool " + pool.pool_id + " holds a mismatched value");
}

bool same_key(const DeceitPolicy& a, const DeceitPolicy& b) {
  return a.app_id == b.app_id && a.permission == b.permission && a.context == b.context;
}

}  // namespace

PolicyStore::PolicyStore() : doc_(std::make_shared<const PolicyDocument>(fresh_document())) {}

PolicyStore::PolicyStore(std::filesystem::path path) : PolicyStore() {
  path_ = std::move(path);
  if (std::filesystem::exists(*path_)) {
    std::ifstream in(*path_);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::Parse, path_->string() + ": " + e.what());
    }
    auto doc = document_from_json(j);
    if (!doc.pools.contains(std::string(kContactPoolId))) {
      auto pool = default_contact_pool();
      doc.pools.emplace(pool.pool_id, std::move(pool));
    }
    doc_ = std::make_shared<const PolicyDocument>(std::move(doc));
  }
}

std::shared_ptr<const PolicyDocument> PolicyStore::snapshot() const {
  std::shared_lock lock(mu_);
  return doc_;
}

template <class Fn>
std::int64_t PolicyStore::mutate(Fn&& fn) {
  std::lock_guard writer(write_mu_);
  auto next = std::make_shared<PolicyDocument>(*snapshot());
  if (!fn(*next)) return next->version;
  ++next->version;
  persist(*next);
  std::unique_lock lock(mu_);
  doc_ = std::move(next);
  return doc_->version;
}

void PolicyStore::persist(const PolicyDocument& doc) const {
  if (!path_) return;
  std::error_code ec;
  if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path(), ec);
  auto tmp = *path_;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out << document_to_json(doc).dump(2) << '\n';
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, *path_, ec);
  if (ec) throw Error(ErrorCode::Io, "rename to " + path_->string() + ": " + ec.message());
}

std::int64_t PolicyStore::set_policy(const DeceitPolicy& policy) {
  return mutate([&](PolicyDocument& d) {
    validate_policy(d, policy);
    auto it = std::find_if(d.policies.begin(), d.policies.end(), [&](const auto& p) { return same_key(p, policy); });
    if (it != d.policies.end()) {
      if (*it == policy) return false;
      d.policies.erase(it);
    }
    // Most recent write sits last so it wins residual ties in resolve.
    d.policies.push_back(policy);
    return true;
  });
}

std::optional<std::int64_t> PolicyStore::remove_policy(std::string_view app_id, PermissionKind permission,
                                                       const ContextCondition& context) {
  bool removed = false;
  auto v = mutate([&](PolicyDocument& d) {
    removed = std::erase_if(d.policies, [&](const DeceitPolicy& p) {
                return p.app_id == app_id && p.permission == permission && p.context == context;
              }) > 0;
    return removed;
  });
  if (!removed) return std::nullopt;
  return v;
}

std::int64_t PolicyStore::set_toggle(const std::string& name, bool on) {
  return mutate([&](PolicyDocument& d) {
    auto it = d.toggles.find(name);
    if (it != d.toggles.end() && it->second == on) return false;
    d.toggles[name] = on;
    return true;
  });
}

std::int64_t PolicyStore::add_pool(PoolDefinition pool) {
  validate_pool(pool);
  return mutate([&](PolicyDocument& d) {
    d.pools.insert_or_assign(pool.pool_id, pool);
    return true;
  });
}

std::int64_t PolicyStore::add_trace(SensorTrace trace) {
  for (const auto& [p, ch] : trace.channels)
    if (!is_motion_sensor(p) || ch.empty())
      throw Error(ErrorCode::InvalidArgument, "trace channels must be non-empty motion sensor streams");
  return mutate([&](PolicyDocument& d) {
    d.traces.insert_or_assign(trace.trace_id, trace);
    return true;
  });
}

std::int64_t PolicyStore::replace(PolicyDocument doc) {
  if (!doc.pools.contains(std::string(kContactPoolId))) {
    auto pool = default_contact_pool();
    doc.pools.emplace(pool.pool_id, std::move(pool));
  }
  for (const auto& [_, pool] : doc.pools) validate_pool(pool);
  for (std::size_t i = 0; i < doc.policies.size(); ++i) {
    validate_policy(doc, doc.policies[i]);
    for (std::size_t k = 0; k < i; ++k)
      if (same_key(doc.policies[k], doc.policies[i]))
        throw Error(ErrorCode::InvalidArgument, "duplicate policy for (app, permission, context)");
  }
  return mutate([&](PolicyDocument& d) {
    doc.version = d.version;
    d = std::move(doc);
    return true;
  });
}

std::int64_t PolicyStore::clear_policies() {
  return mutate([](PolicyDocument& d) {
    if (d.policies.empty() && d.toggles.empty()) return false;
    d.policies.clear();
    d.toggles.clear();
    return true;
  });
}

ResolvedAction PolicyStore::resolve(std::string_view app_id, PermissionKind permission, ActivityState state) const {
  return decoy::resolve(*snapshot(), app_id, permission, state);
}

DeceitResponse PolicyStore::query_bridge(const DeceitQuery& query) const {
  auto snap = snapshot();
  queries_.fetch_add(1, std::memory_order_relaxed);
  return DeceitResponse{decoy::resolve(*snap, query.app_id, query.permission, query.activity_state), snap->version};
}

// ---- value synthesis ---------------------------------------------------------

Frame box_blur(const Frame& frame, int radius) {
  if (radius <= 0) return frame;
  Frame out;
  const int n = Frame::kSide;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      int sum = 0;
      int count = 0;
      for (int rr = std::max(0, r - radius); rr <= std::min(n - 1, r + radius); ++rr)
        for (int cc = std::max(0, c - radius); cc <= std::min(n - 1, c + radius); ++cc) {
          sum += frame.at(rr, cc);
          ++count;
        }
      out.pixels[static_cast<std::size_t>(r * n + c)] = static_cast<std::uint8_t>((sum + count / 2) / count);
    }
  }
  return out;
}

AudioChunk noise_audio(std::mt19937_64& rng) {
  AudioChunk a;
  std::uniform_int_distribution<int> d(-3000, 3000);
  for (auto& s : a.samples) s = static_cast<std::int16_t>(d(rng));
  return a;
}

SmsList mask_sms_bodies(const SmsList& inbox) {
  SmsList out = inbox;
  for (auto& m : out) m.body = std::string(kSmsMask);
  return out;
}

CalendarList mask_calendar(const CalendarList& events, const std::vector<std::string>& fields) {
  auto has = [&](std::string_view f) { return std::find(fields.begin(), fields.end(), f) != fields.end(); };
  CalendarList out = events;
  for (auto& e : out) {
    if (has("title")) e.title = std::string(kCalendarMask);
    if (has("location")) e.location = std::string(kCalendarMask);
    if (has("start")) e.start = 0;
    if (has("end")) e.end = 0;
  }
  return out;
}

Deceiver::Deceiver(const PolicyStore& store, std::uint64_t seed) : store_(store), rng_(seed) {}

Value Deceiver::spoof_value(PermissionKind permission, const DeceitAction& action,
                            const std::optional<Value>& original) {
  auto require = [&]<class T>(std::type_identity<T>) -> const T& {
    if (!original) throw Error(ErrorCode::MissingOriginal, std::string(action_kind(action)));
    const T* v = std::get_if<T>(&*original);
    if (!v) throw Error(ErrorCode::MissingOriginal, std::string(action_kind(action)) + " got " +
                                                        std::string(kind_name(*original)));
    return *v;
  };
  const bool info_request = original && std::holds_alternative<SensorInfo>(*original);
  const SensorInfo generic_info{"Generic Motion Sensor", "AOSP", 1.0};

  std::lock_guard lock(mu_);
  return std::visit(
      overloaded{
          [&](const Allow&) -> Value { throw Error(ErrorCode::InvalidArgument, "Allow does not spoof"); },
          [&](const Block&) -> Value { throw Error(ErrorCode::InvalidArgument, "Block does not spoof"); },
          [&](const SpoofStatic& s) -> Value { return s.value; },
          [&](const SpoofPool& s) -> Value {
            auto snap = store_.snapshot();
            auto it = snap->pools.find(s.pool_id);
            if (it == snap->pools.end()) throw Error(ErrorCode::UnknownPool, s.pool_id);
            const auto& values = it->second.values;
            if (values.empty()) throw Error(ErrorCode::EmptyPool, s.pool_id);
            const bool lists = std::all_of(values.begin(), values.end(),
                                           [](const Value& v) { return std::holds_alternative<ContactList>(v); });
            if (!lists) {
              std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
              return values[pick(rng_)];
            }
            std::size_t want = 10;
            if (original)
              if (const auto* cl = std::get_if<ContactList>(&*original); cl && !cl->empty()) want = cl->size();
            want = std::min(want, values.size());
            std::vector<std::size_t> idx(values.size());
            std::iota(idx.begin(), idx.end(), 0);
            ContactList out;
            for (std::size_t i = 0; i < want; ++i) {
              std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
              std::swap(idx[i], idx[pick(rng_)]);
              const auto& cl = std::get<ContactList>(values[idx[i]]);
              out.insert(out.end(), cl.begin(), cl.end());
            }
            return out;
          },
          [&](const ConstantSensor& c) -> Value {
            if (info_request) return generic_info;
            return SensorReading{c.value};
          },
          [&](const BlurFrame& b) -> Value { return box_blur(require(std::type_identity<Frame>{}), b.radius); },
          [&](const NoiseAudio&) -> Value { return noise_audio(rng_); },
          [&](const MaskSmsBodyKeepSender&) -> Value {
            return mask_sms_bodies(require(std::type_identity<SmsList>{}));
          },
          [&](const MaskCalendarFields& m) -> Value {
            return mask_calendar(require(std::type_identity<CalendarList>{}), m.fields);
          },
          [&](const FixedLocation& f) -> Value { return GeoFix{f.lat, f.lon, 10.0}; },
          [&](const ReplayTrace& r) -> Value {
            if (info_request) return generic_info;
            auto snap = store_.snapshot();
            auto it = snap->traces.find(r.trace_id);
            if (it == snap->traces.end()) throw Error(ErrorCode::UnknownTrace, r.trace_id);
            auto ch = it->second.channels.find(permission);
            if (ch == it->second.channels.end() || ch->second.empty())
              throw Error(ErrorCode::UnknownTrace, r.trace_id + " has no " + std::string(to_string(permission)));
            auto& cursor = cursors_[{r.trace_id, permission}];
            return ch->second[cursor++ % ch->second.size()];
          },
      },
      action);
}

std::vector<HookHandle> install_deceiving_hooks(HookEngine& engine, AppProcess& process, const PolicyStore& store,
                                                Deceiver& deceiver, const HiddenApiBypass* bypass) {
  std::vector<HookHandle> handles;
  for (auto permission : process.manifest.permissions) {
    for (const auto* slot : process.table.slots_for(permission)) {
      if (slot->method.hidden && bypass == nullptr) continue;
      HookDescriptor d;
      d.target = slot->method.key();
      d.owner = std::string(kDeceiverOwner);
      d.before = [&store](MethodHookParam& param) {
        const auto& c = param.context;
        auto response = store.query_bridge({c.app_id, c.permission, c.activity_state});
        const bool block = is_block(response.resolved.action);
        param.extra.insert_or_assign(std::string(kDeceiverOwner), std::move(response));
        if (block) param.result = Value{Null{}};
      };
      d.after = [&deceiver](MethodHookParam& param) {
        if (param.return_early || !param.result || is_null(*param.result)) return;
        auto it = param.extra.find(kDeceiverOwner);
        if (it == param.extra.end()) return;
        const auto& response = std::any_cast<const DeceitResponse&>(it->second);
        if (!is_spoof(response.resolved.action)) return;
        param.result = deceiver.spoof_value(param.context.permission, response.resolved.action, param.result);
      };
      handles.push_back(engine.install_hook(process, std::move(d), bypass));
    }
  }
  return handles;
}

}  // namespace decoy
