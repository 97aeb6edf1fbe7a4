#include "decoy/access_log.hpp"

#include <algorithm>
#include <sstream>

#include "decoy/error.hpp"

namespace decoy {

using nlohmann::json;

json entry_to_json(const AccessLogEntry& e) {
  // Field order is part of the export contract.
  json j = json::object();
  j["seq"] = e.seq;
  j["t"] = e.t;
  j["app_id"] = e.app_id;
  j["permission"] = to_string(e.permission);
  j["method"] = e.method;
  j["state"] = to_string(e.state);
  j["action"] = to_string(e.action);
  j["latency_ns"] = e.latency_ns;
  j["bytes"] = e.bytes;
  j["indicator_shown"] = e.indicator_shown;
  return j;
}

AccessLogEntry entry_from_json(const json& j) {
  AccessLogEntry e;
  try {
    e.seq = j.at("seq").get<std::uint64_t>();
    e.t = j.at("t").get<VirtualMs>();
    e.app_id = j.at("app_id").get<std::string>();
    auto p = permission_from_string(j.at("permission").get<std::string>());
    auto s = activity_state_from_string(j.at("state").get<std::string>());
    auto a = access_action_from_string(j.at("action").get<std::string>());
    if (!p || !s || !a) throw Error(ErrorCode::Parse, "bad enum in log entry");
    e.permission = *p;
    e.state = *s;
    e.action = *a;
    e.method = j.at("method").get<std::string>();
    e.latency_ns = j.at("latency_ns").get<std::int64_t>();
    e.bytes = j.at("bytes").get<std::int64_t>();
    e.indicator_shown = j.at("indicator_shown").get<bool>();
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::Parse, std::string("log entry: ") + ex.what());
  }
  return e;
}

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) out.push_back(line);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  return out;
}

}  // namespace

std::string export_logs(const std::vector<AccessLogEntry>& entries, ExportFormat format) {
  std::ostringstream out;
  if (format == ExportFormat::Jsonl) {
    for (const auto& e : entries) out << entry_to_json(e).dump() << '\n';
    return out.str();
  }
  if (entries.empty()) return {};
  out << kCsvHeader << '\n';
  for (const auto& e : entries) {
    out << e.seq << ',' << e.t << ',' << csv_field(e.app_id) << ',' << to_string(e.permission) << ','
        << csv_field(e.method) << ',' << to_string(e.state) << ',' << to_string(e.action) << ','
        << e.latency_ns << ',' << e.bytes << ',' << (e.indicator_shown ? "true" : "false") << '\n';
  }
  return out.str();
}

std::vector<AccessLogEntry> import_jsonl(std::string_view text) {
  std::vector<AccessLogEntry> out;
  for (auto line : lines_of(text)) {
    try {
      out.push_back(entry_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::Parse, e.what());
    }
  }
  return out;
}

std::vector<AccessLogEntry> import_csv(std::string_view text) {
  auto lines = lines_of(text);
  std::vector<AccessLogEntry> out;
  if (lines.empty()) return out;
  if (lines.front() != kCsvHeader) throw Error(ErrorCode::Parse, "unexpected CSV header");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = split_csv_line(lines[i]);
    if (f.size() != 10) throw Error(ErrorCode::Parse, "CSV row needs 10 fields");
    AccessLogEntry e;
    auto p = permission_from_string(f[3]);
    auto s = activity_state_from_string(f[5]);
    auto a = access_action_from_string(f[6]);
    if (!p || !s || !a) throw Error(ErrorCode::Parse, "bad enum in CSV row");
    try {
      e.seq = std::stoull(f[0]);
      e.t = std::stoll(f[1]);
      e.latency_ns = std::stoll(f[7]);
      e.bytes = std::stoll(f[8]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::Parse, "bad number in CSV row");
    }
    e.app_id = f[2];
    e.permission = *p;
    e.method = f[4];
    e.state = *s;
    e.action = *a;
    e.indicator_shown = f[9] == "true";
    out.push_back(std::move(e));
  }
  return out;
}

// ---- AccessLog -------------------------------------------------------------

void AccessLog::append_locked(const AccessLogEntry& e, std::unique_lock<std::mutex>& lock) {
  if (e.bytes < 0) throw Error(ErrorCode::InvalidArgument, "bytes must be >= 0");
  entries_.push_back(e);
  auto subs = subscribers_;
  std::lock_guard delivery(delivery_mu_);
  lock.unlock();
  cv_.notify_all();
  for (const auto& [id, fn] : subs) fn(e);
}

void AccessLog::log_access(const AccessLogEntry& entry) {
  std::unique_lock lock(mu_);
  const auto expected = base_seq_ + entries_.size() + 1;
  if (entry.seq != expected)
    throw Error(ErrorCode::SequenceGap,
                "expected seq " + std::to_string(expected) + ", got " + std::to_string(entry.seq));
  append_locked(entry, lock);
}

std::uint64_t AccessLog::append(AccessLogEntry entry) {
  std::unique_lock lock(mu_);
  entry.seq = base_seq_ + entries_.size() + 1;
  const auto seq = entry.seq;
  append_locked(entry, lock);
  return seq;
}

std::uint64_t AccessLog::last_seq() const {
  std::lock_guard lock(mu_);
  return base_seq_ + entries_.size();
}

std::size_t AccessLog::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::vector<AccessLogEntry> AccessLog::snapshot() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::vector<AccessLogEntry> AccessLog::entries_after(std::uint64_t seq) const {
  std::lock_guard lock(mu_);
  std::vector<AccessLogEntry> out;
  if (seq < base_seq_) seq = base_seq_;
  for (auto i = static_cast<std::size_t>(seq - base_seq_); i < entries_.size(); ++i) out.push_back(entries_[i]);
  return out;
}

bool AccessLog::wait_after(std::uint64_t seq, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [&] { return base_seq_ + entries_.size() > seq; });
}

std::string AccessLog::export_logs(ExportFormat format) const { return decoy::export_logs(snapshot(), format); }

std::size_t AccessLog::subscribe(Subscriber fn) {
  std::lock_guard lock(mu_);
  subscribers_.emplace_back(next_sub_, std::move(fn));
  return next_sub_++;
}

void AccessLog::unsubscribe(std::size_t id) {
  std::lock_guard lock(mu_);
  std::erase_if(subscribers_, [&](const auto& s) { return s.first == id; });
}

void AccessLog::clear() {
  std::lock_guard lock(mu_);
  base_seq_ += entries_.size();
  entries_.clear();
}

void AccessLog::reset() {
  std::lock_guard lock(mu_);
  base_seq_ = 0;
  entries_.clear();
}

void AccessLog::start_after(std::uint64_t seq) {
  std::lock_guard lock(mu_);
  if (!entries_.empty()) throw Error(ErrorCode::InvalidArgument, "start_after needs an empty log");
  base_seq_ = seq;
}

}  // namespace decoy
