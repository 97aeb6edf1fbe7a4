#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "decoy/types.hpp"

namespace decoy {

/// One sensitive-API invocation as recorded by the log reporter.
struct AccessLogEntry {
  std::uint64_t seq = 0;
  VirtualMs t = 0;
  std::string app_id;
  PermissionKind permission = PermissionKind::Location;
  std::string method;  // "class#method"
  ActivityState state = ActivityState::Background;
  AccessAction action = AccessAction::Original;
  std::int64_t latency_ns = 0;
  std::int64_t bytes = 0;
  bool indicator_shown = false;

  friend bool operator==(const AccessLogEntry&, const AccessLogEntry&) = default;
};

nlohmann::json entry_to_json(const AccessLogEntry& e);
AccessLogEntry entry_from_json(const nlohmann::json& j);

enum class ExportFormat { Jsonl, Csv };

inline constexpr std::string_view kCsvHeader =
    "seq,t,app_id,permission,method,state,action,latency_ns,bytes,indicator_shown";

std::string export_logs(const std::vector<AccessLogEntry>& entries, ExportFormat format);
std::vector<AccessLogEntry> import_jsonl(std::string_view text);
std::vector<AccessLogEntry> import_csv(std::string_view text);

/// Append-only, multi-producer log stream. Sequence numbers start at 1.
class AccessLog {
 public:
  using Subscriber = std::function<void(const AccessLogEntry&)>;

  /// Appends an entry whose seq must be exactly last_seq()+1; throws SequenceGap otherwise.
  void log_access(const AccessLogEntry& entry);

  /// Assigns the next seq and appends. Returns the assigned seq.
  std::uint64_t append(AccessLogEntry entry);

  std::uint64_t last_seq() const;
  std::size_t size() const;
  std::vector<AccessLogEntry> snapshot() const;
  std::vector<AccessLogEntry> entries_after(std::uint64_t seq) const;

  /// Blocks until an entry with seq > `seq` exists or the timeout expires.
  bool wait_after(std::uint64_t seq, std::chrono::milliseconds timeout) const;

  std::string export_logs(ExportFormat format) const;

  /// Subscribers run synchronously on the appending thread, in seq order.
  std::size_t subscribe(Subscriber fn);
  void unsubscribe(std::size_t id);

  void clear();
  /// Clears and restarts numbering at 1. Readers holding a cursor must start over.
  void reset();
  /// On an empty log, makes the next assigned seq `seq + 1` (used when restoring a session).
  void start_after(std::uint64_t seq);

 private:
  void append_locked(const AccessLogEntry& e, std::unique_lock<std::mutex>& lock);

  mutable std::mutex mu_;
  std::recursive_mutex delivery_mu_;
  mutable std::condition_variable cv_;
  std::vector<AccessLogEntry> entries_;
  std::uint64_t base_seq_ = 0;
  std::vector<std::pair<std::size_t, Subscriber>> subscribers_;
  std::size_t next_sub_ = 1;
};

}  // namespace decoy
