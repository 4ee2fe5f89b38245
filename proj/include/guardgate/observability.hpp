#pragma once

#include <array>
#include <atomic>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace guardgate {

class LatencyHistogram {
 public:
  static constexpr std::array<double, 12> kBucketsMs = {1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000};

  void observe(double ms);
  void render(std::ostream &out, const std::string &name) const;

 private:
  std::array<std::atomic<std::uint64_t>, kBucketsMs.size() + 1> counts_{};
  std::atomic<std::uint64_t> total_{0};
  mutable std::mutex sum_mutex_;
  double sum_ms_ = 0.0;
};

/// Process-wide counters rendered in Prometheus text format.
class GatewayMetrics {
 public:
  void record_check(const std::string &label, const std::vector<std::string> &categories, double total_ms,
                    double backend_ms);
  void record_backend_error();
  void record_proxy_block();
  void record_upstream_request();

  std::uint64_t checks_total() const { return checks_.load(); }
  std::uint64_t backend_errors_total() const { return backend_errors_.load(); }
  std::uint64_t upstream_requests_total() const { return upstream_requests_.load(); }

  std::string render() const;

 private:
  std::atomic<std::uint64_t> checks_{0};
  std::atomic<std::uint64_t> unsafe_{0};
  std::atomic<std::uint64_t> backend_errors_{0};
  std::atomic<std::uint64_t> proxy_blocks_{0};
  std::atomic<std::uint64_t> upstream_requests_{0};
  mutable std::mutex category_mutex_;
  std::map<std::string, std::uint64_t> unsafe_by_category_;
  LatencyHistogram check_latency_;
  LatencyHistogram backend_latency_;
};

enum class LogLevel { debug, info, warn, error };

LogLevel log_level_from_string(const std::string &s);

/// Newline-delimited JSON event log with a bounded in-memory tail.
class EventLog {
 public:
  EventLog(std::shared_ptr<std::ostream> sink, LogLevel level, std::size_t recent_capacity = 256);

  /// Opens "stderr", "stdout", "none" or a file path (appending).
  static std::shared_ptr<EventLog> open(const std::string &sink, LogLevel level);

  void emit(LogLevel level, nlohmann::json event);
  std::vector<nlohmann::json> recent(std::size_t limit) const;

 private:
  std::shared_ptr<std::ostream> sink_;
  LogLevel level_;
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::deque<nlohmann::json> recent_;
};

}  // namespace guardgate
