#include "guardgate/observability.hpp"

#include "guardgate/errors.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

namespace guardgate {

void LatencyHistogram::observe(double ms) {
  std::size_t i = 0;
  while (i < kBucketsMs.size() && ms > kBucketsMs[i]) {
    ++i;
  }
  counts_[i].fetch_add(1, std::memory_order_relaxed);
  total_.fetch_add(1, std::memory_order_relaxed);
  std::lock_guard lock(sum_mutex_);
  sum_ms_ += ms;
}

void LatencyHistogram::render(std::ostream &out, const std::string &name) const {
  out << "# TYPE " << name << " histogram\n";
  std::uint64_t cumulative = 0;
  for (std::size_t i = 0; i < kBucketsMs.size(); ++i) {
    cumulative += counts_[i].load();
    out << name << "_bucket{le=\"" << kBucketsMs[i] << "\"} " << cumulative << '\n';
  }
  cumulative += counts_.back().load();
  out << name << "_bucket{le=\"+Inf\"} " << cumulative << '\n';
  {
    std::lock_guard lock(sum_mutex_);
    out << name << "_sum " << sum_ms_ << '\n';
  }
  out << name << "_count " << total_.load() << '\n';
}

void GatewayMetrics::record_check(const std::string &label, const std::vector<std::string> &categories,
                                  double total_ms, double backend_ms) {
  checks_.fetch_add(1, std::memory_order_relaxed);
  check_latency_.observe(total_ms);
  if (backend_ms > 0) {
    backend_latency_.observe(backend_ms);
  }
  if (label == "unsafe") {
    unsafe_.fetch_add(1, std::memory_order_relaxed);
    std::lock_guard lock(category_mutex_);
    if (categories.empty()) {
      ++unsafe_by_category_["none"];
    }
    for (const auto &c : categories) {
      ++unsafe_by_category_[c];
    }
  }
}

void GatewayMetrics::record_backend_error() { backend_errors_.fetch_add(1, std::memory_order_relaxed); }
void GatewayMetrics::record_proxy_block() { proxy_blocks_.fetch_add(1, std::memory_order_relaxed); }
void GatewayMetrics::record_upstream_request() { upstream_requests_.fetch_add(1, std::memory_order_relaxed); }

std::string GatewayMetrics::render() const {
  std::ostringstream out;
  out << "# TYPE checks_total counter\nchecks_total " << checks_.load() << '\n';
  out << "# TYPE unsafe_total counter\n";
  {
    std::lock_guard lock(category_mutex_);
    for (const auto &[category, count] : unsafe_by_category_) {
      out << "unsafe_total{category=\"" << category << "\"} " << count << '\n';
    }
  }
  out << "# TYPE backend_errors_total counter\nbackend_errors_total " << backend_errors_.load() << '\n';
  out << "# TYPE proxy_blocked_total counter\nproxy_blocked_total " << proxy_blocks_.load() << '\n';
  out << "# TYPE upstream_requests_total counter\nupstream_requests_total " << upstream_requests_.load() << '\n';
  check_latency_.render(out, "check_latency_ms");
  backend_latency_.render(out, "backend_latency_ms");
  return out.str();
}

LogLevel log_level_from_string(const std::string &s) {
  if (s == "debug") return LogLevel::debug;
  if (s == "info") return LogLevel::info;
  if (s == "warn" || s == "warning") return LogLevel::warn;
  if (s == "error") return LogLevel::error;
  throw GuardError(ErrorCode::InvalidConfig, "unknown log level '" + s + "'");
}

namespace {
std::string_view level_name(LogLevel level) {
  switch (level) {
    case LogLevel::debug: return "debug";
    case LogLevel::info: return "info";
    case LogLevel::warn: return "warn";
    case LogLevel::error: return "error";
  }
  return "info";
}
}  // namespace

EventLog::EventLog(std::shared_ptr<std::ostream> sink, LogLevel level, std::size_t recent_capacity)
    : sink_(std::move(sink)), level_(level), capacity_(recent_capacity) {}

std::shared_ptr<EventLog> EventLog::open(const std::string &sink, LogLevel level) {
  std::shared_ptr<std::ostream> stream;
  if (sink == "stderr") {
    stream = std::shared_ptr<std::ostream>(&std::cerr, [](std::ostream *) {});
  } else if (sink == "stdout") {
    stream = std::shared_ptr<std::ostream>(&std::cout, [](std::ostream *) {});
  } else if (sink != "none" && !sink.empty()) {
    auto file = std::make_shared<std::ofstream>(sink, std::ios::app);
    if (!*file) {
      throw GuardError(ErrorCode::InvalidConfig, "cannot open log sink " + sink);
    }
    stream = file;
  }
  return std::make_shared<EventLog>(std::move(stream), level);
}

void EventLog::emit(LogLevel level, nlohmann::json event) {
  if (level < level_) {
    return;
  }
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  event["ts_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
  event["level"] = std::string(level_name(level));
  const std::string line = event.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  std::lock_guard lock(mutex_);
  if (sink_) {
    *sink_ << line << '\n';
    sink_->flush();
  }
  recent_.push_back(std::move(event));
  while (recent_.size() > capacity_) {
    recent_.pop_front();
  }
}

std::vector<nlohmann::json> EventLog::recent(std::size_t limit) const {
  std::lock_guard lock(mutex_);
  const std::size_t n = std::min(limit, recent_.size());
  return {recent_.end() - static_cast<std::ptrdiff_t>(n), recent_.end()};
}

}  // namespace guardgate
