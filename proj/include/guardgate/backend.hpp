#pragma once

#include "guardgate/scoring.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace httplib {
class Client;
}

namespace guardgate {

struct BackendRequest {
  std::string guard_prompt;
  int max_continuation_tokens = 16;
  std::chrono::nanoseconds deadline = std::chrono::seconds(10);
};

struct BackendResponse {
  std::map<std::string, double> candidate_logprobs;  // first generated position
  std::string continuation;                          // raw text after the first token
  std::string model_id;
  double latency_ms = 0.0;

  bool operator==(const BackendResponse &) const = default;
};

nlohmann::json to_json(const BackendResponse &response);

/// Source of first-token candidate log-probabilities. Implementations are
/// shareable across threads.
class DetectorBackend {
 public:
  virtual ~DetectorBackend() = default;

  /// Throws GuardError with Timeout, Unreachable, MalformedUpstream,
  /// MissingLogprobs or AuthRejected.
  virtual BackendResponse query(const BackendRequest &request) const = 0;
  virtual std::string model_id() const = 0;
  virtual CandidateSpellings spellings() const { return {}; }
};

/// Throws GuardError(InvalidRequest) for an empty prompt or non-positive deadline.
void check_backend_request(const BackendRequest &request);

// --- deterministic stub -----------------------------------------------------

struct LexiconEntry {
  double weight = 0.0;
  std::string category;  // empty: counted regardless of the active categories

  bool operator==(const LexiconEntry &) const = default;
};

/// phrase -> entry; phrases are matched case-insensitively.
using Lexicon = std::map<std::string, LexiconEntry>;

Lexicon lexicon_from_json(const nlohmann::json &j);
nlohmann::json to_json(const Lexicon &lexicon);
Lexicon load_lexicon_file(const std::filesystem::path &path);

/// Small built-in lexicon for demos and the default gateway config.
const Lexicon &default_lexicon();

inline constexpr double kStubJitter = 0.01;

/// z_safe = 0; z_unsafe = sum of weights of lexicon phrases found in the
/// classified text (phrases with a category count only while that category is
/// active in the prompt) plus a deterministic jitter in [-0.01, 0.01] seeded by
/// (text, seed). Logprobs are the log-softmax of (z_safe, z_unsafe); the
/// continuation lists positively weighted categories, strongest first.
BackendResponse stub_score(std::string_view guard_prompt, const Lexicon &lexicon, std::uint64_t seed);

class StubBackend final : public DetectorBackend {
 public:
  StubBackend(Lexicon lexicon, std::uint64_t seed);

  BackendResponse query(const BackendRequest &request) const override;
  std::string model_id() const override;

 private:
  Lexicon lexicon_;
  std::uint64_t seed_;
};

/// Counts queries on a wrapped backend.
class CountingBackend final : public DetectorBackend {
 public:
  explicit CountingBackend(std::shared_ptr<const DetectorBackend> inner) : inner_(std::move(inner)) {}

  BackendResponse query(const BackendRequest &request) const override {
    queries_.fetch_add(1, std::memory_order_relaxed);
    return inner_->query(request);
  }
  std::string model_id() const override { return inner_->model_id(); }
  CandidateSpellings spellings() const override { return inner_->spellings(); }
  std::size_t queries() const { return queries_.load(); }

 private:
  std::shared_ptr<const DetectorBackend> inner_;
  mutable std::atomic<std::size_t> queries_{0};
};

// --- remote chat-completions client -----------------------------------------

struct RemoteEndpointConfig {
  std::string base_url;  // e.g. http://localhost:8000/v1
  std::string model;
  std::string api_key;
  int top_logprobs = 20;
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{100};
  std::size_t max_idle_connections = 16;
  CandidateSpellings spellings;
};

RemoteEndpointConfig remote_endpoint_from_json(const nlohmann::json &j);

/// Chat-completions request body asking for first-position logprobs.
nlohmann::json build_remote_request_body(const RemoteEndpointConfig &config, const BackendRequest &request);

/// Maps an upstream chat-completions response into a BackendResponse.
/// Throws MissingLogprobs or MalformedUpstream.
BackendResponse parse_remote_response(const nlohmann::json &body);

class RemoteBackend final : public DetectorBackend {
 public:
  explicit RemoteBackend(RemoteEndpointConfig config);
  ~RemoteBackend() override;

  BackendResponse query(const BackendRequest &request) const override;
  std::string model_id() const override { return config_.model; }
  CandidateSpellings spellings() const override { return config_.spellings; }

  /// Number of HTTP attempts issued so far (including retries).
  std::size_t attempts() const { return attempts_.load(); }

 private:
  std::unique_ptr<httplib::Client> acquire() const;
  void release(std::unique_ptr<httplib::Client> client) const;

  RemoteEndpointConfig config_;
  std::string scheme_host_port_;
  std::string path_;
  mutable std::mutex pool_mutex_;
  mutable std::vector<std::unique_ptr<httplib::Client>> idle_;
  mutable std::atomic<std::size_t> attempts_{0};
};

/// Splits "http://host:port/prefix" into ("http://host:port", "/prefix").
std::pair<std::string, std::string> split_base_url(const std::string &base_url);

}  // namespace guardgate
