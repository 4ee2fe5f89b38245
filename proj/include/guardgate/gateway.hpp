#pragma once

#include "guardgate/backend.hpp"
#include "guardgate/errors.hpp"
#include "guardgate/observability.hpp"
#include "guardgate/pipeline.hpp"
#include "guardgate/policy_store.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace httplib {
class Client;
}

namespace guardgate {

// --- configuration -----------------------------------------------------------

struct GatewayConfig {
  std::string listen_host = "127.0.0.1";
  int listen_port = 8080;
  std::string backend = "stub";  // stub | remote
  std::optional<RemoteEndpointConfig> remote;
  std::string stub_lexicon_path;  // empty: built-in lexicon
  std::uint64_t stub_seed = 7;
  std::string taxonomy_path;  // empty: built-in taxonomy
  std::string policy_dir = "policies";
  std::string default_policy_id = "default";
  std::string upstream_url;  // proxy mode; empty disables /v1/chat/completions
  std::string upstream_api_key;
  int upstream_timeout_ms = 60000;
  std::string block_message =
      "This content was blocked by the safety gateway (request {request_id}, categories: {categories}).";
  std::string log_sink = "stderr";
  std::string log_level = "info";
  std::string api_key;  // static key for clients; empty disables auth
  int backend_deadline_ms = 5000;
  int server_threads = 128;
};

GatewayConfig config_from_json(const nlohmann::json &j);
nlohmann::json to_json(const GatewayConfig &config);

using EnvLookup = std::function<std::optional<std::string>(const std::string &name)>;

/// Applies GW_* environment overrides (see README for the mapping).
void apply_env_overrides(GatewayConfig &config, const EnvLookup &lookup);
EnvLookup process_env();

/// Throws ValidationError(InvalidConfig) listing every problem.
void validate_config(const GatewayConfig &config);

/// Reads JSON/YAML, applies env overrides, validates.
GatewayConfig load_config(const std::filesystem::path &path, const EnvLookup &lookup = process_env());

// --- upstream LLM (proxy mode) -----------------------------------------------

struct UpstreamReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

class UpstreamClient {
 public:
  virtual ~UpstreamClient() = default;
  /// Throws GuardError(Unreachable / Timeout) on transport failure.
  virtual UpstreamReply send_chat(const std::string &body, const std::string &authorization) const = 0;
};

class HttpUpstreamClient final : public UpstreamClient {
 public:
  HttpUpstreamClient(std::string base_url, std::string api_key, std::chrono::milliseconds timeout);
  ~HttpUpstreamClient() override;
  UpstreamReply send_chat(const std::string &body, const std::string &authorization) const override;

 private:
  std::string scheme_host_port_;
  std::string path_;
  std::string api_key_;
  std::chrono::milliseconds timeout_;
};

// --- service -----------------------------------------------------------------

struct HttpReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
  std::vector<std::pair<std::string, std::string>> headers;
};

using HeaderLookup = std::function<std::optional<std::string>(const std::string &name)>;

struct CheckRequest {
  GuardInput input;
  std::variant<PolicyConfig, std::string> policy;  // inline policy or stored policy_id
  bool redact = false;
};

CheckRequest check_request_from_json(const nlohmann::json &j);

struct CheckResponse {
  SafetyVerdict verdict;
  std::optional<RedactionResult> redaction;  // mapping is never serialized
  std::string request_id;
  StageTimings timings;
};

/// Serializes without the reversible mapping or span contents.
nlohmann::json to_json(const CheckResponse &response);

int http_status_for(ErrorCode code);

/// Transport-independent request handling for the gateway.
class GatewayService {
 public:
  GatewayService(GatewayConfig config, CategoryTaxonomy taxonomy, std::shared_ptr<const DetectorBackend> backend,
                 std::shared_ptr<PolicyStore> store, std::shared_ptr<const UpstreamClient> upstream,
                 std::shared_ptr<EventLog> log);

  /// Builds backend, store, upstream client and log from the config.
  static std::unique_ptr<GatewayService> from_config(const GatewayConfig &config);

  /// Typed check; throws GuardError on validation or backend failure.
  CheckResponse check(const CheckRequest &request);

  HttpReply handle_check(const std::string &body);
  HttpReply handle_proxy_chat(const std::string &body, const HeaderLookup &headers);
  HttpReply handle_list_policies() const;
  HttpReply handle_get_policy(const std::string &id) const;
  HttpReply handle_create_policy(const std::string &body);
  HttpReply handle_put_policy(const std::string &id, const std::string &body);
  HttpReply handle_delete_policy(const std::string &id);
  HttpReply handle_health() const;
  HttpReply handle_metrics() const;
  HttpReply handle_recent_logs(std::size_t limit) const;

  /// True when the request carries the configured API key (or none is set).
  bool authorized(const HeaderLookup &headers) const;

  const GatewayConfig &config() const noexcept { return config_; }
  const GatewayMetrics &metrics() const noexcept { return metrics_; }
  PolicyStore &store() noexcept { return *store_; }
  const GuardPipeline &pipeline() const noexcept { return pipeline_; }

 private:
  std::string next_request_id();
  PolicyConfig resolve_policy(const std::variant<PolicyConfig, std::string> &selector) const;
  CheckResponse run_check(const std::string &request_id, const GuardInput &input, const PolicyConfig &policy,
                          bool redact, std::string_view stage);
  HttpReply error_reply(const std::string &request_id, const GuardError &error) const;
  std::string block_text(const std::string &request_id, const SafetyVerdict &verdict) const;

  GatewayConfig config_;
  GuardPipeline pipeline_;
  std::shared_ptr<PolicyStore> store_;
  std::shared_ptr<const UpstreamClient> upstream_;
  std::shared_ptr<EventLog> log_;
  GatewayMetrics metrics_;
  std::string id_prefix_;
  std::atomic<std::uint64_t> id_counter_{0};
};

}  // namespace guardgate
