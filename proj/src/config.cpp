#include "guardgate/errors.hpp"
#include "guardgate/gateway.hpp"

#include <httplib.h>

#include <cstdlib>
#include <set>

namespace guardgate {

namespace {

std::pair<std::string, int> split_listen(const std::string &listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) {
    throw GuardError(ErrorCode::InvalidConfig, "listen address must be host:port, got '" + listen + "'");
  }
  try {
    return {listen.substr(0, colon), std::stoi(listen.substr(colon + 1))};
  } catch (const std::exception &) {
    throw GuardError(ErrorCode::InvalidConfig, "listen port is not a number in '" + listen + "'");
  }
}

template <typename T>
void read_field(const nlohmann::json &j, const char *key, T &out) {
  if (const auto it = j.find(key); it != j.end() && !it->is_null()) {
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception &) {
      throw GuardError(ErrorCode::InvalidConfig, std::string("config field '") + key + "' has the wrong type");
    }
  }
}

}  // namespace

GatewayConfig config_from_json(const nlohmann::json &j) {
  if (!j.is_object()) {
    throw GuardError(ErrorCode::InvalidConfig, "gateway config must be an object");
  }
  GatewayConfig c;
  if (j.contains("listen")) {
    std::tie(c.listen_host, c.listen_port) = split_listen(j["listen"].get<std::string>());
  }
  read_field(j, "backend", c.backend);
  if (const auto it = j.find("remote"); it != j.end() && !it->is_null()) {
    c.remote = remote_endpoint_from_json(*it);
  }
  if (const auto it = j.find("stub"); it != j.end() && it->is_object()) {
    read_field(*it, "lexicon_path", c.stub_lexicon_path);
    read_field(*it, "seed", c.stub_seed);
  }
  read_field(j, "taxonomy_path", c.taxonomy_path);
  read_field(j, "policy_dir", c.policy_dir);
  read_field(j, "default_policy_id", c.default_policy_id);
  if (const auto it = j.find("upstream"); it != j.end() && it->is_object()) {
    read_field(*it, "base_url", c.upstream_url);
    read_field(*it, "api_key", c.upstream_api_key);
    read_field(*it, "timeout_ms", c.upstream_timeout_ms);
  }
  read_field(j, "block_message", c.block_message);
  read_field(j, "log_sink", c.log_sink);
  read_field(j, "log_level", c.log_level);
  read_field(j, "api_key", c.api_key);
  read_field(j, "backend_deadline_ms", c.backend_deadline_ms);
  read_field(j, "server_threads", c.server_threads);
  return c;
}

nlohmann::json to_json(const GatewayConfig &c) {
  nlohmann::json j{{"listen", c.listen_host + ":" + std::to_string(c.listen_port)},
                   {"backend", c.backend},
                   {"stub", {{"lexicon_path", c.stub_lexicon_path}, {"seed", c.stub_seed}}},
                   {"taxonomy_path", c.taxonomy_path},
                   {"policy_dir", c.policy_dir},
                   {"default_policy_id", c.default_policy_id},
                   {"upstream", {{"base_url", c.upstream_url}, {"timeout_ms", c.upstream_timeout_ms}}},
                   {"block_message", c.block_message},
                   {"log_sink", c.log_sink},
                   {"log_level", c.log_level},
                   {"backend_deadline_ms", c.backend_deadline_ms},
                   {"server_threads", c.server_threads}};
  if (c.remote) {
    j["remote"] = {{"base_url", c.remote->base_url},
                   {"model", c.remote->model},
                   {"top_logprobs", c.remote->top_logprobs},
                   {"max_attempts", c.remote->max_attempts}};
  }
  return j;
}

void apply_env_overrides(GatewayConfig &c, const EnvLookup &lookup) {
  const auto str = [&](const char *name, std::string &field) {
    if (auto v = lookup(name)) field = *v;
  };
  const auto num = [&](const char *name, auto &field) {
    if (auto v = lookup(name)) {
      try {
        field = static_cast<std::remove_reference_t<decltype(field)>>(std::stoll(*v));
      } catch (const std::exception &) {
        throw GuardError(ErrorCode::InvalidConfig, std::string(name) + " must be an integer");
      }
    }
  };
  if (auto v = lookup("GW_LISTEN")) {
    std::tie(c.listen_host, c.listen_port) = split_listen(*v);
  }
  str("GW_BACKEND", c.backend);
  str("GW_STUB_LEXICON", c.stub_lexicon_path);
  num("GW_STUB_SEED", c.stub_seed);
  str("GW_TAXONOMY_PATH", c.taxonomy_path);
  str("GW_POLICY_DIR", c.policy_dir);
  str("GW_DEFAULT_POLICY", c.default_policy_id);
  str("GW_UPSTREAM_URL", c.upstream_url);
  str("GW_UPSTREAM_API_KEY", c.upstream_api_key);
  num("GW_UPSTREAM_TIMEOUT_MS", c.upstream_timeout_ms);
  str("GW_BLOCK_MESSAGE", c.block_message);
  str("GW_LOG_SINK", c.log_sink);
  str("GW_LOG_LEVEL", c.log_level);
  str("GW_API_KEY", c.api_key);
  num("GW_BACKEND_DEADLINE_MS", c.backend_deadline_ms);
  num("GW_SERVER_THREADS", c.server_threads);

  const bool remote_override = lookup("GW_REMOTE_BASE_URL") || lookup("GW_REMOTE_MODEL") ||
                               lookup("GW_REMOTE_API_KEY") || lookup("GW_REMOTE_TOP_LOGPROBS");
  if (remote_override) {
    if (!c.remote) c.remote.emplace();
    str("GW_REMOTE_BASE_URL", c.remote->base_url);
    str("GW_REMOTE_MODEL", c.remote->model);
    str("GW_REMOTE_API_KEY", c.remote->api_key);
    num("GW_REMOTE_TOP_LOGPROBS", c.remote->top_logprobs);
  }
}

EnvLookup process_env() {
  return [](const std::string &name) -> std::optional<std::string> {
    if (const char *v = std::getenv(name.c_str())) {
      return std::string(v);
    }
    return std::nullopt;
  };
}

void validate_config(const GatewayConfig &c) {
  std::vector<Violation> v;
  const auto bad = [&](std::string field, std::string detail) {
    v.push_back({ErrorCode::InvalidConfig, std::move(field), std::move(detail)});
  };
  if (c.listen_port < 0 || c.listen_port > 65535) bad("listen", "port out of range");
  if (c.backend != "stub" && c.backend != "remote") bad("backend", "must be stub or remote");
  if (c.backend == "remote" && (!c.remote || c.remote->base_url.empty() || c.remote->model.empty())) {
    bad("remote", "remote backend needs base_url and model");
  }
  if (c.remote && !c.remote->base_url.empty() && c.remote->base_url.find("://") == std::string::npos) {
    bad("remote.base_url", "needs a scheme");
  }
  if (!c.upstream_url.empty() && c.upstream_url.find("://") == std::string::npos) {
    bad("upstream.base_url", "needs a scheme");
  }
  if (!c.taxonomy_path.empty() && !std::filesystem::exists(c.taxonomy_path)) {
    bad("taxonomy_path", c.taxonomy_path + " does not exist");
  }
  if (!c.stub_lexicon_path.empty() && !std::filesystem::exists(c.stub_lexicon_path)) {
    bad("stub.lexicon_path", c.stub_lexicon_path + " does not exist");
  }
  static const std::set<std::string> levels = {"debug", "info", "warn", "warning", "error"};
  if (!levels.contains(c.log_level)) bad("log_level", "unknown level '" + c.log_level + "'");
  if (c.block_message.empty()) bad("block_message", "must not be empty");
  if (c.backend_deadline_ms <= 0) bad("backend_deadline_ms", "must be positive");
  if (c.upstream_timeout_ms <= 0) bad("upstream.timeout_ms", "must be positive");
  if (c.server_threads <= 0) bad("server_threads", "must be positive");
  if (!v.empty()) {
    throw ValidationError(std::move(v));
  }
}

GatewayConfig load_config(const std::filesystem::path &path, const EnvLookup &lookup) {
  GatewayConfig config = config_from_json(load_document(path));
  apply_env_overrides(config, lookup);
  validate_config(config);
  return config;
}

HttpUpstreamClient::HttpUpstreamClient(std::string base_url, std::string api_key, std::chrono::milliseconds timeout)
    : api_key_(std::move(api_key)), timeout_(timeout) {
  std::tie(scheme_host_port_, path_) = split_base_url(base_url);
  path_ += "/chat/completions";
}

HttpUpstreamClient::~HttpUpstreamClient() = default;

UpstreamReply HttpUpstreamClient::send_chat(const std::string &body, const std::string &authorization) const {
  httplib::Client client(scheme_host_port_);
  client.set_tcp_nodelay(true);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  httplib::Headers headers;
  if (!api_key_.empty()) {
    headers.emplace("Authorization", "Bearer " + api_key_);
  } else if (!authorization.empty()) {
    headers.emplace("Authorization", authorization);
  }
  auto result = client.Post(path_, headers, body, "application/json");
  if (!result) {
    const auto err = result.error();
    const bool timeout = err == httplib::Error::Read || err == httplib::Error::Write ||
                         err == httplib::Error::ConnectionTimeout;
    throw GuardError(timeout ? ErrorCode::Timeout : ErrorCode::Unreachable,
                     "upstream transport error: " + httplib::to_string(err));
  }
  UpstreamReply reply;
  reply.status = result->status;
  reply.body = result->body;
  reply.content_type = result->get_header_value("Content-Type");
  if (reply.content_type.empty()) {
    reply.content_type = "application/json";
  }
  return reply;
}

}  // namespace guardgate
