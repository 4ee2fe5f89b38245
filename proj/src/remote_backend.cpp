#include "guardgate/backend.hpp"

#include "guardgate/errors.hpp"

#include <httplib.h>

#include <algorithm>
#include <random>
#include <thread>

namespace guardgate {

std::pair<std::string, std::string> split_base_url(const std::string &base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw GuardError(ErrorCode::InvalidConfig, "base URL needs a scheme: " + base_url);
  }
  const auto path_start = base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    return {base_url, ""};
  }
  std::string path = base_url.substr(path_start);
  while (!path.empty() && path.back() == '/') {
    path.pop_back();
  }
  return {base_url.substr(0, path_start), path};
}

RemoteEndpointConfig remote_endpoint_from_json(const nlohmann::json &j) {
  RemoteEndpointConfig config;
  if (!j.is_object()) {
    throw GuardError(ErrorCode::InvalidConfig, "remote endpoint config must be an object");
  }
  config.base_url = j.value("base_url", std::string());
  config.model = j.value("model", std::string());
  config.api_key = j.value("api_key", std::string());
  config.top_logprobs = j.value("top_logprobs", config.top_logprobs);
  config.max_attempts = j.value("max_attempts", config.max_attempts);
  config.backoff_base = std::chrono::milliseconds(j.value("backoff_base_ms", 100));
  config.max_idle_connections = j.value("max_idle_connections", config.max_idle_connections);
  if (j.contains("safe_tokens")) {
    config.spellings.safe = j["safe_tokens"].get<std::vector<std::string>>();
  }
  if (j.contains("unsafe_tokens")) {
    config.spellings.unsafe = j["unsafe_tokens"].get<std::vector<std::string>>();
  }
  if (config.base_url.empty() || config.model.empty()) {
    throw GuardError(ErrorCode::InvalidConfig, "remote endpoint needs base_url and model");
  }
  if (config.top_logprobs < 1 || config.max_attempts < 1) {
    throw GuardError(ErrorCode::InvalidConfig, "top_logprobs and max_attempts must be positive");
  }
  return config;
}

nlohmann::json build_remote_request_body(const RemoteEndpointConfig &config, const BackendRequest &request) {
  return {{"model", config.model},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.guard_prompt}}})},
          {"max_tokens", request.max_continuation_tokens + 1},
          {"temperature", 0},
          {"logprobs", true},
          {"top_logprobs", config.top_logprobs},
          {"stream", false}};
}

namespace {

[[noreturn]] void malformed(const std::string &detail) { throw GuardError(ErrorCode::MalformedUpstream, detail); }

void add_logprob(std::map<std::string, double> &out, const nlohmann::json &token, const nlohmann::json &logprob) {
  if (!token.is_string() || !logprob.is_number()) {
    malformed("logprob entries need a string token and a numeric logprob");
  }
  out.emplace(token.get<std::string>(), logprob.get<double>());
}

}  // namespace

BackendResponse parse_remote_response(const nlohmann::json &body) {
  if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
    malformed("upstream response has no choices");
  }
  const auto &choice = body["choices"][0];
  const auto lp = choice.find("logprobs");
  if (lp == choice.end() || lp->is_null()) {
    throw GuardError(ErrorCode::MissingLogprobs, "upstream did not return token logprobs");
  }

  BackendResponse response;
  response.model_id = body.value("model", std::string());

  if (lp->contains("content")) {
    // chat-completions shape
    const auto &content = (*lp)["content"];
    if (!content.is_array() || content.empty()) {
      throw GuardError(ErrorCode::MissingLogprobs, "upstream logprobs.content is empty");
    }
    const auto &first = content[0];
    if (!first.is_object() || !first.contains("token") || !first.contains("logprob")) {
      malformed("first logprob entry lacks token/logprob");
    }
    if (const auto top = first.find("top_logprobs"); top != first.end() && top->is_array()) {
      for (const auto &alt : *top) {
        if (!alt.is_object()) {
          malformed("top_logprobs entries must be objects");
        }
        add_logprob(response.candidate_logprobs, alt.value("token", nlohmann::json()),
                    alt.value("logprob", nlohmann::json()));
      }
    }
    add_logprob(response.candidate_logprobs, first["token"], first["logprob"]);

    const std::string first_token = first["token"].get<std::string>();
    const auto message = choice.find("message");
    const bool has_text = message != choice.end() && message->is_object() && message->contains("content") &&
                          (*message)["content"].is_string();
    const std::string text = has_text ? (*message)["content"].get<std::string>() : std::string();
    if (has_text && text.starts_with(first_token)) {
      response.continuation = text.substr(first_token.size());
    } else {
      for (std::size_t i = 1; i < content.size(); ++i) {
        if (content[i].contains("token") && content[i]["token"].is_string()) {
          response.continuation += content[i]["token"].get<std::string>();
        }
      }
    }
  } else if (lp->contains("top_logprobs")) {
    // legacy completions shape: top_logprobs is a list of {token: logprob} maps
    const auto &top = (*lp)["top_logprobs"];
    if (!top.is_array() || top.empty() || !top[0].is_object()) {
      throw GuardError(ErrorCode::MissingLogprobs, "upstream top_logprobs is empty");
    }
    for (const auto &[token, value] : top[0].items()) {
      add_logprob(response.candidate_logprobs, token, value);
    }
    const std::string text = choice.value("text", std::string());
    const auto &tokens = lp->value("tokens", nlohmann::json::array());
    const std::string first_token = !tokens.empty() && tokens[0].is_string() ? tokens[0].get<std::string>() : "";
    response.continuation = text.starts_with(first_token) ? text.substr(first_token.size()) : text;
  } else {
    throw GuardError(ErrorCode::MissingLogprobs, "upstream logprobs object has no token data");
  }

  if (response.candidate_logprobs.empty()) {
    throw GuardError(ErrorCode::MissingLogprobs, "upstream returned no first-token alternatives");
  }
  return response;
}

RemoteBackend::RemoteBackend(RemoteEndpointConfig config) : config_(std::move(config)) {
  std::tie(scheme_host_port_, path_) = split_base_url(config_.base_url);
  path_ += "/chat/completions";
}

RemoteBackend::~RemoteBackend() = default;

std::unique_ptr<httplib::Client> RemoteBackend::acquire() const {
  {
    std::lock_guard lock(pool_mutex_);
    if (!idle_.empty()) {
      auto client = std::move(idle_.back());
      idle_.pop_back();
      return client;
    }
  }
  auto client = std::make_unique<httplib::Client>(scheme_host_port_);
  client->set_keep_alive(true);
  client->set_tcp_nodelay(true);
  if (!config_.api_key.empty()) {
    client->set_bearer_token_auth(config_.api_key);
  }
  return client;
}

void RemoteBackend::release(std::unique_ptr<httplib::Client> client) const {
  std::lock_guard lock(pool_mutex_);
  if (idle_.size() < config_.max_idle_connections) {
    idle_.push_back(std::move(client));
  }
}

BackendResponse RemoteBackend::query(const BackendRequest &request) const {
  check_backend_request(request);
  using clock = std::chrono::steady_clock;
  const auto started = clock::now();
  const auto deadline = started + request.deadline;
  const std::string body = build_remote_request_body(config_, request).dump();

  thread_local std::mt19937_64 rng{std::random_device{}()};
  ErrorCode last_code = ErrorCode::Unreachable;
  std::string last_detail = "no attempt made";

  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    const auto remaining = deadline - clock::now();
    if (remaining <= clock::duration::zero()) {
      throw GuardError(ErrorCode::Timeout, "guard backend deadline exceeded");
    }
    auto client = acquire();
    const auto budget = std::chrono::duration_cast<std::chrono::microseconds>(remaining);
    client->set_connection_timeout(budget);
    client->set_read_timeout(budget);
    client->set_write_timeout(budget);

    attempts_.fetch_add(1, std::memory_order_relaxed);
    auto result = client->Post(path_, body, "application/json");
    bool transient = false;
    if (!result) {
      const bool out_of_time = clock::now() >= deadline;
      last_code = out_of_time ? ErrorCode::Timeout : ErrorCode::Unreachable;
      last_detail = "transport error: " + httplib::to_string(result.error());
      if (out_of_time) {
        throw GuardError(ErrorCode::Timeout, "guard backend deadline exceeded (" + last_detail + ")");
      }
      transient = true;
    } else {
      const int status = result->status;
      if (status == 200) {
        nlohmann::json parsed;
        try {
          parsed = nlohmann::json::parse(result->body);
        } catch (const nlohmann::json::parse_error &e) {
          release(std::move(client));
          malformed(std::string("upstream body is not JSON: ") + e.what());
        }
        release(std::move(client));
        BackendResponse response = parse_remote_response(parsed);
        if (response.model_id.empty()) {
          response.model_id = config_.model;
        }
        response.latency_ms = std::chrono::duration<double, std::milli>(clock::now() - started).count();
        return response;
      }
      release(std::move(client));
      if (status == 401 || status == 403) {
        throw GuardError(ErrorCode::AuthRejected, "upstream rejected credentials (HTTP " + std::to_string(status) + ")");
      }
      if (status == 408 || status == 429 || status >= 500) {
        last_code = ErrorCode::Unreachable;
        last_detail = "upstream HTTP " + std::to_string(status);
        transient = true;
      } else {
        malformed("upstream HTTP " + std::to_string(status) + ": " + result->body.substr(0, 200));
      }
    }

    if (transient && attempt < config_.max_attempts) {
      // full jitter: uniform in [0, base * 2^(attempt-1)]
      const auto cap = config_.backoff_base * (1LL << (attempt - 1));
      std::uniform_int_distribution<long long> dist(0, std::max<long long>(0, cap.count()));
      auto sleep_for = std::chrono::milliseconds(dist(rng));
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
      std::this_thread::sleep_for(std::min(sleep_for, std::max(left, std::chrono::milliseconds(0))));
    }
  }
  throw GuardError(last_code, last_detail + " after " + std::to_string(config_.max_attempts) + " attempts");
}

}  // namespace guardgate
