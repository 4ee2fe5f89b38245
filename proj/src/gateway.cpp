#include "guardgate/gateway.hpp"

#include "guardgate/errors.hpp"
#include "guardgate/guard_prompt.hpp"

#include <chrono>
#include <cstdio>
#include <random>

namespace guardgate {

namespace {

using json = nlohmann::json;

HttpReply json_reply(int status, const json &body) {
  return {status, body.dump(-1, ' ', false, json::error_handler_t::replace), "application/json", {}};
}

json violations_json(const std::vector<Violation> &violations) {
  json arr = json::array();
  for (const auto &v : violations) {
    arr.push_back({{"code", std::string(to_string(v.code))}, {"field", v.field}, {"detail", v.detail}});
  }
  return arr;
}

json parse_body(const std::string &body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error &e) {
    throw ValidationError({{ErrorCode::InvalidRequest, "", std::string("body is not valid JSON: ") + e.what()}});
  }
}

void require_utf8(const GuardInput &input) {
  if (!is_valid_utf8(input.text)) {
    throw ValidationError({{ErrorCode::InvalidRequest, "input.text", "text is not well-formed UTF-8"}});
  }
  for (const auto &turn : input.context) {
    if (!is_valid_utf8(turn.text)) {
      throw ValidationError({{ErrorCode::InvalidRequest, "input.context", "text is not well-formed UTF-8"}});
    }
  }
}

std::string join(const std::vector<std::string> &items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

// Text of a chat message: a string, or the concatenated text parts.
std::optional<std::string> message_text(const json &message) {
  const auto it = message.find("content");
  if (it == message.end()) {
    return std::nullopt;
  }
  if (it->is_string()) {
    return it->get<std::string>();
  }
  if (it->is_array()) {
    std::vector<std::string> parts;
    for (const auto &part : *it) {
      if (part.is_object() && part.value("type", "") == "text" && part.contains("text") && part["text"].is_string()) {
        parts.push_back(part["text"].get<std::string>());
      }
    }
    if (!parts.empty()) {
      return join(parts, "\n");
    }
  }
  return std::nullopt;
}

GuardRole chat_role(const json &message) {
  return message.value("role", "") == "assistant" ? GuardRole::response : GuardRole::prompt;
}

}  // namespace

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownCategory:
    case ErrorCode::ThresholdOutOfRange:
    case ErrorCode::InvalidPolicy:
    case ErrorCode::InvalidTaxonomy:
    case ErrorCode::EmptyInput:
    case ErrorCode::InvalidRequest:
    case ErrorCode::UnknownPolicy:
    case ErrorCode::InvalidCustomPattern:
      return 400;
    case ErrorCode::PolicyExists:
      return 409;
    case ErrorCode::Timeout:
      return 504;
    case ErrorCode::Unreachable:
    case ErrorCode::MalformedUpstream:
    case ErrorCode::MissingLogprobs:
    case ErrorCode::AuthRejected:
    case ErrorCode::MissingCandidateToken:
    case ErrorCode::NonFiniteLogit:
      return 502;
    default:
      return 500;
  }
}

CheckRequest check_request_from_json(const json &j) {
  if (!j.is_object()) {
    throw ValidationError({{ErrorCode::InvalidRequest, "", "request body must be a JSON object"}});
  }
  std::vector<Violation> violations;
  CheckRequest request;
  if (!j.contains("input")) {
    violations.push_back({ErrorCode::InvalidRequest, "input", "required"});
  } else {
    try {
      request.input = guard_input_from_json(j["input"]);
    } catch (const ValidationError &e) {
      violations.insert(violations.end(), e.violations().begin(), e.violations().end());
    }
  }
  const bool has_inline = j.contains("policy") && !j["policy"].is_null();
  const bool has_id = j.contains("policy_id") && !j["policy_id"].is_null();
  if (has_inline == has_id) {
    violations.push_back({ErrorCode::InvalidRequest, "policy", "exactly one of 'policy' and 'policy_id' is required"});
  } else if (has_inline) {
    try {
      request.policy = policy_from_json(j["policy"]);
    } catch (const ValidationError &e) {
      for (auto v : e.violations()) {
        v.field = "policy." + v.field;
        violations.push_back(std::move(v));
      }
    }
  } else if (j["policy_id"].is_string()) {
    request.policy = j["policy_id"].get<std::string>();
  } else {
    violations.push_back({ErrorCode::InvalidRequest, "policy_id", "must be a string"});
  }
  if (const auto it = j.find("redact"); it != j.end() && !it->is_null()) {
    if (it->is_boolean()) {
      request.redact = it->get<bool>();
    } else {
      violations.push_back({ErrorCode::InvalidRequest, "redact", "must be a boolean"});
    }
  }
  if (!violations.empty()) {
    throw ValidationError(std::move(violations));
  }
  return request;
}

json to_json(const CheckResponse &response) {
  json j{{"request_id", response.request_id},
         {"verdict", to_json(response.verdict)},
         {"timings", to_json(response.timings)}};
  if (response.redaction) {
    json spans = json::array();
    for (const auto &s : response.redaction->spans) {
      json span{{"start", s.start}, {"end", s.end}, {"kind", std::string(to_string(s.kind))}};
      if (s.kind == EntityKind::custom) {
        span["name"] = s.custom_name;
      }
      spans.push_back(std::move(span));
    }
    j["redaction"] = {{"masked_text", response.redaction->masked_text},
                      {"strategy", std::string(to_string(response.redaction->strategy))},
                      {"spans", spans}};
  }
  return j;
}

GatewayService::GatewayService(GatewayConfig config, CategoryTaxonomy taxonomy,
                               std::shared_ptr<const DetectorBackend> backend, std::shared_ptr<PolicyStore> store,
                               std::shared_ptr<const UpstreamClient> upstream, std::shared_ptr<EventLog> log)
    : config_(std::move(config)),
      pipeline_(std::move(taxonomy), std::move(backend),
                PipelineOptions{std::chrono::milliseconds(config_.backend_deadline_ms), 16}),
      store_(std::move(store)),
      upstream_(std::move(upstream)),
      log_(log ? std::move(log) : EventLog::open("none", LogLevel::info)) {
  if (!store_) {
    store_ = std::make_shared<PolicyStore>(std::filesystem::path(), pipeline_.taxonomy());
  }
  std::random_device rd;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x", rd());
  id_prefix_ = std::string("gg-") + buf + "-";
  for (const auto &w : store_->load_warnings()) {
    log_->emit(LogLevel::warn, {{"event", "policy_skipped"}, {"detail", w}});
  }
}

std::unique_ptr<GatewayService> GatewayService::from_config(const GatewayConfig &config) {
  validate_config(config);
  auto log = EventLog::open(config.log_sink, log_level_from_string(config.log_level));
  CategoryTaxonomy taxonomy = config.taxonomy_path.empty() ? CategoryTaxonomy::default_taxonomy()
                                                           : load_taxonomy_file(config.taxonomy_path);
  std::shared_ptr<const DetectorBackend> backend;
  if (config.backend == "remote") {
    backend = std::make_shared<RemoteBackend>(*config.remote);
  } else {
    Lexicon lexicon = config.stub_lexicon_path.empty() ? default_lexicon() : load_lexicon_file(config.stub_lexicon_path);
    backend = std::make_shared<StubBackend>(std::move(lexicon), config.stub_seed);
  }
  auto store = std::make_shared<PolicyStore>(config.policy_dir, taxonomy);
  std::shared_ptr<const UpstreamClient> upstream;
  if (!config.upstream_url.empty()) {
    upstream = std::make_shared<HttpUpstreamClient>(config.upstream_url, config.upstream_api_key,
                                                    std::chrono::milliseconds(config.upstream_timeout_ms));
  }
  return std::make_unique<GatewayService>(config, std::move(taxonomy), std::move(backend), std::move(store),
                                          std::move(upstream), std::move(log));
}

std::string GatewayService::next_request_id() {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%010llu",
                static_cast<unsigned long long>(id_counter_.fetch_add(1, std::memory_order_relaxed) + 1));
  return id_prefix_ + buf;
}

PolicyConfig GatewayService::resolve_policy(const std::variant<PolicyConfig, std::string> &selector) const {
  if (const auto *inline_policy = std::get_if<PolicyConfig>(&selector)) {
    return validate_policy(*inline_policy, pipeline_.taxonomy());
  }
  const auto &id = std::get<std::string>(selector);
  if (auto stored = store_->get(id)) {
    return *stored;
  }
  throw ValidationError({{ErrorCode::UnknownPolicy, "policy_id", id}});
}

CheckResponse GatewayService::run_check(const std::string &request_id, const GuardInput &input,
                                        const PolicyConfig &policy, bool redact, std::string_view stage) {
  require_utf8(input);
  CheckOutcome outcome;
  try {
    outcome = pipeline_.run(input, policy, redact);
  } catch (const GuardError &e) {
    if (http_status_for(e.code()) >= 500) {
      metrics_.record_backend_error();
    }
    throw;
  }
  if (!outcome.dropped_categories.empty()) {
    log_->emit(LogLevel::warn, {{"event", "unknown_categories_dropped"},
                                {"request_id", request_id},
                                {"categories", outcome.dropped_categories}});
  }
  const auto &v = outcome.verdict;
  metrics_.record_check(std::string(to_string(v.label)), v.triggered_categories, outcome.timings.total_ms,
                        outcome.timings.backend_ms);
  log_->emit(LogLevel::info, {{"event", "verdict"},
                              {"stage", stage},
                              {"request_id", request_id},
                              {"policy_id", policy.policy_id},
                              {"label", std::string(to_string(v.label))},
                              {"p_unsafe", v.score ? json(v.score->value()) : json(nullptr)},
                              {"tau", v.applied_threshold},
                              {"categories", v.triggered_categories},
                              {"timings", to_json(outcome.timings)}});
  return {outcome.verdict, std::move(outcome.redaction), request_id, outcome.timings};
}

CheckResponse GatewayService::check(const CheckRequest &request) {
  const std::string request_id = next_request_id();
  return run_check(request_id, request.input, resolve_policy(request.policy), request.redact, "check");
}

HttpReply GatewayService::error_reply(const std::string &request_id, const GuardError &error) const {
  json err{{"code", std::string(to_string(error.code()))}, {"message", error.what()}};
  if (const auto *ve = dynamic_cast<const ValidationError *>(&error)) {
    err["violations"] = violations_json(ve->violations());
  }
  log_->emit(http_status_for(error.code()) >= 500 ? LogLevel::error : LogLevel::info,
             {{"event", "request_failed"}, {"request_id", request_id}, {"error", err}});
  HttpReply reply = json_reply(http_status_for(error.code()), {{"request_id", request_id}, {"error", err}});
  reply.headers.emplace_back("X-Guard-Request-Id", request_id);
  return reply;
}

HttpReply GatewayService::handle_check(const std::string &body) {
  const std::string request_id = next_request_id();
  try {
    const CheckRequest request = check_request_from_json(parse_body(body));
    const PolicyConfig policy = resolve_policy(request.policy);
    const CheckResponse response = run_check(request_id, request.input, policy, request.redact, "check");
    HttpReply reply = json_reply(200, to_json(response));
    reply.headers.emplace_back("X-Guard-Request-Id", request_id);
    return reply;
  } catch (const GuardError &e) {
    return error_reply(request_id, e);
  }
}

std::string GatewayService::block_text(const std::string &request_id, const SafetyVerdict &verdict) const {
  std::string text = config_.block_message;
  const auto substitute = [&](const std::string &key, const std::string &value) {
    for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
      text.replace(pos, key.size(), value);
    }
  };
  substitute("{request_id}", request_id);
  substitute("{categories}", verdict.triggered_categories.empty() ? "unspecified"
                                                                  : join(verdict.triggered_categories, ", "));
  return text;
}

HttpReply GatewayService::handle_proxy_chat(const std::string &body, const HeaderLookup &headers) {
  const std::string request_id = next_request_id();
  try {
    if (!upstream_) {
      throw GuardError(ErrorCode::InvalidRequest, "proxy mode is disabled: no upstream configured");
    }
    json request = parse_body(body);
    if (!request.is_object() || !request.contains("messages") || !request["messages"].is_array()) {
      throw ValidationError({{ErrorCode::InvalidRequest, "messages", "chat request needs a messages array"}});
    }

    // Policy selector: body "guard_policy" (id or inline object), then the
    // X-Guard-Policy header, then the configured default.
    std::variant<PolicyConfig, std::string> selector = config_.default_policy_id;
    bool explicit_selector = false;
    if (const auto it = request.find("guard_policy"); it != request.end()) {
      if (it->is_string()) {
        selector = it->get<std::string>();
      } else {
        selector = policy_from_json(*it);
      }
      explicit_selector = true;
      request.erase("guard_policy");
    } else if (auto header = headers("X-Guard-Policy")) {
      selector = *header;
      explicit_selector = true;
    }
    PolicyConfig policy;
    if (!explicit_selector && !store_->get(config_.default_policy_id)) {
      policy = default_policy(pipeline_.taxonomy(), config_.default_policy_id);
    } else {
      policy = resolve_policy(selector);
    }

    auto &messages = request["messages"];
    std::optional<std::size_t> last_user;
    for (std::size_t i = 0; i < messages.size(); ++i) {
      if (messages[i].is_object() && messages[i].value("role", "") == "user") {
        last_user = i;
      }
    }
    if (!last_user) {
      throw ValidationError({{ErrorCode::InvalidRequest, "messages", "no user message to guard"}});
    }
    const auto user_text = message_text(messages[*last_user]);
    if (!user_text) {
      throw ValidationError({{ErrorCode::InvalidRequest, "messages", "final user message has no text content"}});
    }

    GuardInput prompt_input;
    prompt_input.role = GuardRole::prompt;
    prompt_input.text = *user_text;
    for (std::size_t i = 0; i < *last_user; ++i) {
      if (auto text = messages[i].is_object() ? message_text(messages[i]) : std::nullopt; text && !is_blank(*text)) {
        prompt_input.context.push_back({chat_role(messages[i]), *text});
      }
    }

    const bool redact = policy.redaction.has_value();
    const CheckResponse prompt_check = run_check(request_id, prompt_input, policy, redact, "prompt");

    const auto block = [&](const CheckResponse &check, std::string_view stage) {
      metrics_.record_proxy_block();
      json reply{{"id", "guardblock-" + request_id},
                 {"object", "chat.completion"},
                 {"created", std::chrono::duration_cast<std::chrono::seconds>(
                                 std::chrono::system_clock::now().time_since_epoch())
                                 .count()},
                 {"model", request.value("model", "")},
                 {"choices", json::array({{{"index", 0},
                                           {"message", {{"role", "assistant"}, {"content", block_text(request_id, check.verdict)}}},
                                           {"finish_reason", "content_filter"}}})},
                 {"usage", {{"prompt_tokens", 0}, {"completion_tokens", 0}, {"total_tokens", 0}}},
                 {"guard", {{"request_id", request_id}, {"stage", stage}, {"verdict", to_json(check.verdict)}}}};
      HttpReply http = json_reply(200, reply);
      http.headers = {{"X-Guard-Request-Id", request_id},
                      {"X-Guard-Verdict", "unsafe"},
                      {"X-Guard-Stage", std::string(stage)}};
      return http;
    };

    if (prompt_check.verdict.label == Label::unsafe) {
      return block(prompt_check, "prompt");
    }

    // Outbound redaction replaces the guarded user message text.
    if (prompt_check.redaction && !prompt_check.redaction->spans.empty()) {
      auto &content = messages[*last_user]["content"];
      if (content.is_string()) {
        content = prompt_check.redaction->masked_text;
      } else if (content.is_array()) {
        const MaskingPolicy masking = policy.redaction.value_or(MaskingPolicy{});
        for (auto &part : content) {
          if (part.is_object() && part.value("type", "") == "text" && part.contains("text") &&
              part["text"].is_string()) {
            const std::string text = part["text"].get<std::string>();
            part["text"] = mask(text, detect_entities(text, masking), masking).masked_text;
          }
        }
      }
    }
    request["stream"] = false;

    std::string authorization;
    if (auto auth = headers("Authorization"); auth && config_.api_key.empty()) {
      authorization = *auth;
    }
    metrics_.record_upstream_request();
    UpstreamReply upstream_reply;
    try {
      upstream_reply = upstream_->send_chat(request.dump(), authorization);
    } catch (const GuardError &e) {
      throw GuardError(ErrorCode::Unreachable, std::string("upstream LLM unavailable: ") + e.what());
    }
    if (upstream_reply.status < 200 || upstream_reply.status >= 300) {
      HttpReply passthrough{upstream_reply.status, upstream_reply.body, upstream_reply.content_type, {}};
      passthrough.headers.emplace_back("X-Guard-Request-Id", request_id);
      return passthrough;
    }

    json reply;
    try {
      reply = json::parse(upstream_reply.body);
    } catch (const json::parse_error &) {
      throw GuardError(ErrorCode::MalformedUpstream, "upstream reply is not JSON; cannot guard it");
    }
    bool replaced = false;
    json guard_meta = json::array();
    if (reply.is_object() && reply.contains("choices") && reply["choices"].is_array()) {
      for (auto &choice : reply["choices"]) {
        if (!choice.is_object() || !choice.contains("message") || !choice["message"].is_object()) {
          continue;
        }
        auto text = message_text(choice["message"]);
        if (!text || is_blank(*text)) {
          continue;
        }
        GuardInput response_input;
        response_input.role = GuardRole::response;
        response_input.text = *text;
        response_input.context = prompt_input.context;
        response_input.context.push_back(
            {GuardRole::prompt, prompt_check.redaction ? prompt_check.redaction->masked_text : *user_text});
        const CheckResponse response_check = run_check(request_id, response_input, policy, false, "response");
        if (response_check.verdict.label == Label::unsafe) {
          metrics_.record_proxy_block();
          choice["message"]["content"] = block_text(request_id, response_check.verdict);
          choice["finish_reason"] = "content_filter";
          guard_meta.push_back({{"index", choice.value("index", 0)}, {"verdict", to_json(response_check.verdict)}});
          replaced = true;
        }
      }
    }

    HttpReply http;
    http.status = upstream_reply.status;
    http.content_type = upstream_reply.content_type;
    http.headers = {{"X-Guard-Request-Id", request_id}};
    if (replaced) {
      reply["guard"] = {{"request_id", request_id}, {"stage", "response"}, {"replaced", guard_meta}};
      http.body = reply.dump(-1, ' ', false, json::error_handler_t::replace);
      http.content_type = "application/json";
      http.headers.emplace_back("X-Guard-Verdict", "unsafe");
      http.headers.emplace_back("X-Guard-Stage", "response");
    } else {
      http.body = std::move(upstream_reply.body);
      http.headers.emplace_back("X-Guard-Verdict", "safe");
    }
    return http;
  } catch (const GuardError &e) {
    return error_reply(request_id, e);
  }
}

HttpReply GatewayService::handle_list_policies() const {
  return json_reply(200, {{"policies", store_->list()}});
}

HttpReply GatewayService::handle_get_policy(const std::string &id) const {
  if (auto policy = store_->get(id)) {
    return json_reply(200, to_json(*policy));
  }
  return json_reply(404, {{"error", {{"code", "UnknownPolicy"}, {"message", "no policy '" + id + "'"}}}});
}

HttpReply GatewayService::handle_create_policy(const std::string &body) {
  const std::string request_id = next_request_id();
  try {
    const auto created = store_->create(policy_from_json(parse_body(body)));
    log_->emit(LogLevel::info, {{"event", "policy_created"}, {"policy_id", created.policy_id}});
    return json_reply(201, to_json(created));
  } catch (const GuardError &e) {
    return error_reply(request_id, e);
  }
}

HttpReply GatewayService::handle_put_policy(const std::string &id, const std::string &body) {
  const std::string request_id = next_request_id();
  try {
    json j = parse_body(body);
    if (j.is_object()) {
      if (j.contains("policy_id") && j["policy_id"] != id) {
        throw ValidationError({{ErrorCode::InvalidPolicy, "policy_id", "body policy_id does not match the URL"}});
      }
      j["policy_id"] = id;
    }
    PolicyConfig policy = policy_from_json(j);
    const bool created = store_->put(policy);
    log_->emit(LogLevel::info, {{"event", created ? "policy_created" : "policy_updated"}, {"policy_id", id}});
    return json_reply(created ? 201 : 200, to_json(*store_->get(id)));
  } catch (const GuardError &e) {
    return error_reply(request_id, e);
  }
}

HttpReply GatewayService::handle_delete_policy(const std::string &id) {
  if (!store_->remove(id)) {
    return json_reply(404, {{"error", {{"code", "UnknownPolicy"}, {"message", "no policy '" + id + "'"}}}});
  }
  log_->emit(LogLevel::info, {{"event", "policy_deleted"}, {"policy_id", id}});
  return {204, "", "application/json", {}};
}

HttpReply GatewayService::handle_health() const {
  return json_reply(200, {{"status", "ok"},
                          {"backend", pipeline_.backend().model_id()},
                          {"template_version", kGuardTemplateVersion},
                          {"policies", store_->list().size()}});
}

HttpReply GatewayService::handle_metrics() const {
  return {200, metrics_.render(), "text/plain; version=0.0.4", {}};
}

HttpReply GatewayService::handle_recent_logs(std::size_t limit) const {
  return json_reply(200, {{"events", log_->recent(std::min<std::size_t>(limit, 256))}});
}

bool GatewayService::authorized(const HeaderLookup &headers) const {
  if (config_.api_key.empty()) {
    return true;
  }
  if (auto key = headers("X-API-Key"); key && *key == config_.api_key) {
    return true;
  }
  if (auto auth = headers("Authorization"); auth && *auth == "Bearer " + config_.api_key) {
    return true;
  }
  return false;
}

}  // namespace guardgate
