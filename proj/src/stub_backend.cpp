#include "guardgate/backend.hpp"

#include "guardgate/errors.hpp"
#include "guardgate/guard_prompt.hpp"
#include "guardgate/policy.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace guardgate {

nlohmann::json to_json(const BackendResponse &response) {
  return {{"candidate_logprobs", response.candidate_logprobs},
          {"continuation", response.continuation},
          {"model_id", response.model_id},
          {"latency_ms", response.latency_ms}};
}

void check_backend_request(const BackendRequest &request) {
  if (request.guard_prompt.empty()) {
    throw GuardError(ErrorCode::InvalidRequest, "backend request needs a guard prompt");
  }
  if (request.deadline <= std::chrono::nanoseconds::zero()) {
    throw GuardError(ErrorCode::InvalidRequest, "backend request deadline must be positive");
  }
}

Lexicon lexicon_from_json(const nlohmann::json &j) {
  Lexicon lexicon;
  const auto add = [&](const std::string &phrase, const nlohmann::json &entry) {
    LexiconEntry e;
    if (entry.is_number()) {
      e.weight = entry.get<double>();
    } else if (entry.is_object() && entry.contains("weight") && entry["weight"].is_number()) {
      e.weight = entry["weight"].get<double>();
      e.category = entry.value("category", std::string());
    } else {
      throw GuardError(ErrorCode::InvalidConfig, "lexicon entry for '" + phrase + "' needs a numeric weight");
    }
    if (!std::isfinite(e.weight)) {
      throw GuardError(ErrorCode::InvalidConfig, "lexicon weight for '" + phrase + "' is not finite");
    }
    if (phrase.empty()) {
      throw GuardError(ErrorCode::InvalidConfig, "lexicon phrases must be non-empty");
    }
    lexicon[phrase] = e;
  };

  const nlohmann::json &body = j.is_object() && j.contains("phrases") ? j["phrases"] : j;
  if (body.is_array()) {
    for (const auto &item : body) {
      if (!item.is_object() || !item.contains("phrase") || !item["phrase"].is_string()) {
        throw GuardError(ErrorCode::InvalidConfig, "lexicon array entries need a string 'phrase'");
      }
      add(item["phrase"].get<std::string>(), item);
    }
  } else if (body.is_object()) {
    for (const auto &[phrase, entry] : body.items()) {
      add(phrase, entry);
    }
  } else {
    throw GuardError(ErrorCode::InvalidConfig, "lexicon must be an array or object");
  }
  return lexicon;
}

nlohmann::json to_json(const Lexicon &lexicon) {
  nlohmann::json phrases = nlohmann::json::array();
  for (const auto &[phrase, e] : lexicon) {
    nlohmann::json item{{"phrase", phrase}, {"weight", e.weight}};
    if (!e.category.empty()) {
      item["category"] = e.category;
    }
    phrases.push_back(std::move(item));
  }
  return {{"phrases", phrases}};
}

Lexicon load_lexicon_file(const std::filesystem::path &path) { return lexicon_from_json(load_document(path)); }

const Lexicon &default_lexicon() {
  static const Lexicon lexicon = {
      {"build a bomb", {5.0, "weapons"}},
      {"bomb", {4.0, "violent"}},
      {"kill", {3.5, "violent"}},
      {"pipe bomb", {5.0, "weapons"}},
      {"untraceable gun", {4.5, "weapons"}},
      {"nerve agent", {5.0, "weapons"}},
      {"racial slur", {4.0, "hate"}},
      {"explicit sex", {4.0, "sexual"}},
      {"hurt myself", {4.5, "self-harm"}},
      {"end my life", {5.0, "self-harm"}},
      {"launder money", {4.0, "illegal-activity"}},
      {"buy cocaine", {4.5, "illegal-activity"}},
      {"phishing email", {4.0, "fraud"}},
      {"fake invoice", {3.5, "fraud"}},
      {"election conspiracy", {3.0, "political"}},
      {"password dump", {4.0, "privacy-leak"}},
      {"ignore previous instructions", {4.5, "prompt-injection"}},
      {"reveal your system prompt", {4.0, "prompt-injection"}},
      {"do anything now", {4.0, "jailbreak"}},
      {"developer mode", {3.0, "jailbreak"}},
      {"rm -rf /", {4.5, "code-abuse"}},
      {"reverse shell", {4.5, "code-abuse"}},
      {"weather", {-4.0, ""}},
      {"recipe", {-4.0, ""}},
      {"hello", {-3.0, ""}},
  };
  return lexicon;
}

namespace {

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double jitter(std::string_view text, std::uint64_t seed) {
  const std::uint64_t bits = splitmix64(fnv1a(text) ^ splitmix64(seed));
  const double u = static_cast<double>(bits >> 11) * 0x1.0p-53;  // [0, 1)
  return (2.0 * u - 1.0) * kStubJitter;
}

}  // namespace

BackendResponse stub_score(std::string_view guard_prompt, const Lexicon &lexicon, std::uint64_t seed) {
  std::string text;
  std::optional<std::set<std::string>> active;
  if (auto parsed = parse_guard_prompt(guard_prompt)) {
    text = std::move(parsed->text);
    active.emplace(parsed->active_categories.begin(), parsed->active_categories.end());
  } else {
    text = std::string(guard_prompt);
  }
  const std::string haystack = lowercase(text);

  double z_unsafe = 0.0;
  std::map<std::string, double> category_weight;
  for (const auto &[phrase, entry] : lexicon) {
    if (haystack.find(lowercase(phrase)) == std::string::npos) {
      continue;
    }
    if (!entry.category.empty() && active && !active->contains(entry.category)) {
      continue;
    }
    z_unsafe += entry.weight;
    if (!entry.category.empty() && entry.weight > 0) {
      category_weight[entry.category] += entry.weight;
    }
  }
  z_unsafe += jitter(text, seed);

  // log-softmax over (0, z_unsafe)
  const double lse = std::max(0.0, z_unsafe) + std::log1p(std::exp(-std::abs(z_unsafe)));
  BackendResponse response;
  response.candidate_logprobs = {{"safe", -lse}, {"unsafe", z_unsafe - lse}};
  response.model_id = "stub-lexicon-v1";

  std::vector<std::pair<std::string, double>> ranked(category_weight.begin(), category_weight.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto &a, const auto &b) { return a.second > b.second; });
  for (const auto &[id, _] : ranked) {
    response.continuation += "\n" + id;
  }
  return response;
}

StubBackend::StubBackend(Lexicon lexicon, std::uint64_t seed) : lexicon_(std::move(lexicon)), seed_(seed) {
  for (const auto &[phrase, e] : lexicon_) {
    if (!std::isfinite(e.weight)) {
      throw GuardError(ErrorCode::InvalidConfig, "lexicon weight for '" + phrase + "' is not finite");
    }
  }
}

BackendResponse StubBackend::query(const BackendRequest &request) const {
  check_backend_request(request);
  return stub_score(request.guard_prompt, lexicon_, seed_);
}

std::string StubBackend::model_id() const { return "stub-lexicon-v1"; }

}  // namespace guardgate
