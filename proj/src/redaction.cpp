#include "guardgate/redaction.hpp"

#include "guardgate/errors.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>

namespace guardgate {

std::string_view to_string(EntityKind kind) {
  switch (kind) {
    case EntityKind::email: return "email";
    case EntityKind::phone: return "phone";
    case EntityKind::credit_card: return "credit-card";
    case EntityKind::ip_address: return "ip-address";
    case EntityKind::national_id: return "national-id";
    case EntityKind::custom: return "custom";
  }
  return "custom";
}

std::optional<EntityKind> entity_kind_from_string(std::string_view name) {
  for (auto kind : {EntityKind::email, EntityKind::phone, EntityKind::credit_card,
                    EntityKind::ip_address, EntityKind::national_id, EntityKind::custom}) {
    if (to_string(kind) == name) {
      return kind;
    }
  }
  return std::nullopt;
}

std::string_view to_string(MaskStrategy strategy) {
  switch (strategy) {
    case MaskStrategy::placeholder: return "placeholder";
    case MaskStrategy::hash: return "hash";
    case MaskStrategy::reversible_token: return "reversible-token";
  }
  return "placeholder";
}

std::optional<MaskStrategy> mask_strategy_from_string(std::string_view name) {
  for (auto s : {MaskStrategy::placeholder, MaskStrategy::hash, MaskStrategy::reversible_token}) {
    if (to_string(s) == name) {
      return s;
    }
  }
  return std::nullopt;
}

std::vector<std::pair<std::string, std::string>> masking_policy_problems(const MaskingPolicy &policy) {
  std::vector<std::pair<std::string, std::string>> problems;
  if (policy.enabled_kinds.empty() && policy.custom_patterns.empty()) {
    problems.emplace_back("redaction.kinds", "at least one entity kind must be enabled");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < policy.custom_patterns.size(); ++i) {
    const auto &p = policy.custom_patterns[i];
    const std::string field = "redaction.custom_patterns[" + std::to_string(i) + "]";
    if (p.name.empty()) {
      problems.emplace_back(field + ".name", "custom pattern name is empty");
    } else if (!names.insert(p.name).second) {
      problems.emplace_back(field + ".name", "duplicate custom pattern name '" + p.name + "'");
    }
    try {
      std::regex re(p.pattern, std::regex::ECMAScript);
      (void)re;
    } catch (const std::regex_error &e) {
      problems.emplace_back(field + ".pattern", "pattern '" + p.name + "' does not compile: " + e.what());
    }
  }
  return problems;
}

nlohmann::json to_json(const MaskingPolicy &policy) {
  nlohmann::json kinds = nlohmann::json::array();
  for (auto kind : policy.enabled_kinds) {
    if (kind != EntityKind::custom) {
      kinds.push_back(std::string(to_string(kind)));
    }
  }
  nlohmann::json custom = nlohmann::json::array();
  for (const auto &p : policy.custom_patterns) {
    custom.push_back({{"name", p.name}, {"pattern", p.pattern}});
  }
  return {{"strategy", std::string(to_string(policy.strategy))},
          {"kinds", kinds},
          {"custom_patterns", custom}};
}

MaskingPolicy masking_policy_from_json(const nlohmann::json &j) {
  if (!j.is_object()) {
    throw GuardError(ErrorCode::InvalidPolicy, "redaction must be an object");
  }
  MaskingPolicy policy;
  if (auto it = j.find("strategy"); it != j.end()) {
    auto strategy = it->is_string() ? mask_strategy_from_string(it->get<std::string>()) : std::nullopt;
    if (!strategy) {
      throw GuardError(ErrorCode::InvalidPolicy,
                       "redaction.strategy must be one of placeholder, hash, reversible-token");
    }
    policy.strategy = *strategy;
  }
  if (auto it = j.find("kinds"); it != j.end()) {
    if (!it->is_array()) {
      throw GuardError(ErrorCode::InvalidPolicy, "redaction.kinds must be an array");
    }
    policy.enabled_kinds.clear();
    for (const auto &k : *it) {
      auto kind = k.is_string() ? entity_kind_from_string(k.get<std::string>()) : std::nullopt;
      if (!kind || *kind == EntityKind::custom) {
        throw GuardError(ErrorCode::InvalidPolicy, "unknown redaction kind " + k.dump());
      }
      policy.enabled_kinds.insert(*kind);
    }
  }
  if (auto it = j.find("custom_patterns"); it != j.end()) {
    if (!it->is_array()) {
      throw GuardError(ErrorCode::InvalidPolicy, "redaction.custom_patterns must be an array");
    }
    for (const auto &p : *it) {
      if (!p.is_object() || !p.contains("name") || !p.contains("pattern") ||
          !p["name"].is_string() || !p["pattern"].is_string()) {
        throw GuardError(ErrorCode::InvalidPolicy,
                         "custom pattern entries need string 'name' and 'pattern'");
      }
      policy.custom_patterns.push_back({p["name"].get<std::string>(), p["pattern"].get<std::string>()});
    }
  }
  return policy;
}

namespace {

const std::regex &builtin_regex(EntityKind kind) {
  static const std::regex email(R"([A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,})");
  static const std::regex phone(
      R"((?:\+\d{1,3}[ .-]?)?(?:\(\d{3}\)[ .-]?|\d{3}[ .-])\d{3}[ .-]\d{4}|\+\d{8,15})");
  static const std::regex card(R"(\d(?:[ -]?\d){7,18})");
  static const std::regex ip(R"((?:\d{1,3}\.){3}\d{1,3})");
  static const std::regex national_id(R"(\d{3}-\d{2}-\d{4})");
  switch (kind) {
    case EntityKind::email: return email;
    case EntityKind::phone: return phone;
    case EntityKind::credit_card: return card;
    case EntityKind::ip_address: return ip;
    case EntityKind::national_id: return national_id;
    case EntityKind::custom: break;
  }
  throw std::logic_error("no builtin regex for custom kind");
}

// Tokens produced by mask(); detection never reports anything inside them.
const std::regex &placeholder_regex() {
  static const std::regex re(R"(\[[A-Z][A-Z0-9_]*(?:[:#][A-Za-z0-9-]+)?\])");
  return re;
}

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

bool clean_boundaries(std::string_view text, std::size_t start, std::size_t end) {
  if (start > 0 && is_alnum(text[start - 1])) {
    return false;
  }
  if (end < text.size() && is_alnum(text[end])) {
    return false;
  }
  return true;
}

bool accept_candidate(EntityKind kind, std::string_view text, std::size_t start, std::size_t end) {
  const std::string_view match = text.substr(start, end - start);
  switch (kind) {
    case EntityKind::email:
    case EntityKind::custom:
      return true;
    case EntityKind::phone:
    case EntityKind::national_id:
      return clean_boundaries(text, start, end);
    case EntityKind::ip_address: {
      if (!clean_boundaries(text, start, end)) {
        return false;
      }
      std::size_t pos = 0;
      while (pos <= match.size()) {
        const auto dot = std::min(match.find('.', pos), match.size());
        if (std::stoi(std::string(match.substr(pos, dot - pos))) > 255) {
          return false;
        }
        pos = dot + 1;
      }
      return true;
    }
    case EntityKind::credit_card: {
      if (!clean_boundaries(text, start, end)) {
        return false;
      }
      std::string digits;
      for (char c : match) {
        if (c >= '0' && c <= '9') {
          digits.push_back(c);
        }
      }
      return digits.size() >= 8 && digits.size() <= 19 && luhn_check(digits);
    }
  }
  return false;
}

// Card candidates follow real PAN layouts: 8-19 contiguous digits, 4-4-4-x
// (x = 1-4), 4-4-4-4-3, 4-6-4 or 4-6-5, with one separator kind. Windows
// are aligned to digit groups and never split a token joined by a different
// separator, so a neighbouring number cannot swallow or truncate a card.
std::vector<std::pair<std::size_t, std::size_t>> card_windows(std::string_view text) {
  const auto digit = [&](std::size_t i) { return i < text.size() && text[i] >= '0' && text[i] <= '9'; };
  const auto dotted = [&](std::size_t start, std::size_t end) {
    return (start >= 2 && text[start - 1] == '.' && digit(start - 2)) ||
           (end + 1 < text.size() && text[end] == '.' && digit(end + 1));
  };
  const auto layout_ok = [](const std::vector<std::size_t> &sizes, std::size_t total) {
    if (sizes.size() == 1) return total >= 8 && total <= 19;
    if (sizes.size() == 3 && sizes[0] == 4 && sizes[1] == 6) return sizes[2] == 4 || sizes[2] == 5;
    if (sizes.size() == 4) return sizes[0] == 4 && sizes[1] == 4 && sizes[2] == 4 && sizes[3] <= 4;
    if (sizes.size() == 5) return sizes[0] == 4 && sizes[1] == 4 && sizes[2] == 4 && sizes[3] == 4 && sizes[4] == 3;
    return false;
  };
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!digit(i)) {
      ++i;
      continue;
    }
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    std::vector<char> seps;  // seps[k] joins groups k and k+1
    while (true) {
      const std::size_t start = i;
      while (digit(i)) ++i;
      groups.emplace_back(start, i);
      if (i + 1 < text.size() && (text[i] == ' ' || text[i] == '-') && digit(i + 1)) {
        seps.push_back(text[i]);
        ++i;
      } else {
        break;
      }
    }
    for (std::size_t a = 0; a < groups.size(); ++a) {
      const char sep = a < seps.size() ? seps[a] : '\0';
      if (a > 0 && seps[a - 1] != sep && seps[a - 1] != ' ') continue;
      std::vector<std::size_t> sizes;
      std::size_t total = 0;
      for (std::size_t b = a; b < groups.size(); ++b) {
        if (b > a && seps[b - 1] != sep) break;
        if (dotted(groups[b].first, groups[b].second)) break;
        sizes.push_back(groups[b].second - groups[b].first);
        total += sizes.back();
        if (total > 19) break;
        const bool splits_next = b < seps.size() && seps[b] != ' ' && seps[b] != sep;
        if (!splits_next && layout_ok(sizes, total)) out.emplace_back(groups[a].first, groups[b].second);
      }
    }
  }
  return out;
}

struct Candidate {
  std::size_t start;
  std::size_t end;
  std::size_t order;
  EntityKind kind;
  const std::string *name;
};

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr);
  std::string hex;
  hex.reserve(len * 2);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

void check_spans(std::string_view text, const std::vector<EntitySpan> &spans) {
  std::size_t previous_end = 0;
  for (const auto &span : spans) {
    if (span.start >= span.end || span.end > text.size()) {
      throw GuardError(ErrorCode::SpanOutOfBounds,
                       "span [" + std::to_string(span.start) + ", " + std::to_string(span.end) +
                           ") is outside text of length " + std::to_string(text.size()));
    }
    if (span.start < previous_end) {
      throw GuardError(ErrorCode::OverlappingSpans,
                       "span starting at " + std::to_string(span.start) +
                           " overlaps or precedes the previous span");
    }
    previous_end = span.end;
  }
}

}  // namespace

EntityDetector::EntityDetector(const MaskingPolicy &policy) {
  std::size_t order = 0;
  for (auto kind : {EntityKind::email, EntityKind::phone, EntityKind::credit_card,
                    EntityKind::ip_address, EntityKind::national_id}) {
    if (policy.enabled_kinds.contains(kind)) {
      compiled_.push_back({kind, {}, &builtin_regex(kind), order});
    }
    ++order;
  }
  custom_regexes_.reserve(policy.custom_patterns.size());
  for (const auto &p : policy.custom_patterns) {
    try {
      custom_regexes_.emplace_back(p.pattern, std::regex::ECMAScript);
    } catch (const std::regex_error &e) {
      throw GuardError(ErrorCode::InvalidCustomPattern,
                       "custom pattern '" + p.name + "' does not compile: " + e.what());
    }
  }
  for (std::size_t i = 0; i < policy.custom_patterns.size(); ++i) {
    compiled_.push_back({EntityKind::custom, policy.custom_patterns[i].name, &custom_regexes_[i], order++});
  }
}

std::vector<EntitySpan> EntityDetector::detect(std::string_view text) const {
  if (text.empty() || compiled_.empty()) {
    return {};
  }
  using Iter = std::regex_iterator<std::string_view::const_iterator>;

  std::vector<std::pair<std::size_t, std::size_t>> reserved;
  for (Iter it(text.begin(), text.end(), placeholder_regex()), last; it != last; ++it) {
    const auto start = static_cast<std::size_t>(it->position());
    reserved.emplace_back(start, start + static_cast<std::size_t>(it->length()));
  }
  const auto in_reserved = [&](std::size_t start, std::size_t end) {
    return std::any_of(reserved.begin(), reserved.end(),
                       [&](const auto &r) { return start < r.second && r.first < end; });
  };

  std::vector<Candidate> candidates;
  for (const auto &c : compiled_) {
    if (c.kind == EntityKind::credit_card) {
      for (const auto &[start, end] : card_windows(text)) {
        if (!in_reserved(start, end) && accept_candidate(c.kind, text, start, end)) {
          candidates.push_back({start, end, c.order, c.kind, &c.name});
        }
      }
      continue;
    }
    for (Iter it(text.begin(), text.end(), *c.re), last; it != last; ++it) {
      if (it->length() == 0) {
        continue;
      }
      const auto start = static_cast<std::size_t>(it->position());
      const auto end = start + static_cast<std::size_t>(it->length());
      if (!in_reserved(start, end) && accept_candidate(c.kind, text, start, end)) {
        candidates.push_back({start, end, c.order, c.kind, &c.name});
      }
    }
  }

  // Longer span wins, then earlier start, then kind order.
  std::sort(candidates.begin(), candidates.end(), [](const Candidate &a, const Candidate &b) {
    const auto la = a.end - a.start;
    const auto lb = b.end - b.start;
    if (la != lb) return la > lb;
    if (a.start != b.start) return a.start < b.start;
    return a.order < b.order;
  });

  std::vector<EntitySpan> accepted;
  for (const auto &c : candidates) {
    const bool overlaps = std::any_of(accepted.begin(), accepted.end(), [&](const EntitySpan &s) {
      return c.start < s.end && s.start < c.end;
    });
    if (!overlaps) {
      accepted.push_back({c.start, c.end, c.kind, *c.name, std::string(text.substr(c.start, c.end - c.start))});
    }
  }
  std::sort(accepted.begin(), accepted.end(),
            [](const EntitySpan &a, const EntitySpan &b) { return a.start < b.start; });
  return accepted;
}

std::vector<EntitySpan> detect_entities(std::string_view text, const MaskingPolicy &policy) {
  return EntityDetector(policy).detect(text);
}

bool luhn_check(std::string_view digits) {
  if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw GuardError(ErrorCode::NotDigits, "Luhn input must contain only decimal digits");
  }
  if (digits.size() < 8 || digits.size() > 19) {
    throw GuardError(ErrorCode::BadLength,
                     "Luhn input must have 8-19 digits, got " + std::to_string(digits.size()));
  }
  int sum = 0;
  bool double_it = false;
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
    int d = *it - '0';
    if (double_it) {
      d *= 2;
      if (d > 9) d -= 9;
    }
    sum += d;
    double_it = !double_it;
  }
  return sum % 10 == 0;
}

std::string placeholder_label(const EntitySpan &span) {
  std::string label(span.kind == EntityKind::custom ? std::string_view(span.custom_name) : to_string(span.kind));
  for (auto &c : label) {
    c = (c == '-' || !is_alnum(c)) ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  if (label.empty() || !std::isalpha(static_cast<unsigned char>(label.front()))) {
    label.insert(0, "X");
  }
  return label;
}

RedactionResult mask(std::string_view text, const std::vector<EntitySpan> &spans,
                     const MaskingPolicy &policy) {
  check_spans(text, spans);

  RedactionResult result;
  result.strategy = policy.strategy;
  result.spans = spans;
  if (policy.strategy == MaskStrategy::reversible_token) {
    for (int salt = 0;; ++salt) {
      result.nonce = sha256_hex(std::string(text) + '\0' + std::to_string(salt)).substr(0, 8);
      if (text.find("#" + result.nonce) == std::string_view::npos) {
        break;
      }
    }
  }

  std::size_t cursor = 0;
  std::size_t index = 0;
  for (const auto &span : spans) {
    result.masked_text.append(text.substr(cursor, span.start - cursor));
    const std::string_view original = text.substr(span.start, span.end - span.start);
    const std::string label = placeholder_label(span);
    switch (policy.strategy) {
      case MaskStrategy::placeholder:
        result.masked_text += "[" + label + "]";
        break;
      case MaskStrategy::hash:
        result.masked_text += "[" + label + ":" + sha256_hex(original).substr(0, 8) + "]";
        break;
      case MaskStrategy::reversible_token: {
        std::string token = "[" + label + "#" + result.nonce + "-" + std::to_string(++index) + "]";
        result.masked_text += token;
        result.mapping.emplace(std::move(token), std::string(original));
        break;
      }
    }
    cursor = span.end;
  }
  result.masked_text.append(text.substr(cursor));
  return result;
}

std::string restore(const RedactionResult &result) {
  if (result.strategy != MaskStrategy::reversible_token) {
    throw GuardError(ErrorCode::NotReversible,
                     "only reversible-token redactions can be restored, got " +
                         std::string(to_string(result.strategy)));
  }
  if (result.nonce.empty() && !result.mapping.empty()) {
    throw GuardError(ErrorCode::CorruptMapping, "reversible redaction is missing its nonce");
  }

  const std::string_view masked = result.masked_text;
  const std::string marker = "#" + result.nonce + "-";
  std::string out;
  std::size_t cursor = 0;
  std::size_t used = 0;
  while (!result.nonce.empty()) {
    const auto hit = masked.find(marker, cursor);
    if (hit == std::string_view::npos) {
      break;
    }
    const auto open = masked.rfind('[', hit);
    const auto close = masked.find(']', hit);
    if (open == std::string_view::npos || open < cursor || close == std::string_view::npos) {
      throw GuardError(ErrorCode::CorruptMapping, "malformed token near offset " + std::to_string(hit));
    }
    const std::string token(masked.substr(open, close + 1 - open));
    const auto it = result.mapping.find(token);
    if (it == result.mapping.end()) {
      throw GuardError(ErrorCode::CorruptMapping, "no mapping entry for token " + token);
    }
    out.append(masked.substr(cursor, open - cursor));
    out += it->second;
    cursor = close + 1;
    ++used;
  }
  if (used != result.mapping.size()) {
    throw GuardError(ErrorCode::CorruptMapping,
                     "mapping has " + std::to_string(result.mapping.size()) + " entries but " +
                         std::to_string(used) + " tokens were found");
  }
  out.append(masked.substr(cursor));
  return out;
}

}  // namespace guardgate
