#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace guardgate {

// Order matters: it is the final tie-break when overlapping matches have
// equal length and start.
enum class EntityKind { email, phone, credit_card, ip_address, national_id, custom };

std::string_view to_string(EntityKind kind);
std::optional<EntityKind> entity_kind_from_string(std::string_view name);

struct EntitySpan {
  std::size_t start = 0;  // byte offset
  std::size_t end = 0;    // byte offset, exclusive
  EntityKind kind = EntityKind::email;
  std::string custom_name;  // set only for EntityKind::custom
  std::string matched_text;

  std::size_t length() const { return end - start; }
  bool operator==(const EntitySpan &) const = default;
};

enum class MaskStrategy { placeholder, hash, reversible_token };

std::string_view to_string(MaskStrategy strategy);
std::optional<MaskStrategy> mask_strategy_from_string(std::string_view name);

struct CustomPattern {
  std::string name;
  std::string pattern;  // ECMAScript regular expression

  bool operator==(const CustomPattern &) const = default;
};

struct MaskingPolicy {
  MaskStrategy strategy = MaskStrategy::placeholder;
  std::set<EntityKind> enabled_kinds = {EntityKind::email, EntityKind::phone,
                                        EntityKind::credit_card, EntityKind::ip_address,
                                        EntityKind::national_id};
  std::vector<CustomPattern> custom_patterns;

  bool operator==(const MaskingPolicy &) const = default;
};

/// Problems with a masking policy, as (field, detail) pairs. Empty when valid.
std::vector<std::pair<std::string, std::string>> masking_policy_problems(const MaskingPolicy &policy);

nlohmann::json to_json(const MaskingPolicy &policy);
MaskingPolicy masking_policy_from_json(const nlohmann::json &j);

struct RedactionResult {
  std::string masked_text;
  std::vector<EntitySpan> spans;
  MaskStrategy strategy = MaskStrategy::placeholder;
  // Populated only by the reversible-token strategy.
  std::string nonce;
  std::map<std::string, std::string> mapping;
};

/// A compiled, immutable pattern set. Safe to share between threads.
class EntityDetector {
 public:
  explicit EntityDetector(const MaskingPolicy &policy);

  /// Non-overlapping spans sorted by start.
  std::vector<EntitySpan> detect(std::string_view text) const;

 private:
  struct Compiled {
    EntityKind kind;
    std::string name;
    const std::regex *re;
    std::size_t order;
  };
  std::vector<std::regex> custom_regexes_;
  std::vector<Compiled> compiled_;
};

std::vector<EntitySpan> detect_entities(std::string_view text, const MaskingPolicy &policy);

/// Luhn mod-10 checksum over 8-19 decimal digits.
bool luhn_check(std::string_view digits);

RedactionResult mask(std::string_view text, const std::vector<EntitySpan> &spans,
                     const MaskingPolicy &policy);

std::string restore(const RedactionResult &result);

/// Upper-case placeholder label for a span, e.g. "EMAIL" or "EMPLOYEE_ID".
std::string placeholder_label(const EntitySpan &span);

}  // namespace guardgate
