#pragma once

#include "guardgate/redaction.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace guardgate {

struct Category {
  std::string id;  // lowercase-kebab, stable
  std::string display_name;
  std::string description;

  bool operator==(const Category &) const = default;
};

/// Ordered, non-empty list of unsafe categories with unique ids.
class CategoryTaxonomy {
 public:
  /// Throws ValidationError(InvalidTaxonomy) on empty lists, bad or duplicate ids.
  static CategoryTaxonomy create(std::vector<Category> categories);

  /// The twelve shipped categories (mirrors data/taxonomy.json).
  static const CategoryTaxonomy &default_taxonomy();

  const std::vector<Category> &categories() const noexcept { return categories_; }
  bool contains(std::string_view id) const;
  std::optional<std::size_t> index_of(std::string_view id) const;
  const Category *find(std::string_view id) const;

  bool operator==(const CategoryTaxonomy &) const = default;

 private:
  explicit CategoryTaxonomy(std::vector<Category> categories) : categories_(std::move(categories)) {}
  std::vector<Category> categories_;
};

bool is_kebab_id(std::string_view id);

enum class SensitivityLevel { low, medium, high };
enum class GuardRole { prompt, response };
enum class GuardTarget { prompt, response, both };

std::string_view to_string(SensitivityLevel level);
std::string_view to_string(GuardRole role);
std::string_view to_string(GuardTarget target);
std::optional<SensitivityLevel> sensitivity_level_from_string(std::string_view s);
std::optional<GuardRole> guard_role_from_string(std::string_view s);
std::optional<GuardTarget> guard_target_from_string(std::string_view s);

/// Semantic level or numeric threshold in [0, 1].
using Sensitivity = std::variant<SensitivityLevel, double>;

struct PolicyConfig {
  std::string policy_id;
  std::set<std::string> enabled_categories;
  Sensitivity sensitivity = SensitivityLevel::medium;
  std::map<std::string, double> per_category_overrides;
  std::optional<MaskingPolicy> redaction;
  GuardTarget target = GuardTarget::both;

  bool covers(GuardRole role) const;
  bool operator==(const PolicyConfig &) const = default;
};

struct ConversationTurn {
  GuardRole role = GuardRole::prompt;
  std::string text;

  bool operator==(const ConversationTurn &) const = default;
};

struct GuardInput {
  GuardRole role = GuardRole::prompt;
  std::string text;
  std::vector<ConversationTurn> context;
  std::optional<std::string> language_hint;

  bool operator==(const GuardInput &) const = default;
};

/// Returns a normalized copy or throws ValidationError listing every violation.
PolicyConfig validate_policy(const PolicyConfig &policy, const CategoryTaxonomy &taxonomy);

/// Threshold for `category`: per-category override, else numeric tau,
/// else the semantic mapping high->0.3, medium->0.5, low->0.7.
double resolve_threshold(const PolicyConfig &policy, std::optional<std::string_view> category = std::nullopt);

double threshold_for(SensitivityLevel level);

/// Enabled category ids in taxonomy order.
std::vector<std::string> effective_categories(const PolicyConfig &policy, const CategoryTaxonomy &taxonomy);

// JSON / YAML surface. Parsing checks shape only; call validate_policy for
// taxonomy checks.
nlohmann::json to_json(const PolicyConfig &policy);
PolicyConfig policy_from_json(const nlohmann::json &j);
nlohmann::json to_json(const CategoryTaxonomy &taxonomy);
CategoryTaxonomy taxonomy_from_json(const nlohmann::json &j);
nlohmann::json to_json(const GuardInput &input);
GuardInput guard_input_from_json(const nlohmann::json &j);

/// Reads a JSON or YAML document (chosen by extension, .yaml/.yml => YAML).
nlohmann::json load_document(const std::filesystem::path &path);
nlohmann::json yaml_to_json(std::string_view yaml_text);

PolicyConfig load_policy_file(const std::filesystem::path &path);
CategoryTaxonomy load_taxonomy_file(const std::filesystem::path &path);

/// Every category enabled, medium sensitivity.
PolicyConfig default_policy(const CategoryTaxonomy &taxonomy, std::string policy_id = "default");

}  // namespace guardgate
