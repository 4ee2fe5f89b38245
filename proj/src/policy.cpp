#include "guardgate/policy.hpp"

#include "guardgate/errors.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace guardgate {

namespace {

std::string number_text(double value) { return nlohmann::json(value).dump(); }

bool in_unit_interval(double value) { return std::isfinite(value) && value >= 0.0 && value <= 1.0; }

}  // namespace

bool is_kebab_id(std::string_view id) {
  if (id.empty() || id.front() == '-' || id.back() == '-') {
    return false;
  }
  char previous = '\0';
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
    if (!ok || (c == '-' && previous == '-')) {
      return false;
    }
    previous = c;
  }
  return true;
}

CategoryTaxonomy CategoryTaxonomy::create(std::vector<Category> categories) {
  std::vector<Violation> violations;
  if (categories.empty()) {
    violations.push_back({ErrorCode::InvalidTaxonomy, "categories", "taxonomy must not be empty"});
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    const auto &id = categories[i].id;
    const std::string field = "categories[" + std::to_string(i) + "].id";
    if (!is_kebab_id(id)) {
      violations.push_back({ErrorCode::InvalidTaxonomy, field, "'" + id + "' is not a lowercase-kebab id"});
    } else if (!seen.insert(id).second) {
      violations.push_back({ErrorCode::InvalidTaxonomy, field, "duplicate id '" + id + "'"});
    }
  }
  if (!violations.empty()) {
    throw ValidationError(std::move(violations));
  }
  return CategoryTaxonomy(std::move(categories));
}

const CategoryTaxonomy &CategoryTaxonomy::default_taxonomy() {
  static const CategoryTaxonomy taxonomy = create({
      {"violent", "Violence", "Content that depicts, threatens, glorifies or instructs physical harm to people or animals."},
      {"hate", "Hate and harassment", "Content that attacks or demeans people based on protected attributes, or harasses individuals."},
      {"sexual", "Sexual content", "Sexually explicit material, or any sexual content involving minors."},
      {"self-harm", "Self-harm", "Content that encourages, instructs or glorifies suicide, self-injury or disordered eating."},
      {"illegal-activity", "Illegal activity", "Instructions or facilitation for crimes such as drug trafficking, theft or hacking."},
      {"political", "Political sensitivity", "Content on political topics that the deployment has chosen not to engage with."},
      {"fraud", "Fraud and deception", "Scams, phishing, impersonation, counterfeit documents or other deceptive schemes."},
      {"weapons", "Weapons", "Acquisition, manufacture or use of weapons, explosives or CBRN agents."},
      {"privacy-leak", "Data leakage", "Exposure of personal, confidential or organizational data such as credentials or identifiers."},
      {"prompt-injection", "Prompt injection", "Text that tries to override, replace or exfiltrate the system's instructions."},
      {"jailbreak", "Jailbreak", "Role-play, obfuscation or persuasion designed to make the assistant ignore its safety rules."},
      {"code-abuse", "Code interpreter abuse", "Requests that try to execute malicious code or misuse tool and code-execution access."},
  });
  return taxonomy;
}

bool CategoryTaxonomy::contains(std::string_view id) const { return index_of(id).has_value(); }

std::optional<std::size_t> CategoryTaxonomy::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < categories_.size(); ++i) {
    if (categories_[i].id == id) {
      return i;
    }
  }
  return std::nullopt;
}

const Category *CategoryTaxonomy::find(std::string_view id) const {
  const auto idx = index_of(id);
  return idx ? &categories_[*idx] : nullptr;
}

std::string_view to_string(SensitivityLevel level) {
  switch (level) {
    case SensitivityLevel::low: return "low";
    case SensitivityLevel::medium: return "medium";
    case SensitivityLevel::high: return "high";
  }
  return "medium";
}

std::string_view to_string(GuardRole role) { return role == GuardRole::prompt ? "prompt" : "response"; }

std::string_view to_string(GuardTarget target) {
  switch (target) {
    case GuardTarget::prompt: return "prompt";
    case GuardTarget::response: return "response";
    case GuardTarget::both: return "both";
  }
  return "both";
}

std::optional<SensitivityLevel> sensitivity_level_from_string(std::string_view s) {
  if (s == "low") return SensitivityLevel::low;
  if (s == "medium") return SensitivityLevel::medium;
  if (s == "high") return SensitivityLevel::high;
  return std::nullopt;
}

std::optional<GuardRole> guard_role_from_string(std::string_view s) {
  if (s == "prompt") return GuardRole::prompt;
  if (s == "response") return GuardRole::response;
  return std::nullopt;
}

std::optional<GuardTarget> guard_target_from_string(std::string_view s) {
  if (s == "prompt") return GuardTarget::prompt;
  if (s == "response") return GuardTarget::response;
  if (s == "both") return GuardTarget::both;
  return std::nullopt;
}

bool PolicyConfig::covers(GuardRole role) const {
  return target == GuardTarget::both ||
         (target == GuardTarget::prompt && role == GuardRole::prompt) ||
         (target == GuardTarget::response && role == GuardRole::response);
}

PolicyConfig validate_policy(const PolicyConfig &policy, const CategoryTaxonomy &taxonomy) {
  std::vector<Violation> violations;
  if (policy.policy_id.empty()) {
    violations.push_back({ErrorCode::InvalidPolicy, "policy_id", "policy_id must not be empty"});
  }
  for (const auto &id : policy.enabled_categories) {
    if (!taxonomy.contains(id)) {
      violations.push_back({ErrorCode::UnknownCategory, "enabled_categories", id});
    }
  }
  if (const auto *tau = std::get_if<double>(&policy.sensitivity); tau && !in_unit_interval(*tau)) {
    violations.push_back({ErrorCode::ThresholdOutOfRange, "sensitivity", number_text(*tau)});
  }
  for (const auto &[id, tau] : policy.per_category_overrides) {
    if (!taxonomy.contains(id)) {
      violations.push_back({ErrorCode::UnknownCategory, "per_category_overrides", id});
    }
    if (!in_unit_interval(tau)) {
      violations.push_back({ErrorCode::ThresholdOutOfRange, "per_category_overrides." + id, number_text(tau)});
    }
  }
  if (policy.redaction) {
    for (auto &[field, detail] : masking_policy_problems(*policy.redaction)) {
      const auto code = field.ends_with(".pattern") ? ErrorCode::InvalidCustomPattern : ErrorCode::InvalidPolicy;
      violations.push_back({code, field, detail});
    }
  }
  if (!violations.empty()) {
    throw ValidationError(std::move(violations));
  }
  return policy;
}

double threshold_for(SensitivityLevel level) {
  switch (level) {
    case SensitivityLevel::high: return 0.3;
    case SensitivityLevel::medium: return 0.5;
    case SensitivityLevel::low: return 0.7;
  }
  return 0.5;
}

double resolve_threshold(const PolicyConfig &policy, std::optional<std::string_view> category) {
  if (category) {
    if (const auto it = policy.per_category_overrides.find(std::string(*category));
        it != policy.per_category_overrides.end()) {
      return it->second;
    }
  }
  if (const auto *tau = std::get_if<double>(&policy.sensitivity)) {
    return *tau;
  }
  return threshold_for(std::get<SensitivityLevel>(policy.sensitivity));
}

std::vector<std::string> effective_categories(const PolicyConfig &policy, const CategoryTaxonomy &taxonomy) {
  std::vector<std::string> ids;
  for (const auto &c : taxonomy.categories()) {
    if (policy.enabled_categories.contains(c.id)) {
      ids.push_back(c.id);
    }
  }
  return ids;
}

nlohmann::json to_json(const PolicyConfig &policy) {
  nlohmann::json j;
  j["policy_id"] = policy.policy_id;
  j["enabled_categories"] = policy.enabled_categories;
  if (const auto *tau = std::get_if<double>(&policy.sensitivity)) {
    j["sensitivity"] = *tau;
  } else {
    j["sensitivity"] = std::string(to_string(std::get<SensitivityLevel>(policy.sensitivity)));
  }
  j["per_category_overrides"] = policy.per_category_overrides;
  j["target"] = std::string(to_string(policy.target));
  if (policy.redaction) {
    j["redaction"] = to_json(*policy.redaction);
  }
  return j;
}

PolicyConfig policy_from_json(const nlohmann::json &j) {
  if (!j.is_object()) {
    throw ValidationError({{ErrorCode::InvalidPolicy, "", "policy must be a JSON object"}});
  }
  static const std::set<std::string> known = {"policy_id", "enabled_categories", "sensitivity",
                                              "per_category_overrides", "target", "redaction"};
  std::vector<Violation> violations;
  for (const auto &[key, _] : j.items()) {
    if (!known.contains(key)) {
      violations.push_back({ErrorCode::InvalidPolicy, key, "unknown field"});
    }
  }

  PolicyConfig policy;
  policy.policy_id = "inline";
  if (auto it = j.find("policy_id"); it != j.end()) {
    if (it->is_string()) {
      policy.policy_id = it->get<std::string>();
    } else {
      violations.push_back({ErrorCode::InvalidPolicy, "policy_id", "must be a string"});
    }
  }
  if (auto it = j.find("enabled_categories"); it != j.end()) {
    if (it->is_array() && std::all_of(it->begin(), it->end(), [](const auto &v) { return v.is_string(); })) {
      for (const auto &v : *it) {
        policy.enabled_categories.insert(v.template get<std::string>());
      }
    } else {
      violations.push_back({ErrorCode::InvalidPolicy, "enabled_categories", "must be an array of strings"});
    }
  } else {
    violations.push_back({ErrorCode::InvalidPolicy, "enabled_categories", "required"});
  }
  if (auto it = j.find("sensitivity"); it != j.end()) {
    if (it->is_number()) {
      policy.sensitivity = it->get<double>();
    } else if (auto level = it->is_string() ? sensitivity_level_from_string(it->get<std::string>()) : std::nullopt) {
      policy.sensitivity = *level;
    } else {
      violations.push_back({ErrorCode::InvalidPolicy, "sensitivity",
                            "must be low, medium, high or a number in [0, 1]"});
    }
  }
  if (auto it = j.find("per_category_overrides"); it != j.end() && !it->is_null()) {
    if (it->is_object()) {
      for (const auto &[id, value] : it->items()) {
        if (value.is_number()) {
          policy.per_category_overrides[id] = value.get<double>();
        } else {
          violations.push_back({ErrorCode::InvalidPolicy, "per_category_overrides." + id, "must be a number"});
        }
      }
    } else {
      violations.push_back({ErrorCode::InvalidPolicy, "per_category_overrides", "must be an object"});
    }
  }
  if (auto it = j.find("target"); it != j.end()) {
    if (auto target = it->is_string() ? guard_target_from_string(it->get<std::string>()) : std::nullopt) {
      policy.target = *target;
    } else {
      violations.push_back({ErrorCode::InvalidPolicy, "target", "must be prompt, response or both"});
    }
  }
  if (auto it = j.find("redaction"); it != j.end() && !it->is_null()) {
    try {
      policy.redaction = masking_policy_from_json(*it);
    } catch (const GuardError &e) {
      violations.push_back({ErrorCode::InvalidPolicy, "redaction", e.what()});
    }
  }
  if (!violations.empty()) {
    throw ValidationError(std::move(violations));
  }
  return policy;
}

nlohmann::json to_json(const CategoryTaxonomy &taxonomy) {
  nlohmann::json categories = nlohmann::json::array();
  for (const auto &c : taxonomy.categories()) {
    categories.push_back({{"id", c.id}, {"display_name", c.display_name}, {"description", c.description}});
  }
  return {{"categories", categories}};
}

CategoryTaxonomy taxonomy_from_json(const nlohmann::json &j) {
  const nlohmann::json *list = &j;
  if (j.is_object() && j.contains("categories")) {
    list = &j["categories"];
  }
  if (!list->is_array()) {
    throw ValidationError({{ErrorCode::InvalidTaxonomy, "categories", "must be an array"}});
  }
  std::vector<Category> categories;
  for (const auto &c : *list) {
    if (!c.is_object() || !c.contains("id") || !c["id"].is_string()) {
      throw ValidationError({{ErrorCode::InvalidTaxonomy, "categories", "each entry needs a string id"}});
    }
    categories.push_back({c["id"].get<std::string>(), c.value("display_name", c["id"].get<std::string>()),
                          c.value("description", std::string())});
  }
  return CategoryTaxonomy::create(std::move(categories));
}

nlohmann::json to_json(const GuardInput &input) {
  nlohmann::json j{{"role", std::string(to_string(input.role))}, {"text", input.text}};
  if (!input.context.empty()) {
    nlohmann::json turns = nlohmann::json::array();
    for (const auto &t : input.context) {
      turns.push_back({{"role", std::string(to_string(t.role))}, {"text", t.text}});
    }
    j["context"] = turns;
  }
  if (input.language_hint) {
    j["language_hint"] = *input.language_hint;
  }
  return j;
}

GuardInput guard_input_from_json(const nlohmann::json &j) {
  std::vector<Violation> violations;
  GuardInput input;
  if (!j.is_object()) {
    throw ValidationError({{ErrorCode::InvalidRequest, "input", "must be an object"}});
  }
  if (auto it = j.find("role"); it != j.end()) {
    if (auto role = it->is_string() ? guard_role_from_string(it->get<std::string>()) : std::nullopt) {
      input.role = *role;
    } else {
      violations.push_back({ErrorCode::InvalidRequest, "input.role", "must be prompt or response"});
    }
  }
  if (auto it = j.find("text"); it != j.end() && it->is_string()) {
    input.text = it->get<std::string>();
  } else {
    violations.push_back({ErrorCode::InvalidRequest, "input.text", "required string"});
  }
  if (auto it = j.find("context"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) {
      violations.push_back({ErrorCode::InvalidRequest, "input.context", "must be an array"});
    } else {
      for (const auto &t : *it) {
        auto role = t.is_object() && t.contains("role") && t["role"].is_string()
                        ? guard_role_from_string(t["role"].get<std::string>())
                        : std::nullopt;
        if (!role || !t.contains("text") || !t["text"].is_string()) {
          violations.push_back({ErrorCode::InvalidRequest, "input.context",
                                "turns need role (prompt|response) and text"});
          break;
        }
        input.context.push_back({*role, t["text"].get<std::string>()});
      }
    }
  }
  if (auto it = j.find("language_hint"); it != j.end() && it->is_string()) {
    input.language_hint = it->get<std::string>();
  }
  if (!violations.empty()) {
    throw ValidationError(std::move(violations));
  }
  return input;
}

namespace {

nlohmann::json yaml_node_to_json(const YAML::Node &node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Sequence: {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto &child : node) {
        arr.push_back(yaml_node_to_json(child));
      }
      return arr;
    }
    case YAML::NodeType::Map: {
      nlohmann::json obj = nlohmann::json::object();
      for (const auto &kv : node) {
        obj[kv.first.as<std::string>()] = yaml_node_to_json(kv.second);
      }
      return obj;
    }
    case YAML::NodeType::Scalar: {
      const std::string &text = node.Scalar();
      if (node.Tag() == "!") {  // quoted scalar
        return text;
      }
      if (text == "true" || text == "True" || text == "TRUE") return true;
      if (text == "false" || text == "False" || text == "FALSE") return false;
      if (text == "~" || text == "null" || text == "Null" || text == "NULL") return nullptr;
      try {
        std::size_t consumed = 0;
        const long long as_int = std::stoll(text, &consumed);
        if (consumed == text.size()) return as_int;
      } catch (const std::exception &) {
      }
      try {
        std::size_t consumed = 0;
        const double as_double = std::stod(text, &consumed);
        if (consumed == text.size()) return as_double;
      } catch (const std::exception &) {
      }
      return text;
    }
  }
  return nullptr;
}

std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw GuardError(ErrorCode::FileMissing, "cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

nlohmann::json yaml_to_json(std::string_view yaml_text) {
  try {
    return yaml_node_to_json(YAML::Load(std::string(yaml_text)));
  } catch (const YAML::Exception &e) {
    throw GuardError(ErrorCode::InvalidPolicy, std::string("YAML parse error: ") + e.what());
  }
}

nlohmann::json load_document(const std::filesystem::path &path) {
  const std::string text = read_file(path);
  const auto ext = path.extension().string();
  if (ext == ".yaml" || ext == ".yml") {
    return yaml_to_json(text);
  }
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error &e) {
    throw GuardError(ErrorCode::InvalidPolicy, path.string() + ": " + e.what());
  }
}

PolicyConfig load_policy_file(const std::filesystem::path &path) { return policy_from_json(load_document(path)); }

CategoryTaxonomy load_taxonomy_file(const std::filesystem::path &path) {
  return taxonomy_from_json(load_document(path));
}

PolicyConfig default_policy(const CategoryTaxonomy &taxonomy, std::string policy_id) {
  PolicyConfig policy;
  policy.policy_id = std::move(policy_id);
  for (const auto &c : taxonomy.categories()) {
    policy.enabled_categories.insert(c.id);
  }
  return policy;
}

}  // namespace guardgate
