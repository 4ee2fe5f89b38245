#include "guardgate/guard_prompt.hpp"

#include "guardgate/errors.hpp"

#include <algorithm>
#include <cctype>

namespace guardgate {

namespace {

constexpr std::string_view kCategoriesBegin = "<BEGIN UNSAFE CATEGORIES>\n";
constexpr std::string_view kCategoriesEnd = "<END UNSAFE CATEGORIES>\n";
constexpr std::string_view kTextBeginPrefix = "<BEGIN TEXT TO CLASSIFY role=\"";
constexpr std::string_view kTextEnd = "\n<END TEXT TO CLASSIFY>\n";
constexpr std::string_view kNoCategories = "(none: no unsafe categories are active for this request)\n";

std::string_view role_noun(GuardRole role) {
  return role == GuardRole::prompt ? "user prompt" : "assistant response";
}

std::string_view speaker(GuardRole role) { return role == GuardRole::prompt ? "User" : "Agent"; }

}  // namespace

bool is_blank(std::string_view text) {
  return std::all_of(text.begin(), text.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

std::string render_guard_prompt(const GuardInput &input, const PolicyConfig &policy,
                                const CategoryTaxonomy &taxonomy) {
  if (is_blank(input.text)) {
    throw GuardError(ErrorCode::EmptyInput, "guard input text is empty");
  }
  const std::string_view noun = role_noun(input.role);

  std::string out;
  out.reserve(1024 + input.text.size());
  out += "<guard-template version=\"" + std::to_string(kGuardTemplateVersion) + "\">\n";
  out += "You are a content-safety classifier guarding an AI assistant.\n";
  out += "Decide whether the ";
  out += noun;
  out += " below violates any of the unsafe categories listed.\n";
  out += "Reply with exactly one first token, either \"safe\" or \"unsafe\".\n";
  out += "Only after \"unsafe\", list each violated category id on its own line.\n\n";

  out += kCategoriesBegin;
  const auto ids = effective_categories(policy, taxonomy);
  if (ids.empty()) {
    out += kNoCategories;
  }
  for (const auto &id : ids) {
    const Category *c = taxonomy.find(id);
    out += c->id + ": " + c->display_name;
    if (!c->description.empty()) {
      out += ". " + c->description;
    }
    out += '\n';
  }
  out += kCategoriesEnd;
  out += '\n';

  if (!input.context.empty()) {
    out += "<BEGIN CONVERSATION CONTEXT>\n";
    for (const auto &turn : input.context) {
      out += speaker(turn.role);
      out += ": ";
      out += turn.text;
      out += '\n';
    }
    out += "<END CONVERSATION CONTEXT>\n\n";
  }
  if (input.language_hint) {
    out += "Language hint: " + *input.language_hint + "\n\n";
  }

  out += kTextBeginPrefix;
  out += to_string(input.role);
  out += "\">\n";
  out += input.text;
  out += kTextEnd;
  out += '\n';
  out += "Classification of the ";
  out += noun;
  out += ":";
  return out;
}

std::optional<ParsedGuardPrompt> parse_guard_prompt(std::string_view prompt) {
  constexpr std::string_view kVersionPrefix = "<guard-template version=\"";
  if (!prompt.starts_with(kVersionPrefix)) {
    return std::nullopt;
  }
  ParsedGuardPrompt parsed;
  {
    std::size_t pos = kVersionPrefix.size();
    while (pos < prompt.size() && std::isdigit(static_cast<unsigned char>(prompt[pos]))) {
      parsed.template_version = parsed.template_version * 10 + (prompt[pos] - '0');
      ++pos;
    }
  }

  const auto cat_begin = prompt.find(kCategoriesBegin);
  const auto cat_end = prompt.find(kCategoriesEnd, cat_begin);
  if (cat_begin == std::string_view::npos || cat_end == std::string_view::npos) {
    return std::nullopt;
  }
  std::string_view block = prompt.substr(cat_begin + kCategoriesBegin.size(),
                                         cat_end - cat_begin - kCategoriesBegin.size());
  while (!block.empty()) {
    const auto nl = block.find('\n');
    const std::string_view line = block.substr(0, nl);
    const auto colon = line.find(':');
    if (colon != std::string_view::npos && is_kebab_id(line.substr(0, colon))) {
      parsed.active_categories.emplace_back(line.substr(0, colon));
    }
    if (nl == std::string_view::npos) {
      break;
    }
    block.remove_prefix(nl + 1);
  }

  const auto text_begin = prompt.find(kTextBeginPrefix, cat_end);
  const auto text_end = prompt.rfind(kTextEnd);
  if (text_begin == std::string_view::npos || text_end == std::string_view::npos) {
    return std::nullopt;
  }
  const auto body = prompt.find("\">\n", text_begin);
  if (body == std::string_view::npos || body + 3 > text_end) {
    return std::nullopt;
  }
  parsed.text = std::string(prompt.substr(body + 3, text_end - body - 3));
  return parsed;
}

}  // namespace guardgate
