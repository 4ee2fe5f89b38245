#pragma once

#include "guardgate/policy.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace guardgate {

inline constexpr int kGuardTemplateVersion = 1;

/// Renders the guard-model prompt. Pure: the same (input, policy, taxonomy)
/// always yields byte-identical text. Throws GuardError(EmptyInput) when the
/// input text is blank.
std::string render_guard_prompt(const GuardInput &input, const PolicyConfig &policy,
                                const CategoryTaxonomy &taxonomy);

/// The pieces of a rendering that a guard backend needs to read back.
struct ParsedGuardPrompt {
  int template_version = 0;
  std::vector<std::string> active_categories;
  std::string text;
};

std::optional<ParsedGuardPrompt> parse_guard_prompt(std::string_view prompt);

bool is_blank(std::string_view text);

}  // namespace guardgate
