#pragma once

#include "guardgate/policy.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace guardgate {

/// Stored policies, one `<policy_id>.json` file each. Reads take a shared
/// lock; writes persist via write-then-rename before updating memory.
/// An empty directory path keeps policies in memory only.
class PolicyStore {
 public:
  PolicyStore(std::filesystem::path directory, CategoryTaxonomy taxonomy);

  /// Files skipped at load time, one message per file.
  const std::vector<std::string> &load_warnings() const noexcept { return warnings_; }

  std::optional<PolicyConfig> get(const std::string &policy_id) const;
  std::vector<std::string> list() const;

  /// Throws GuardError(PolicyExists) if the id is taken.
  PolicyConfig create(const PolicyConfig &policy);
  /// Insert or replace. Returns true when the id was new.
  bool put(const PolicyConfig &policy);
  bool remove(const std::string &policy_id);

  const CategoryTaxonomy &taxonomy() const noexcept { return taxonomy_; }

 private:
  PolicyConfig checked(const PolicyConfig &policy) const;
  void persist(const PolicyConfig &policy) const;

  std::filesystem::path directory_;
  CategoryTaxonomy taxonomy_;
  std::vector<std::string> warnings_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, PolicyConfig> policies_;
};

/// Policy ids double as file names: [A-Za-z0-9._-], 1-128 chars, no leading dot.
bool is_valid_policy_id(std::string_view id);

}  // namespace guardgate
