#include "guardgate/policy_store.hpp"

#include "guardgate/errors.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>

namespace guardgate {

namespace fs = std::filesystem;

bool is_valid_policy_id(std::string_view id) {
  if (id.empty() || id.size() > 128 || id.front() == '.') {
    return false;
  }
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                    c == '_' || c == '-';
    if (!ok) {
      return false;
    }
  }
  return true;
}

PolicyStore::PolicyStore(fs::path directory, CategoryTaxonomy taxonomy)
    : directory_(std::move(directory)), taxonomy_(std::move(taxonomy)) {
  if (directory_.empty()) {
    return;
  }
  std::error_code ec;
  fs::create_directories(directory_, ec);
  if (ec) {
    throw GuardError(ErrorCode::InvalidConfig, "cannot create policy directory " + directory_.string());
  }
  std::vector<fs::path> files;
  for (const auto &entry : fs::directory_iterator(directory_)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".json" || ext == ".yaml" || ext == ".yml")) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto &path : files) {
    try {
      auto policy = checked(load_policy_file(path));
      if (policy.policy_id != path.stem().string()) {
        throw GuardError(ErrorCode::InvalidPolicy, "policy_id '" + policy.policy_id + "' does not match file name");
      }
      if (policies_.contains(policy.policy_id)) {
        throw GuardError(ErrorCode::PolicyExists, "duplicate policy id '" + policy.policy_id + "'");
      }
      policies_.emplace(policy.policy_id, std::move(policy));
    } catch (const std::exception &e) {
      warnings_.push_back(path.string() + ": skipped: " + e.what());
    }
  }
}

PolicyConfig PolicyStore::checked(const PolicyConfig &policy) const {
  if (!is_valid_policy_id(policy.policy_id)) {
    throw ValidationError({{ErrorCode::InvalidPolicy, "policy_id",
                            "'" + policy.policy_id + "' must match [A-Za-z0-9._-]{1,128} without a leading dot"}});
  }
  return validate_policy(policy, taxonomy_);
}

void PolicyStore::persist(const PolicyConfig &policy) const {
  if (directory_.empty()) {
    return;
  }
  const fs::path target = directory_ / (policy.policy_id + ".json");
  const fs::path tmp = directory_ / ("." + policy.policy_id + ".json.tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << to_json(policy).dump(2) << '\n';
    if (!out) {
      throw GuardError(ErrorCode::IoError, "cannot write " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    throw GuardError(ErrorCode::IoError, "cannot replace " + target.string() + ": " + ec.message());
  }
}

std::optional<PolicyConfig> PolicyStore::get(const std::string &policy_id) const {
  std::shared_lock lock(mutex_);
  const auto it = policies_.find(policy_id);
  if (it == policies_.end()) {
    return std::nullopt;
  }
  return it->second;
}

std::vector<std::string> PolicyStore::list() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> ids;
  ids.reserve(policies_.size());
  for (const auto &[id, _] : policies_) {
    ids.push_back(id);
  }
  return ids;
}

PolicyConfig PolicyStore::create(const PolicyConfig &policy) {
  auto valid = checked(policy);
  std::unique_lock lock(mutex_);
  if (policies_.contains(valid.policy_id)) {
    throw GuardError(ErrorCode::PolicyExists, "policy '" + valid.policy_id + "' already exists");
  }
  persist(valid);
  policies_.emplace(valid.policy_id, valid);
  return valid;
}

bool PolicyStore::put(const PolicyConfig &policy) {
  auto valid = checked(policy);
  std::unique_lock lock(mutex_);
  persist(valid);
  const bool created = !policies_.contains(valid.policy_id);
  policies_[valid.policy_id] = std::move(valid);
  return created;
}

bool PolicyStore::remove(const std::string &policy_id) {
  std::unique_lock lock(mutex_);
  const auto it = policies_.find(policy_id);
  if (it == policies_.end()) {
    return false;
  }
  if (!directory_.empty()) {
    std::error_code ec;
    fs::remove(directory_ / (policy_id + ".json"), ec);
    fs::remove(directory_ / (policy_id + ".yaml"), ec);
    fs::remove(directory_ / (policy_id + ".yml"), ec);
  }
  policies_.erase(it);
  return true;
}

}  // namespace guardgate
