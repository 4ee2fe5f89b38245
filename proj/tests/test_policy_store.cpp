#include <gtest/gtest.h>

#include "guardgate/errors.hpp"
#include "guardgate/policy_store.hpp"
#include "test_support.hpp"

using namespace guardgate;
using gg_test::TempDir;

namespace {

PolicyConfig named(std::string id, std::set<std::string> cats = {"hate"}) {
  PolicyConfig p;
  p.policy_id = std::move(id);
  p.enabled_categories = std::move(cats);
  return p;
}

const CategoryTaxonomy &tax() { return CategoryTaxonomy::default_taxonomy(); }

}  // namespace

TEST(PolicyStore, StoreThenGet) {
  TempDir dir;
  PolicyStore store(dir.path(), tax());
  const auto p = named("alpha", {"hate", "fraud"});
  EXPECT_TRUE(store.put(p));
  EXPECT_EQ(store.get("alpha"), p);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "alpha.json"));
  PolicyStore reloaded(dir.path(), tax());
  EXPECT_EQ(reloaded.get("alpha"), p);
}

TEST(PolicyStore, ListSorted) {
  TempDir dir;
  PolicyStore store(dir.path(), tax());
  for (auto id : {"zeta", "alpha", "mid"}) store.put(named(id));
  EXPECT_EQ(store.list(), (std::vector<std::string>{"alpha", "mid", "zeta"}));
}

TEST(PolicyStore, CreateConflicts) {
  PolicyStore store({}, tax());
  store.create(named("a"));
  try {
    store.create(named("a"));
    FAIL();
  } catch (const GuardError &e) {
    EXPECT_EQ(e.code(), ErrorCode::PolicyExists);
  }
  EXPECT_FALSE(store.put(named("a", {"fraud"})));
  EXPECT_EQ(store.get("a")->enabled_categories, std::set<std::string>{"fraud"});
}

TEST(PolicyStore, RemoveDeletesFile) {
  TempDir dir;
  PolicyStore store(dir.path(), tax());
  store.put(named("gone"));
  EXPECT_TRUE(store.remove("gone"));
  EXPECT_FALSE(store.remove("gone"));
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "gone.json"));
  EXPECT_FALSE(store.get("gone"));
}

TEST(PolicyStore, MalformedFileSkippedWithWarning) {
  TempDir dir;
  gg_test::write_file(dir.path() / "good.json", to_json(named("good")).dump());
  gg_test::write_file(dir.path() / "broken.json", "{ not json");
  gg_test::write_file(dir.path() / "unknown-cat.json", to_json(named("unknown-cat", {"nope"})).dump());
  gg_test::write_file(dir.path() / "mismatch.json", to_json(named("other")).dump());
  gg_test::write_file(dir.path() / "yaml-one.yaml", "policy_id: yaml-one\nenabled_categories: [fraud]\n");
  PolicyStore store(dir.path(), tax());
  EXPECT_EQ(store.list(), (std::vector<std::string>{"good", "yaml-one"}));
  EXPECT_EQ(store.load_warnings().size(), 3u);
}

TEST(PolicyStore, InvalidPoliciesRejected) {
  PolicyStore store({}, tax());
  EXPECT_THROW(store.put(named("x", {"nope"})), ValidationError);
  EXPECT_THROW(store.put(named("../escape")), ValidationError);
  EXPECT_TRUE(store.list().empty());
}

TEST(PolicyStore, NoTempFilesLeftBehind) {
  TempDir dir;
  PolicyStore store(dir.path(), tax());
  for (int i = 0; i < 20; ++i) store.put(named("p" + std::to_string(i % 3)));
  for (const auto &entry : std::filesystem::directory_iterator(dir.path())) {
    EXPECT_EQ(entry.path().extension(), ".json") << entry.path();
  }
}

TEST(PolicyStore, ConcurrentReadersAndWriters) {
  TempDir dir;
  PolicyStore store(dir.path(), tax());
  store.put(named("shared"));
  std::vector<std::thread> threads;
  std::atomic<int> misses{0};
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 50; ++i) {
        if (t % 2) {
          store.put(named("shared", i % 2 ? std::set<std::string>{"hate"} : std::set<std::string>{"fraud"}));
        } else if (!store.get("shared")) {
          misses.fetch_add(1);
        }
      }
    });
  }
  for (auto &th : threads) th.join();
  EXPECT_EQ(misses.load(), 0);
}

TEST(PolicyIds, Validation) {
  EXPECT_TRUE(is_valid_policy_id("support-bot_v2.1"));
  EXPECT_FALSE(is_valid_policy_id(""));
  EXPECT_FALSE(is_valid_policy_id(".hidden"));
  EXPECT_FALSE(is_valid_policy_id("a/b"));
  EXPECT_FALSE(is_valid_policy_id(std::string(129, 'a')));
}
