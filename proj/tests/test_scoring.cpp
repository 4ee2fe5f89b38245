#include <gtest/gtest.h>

#include "guardgate/errors.hpp"
#include "guardgate/scoring.hpp"

#include <boost/multiprecision/cpp_dec_float.hpp>

#include <cmath>
#include <limits>
#include <random>

using namespace guardgate;
using big = boost::multiprecision::cpp_dec_float_50;

namespace {

double oracle_p(double z_safe, double z_unsafe) {
  const big e_s = boost::multiprecision::exp(big(z_safe));
  const big e_u = boost::multiprecision::exp(big(z_unsafe));
  return static_cast<double>(e_u / (e_s + e_u));
}

PolicyConfig policy_with(double tau, std::map<std::string, double> overrides = {}) {
  PolicyConfig p;
  p.policy_id = "t";
  p.enabled_categories = {"violent", "sexual", "fraud"};
  p.sensitivity = tau;
  p.per_category_overrides = std::move(overrides);
  return p;
}

}  // namespace

TEST(UnsafeProbability, SymmetricLogitsGiveOneHalf) {
  EXPECT_EQ(unsafe_probability({0.0, 0.0}).value(), 0.5);
}

TEST(UnsafeProbability, LogThreeGivesThreeQuarters) {
  EXPECT_NEAR(unsafe_probability({0.0, std::log(3.0)}).value(), 0.75, 1e-12);
  EXPECT_NEAR(unsafe_probability({0.0, std::log(3.0)}).value(), oracle_p(0.0, std::log(3.0)), 1e-15);
}

TEST(UnsafeProbability, LargeEqualLogitsDoNotOverflow) {
  EXPECT_EQ(unsafe_probability({1000.0, 1000.0}).value(), 0.5);
  EXPECT_EQ(unsafe_probability({-1000.0, -1000.0}).value(), 0.5);
}

TEST(UnsafeProbability, MatchesArbitraryPrecisionOracle) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> z(-40.0, 40.0);
  for (int i = 0; i < 2000; ++i) {
    const double a = z(rng), b = z(rng);
    EXPECT_NEAR(unsafe_probability({a, b}).value(), oracle_p(a, b), 1e-14) << a << ", " << b;
  }
}

TEST(UnsafeProbability, StaysInsideOpenInterval) {
  EXPECT_GT(unsafe_probability({0.0, -1e6}).value(), 0.0);
  EXPECT_LT(unsafe_probability({0.0, 1e6}).value(), 1.0);
  EXPECT_LT(unsafe_probability({-1e300, 1e300}).value(), 1.0);
}

TEST(FirstTokenLogits, RejectsNonFinite) {
  const double inf = std::numeric_limits<double>::infinity();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (auto [a, b] : {std::pair{nan, 0.0}, {0.0, nan}, {inf, 0.0}, {0.0, -inf}}) {
    try {
      FirstTokenLogits logits(a, b);
      ADD_FAILURE() << "accepted " << a << ", " << b;
    } catch (const GuardError &e) {
      EXPECT_EQ(e.code(), ErrorCode::NonFiniteLogit);
    }
  }
}

TEST(UnsafeScore, RejectsClosedEndpoints) {
  EXPECT_THROW(UnsafeScore(0.0), std::invalid_argument);
  EXPECT_THROW(UnsafeScore(1.0), std::invalid_argument);
  EXPECT_NO_THROW(UnsafeScore(0.5));
}

TEST(Decide, BoundaryIsInclusive) {
  EXPECT_EQ(decide(UnsafeScore(0.5), 0.5), Label::unsafe);
  EXPECT_EQ(decide(UnsafeScore(0.4999), 0.5), Label::safe);
  EXPECT_EQ(decide(UnsafeScore(0.9), 0.3), Label::unsafe);
}

TEST(Decide, ExtremeThresholds) {
  for (double p : {1e-300, 0.3, 0.5, 1.0 - 1e-16}) {
    EXPECT_EQ(decide(UnsafeScore(p), 0.0), Label::unsafe);
    EXPECT_EQ(decide(UnsafeScore(p), 1.0), Label::safe);
  }
}

TEST(LogitsFromLogprobs, IdentityMapping) {
  const auto l = logits_from_logprobs({{"safe", -0.3}, {"unsafe", -1.4}});
  EXPECT_EQ(l.z_safe(), -0.3);
  EXPECT_EQ(l.z_unsafe(), -1.4);
}

TEST(LogitsFromLogprobs, NormalizesCaseAndWhitespace) {
  const auto l = logits_from_logprobs({{"Safe ", -0.3}, {"unsafe", -1.4}});
  EXPECT_EQ(l.z_safe(), -0.3);
  EXPECT_EQ(l.z_unsafe(), -1.4);
}

TEST(LogitsFromLogprobs, MissingCandidateNamesWhich) {
  try {
    logits_from_logprobs({{"yes", -0.1}});
    FAIL();
  } catch (const GuardError &e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingCandidateToken);
    EXPECT_STREQ(e.what(), "safe");
  }
  try {
    logits_from_logprobs({{"safe", -0.1}});
    FAIL();
  } catch (const GuardError &e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingCandidateToken);
    EXPECT_STREQ(e.what(), "unsafe");
  }
}

TEST(LogitsFromLogprobs, MergesSpellingVariants) {
  // P(" safe") + P("Safe") = 0.2 + 0.1
  const auto l = logits_from_logprobs({{" safe", std::log(0.2)}, {"Safe", std::log(0.1)}, {"unsafe", std::log(0.6)}});
  EXPECT_NEAR(l.z_safe(), std::log(0.3), 1e-15);
  EXPECT_NEAR(unsafe_probability(l).value(), 0.6 / 0.9, 1e-15);
}

TEST(LogitsFromLogprobs, CommonConstantCancels) {
  const auto a = unsafe_probability(logits_from_logprobs({{"safe", -0.3}, {"unsafe", -1.4}, {"other", -2.0}}));
  const auto b = unsafe_probability(logits_from_logprobs({{"safe", 4.7}, {"unsafe", 3.6}}));
  EXPECT_NEAR(a.value(), b.value(), 1e-15);
}

TEST(LogitsFromLogprobs, CustomSpellings) {
  CandidateSpellings s{{"no"}, {"yes"}};
  const auto l = logits_from_logprobs({{"Yes", -0.2}, {"NO", -2.0}}, s);
  EXPECT_EQ(l.z_unsafe(), -0.2);
  EXPECT_EQ(l.z_safe(), -2.0);
}

TEST(CategoryContinuation, OneIdPerLine) {
  EXPECT_EQ(parse_category_continuation("\nviolent\n Sexual \n"), (std::vector<std::string>{"violent", "sexual"}));
  EXPECT_EQ(parse_category_continuation("\n- fraud,\n* hate.\nnot an id!\nfraud"),
            (std::vector<std::string>{"fraud", "hate"}));
  EXPECT_TRUE(parse_category_continuation("").empty());
}

TEST(AssembleVerdict, UnsafeKeepsCategories) {
  const auto v = assemble_verdict(UnsafeScore(0.8), policy_with(0.5), {"violent"});
  EXPECT_EQ(v.label, Label::unsafe);
  EXPECT_EQ(v.triggered_categories, std::vector<std::string>{"violent"});
  EXPECT_EQ(v.applied_threshold, 0.5);
}

TEST(AssembleVerdict, SafeSuppressesCategories) {
  const auto v = assemble_verdict(UnsafeScore(0.2), policy_with(0.5), {"violent"});
  EXPECT_EQ(v.label, Label::safe);
  EXPECT_TRUE(v.triggered_categories.empty());
}

TEST(AssembleVerdict, OverrideOfFirstCategoryApplies) {
  // tau(violent) = 0.7 > 0.6
  const auto v = assemble_verdict(UnsafeScore(0.6), policy_with(0.5, {{"violent", 0.7}}), {"violent"});
  EXPECT_EQ(v.label, Label::safe);
  EXPECT_EQ(v.applied_threshold, 0.7);
}

TEST(AssembleVerdict, UnknownCategoriesDropped) {
  std::vector<std::string> dropped;
  const auto v = assemble_verdict(UnsafeScore(0.9), policy_with(0.5), {"weapons", "fraud"}, &dropped);
  EXPECT_EQ(v.triggered_categories, std::vector<std::string>{"fraud"});
  EXPECT_EQ(dropped, std::vector<std::string>{"weapons"});
}

TEST(AssembleVerdict, LabelMatchesThresholdInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  for (int i = 0; i < 1000; ++i) {
    const double p = u(rng), tau = u(rng), over = u(rng);
    const auto v = assemble_verdict(UnsafeScore(p), policy_with(tau, {{"sexual", over}}), {"sexual"});
    EXPECT_EQ(v.label == Label::unsafe, v.score->value() >= v.applied_threshold);
    EXPECT_EQ(v.applied_threshold, over);
  }
}

TEST(VerdictJson, ShortCircuitHasNullScore) {
  const auto j = to_json(short_circuit_verdict(policy_with(0.5)));
  EXPECT_TRUE(j["p_unsafe"].is_null());
  EXPECT_EQ(j["label"], "safe");
  EXPECT_EQ(j["evaluated"], false);
}
