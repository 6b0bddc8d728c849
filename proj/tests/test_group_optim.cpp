#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "vprm/group_optim.hpp"

using namespace vprm;
using Catch::Approx;

TEST_CASE("advantage normalization") {
  SECTION("zero-variance group maps to all-zero advantages") {
    const AdvantageVector adv = normalize_advantages({1, 1, 1, 1});
    CHECK(adv.values == std::vector<double>{0, 0, 0, 0});
    CHECK(adv.group_std == 0.0);
  }

  SECTION("hand-computed z-scores") {
    const AdvantageVector adv = normalize_advantages({2, 1, 0, 1});
    REQUIRE(adv.values.size() == 4);
    CHECK(adv.group_mean == Approx(1.0));
    CHECK(adv.group_std == Approx(std::sqrt(0.5)));
    CHECK(adv.values[0] == Approx(1.41421).margin(1e-5));
    CHECK(adv.values[1] == Approx(0.0).margin(1e-9));
    CHECK(adv.values[2] == Approx(-1.41421).margin(1e-5));
    CHECK(adv.values[3] == Approx(0.0).margin(1e-9));
  }

  SECTION("errors") {
    CHECK_THROWS_AS(normalize_advantages({1.0}), NumericError);
    CHECK_THROWS_AS(normalize_advantages({1.0, std::nan("")}), NumericError);
    CHECK_THROWS_AS(normalize_advantages({}), NumericError);
  }

  SECTION("mean 0 / std 1 and affine invariance on 1000 random groups") {
    Rng rng(123);
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t g = 2 + rng.below(14);
      std::vector<double> rewards(g);
      for (double& r : rewards) r = rng.uniform(-3.0, 3.0);
      const AdvantageVector adv = normalize_advantages(rewards);
      if (adv.group_std == 0.0) continue;

      double mean = 0.0, var = 0.0;
      for (double v : adv.values) mean += v;
      mean /= static_cast<double>(g);
      for (double v : adv.values) var += (v - mean) * (v - mean);
      var /= static_cast<double>(g);
      REQUIRE(std::abs(mean) < 1e-9);
      REQUIRE(std::abs(std::sqrt(var) - 1.0) < 1e-9);

      const double a = rng.uniform(0.1, 5.0);
      const double b = rng.uniform(-10.0, 10.0);
      std::vector<double> scaled(g);
      for (std::size_t i = 0; i < g; ++i) scaled[i] = a * rewards[i] + b;
      const AdvantageVector adv2 = normalize_advantages(scaled);
      for (std::size_t i = 0; i < g; ++i) {
        REQUIRE(adv.values[i] == Approx(adv2.values[i]).margin(1e-9));
      }
    }
  }
}

TEST_CASE("dapo filter") {
  CHECK_FALSE(dapo_filter({true, true, true, true}));
  CHECK_FALSE(dapo_filter({false, false}));
  CHECK(dapo_filter({true, false, false}));
  CHECK_FALSE(dapo_filter({}));
}

namespace {

GroupBatch uniform_ratio_batch(const std::vector<double>& rewards, double ratio,
                               std::size_t tokens) {
  GroupBatch batch;
  batch.rewards = rewards;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    batch.token_ratios.emplace_back(tokens, ratio);
    batch.correctness.push_back(rewards[i] > 0.5);
  }
  return batch;
}

}  // namespace

TEST_CASE("grpo loss") {
  OptimConfig config;
  config.algo = Algo::Grpo;
  config.eps = 0.2;

  SECTION("all ratios 1 with zero-mean advantages and beta 0 gives objective 0") {
    const GroupBatch batch = uniform_ratio_batch({2, 1, 0, 1}, 1.0, 3);
    const AdvantageVector adv = normalize_advantages(batch.rewards);
    const LossResult result = grpo_loss(batch, adv, config);
    CHECK(result.objective == Approx(0.0).margin(1e-12));
  }

  SECTION("ratio-one identity: objective equals mean advantage minus beta KL") {
    GroupBatch batch = uniform_ratio_batch({1, 0, 1, 1}, 1.0, 2);
    AdvantageVector adv;
    adv.values = {0.5, -0.5, 1.5, 0.25};  // synthetic advantages
    adv.group_std = 1.0;
    const double mean_adv = (0.5 - 0.5 + 1.5 + 0.25) / 4.0;

    const LossResult no_kl = grpo_loss(batch, adv, config);
    CHECK(no_kl.objective == Approx(mean_adv));

    config.beta = 0.3;
    batch.token_kl = {{0.1, 0.1}, {0.2, 0.2}, {0.0, 0.0}, {0.4, 0.4}};
    const double mean_kl = (0.1 + 0.2 + 0.0 + 0.4) / 4.0;
    const LossResult with_kl = grpo_loss(batch, adv, config);
    CHECK(with_kl.objective == Approx(mean_adv - 0.3 * mean_kl));
  }

  SECTION("clipping on positive advantage: ratio 1.5 is cut at 1.2") {
    const GroupBatch batch = uniform_ratio_batch({1, 0}, 1.5, 1);
    AdvantageVector adv;
    adv.values = {1.0, 1.0};
    adv.group_std = 1.0;
    const LossResult result = grpo_loss(batch, adv, config);
    CHECK(result.token_terms[0][0] == Approx(1.2));
  }

  SECTION("clipping on negative advantage: ratio 0.5 term is -0.8") {
    const GroupBatch batch = uniform_ratio_batch({1, 0}, 0.5, 1);
    AdvantageVector adv;
    adv.values = {-1.0, -1.0};
    adv.group_std = 1.0;
    const LossResult result = grpo_loss(batch, adv, config);
    CHECK(result.token_terms[0][0] == Approx(-0.8));
  }

  SECTION("missing KL with beta > 0 is an input error") {
    config.beta = 0.1;
    const GroupBatch batch = uniform_ratio_batch({1, 0}, 1.0, 2);
    const AdvantageVector adv = normalize_advantages(batch.rewards);
    CHECK_THROWS_AS(grpo_loss(batch, adv, config), NumericError);
  }
}

TEST_CASE("dapo loss") {
  OptimConfig config;
  config.algo = Algo::Dapo;
  config.eps_low = 0.2;
  config.eps_high = 0.28;

  SECTION("single kept group at ratio 1 collapses to the length-weighted mean advantage") {
    GroupBatch batch;
    batch.rewards = {1, 0, 1};
    batch.correctness = {true, false, true};
    batch.token_ratios = {{1.0, 1.0}, {1.0, 1.0, 1.0}, {1.0}};
    AdvantageVector adv;
    adv.values = {0.7071, -1.4142, 0.7071};
    adv.group_std = 1.0;
    const double expected =
        (2 * 0.7071 + 3 * -1.4142 + 1 * 0.7071) / static_cast<double>(2 + 3 + 1);
    CHECK(dapo_loss({batch}, {adv}, config) == Approx(expected));
  }

  SECTION("clip-higher: ratio 1.25 with positive advantage stays unclipped") {
    GroupBatch batch;
    batch.rewards = {1, 0};
    batch.correctness = {true, false};
    batch.token_ratios = {{1.25}, {1.0}};
    AdvantageVector adv;
    adv.values = {1.0, -1.0};
    adv.group_std = 1.0;
    // token terms: 1.25 (below 1+eps_high=1.28) and -1.0
    CHECK(dapo_loss({batch}, {adv}, config) == Approx((1.25 - 1.0) / 2.0));

    // the same ratio under GRPO's symmetric 0.2 radius WOULD clip to 1.2
    OptimConfig grpo_cfg;
    grpo_cfg.eps = 0.2;
    const LossResult grpo = grpo_loss(batch, adv, grpo_cfg);
    CHECK(grpo.token_terms[0][0] == Approx(1.2));
  }

  SECTION("uniform explicit token weights equal the default") {
    GroupBatch batch;
    batch.rewards = {1, 0};
    batch.correctness = {true, false};
    batch.token_ratios = {{1.1, 0.9}, {1.0, 1.0}};
    AdvantageVector adv;
    adv.values = {1.0, -1.0};
    adv.group_std = 1.0;
    const double without = dapo_loss({batch}, {adv}, config);
    batch.token_weights = {{1.0, 1.0}, {1.0, 1.0}};
    const double with = dapo_loss({batch}, {adv}, config);
    CHECK(with == Approx(without));
  }

  SECTION("token weights must be nonnegative and mean 1") {
    GroupBatch batch;
    batch.rewards = {1, 0};
    batch.correctness = {true, false};
    batch.token_ratios = {{1.0}, {1.0}};
    AdvantageVector adv;
    adv.values = {1.0, -1.0};
    adv.group_std = 1.0;
    batch.token_weights = {{2.0}, {1.0}};  // mean 1.5
    CHECK_THROWS_AS(dapo_loss({batch}, {adv}, config), ValidationError);
    batch.token_weights = {{-1.0}, {3.0}};
    CHECK_THROWS_AS(dapo_loss({batch}, {adv}, config), ValidationError);
    batch.token_weights = {{1.5}, {0.5}};  // mean 1, valid
    CHECK_NOTHROW(dapo_loss({batch}, {adv}, config));
  }

  SECTION("an unfiltered group is a contract violation") {
    GroupBatch batch;
    batch.rewards = {1, 1};
    batch.correctness = {true, true};
    batch.token_ratios = {{1.0}, {1.0}};
    const AdvantageVector adv = normalize_advantages(batch.rewards);
    CHECK_THROWS_AS(dapo_loss({batch}, {adv}, config), ContractError);
  }
}

TEST_CASE("clip bound properties over random token terms") {
  Rng rng(777);
  for (int i = 0; i < 2000; ++i) {
    const double eps_low = rng.uniform(0.0, 0.5);
    const double eps_high = rng.uniform(0.0, 0.5);
    const double lo = 1.0 - eps_low;
    const double hi = 1.0 + eps_high;
    const double ratio = rng.uniform(0.0, 3.0);
    const double adv = rng.uniform(-2.0, 2.0);
    const double term = clipped_token_term(ratio, adv, lo, hi);
    // the pessimistic min caps the objective at the clip boundary on the
    // advantage's own side, with equality exactly once the ratio crosses it
    if (adv > 0) {
      CHECK(term <= hi * adv + 1e-12);
      if (ratio >= hi) CHECK(term == Approx(hi * adv));
      if (ratio < hi) CHECK(term == Approx(ratio * adv));
    } else if (adv < 0) {
      CHECK(term <= lo * adv + 1e-12);
      if (ratio <= lo) CHECK(term == Approx(lo * adv));
      if (ratio > lo) CHECK(term == Approx(ratio * adv));
    }
    // and never exceeds the raw importance-weighted term
    CHECK(term <= ratio * adv + 1e-12);
  }
}

TEST_CASE("overlong penalty") {
  CHECK(overlong_penalty(100, 100, 200) == 0.0);
  CHECK(overlong_penalty(50, 100, 200) == 0.0);
  CHECK(overlong_penalty(200, 100, 200) == -1.0);
  CHECK(overlong_penalty(500, 100, 200) == -1.0);
  CHECK(overlong_penalty(150, 100, 200) == Approx(-0.5));
  CHECK_THROWS_AS(overlong_penalty(10, 0, 200), ValidationError);
  CHECK_THROWS_AS(overlong_penalty(10, 300, 200), ValidationError);
}
