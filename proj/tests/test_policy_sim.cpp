#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "vprm/policy_sim.hpp"

using namespace vprm;
using Catch::Approx;

namespace {

struct SimFixture {
  SchemaSet schemas = SchemaSet::builtin();
  RuleTableSet rules = RuleTableSet::builtin(schemas);
  Simulator sim{schemas, rules};
};

// Central finite differences of the surrogate objective in every logit.
PolicyGrad numeric_gradient(const Simulator& sim, TabularPolicy policy,
                            const std::vector<SampledGroup>& groups,
                            const std::vector<AdvantageVector>& advs, const OptimConfig& config,
                            const TabularPolicy& reference, double h = 1e-5) {
  PolicyGrad grad(policy);
  for (std::size_t head = 0; head < policy.head_count(); ++head) {
    auto& logits = policy.head_logits(head);
    for (std::size_t j = 0; j < logits.size(); ++j) {
      const double saved = logits[j];
      logits[j] = saved + h;
      const double up = sim.objective(policy, groups, advs, config, reference);
      logits[j] = saved - h;
      const double down = sim.objective(policy, groups, advs, config, reference);
      logits[j] = saved;
      grad.heads[head][j] = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

double grad_rel_error(const PolicyGrad& a, const PolicyGrad& b) {
  double diff = 0.0, norm_a = 0.0, norm_b = 0.0;
  for (std::size_t h = 0; h < a.heads.size(); ++h) {
    for (std::size_t j = 0; j < a.heads[h].size(); ++j) {
      const double d = a.heads[h][j] - b.heads[h][j];
      diff += d * d;
      norm_a += a.heads[h][j] * a.heads[h][j];
      norm_b += b.heads[h][j] * b.heads[h][j];
    }
  }
  return std::sqrt(diff) / std::max({std::sqrt(norm_a), std::sqrt(norm_b), 1e-8});
}

}  // namespace

TEST_CASE("policy initialisation") {
  SimFixture f;

  SECTION("uniform init gives equal probabilities per head") {
    const TabularPolicy policy = f.sim.init_policy(DomainId::A, 1, PolicyInit::Uniform);
    REQUIRE(policy.step_logits.size() == 4);
    for (std::size_t h = 0; h < policy.head_count(); ++h) {
      const auto probs = policy.head_probs(h);
      for (double p : probs) CHECK(p == Approx(1.0 / static_cast<double>(probs.size())));
    }
    const auto risk = policy.head_probs(4);
    REQUIRE(risk.size() == 3);
    CHECK(risk[0] == Approx(1.0 / 3.0));
  }

  SECTION("same seed reproduces the same random policy") {
    const TabularPolicy a = f.sim.init_policy(DomainId::C, 99, PolicyInit::Random);
    const TabularPolicy b = f.sim.init_policy(DomainId::C, 99, PolicyInit::Random);
    CHECK(a.step_logits == b.step_logits);
    CHECK(a.risk_logits == b.risk_logits);
    const TabularPolicy c = f.sim.init_policy(DomainId::C, 100, PolicyInit::Random);
    CHECK(a.step_logits != c.step_logits);
  }

  SECTION("head probabilities always renormalize to 1") {
    TabularPolicy policy = f.sim.init_policy(DomainId::E, 3, PolicyInit::Random);
    policy.temperature = 0.7;
    for (std::size_t h = 0; h < policy.head_count(); ++h) {
      const auto probs = policy.head_probs(h);
      double sum = 0.0;
      for (double p : probs) sum += p;
      CHECK(sum == Approx(1.0).margin(1e-9));
    }
  }
}

TEST_CASE("policy KL divergence") {
  SimFixture f;

  SECTION("identical policies have zero KL") {
    const TabularPolicy policy = f.sim.init_policy(DomainId::A, 5, PolicyInit::Random);
    CHECK(policy_kl(policy, policy) == Approx(0.0).margin(1e-12));
  }

  SECTION("hand-evaluated binary head") {
    TabularPolicy policy;
    policy.step_logits = {{std::log(0.9), std::log(0.1)}};
    policy.risk_logits = {0.0, 0.0, 0.0};
    TabularPolicy reference;
    reference.step_logits = {{0.0, 0.0}};
    reference.risk_logits = {0.0, 0.0, 0.0};
    const double expected = 0.9 * std::log(1.8) + 0.1 * std::log(0.2);
    CHECK(policy_kl(policy, reference) == Approx(expected).margin(1e-9));
    CHECK(policy_kl(policy, reference) == Approx(0.3681).margin(1e-4));
  }

  SECTION("KL is nonnegative on random pairs") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const TabularPolicy a = f.sim.init_policy(DomainId::F, seed, PolicyInit::Random);
      const TabularPolicy b = f.sim.init_policy(DomainId::F, seed + 1000, PolicyInit::Random);
      CHECK(policy_kl(a, b) >= -1e-12);
    }
  }

  SECTION("shape mismatch is an error") {
    const TabularPolicy a = f.sim.init_policy(DomainId::A, 1);
    const TabularPolicy b = f.sim.init_policy(DomainId::B, 1);
    CHECK_THROWS_AS(policy_kl(a, b), NumericError);
  }
}

TEST_CASE("group sampling") {
  SimFixture f;
  const auto dataset = f.sim.make_dataset(DomainId::A, 1, 11);
  const RewardConfig reward;

  SECTION("fixed seed reproduces the group") {
    const TabularPolicy policy = f.sim.init_policy(DomainId::A, 2, PolicyInit::Random);
    const SampledGroup a = f.sim.sample_group(policy, dataset[0], 16, 77, reward);
    const SampledGroup b = f.sim.sample_group(policy, dataset[0], 16, 77, reward);
    CHECK(a.choices == b.choices);
    CHECK(a.rewards == b.rewards);
    const SampledGroup c = f.sim.sample_group(policy, dataset[0], 16, 78, reward);
    CHECK(a.choices != c.choices);
  }

  SECTION("a deterministic one-hot policy yields a zero-variance group") {
    TabularPolicy policy = f.sim.init_policy(DomainId::A, 3);
    for (auto& head : policy.step_logits) head[0] = 50.0;
    policy.risk_logits[0] = 50.0;
    const SampledGroup group = f.sim.sample_group(policy, dataset[0], 8, 5, reward);
    for (std::size_t i = 1; i < group.size(); ++i) {
      CHECK(group.choices[i] == group.choices[0]);
    }
    const AdvantageVector adv = normalize_advantages(group.rewards);
    CHECK(adv.group_std == 0.0);
    for (double v : adv.values) CHECK(v == 0.0);
  }

  SECTION("sampled traces are canonical: strict re-parse and T+1 tokens") {
    const TabularPolicy policy = f.sim.init_policy(DomainId::A, 4, PolicyInit::Random);
    const SampledGroup group = f.sim.sample_group(policy, dataset[0], 4, 9, reward);
    for (std::size_t i = 0; i < group.size(); ++i) {
      const ParseReport report = parse_trace(render_trace(group.traces[i]), DomainId::A);
      REQUIRE(report.ok);
      CHECK(report.format_ok);
      CHECK(*report.trace == group.traces[i]);
      CHECK(group.choices[i].size() == 5);  // 4 steps + risk head
      CHECK(group.breakdowns[i].format == 1);
    }
  }

  SECTION("uniform init puts sampled coherence near 1/3") {
    const TabularPolicy policy = f.sim.init_policy(DomainId::A, 6);
    double coherent = 0, total = 0;
    for (std::uint64_t s = 0; s < 400; ++s) {
      const SampledGroup group = f.sim.sample_group(policy, dataset[0], 16, s, reward);
      for (bool c : group.coherent) {
        coherent += c ? 1 : 0;
        total += 1;
      }
    }
    CHECK(coherent / total == Approx(1.0 / 3.0).margin(0.03));
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  SimFixture f;
  const RewardConfig reward;
  const auto dataset = f.sim.make_dataset(DomainId::A, 3, 21, /*shared_gold=*/false);

  auto run_check = [&](Algo algo, double beta, std::uint64_t seed) {
    OptimConfig config;
    config.algo = algo;
    config.beta = beta;
    config.eps = 0.2;
    config.eps_low = 0.2;
    config.eps_high = 0.28;

    const TabularPolicy reference = f.sim.init_policy(DomainId::A, seed, PolicyInit::Random);
    TabularPolicy snapshot = reference;

    // sample under the snapshot, then wander the current policy away from it
    // so that ratios differ from one and some tokens clip
    std::vector<SampledGroup> groups;
    std::vector<AdvantageVector> advs;
    for (std::size_t d = 0; d < dataset.size(); ++d) {
      groups.push_back(
          f.sim.sample_group(snapshot, dataset[d], 8, derive_seed(seed, d), reward));
      advs.push_back(normalize_advantages(groups.back().rewards));
    }
    TabularPolicy current = snapshot;
    Rng wander(derive_seed(seed, 0xabc));
    for (std::size_t h = 0; h < current.head_count(); ++h) {
      for (double& z : current.head_logits(h)) z += 0.35 * wander.normal();
    }

    if (algo == Algo::Dapo) {
      bool any_kept = false;
      for (const auto& g : groups) any_kept = any_kept || dapo_filter(g.correctness);
      REQUIRE(any_kept);
    }

    const PolicyGrad analytic = f.sim.gradient(current, groups, advs, config, reference);
    const PolicyGrad numeric =
        numeric_gradient(f.sim, current, groups, advs, config, reference);
    const double err = grad_rel_error(analytic, numeric);
    CAPTURE(algo_to_string(algo), beta, seed, err);
    CHECK(err < 1e-4);
  };

  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    run_check(Algo::Grpo, 0.0, seed);
    run_check(Algo::Grpo, 0.25, seed);
    run_check(Algo::Dapo, 0.0, seed);
  }
}

TEST_CASE("one unclipped ascent step improves expected reward (statistical)") {
  SimFixture f;
  const RewardConfig reward;
  OptimConfig config;
  config.eps = 1e9;  // clipping disabled
  config.beta = 0.0;

  double total_improvement = 0.0;
  int improved = 0;
  const int n_seeds = 24;
  for (std::uint64_t seed = 1; seed <= n_seeds; ++seed) {
    const auto dataset = f.sim.make_dataset(DomainId::A, 1, seed);
    TabularPolicy policy = f.sim.init_policy(DomainId::A, seed, PolicyInit::Random);
    const TabularPolicy reference = policy;

    std::vector<SampledGroup> groups = {
        f.sim.sample_group(policy, dataset[0], 256, derive_seed(seed, 1), reward)};
    std::vector<AdvantageVector> advs = {normalize_advantages(groups[0].rewards)};
    double before = 0.0;
    for (double r : groups[0].rewards) before += r;
    before /= static_cast<double>(groups[0].size());

    const PolicyGrad grad = f.sim.gradient(policy, groups, advs, config, reference);
    for (std::size_t h = 0; h < policy.head_count(); ++h) {
      for (std::size_t j = 0; j < policy.head_logits(h).size(); ++j) {
        policy.head_logits(h)[j] += 1.0 * grad.heads[h][j];
      }
    }

    // fresh evaluation sample under the updated policy
    const SampledGroup after_group =
        f.sim.sample_group(policy, dataset[0], 256, derive_seed(seed, 2), reward);
    double after = 0.0;
    for (double r : after_group.rewards) after += r;
    after /= static_cast<double>(after_group.size());

    total_improvement += after - before;
    if (after >= before) ++improved;
  }
  // in expectation the step is an ascent direction; sampling noise may lose
  // individual seeds but not the aggregate
  CHECK(total_improvement / n_seeds > 0.0);
  CHECK(improved >= n_seeds * 2 / 3);
}

TEST_CASE("training loop") {
  SimFixture f;

  SECTION("zero learning rate freezes every logged series") {
    const auto dataset = f.sim.make_dataset(DomainId::A, 4, 1);
    TabularPolicy policy = f.sim.init_policy(DomainId::A, 1);
    TrainConfig config;
    config.iterations = 5;
    config.group_size = 8;
    config.learning_rate = 0.0;
    config.seed = 3;
    const TrainingLog log = f.sim.train(policy, dataset, config);
    for (const auto& it : log.iterations) {
      CHECK(it.kl == 0.0);
      CHECK(it.format_mean == 1.0);
    }
    // the policy never moved, so a rerun reproduces the same series
    TabularPolicy policy2 = f.sim.init_policy(DomainId::A, 1);
    const TrainingLog log2 = f.sim.train(policy2, dataset, config);
    for (std::size_t i = 0; i < log.iterations.size(); ++i) {
      CHECK(log.iterations[i].process_mean == log2.iterations[i].process_mean);
      CHECK(log.iterations[i].outcome_mean == log2.iterations[i].outcome_mean);
    }
  }

  SECTION("GRPO training raises outcome reward and coherence") {
    const auto dataset = f.sim.make_dataset(DomainId::A, 4, 17);
    TabularPolicy policy = f.sim.init_policy(DomainId::A, 17);
    TrainConfig config;
    config.iterations = 120;
    config.group_size = 16;
    config.seed = 17;
    config.learning_rate = 2.0;
    const TrainingLog log = f.sim.train(policy, dataset, config);
    CHECK(log.final_stats().outcome_mean > log.iterations.front().outcome_mean);
    CHECK(log.final_stats().outcome_mean > 0.8);
    CHECK(log.final_stats().coherence > 0.8);
    CHECK(log.final_stats().format_mean == 1.0);
  }

  SECTION("DAPO training also learns") {
    const auto dataset = f.sim.make_dataset(DomainId::A, 4, 23);
    TabularPolicy policy = f.sim.init_policy(DomainId::A, 23);
    TrainConfig config;
    config.optim.algo = Algo::Dapo;
    config.iterations = 120;
    config.group_size = 16;
    config.seed = 23;
    config.learning_rate = 2.0;
    const TrainingLog log = f.sim.train(policy, dataset, config);
    CHECK(log.final_stats().outcome_mean > 0.8);
  }

  SECTION("beta > 0 keeps the policy near the reference") {
    const auto dataset = f.sim.make_dataset(DomainId::A, 4, 29);
    TrainConfig config;
    config.iterations = 80;
    config.group_size = 16;
    config.seed = 29;
    config.learning_rate = 2.0;

    TabularPolicy free_policy = f.sim.init_policy(DomainId::A, 29);
    const TrainingLog free_log = f.sim.train(free_policy, dataset, config);

    config.optim.beta = 2.0;
    TabularPolicy tied_policy = f.sim.init_policy(DomainId::A, 29);
    const TrainingLog tied_log = f.sim.train(tied_policy, dataset, config);
    CHECK(tied_log.final_stats().kl < free_log.final_stats().kl);
  }

  SECTION("inner epochs beyond the first activate clipping and stay finite") {
    const auto dataset = f.sim.make_dataset(DomainId::A, 2, 31);
    TabularPolicy policy = f.sim.init_policy(DomainId::A, 31);
    TrainConfig config;
    config.iterations = 40;
    config.group_size = 8;
    config.inner_epochs = 3;
    config.seed = 31;
    config.learning_rate = 2.0;
    const TrainingLog log = f.sim.train(policy, dataset, config);
    CHECK(policy.finite());
    CHECK(log.iterations.size() == 40);
  }

  SECTION("an inconsistent instance is rejected") {
    auto dataset = f.sim.make_dataset(DomainId::A, 1, 37);
    dataset[0].gold_risk = dataset[0].gold_risk == RiskLabel::Low ? RiskLabel::High : RiskLabel::Low;
    TabularPolicy policy = f.sim.init_policy(DomainId::A, 37);
    TrainConfig config;
    config.iterations = 1;
    CHECK_THROWS_AS(f.sim.train(policy, dataset, config), ValidationError);
  }
}
