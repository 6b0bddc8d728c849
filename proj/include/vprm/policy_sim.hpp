// Tabular softmax policy simulator for one bias domain: independent
// categorical heads, one per schema step plus a final risk head. Groups of
// trajectories are sampled, rendered as canonical traces, scored by the
// reward module, and the policy is updated by an analytic policy-gradient
// step through the clipped GRPO/DAPO surrogates.
//
// "Tokens" are the per-head choices, so every trajectory has T + 1 tokens;
// that grounds the token-level normalisation of both objectives. Traces are
// rendered canonically, which pins the format reward at 1 and reproduces
// the early-saturating format curve.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vprm/common.hpp"
#include "vprm/group_optim.hpp"
#include "vprm/instance.hpp"
#include "vprm/metrics.hpp"
#include "vprm/reward.hpp"
#include "vprm/rules.hpp"
#include "vprm/schema.hpp"
#include "vprm/trace.hpp"

namespace vprm {

struct TabularPolicy {
  DomainId domain = DomainId::A;
  std::vector<std::vector<double>> step_logits;  // one head per schema step
  std::vector<double> risk_logits;               // low, moderate, high
  double temperature = 1.0;

  std::size_t head_count() const { return step_logits.size() + 1; }

  const std::vector<double>& head_logits(std::size_t head) const {
    return head < step_logits.size() ? step_logits[head] : risk_logits;
  }

  std::vector<double>& head_logits(std::size_t head) {
    return head < step_logits.size() ? step_logits[head] : risk_logits;
  }

  std::vector<double> head_probs(std::size_t head) const {
    const auto& logits = head_logits(head);
    std::vector<double> probs(logits.size());
    double max_logit = logits[0];
    for (double z : logits) max_logit = std::max(max_logit, z);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      probs[i] = std::exp((logits[i] - max_logit) / temperature);
      sum += probs[i];
    }
    for (double& p : probs) p /= sum;
    return probs;
  }

  bool finite() const {
    for (const auto& head : step_logits) {
      for (double z : head) {
        if (!std::isfinite(z)) return false;
      }
    }
    for (double z : risk_logits) {
      if (!std::isfinite(z)) return false;
    }
    return true;
  }
};

// Exact KL between two policies: sum of per-head categorical divergences.
inline double policy_kl(const TabularPolicy& policy, const TabularPolicy& reference) {
  if (policy.step_logits.size() != reference.step_logits.size() ||
      policy.risk_logits.size() != reference.risk_logits.size()) {
    throw NumericError("policy/reference shape mismatch");
  }
  double kl = 0.0;
  for (std::size_t h = 0; h < policy.head_count(); ++h) {
    const auto q = policy.head_probs(h);
    const auto r = reference.head_probs(h);
    if (q.size() != r.size()) throw NumericError("policy/reference head size mismatch");
    for (std::size_t k = 0; k < q.size(); ++k) {
      if (q[k] > 0.0) kl += q[k] * std::log(q[k] / r[k]);
    }
  }
  return kl;
}

// Synthetic paper-risk pair: gold labels plus the risk implied by the rule
// table, self-consistent by construction.
struct SimInstance {
  std::string id;
  DomainId domain = DomainId::A;
  std::vector<std::size_t> gold_label_idx;  // per schema step
  RiskLabel gold_risk = RiskLabel::Moderate;

  InstanceRecord to_record(const DomainSchema& schema) const {
    InstanceRecord rec;
    rec.id = id;
    rec.domain = domain;
    rec.gold_risk = gold_risk;
    for (std::size_t s = 0; s < schema.steps.size(); ++s) {
      rec.gold_steps.push_back(
          {schema.steps[s].name, schema.steps[s].allowed_labels[gold_label_idx[s]]});
    }
    return rec;
  }
};

enum class PolicyInit { Uniform, Random };

struct SampledGroup {
  std::vector<std::vector<int>> choices;       // [i][t]: chosen index on head t
  std::vector<std::vector<double>> old_probs;  // [i][t]: probability at sampling time
  std::vector<double> rewards;
  std::vector<bool> correctness;  // outcome reward == 1
  std::vector<ReasoningTrace> traces;
  std::vector<RewardBreakdown> breakdowns;
  std::vector<bool> coherent;  // sampled risk == macro(sampled labels)

  std::size_t size() const { return rewards.size(); }
};

struct IterationStats {
  std::size_t iteration = 0;
  double process_mean = 0.0;
  double outcome_mean = 0.0;
  double format_mean = 0.0;
  double total_mean = 0.0;
  double coherence = 0.0;
  double objective = 0.0;
  double kl = 0.0;
  std::size_t groups = 0;
  std::size_t kept_groups = 0;

  json to_json() const {
    return {{"iteration", iteration},   {"process_reward", process_mean},
            {"outcome_reward", outcome_mean}, {"format_reward", format_mean},
            {"total_reward", total_mean},     {"coherence", coherence},
            {"objective", objective},         {"kl", kl},
            {"groups", groups},               {"kept_groups", kept_groups}};
  }
};

struct TrainingLog {
  std::vector<IterationStats> iterations;

  const IterationStats& final_stats() const {
    if (iterations.empty()) throw NumericError("empty training log");
    return iterations.back();
  }

  json summary() const {
    const auto& last = final_stats();
    return {{"iterations", iterations.size()},
            {"final_process_reward", last.process_mean},
            {"final_outcome_reward", last.outcome_mean},
            {"final_format_reward", last.format_mean},
            {"final_coherence", last.coherence},
            {"final_kl", last.kl}};
  }
};

struct TrainConfig {
  OptimConfig optim;
  RewardConfig reward;
  std::size_t group_size = 16;
  std::size_t iterations = 500;
  std::size_t inner_epochs = 1;
  double learning_rate = 0.5;
  std::uint64_t seed = 0;
};

// Gradient of the surrogate objective, one slot per policy logit.
struct PolicyGrad {
  std::vector<std::vector<double>> heads;

  explicit PolicyGrad(const TabularPolicy& policy) {
    for (std::size_t h = 0; h < policy.head_count(); ++h) {
      heads.emplace_back(policy.head_logits(h).size(), 0.0);
    }
  }
};

class Simulator {
 public:
  Simulator(const SchemaSet& schemas, const RuleTableSet& rules)
      : schemas_(schemas), rules_(rules) {}

  TabularPolicy init_policy(DomainId domain, std::uint64_t seed,
                            PolicyInit init = PolicyInit::Uniform) const {
    const DomainSchema& schema = schemas_.domain(domain);
    TabularPolicy policy;
    policy.domain = domain;
    Rng rng(derive_seed(seed, 0x1717));
    for (const auto& step : schema.steps) {
      std::vector<double> logits(step.allowed_labels.size(), 0.0);
      if (init == PolicyInit::Random) {
        for (double& z : logits) z = rng.normal();
      }
      policy.step_logits.push_back(std::move(logits));
    }
    policy.risk_logits.assign(3, 0.0);
    if (init == PolicyInit::Random) {
      for (double& z : policy.risk_logits) z = rng.normal();
    }
    return policy;
  }

  // Random self-consistent instances; with shared_gold all n instances carry
  // the same gold assignment, which a single unconditioned policy can fit.
  std::vector<SimInstance> make_dataset(DomainId domain, std::size_t n, std::uint64_t seed,
                                        bool shared_gold = true) const {
    const DomainSchema& schema = schemas_.domain(domain);
    std::vector<SimInstance> out;
    Rng rng(derive_seed(seed, 0xda7a));
    std::vector<std::size_t> labels(schema.steps.size());
    auto roll = [&] {
      for (std::size_t s = 0; s < schema.steps.size(); ++s) {
        labels[s] = static_cast<std::size_t>(rng.below(schema.steps[s].allowed_labels.size()));
      }
    };
    roll();
    for (std::size_t i = 0; i < n; ++i) {
      if (!shared_gold && i > 0) roll();
      SimInstance inst;
      inst.id = "sim-" + std::to_string(i);
      inst.domain = domain;
      inst.gold_label_idx = labels;
      Assignment a;
      for (std::size_t s = 0; s < schema.steps.size(); ++s) {
        a[schema.steps[s].name] = schema.steps[s].allowed_labels[labels[s]];
      }
      inst.gold_risk = evaluate_macro(rules_.table(domain), schema, a);
      out.push_back(std::move(inst));
    }
    return out;
  }

  SampledGroup sample_group(const TabularPolicy& policy, const SimInstance& instance,
                            std::size_t group_size, std::uint64_t seed,
                            const RewardConfig& reward) const {
    if (group_size < 2) throw NumericError("group size must be >= 2");
    const DomainSchema& schema = schemas_.domain(instance.domain);
    const InstanceRecord record = instance.to_record(schema);
    const std::size_t n_steps = schema.steps.size();

    std::vector<std::vector<double>> probs;
    for (std::size_t h = 0; h < policy.head_count(); ++h) probs.push_back(policy.head_probs(h));

    SampledGroup group;
    for (std::size_t i = 0; i < group_size; ++i) {
      Rng rng(derive_seed(seed, 0xbeef00 + i));
      std::vector<int> choice(n_steps + 1);
      std::vector<double> old_p(n_steps + 1);
      ReasoningTrace trace;
      trace.domain = instance.domain;
      Assignment own_labels;
      for (std::size_t h = 0; h <= n_steps; ++h) {
        const int k = sample_index(probs[h], rng);
        choice[h] = k;
        old_p[h] = probs[h][static_cast<std::size_t>(k)];
        if (h < n_steps) {
          const StepSpec& spec = schema.steps[h];
          const std::string& label = spec.allowed_labels[static_cast<std::size_t>(k)];
          trace.steps.push_back({spec.name, label, ""});
          own_labels[spec.name] = label;
        } else {
          trace.risk = static_cast<RiskLabel>(k);
        }
      }
      // canonical rendering keeps the format reward at 1 by construction
      RewardBreakdown breakdown =
          total_reward(trace, record, reward.weights, reward.mode, /*format_bit=*/1);
      group.correctness.push_back(breakdown.outcome == 1);
      group.coherent.push_back(evaluate_macro(rules_.table(instance.domain), schema, own_labels) ==
                               trace.risk);
      group.rewards.push_back(breakdown.total);
      group.choices.push_back(std::move(choice));
      group.old_probs.push_back(std::move(old_p));
      group.traces.push_back(std::move(trace));
      group.breakdowns.push_back(std::move(breakdown));
    }
    return group;
  }

  // Probability ratios of the current policy against the sampling snapshot.
  static std::vector<std::vector<double>> current_ratios(const TabularPolicy& policy,
                                                         const SampledGroup& group) {
    std::vector<std::vector<double>> probs;
    for (std::size_t h = 0; h < policy.head_count(); ++h) probs.push_back(policy.head_probs(h));
    std::vector<std::vector<double>> ratios(group.size());
    for (std::size_t i = 0; i < group.size(); ++i) {
      ratios[i].resize(group.choices[i].size());
      for (std::size_t t = 0; t < group.choices[i].size(); ++t) {
        ratios[i][t] =
            probs[t][static_cast<std::size_t>(group.choices[i][t])] / group.old_probs[i][t];
      }
    }
    return ratios;
  }

  static GroupBatch to_batch(const TabularPolicy& policy, const SampledGroup& group) {
    GroupBatch batch;
    batch.rewards = group.rewards;
    batch.correctness = group.correctness;
    batch.token_ratios = current_ratios(policy, group);
    return batch;
  }

  // Maximisation objective over all sampled groups at the current policy:
  // GRPO averages the kernel surrogate over groups and subtracts
  // beta * exact KL(policy || reference); DAPO applies token-level
  // normalisation over the kept groups only.
  double objective(const TabularPolicy& policy, const std::vector<SampledGroup>& groups,
                   const std::vector<AdvantageVector>& advs, const OptimConfig& config,
                   const TabularPolicy& reference) const {
    if (config.algo == Algo::Grpo) {
      double surrogate = 0.0;
      OptimConfig no_kl = config;
      no_kl.beta = 0.0;
      for (std::size_t b = 0; b < groups.size(); ++b) {
        surrogate += grpo_loss(to_batch(policy, groups[b]), advs[b], no_kl).objective;
      }
      surrogate /= static_cast<double>(groups.size());
      if (config.beta > 0.0) surrogate -= config.beta * policy_kl(policy, reference);
      return surrogate;
    }
    std::vector<GroupBatch> kept;
    std::vector<AdvantageVector> kept_advs;
    for (std::size_t b = 0; b < groups.size(); ++b) {
      if (dapo_filter(groups[b].correctness)) {
        kept.push_back(to_batch(policy, groups[b]));
        kept_advs.push_back(advs[b]);
      }
    }
    if (kept.empty()) return 0.0;
    return dapo_loss(kept, kept_advs, config);
  }

  // Analytic gradient of objective() in the policy logits.
  PolicyGrad gradient(const TabularPolicy& policy, const std::vector<SampledGroup>& groups,
                      const std::vector<AdvantageVector>& advs, const OptimConfig& config,
                      const TabularPolicy& reference) const {
    PolicyGrad grad(policy);
    std::vector<std::vector<double>> probs;
    for (std::size_t h = 0; h < policy.head_count(); ++h) probs.push_back(policy.head_probs(h));

    double clip_lo, clip_hi;
    if (config.algo == Algo::Grpo) {
      clip_lo = 1.0 - config.eps;
      clip_hi = 1.0 + config.eps;
    } else {
      clip_lo = 1.0 - config.eps_low;
      clip_hi = 1.0 + config.eps_high;
    }

    // per-(group, trajectory) scale of the token terms in the objective
    std::vector<const SampledGroup*> active;
    std::vector<std::size_t> active_idx;
    double dapo_total_tokens = 0.0;
    for (std::size_t b = 0; b < groups.size(); ++b) {
      if (config.algo == Algo::Dapo && !dapo_filter(groups[b].correctness)) continue;
      active.push_back(&groups[b]);
      active_idx.push_back(b);
      for (const auto& c : groups[b].choices) dapo_total_tokens += static_cast<double>(c.size());
    }
    if (active.empty()) return grad;

    for (std::size_t a = 0; a < active.size(); ++a) {
      const SampledGroup& group = *active[a];
      const AdvantageVector& adv = advs[active_idx[a]];
      for (std::size_t i = 0; i < group.size(); ++i) {
        const std::size_t tokens = group.choices[i].size();
        const double scale =
            config.algo == Algo::Grpo
                ? 1.0 / (static_cast<double>(groups.size()) * static_cast<double>(group.size()) *
                         static_cast<double>(tokens))
                : 1.0 / dapo_total_tokens;
        for (std::size_t t = 0; t < tokens; ++t) {
          const auto k = static_cast<std::size_t>(group.choices[i][t]);
          const double q_k = probs[t][k];
          const double ratio = q_k / group.old_probs[i][t];
          const double dterm =
              clipped_token_term_dratio(ratio, adv.values[i], clip_lo, clip_hi);
          if (dterm == 0.0) continue;
          const double base = scale * dterm / group.old_probs[i][t];
          // softmax jacobian: dq_k/dz_j = q_k (delta_kj - q_j) / temperature
          auto& head = grad.heads[t];
          for (std::size_t j = 0; j < head.size(); ++j) {
            const double delta = (j == k) ? 1.0 : 0.0;
            head[j] += base * q_k * (delta - probs[t][j]) / policy.temperature;
          }
        }
      }
    }

    if (config.algo == Algo::Grpo && config.beta > 0.0) {
      for (std::size_t h = 0; h < policy.head_count(); ++h) {
        const auto q = policy.head_probs(h);
        const auto r = reference.head_probs(h);
        double kl_h = 0.0;
        for (std::size_t k = 0; k < q.size(); ++k) {
          if (q[k] > 0.0) kl_h += q[k] * std::log(q[k] / r[k]);
        }
        for (std::size_t j = 0; j < q.size(); ++j) {
          const double dkl = q[j] / policy.temperature * (std::log(q[j] / r[j]) - kl_h);
          grad.heads[h][j] -= config.beta * dkl;
        }
      }
    }
    return grad;
  }

  TrainingLog train(TabularPolicy& policy, const std::vector<SimInstance>& dataset,
                    const TrainConfig& config) const {
    if (dataset.empty()) throw ValidationError("training dataset is empty");
    config.optim.validate();
    config.reward.validate();
    for (const auto& inst : dataset) {
      const DomainSchema& schema = schemas_.domain(inst.domain);
      Assignment a;
      for (std::size_t s = 0; s < schema.steps.size(); ++s) {
        a[schema.steps[s].name] = schema.steps[s].allowed_labels[inst.gold_label_idx[s]];
      }
      if (evaluate_macro(rules_.table(inst.domain), schema, a) != inst.gold_risk) {
        throw ValidationError("instance '" + inst.id + "' is not self-consistent");
      }
    }

    const TabularPolicy reference = policy;
    TrainingLog log;
    for (std::size_t iter = 0; iter < config.iterations; ++iter) {
      IterationStats stats;
      stats.iteration = iter;

      std::vector<SampledGroup> groups;
      std::vector<AdvantageVector> advs;
      std::size_t n_traj = 0;
      for (std::size_t d = 0; d < dataset.size(); ++d) {
        const std::uint64_t group_seed =
            derive_seed(config.seed, iter * dataset.size() + d + 1);
        SampledGroup group =
            sample_group(policy, dataset[d], config.group_size, group_seed, config.reward);
        advs.push_back(normalize_advantages(group.rewards));
        for (std::size_t i = 0; i < group.size(); ++i) {
          stats.process_mean += group.breakdowns[i].process_total;
          stats.outcome_mean += group.breakdowns[i].outcome;
          stats.format_mean += group.breakdowns[i].format;
          stats.total_mean += group.breakdowns[i].total;
          stats.coherence += group.coherent[i] ? 1.0 : 0.0;
          ++n_traj;
        }
        groups.push_back(std::move(group));
      }
      stats.process_mean /= static_cast<double>(n_traj);
      stats.outcome_mean /= static_cast<double>(n_traj);
      stats.format_mean /= static_cast<double>(n_traj);
      stats.total_mean /= static_cast<double>(n_traj);
      stats.coherence /= static_cast<double>(n_traj);
      stats.groups = groups.size();
      for (const auto& g : groups) {
        if (dapo_filter(g.correctness)) ++stats.kept_groups;
      }

      stats.objective = objective(policy, groups, advs, config.optim, reference);
      for (std::size_t epoch = 0; epoch < config.inner_epochs; ++epoch) {
        const PolicyGrad grad = gradient(policy, groups, advs, config.optim, reference);
        for (std::size_t h = 0; h < policy.head_count(); ++h) {
          auto& logits = policy.head_logits(h);
          for (std::size_t j = 0; j < logits.size(); ++j) {
            logits[j] += config.learning_rate * grad.heads[h][j];
          }
        }
        if (!policy.finite()) {
          throw NumericError("policy diverged: non-finite logits at iteration " +
                             std::to_string(iter));
        }
      }
      stats.kl = policy_kl(policy, reference);
      log.iterations.push_back(stats);
    }
    return log;
  }

 private:
  static int sample_index(const std::vector<double>& probs, Rng& rng) {
    const double u = rng.uniform01();
    double acc = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      acc += probs[k];
      if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(probs.size()) - 1;
  }

  const SchemaSet& schemas_;
  const RuleTableSet& rules_;
};

}  // namespace vprm
