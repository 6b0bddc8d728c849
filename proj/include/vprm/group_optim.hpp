// Group-relative advantage normalization and clipped surrogate objectives
// for GRPO and DAPO, plus DAPO's dynamic-sampling filter and an optional
// linear overlong penalty. Pure numeric kernels over supplied rewards and
// per-token probability ratios; KL enters as a per-token input signal.
//
// Both objectives are returned as maximisation values; a trainer negates
// them for descent.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "vprm/common.hpp"

namespace vprm {

enum class Algo { Grpo, Dapo };

inline std::string algo_to_string(Algo a) { return a == Algo::Grpo ? "grpo" : "dapo"; }

inline Algo algo_from_string(std::string_view s) {
  const std::string t = normalize_ident(s);
  if (t == "grpo") return Algo::Grpo;
  if (t == "dapo") return Algo::Dapo;
  throw ValidationError("unknown algorithm: '" + std::string(s) + "' (expected grpo or dapo)");
}

struct OptimConfig {
  Algo algo = Algo::Grpo;
  double eps = 0.2;        // GRPO symmetric clip radius
  double eps_low = 0.2;    // DAPO lower radius
  double eps_high = 0.28;  // DAPO upper radius (clip-higher)
  double beta = 0.0;       // KL coefficient; GRPO only

  void validate() const {
    if (eps < 0 || eps_low < 0 || eps_high < 0) throw ValidationError("clip radii must be >= 0");
    if (beta < 0) throw ValidationError("beta must be >= 0");
  }
};

// G sampled trajectories for one input: scalar rewards, per-token
// probability ratios against the sampling snapshot, optional per-token KL
// values and DAPO token weights, and the terminal correctness bit.
struct GroupBatch {
  std::vector<double> rewards;
  std::vector<std::vector<double>> token_ratios;
  std::vector<std::vector<double>> token_kl;       // empty unless beta > 0
  std::vector<std::vector<double>> token_weights;  // empty => uniform c = 1
  std::vector<bool> correctness;

  std::size_t size() const { return rewards.size(); }

  std::size_t total_tokens() const {
    std::size_t n = 0;
    for (const auto& t : token_ratios) n += t.size();
    return n;
  }
};

struct AdvantageVector {
  std::vector<double> values;
  double group_mean = 0.0;
  double group_std = 0.0;  // population std; 0 marks a zero-variance group
};

// Z-score over the group with population statistics. A zero-variance group
// maps to all-zero advantages.
inline AdvantageVector normalize_advantages(const std::vector<double>& rewards,
                                            const OptimConfig& config = {}) {
  config.validate();
  const std::size_t g = rewards.size();
  if (g < 2) {
    throw NumericError("advantage normalization needs a group of size >= 2, got " +
                       std::to_string(g));
  }
  double mean = 0.0;
  for (double r : rewards) {
    if (!std::isfinite(r)) throw NumericError("non-finite reward in group");
    mean += r;
  }
  mean /= static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(g);
  AdvantageVector out;
  out.group_mean = mean;
  out.group_std = std::sqrt(var);
  out.values.resize(g, 0.0);
  if (out.group_std > 0.0) {
    for (std::size_t i = 0; i < g; ++i) out.values[i] = (rewards[i] - mean) / out.group_std;
  }
  return out;
}

// Dynamic sampling: keep a group only when it mixes correct and incorrect
// trajectories, so advantages carry gradient signal.
inline bool dapo_filter(const std::vector<bool>& correctness) {
  const std::size_t n_correct =
      static_cast<std::size_t>(std::count(correctness.begin(), correctness.end(), true));
  return n_correct > 0 && n_correct < correctness.size();
}

inline double clip(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

// min(ratio * adv, clip(ratio, lo, hi) * adv) — the PPO-style pessimistic
// token term shared by both objectives.
inline double clipped_token_term(double ratio, double adv, double lo, double hi) {
  return std::min(ratio * adv, clip(ratio, lo, hi) * adv);
}

// Subgradient of clipped_token_term in the ratio. For adv >= 0 the term is
// adv*min(ratio, hi); for adv < 0 it is adv*max(ratio, lo).
inline double clipped_token_term_dratio(double ratio, double adv, double lo, double hi) {
  if (adv >= 0.0) return ratio <= hi ? adv : 0.0;
  return ratio >= lo ? adv : 0.0;
}

struct LossResult {
  double objective = 0.0;
  std::vector<std::vector<double>> token_terms;
};

namespace detail {

inline void check_group_shape(const GroupBatch& batch, const AdvantageVector& adv, bool need_kl) {
  const std::size_t g = batch.size();
  if (g == 0) throw NumericError("empty group");
  if (batch.token_ratios.size() != g || adv.values.size() != g) {
    throw NumericError("group shape mismatch: rewards/ratios/advantages disagree");
  }
  for (const auto& t : batch.token_ratios) {
    if (t.empty()) throw NumericError("trajectory with zero tokens");
  }
  if (need_kl) {
    if (batch.token_kl.size() != g) throw NumericError("beta > 0 but token_kl is missing");
    for (std::size_t i = 0; i < g; ++i) {
      if (batch.token_kl[i].size() != batch.token_ratios[i].size()) {
        throw NumericError("token_kl shape does not match token_ratios");
      }
    }
  }
}

}  // namespace detail

// GRPO objective: (1/G) sum_i (1/|y_i|) sum_t min(p A_i, clip(p) A_i)
// minus beta times the KL signal aggregated with the same nesting.
inline LossResult grpo_loss(const GroupBatch& batch, const AdvantageVector& adv,
                            const OptimConfig& config) {
  config.validate();
  detail::check_group_shape(batch, adv, config.beta > 0.0);
  const double lo = 1.0 - config.eps;
  const double hi = 1.0 + config.eps;
  const std::size_t g = batch.size();
  LossResult out;
  out.token_terms.resize(g);
  double surrogate = 0.0;
  double kl_term = 0.0;
  for (std::size_t i = 0; i < g; ++i) {
    const auto& ratios = batch.token_ratios[i];
    double traj_sum = 0.0;
    out.token_terms[i].reserve(ratios.size());
    for (double p : ratios) {
      const double term = clipped_token_term(p, adv.values[i], lo, hi);
      out.token_terms[i].push_back(term);
      traj_sum += term;
    }
    surrogate += traj_sum / static_cast<double>(ratios.size());
    if (config.beta > 0.0) {
      double kl_sum = 0.0;
      for (double k : batch.token_kl[i]) kl_sum += k;
      kl_term += kl_sum / static_cast<double>(ratios.size());
    }
  }
  surrogate /= static_cast<double>(g);
  kl_term /= static_cast<double>(g);
  out.objective = surrogate - config.beta * kl_term;
  return out;
}

// DAPO objective over the kept groups: token-level normalisation
// sum c_{i,t} min(p A_i, clip(p, 1-eps_low, 1+eps_high) A_i) / sum |y_i|,
// no KL term. Every group must have passed dapo_filter.
inline double dapo_loss(const std::vector<GroupBatch>& batches,
                        const std::vector<AdvantageVector>& advs, const OptimConfig& config) {
  config.validate();
  if (batches.size() != advs.size()) throw NumericError("batches/advantages count mismatch");
  if (batches.empty()) throw NumericError("dapo_loss needs at least one kept group");
  const double lo = 1.0 - config.eps_low;
  const double hi = 1.0 + config.eps_high;

  // validate weights across the whole kept set: nonnegative, mean 1
  double weight_sum = 0.0;
  std::size_t total_tokens = 0;
  bool any_weights = false;
  for (const auto& batch : batches) {
    if (!dapo_filter(batch.correctness)) {
      throw ContractError("dapo_loss received a group that fails the dynamic-sampling filter");
    }
    if (!batch.token_weights.empty()) any_weights = true;
    total_tokens += batch.total_tokens();
  }
  if (any_weights) {
    for (const auto& batch : batches) {
      if (batch.token_weights.size() != batch.token_ratios.size()) {
        throw NumericError("token_weights shape does not match token_ratios");
      }
      for (std::size_t i = 0; i < batch.token_weights.size(); ++i) {
        if (batch.token_weights[i].size() != batch.token_ratios[i].size()) {
          throw NumericError("token_weights shape does not match token_ratios");
        }
        for (double c : batch.token_weights[i]) {
          if (!(c >= 0.0)) throw ValidationError("token weights must be nonnegative");
          weight_sum += c;
        }
      }
    }
    const double mean_weight = weight_sum / static_cast<double>(total_tokens);
    if (std::abs(mean_weight - 1.0) > 1e-6) {
      throw ValidationError("token weights must be normalized to mean 1, got mean " +
                            std::to_string(mean_weight));
    }
  }

  double numerator = 0.0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const GroupBatch& batch = batches[b];
    detail::check_group_shape(batch, advs[b], false);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& ratios = batch.token_ratios[i];
      for (std::size_t t = 0; t < ratios.size(); ++t) {
        const double c =
            batch.token_weights.empty() ? 1.0 : batch.token_weights[i][t];
        numerator += c * clipped_token_term(ratios[t], advs[b].values[i], lo, hi);
      }
    }
  }
  return numerator / static_cast<double>(total_tokens);
}

// Linear overlong penalty: 0 up to the soft limit, -1 at and beyond the
// hard limit. Disabled by default in every pipeline that exposes it.
inline double overlong_penalty(std::size_t length, std::size_t soft_limit, std::size_t hard_limit) {
  if (soft_limit == 0 || soft_limit > hard_limit) {
    throw ValidationError("overlong penalty requires 0 < soft_limit <= hard_limit");
  }
  if (length <= soft_limit) return 0.0;
  if (length >= hard_limit) return -1.0;
  return -static_cast<double>(length - soft_limit) /
         static_cast<double>(hard_limit - soft_limit);
}

}  // namespace vprm
