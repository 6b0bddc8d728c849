// Closed-form and Monte-Carlo verification of advantage sign separation:
// when correct trajectories carry strictly larger expected reward, the
// group-normalized advantage has positive conditional mean on the correct
// event and negative conditional mean on its complement.
//
// Analytic values use the large-group limit (R - m) / sigma of the mixture;
// empirical values use the finite-G group statistics that GRPO actually
// computes, so a small finite-G bias against the analytic numbers is
// expected and reported rather than hidden.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vprm/common.hpp"
#include "vprm/group_optim.hpp"

namespace vprm {

using json = nlohmann::json;

// Bounded sampling law with a prescribed mean; bounded families keep the
// finite-variance assumption true by construction.
struct LawDescriptor {
  enum class Kind { PointMass, Uniform, TruncatedNormal };

  Kind kind = Kind::PointMass;
  double mean = 0.0;
  double half_width = 0.0;  // uniform support [mean - hw, mean + hw]
  double sigma = 0.0;       // truncated-normal scale
  double trunc_k = 3.0;     // symmetric truncation at +/- k * sigma

  void validate() const {
    switch (kind) {
      case Kind::PointMass:
        return;
      case Kind::Uniform:
        if (half_width < 0) throw ValidationError("uniform half_width must be >= 0");
        return;
      case Kind::TruncatedNormal:
        if (sigma < 0) throw ValidationError("truncated normal sigma must be >= 0");
        if (trunc_k <= 0) throw ValidationError("truncation multiple must be > 0");
        return;
    }
    throw ValidationError("unknown law kind");
  }

  double variance() const {
    switch (kind) {
      case Kind::PointMass:
        return 0.0;
      case Kind::Uniform:
        return half_width * half_width / 3.0;
      case Kind::TruncatedNormal: {
        if (sigma == 0.0) return 0.0;
        // symmetric truncation keeps the mean; variance shrinks by the
        // standard truncated-normal factor
        const double k = trunc_k;
        const double phi = std::exp(-0.5 * k * k) / std::sqrt(2.0 * M_PI);
        const double mass = std::erf(k / std::sqrt(2.0));  // 2*Phi(k) - 1
        return sigma * sigma * (1.0 - 2.0 * k * phi / mass);
      }
    }
    return 0.0;
  }

  double sample(Rng& rng) const {
    switch (kind) {
      case Kind::PointMass:
        return mean;
      case Kind::Uniform:
        return rng.uniform(mean - half_width, mean + half_width);
      case Kind::TruncatedNormal: {
        if (sigma == 0.0) return mean;
        double z = rng.normal();
        while (std::abs(z) > trunc_k) z = rng.normal();
        return mean + sigma * z;
      }
    }
    throw ValidationError("unknown law kind");
  }

  static LawDescriptor from_json(const json& j, double mean) {
    LawDescriptor law;
    law.mean = mean;
    const std::string kind = normalize_ident(j.value("kind", std::string("point_mass")));
    if (kind == "point_mass" || kind == "point") {
      law.kind = Kind::PointMass;
    } else if (kind == "uniform") {
      law.kind = Kind::Uniform;
      law.half_width = j.value("half_width", 0.0);
    } else if (kind == "truncated_normal" || kind == "truncnormal") {
      law.kind = Kind::TruncatedNormal;
      law.sigma = j.value("sigma", 0.0);
      law.trunc_k = j.value("trunc_k", 3.0);
    } else {
      throw ValidationError("unknown reward law kind: '" + kind + "'");
    }
    law.validate();
    return law;
  }

  json to_json() const {
    switch (kind) {
      case Kind::PointMass:
        return {{"kind", "point_mass"}, {"mean", mean}};
      case Kind::Uniform:
        return {{"kind", "uniform"}, {"mean", mean}, {"half_width", half_width}};
      case Kind::TruncatedNormal:
        return {{"kind", "truncated_normal"}, {"mean", mean}, {"sigma", sigma}, {"trunc_k", trunc_k}};
    }
    return nullptr;
  }
};

// Two-component reward mixture: with probability p the trajectory is
// correct and the reward follows dist_c, otherwise dist_i.
struct RewardLawSpec {
  double p = 0.5;
  LawDescriptor dist_c;
  LawDescriptor dist_i;

  double mu_c() const { return dist_c.mean; }
  double mu_i() const { return dist_i.mean; }

  void validate() const {
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("p must lie strictly in (0, 1)");
    dist_c.validate();
    dist_i.validate();
    if (!(mu_c() > mu_i())) {
      throw ContractError("reward-gap assumption violated: mu_c (" + std::to_string(mu_c()) +
                          ") must exceed mu_i (" + std::to_string(mu_i()) + ")");
    }
  }

  double mixture_mean() const { return p * mu_c() + (1.0 - p) * mu_i(); }

  double mixture_variance() const {
    const double m = mixture_mean();
    const double dc = mu_c() - m;
    const double di = mu_i() - m;
    return p * (dist_c.variance() + dc * dc) + (1.0 - p) * (dist_i.variance() + di * di);
  }

  static RewardLawSpec from_json(const json& j) {
    RewardLawSpec spec;
    spec.p = j.at("p").get<double>();
    const double mu_c = j.at("mu_c").get<double>();
    const double mu_i = j.at("mu_i").get<double>();
    spec.dist_c = LawDescriptor::from_json(j.value("dist_c", json::object()), mu_c);
    spec.dist_i = LawDescriptor::from_json(j.value("dist_i", json::object()), mu_i);
    spec.validate();
    return spec;
  }

  json to_json() const {
    return {{"p", p}, {"mu_c", mu_c()}, {"mu_i", mu_i()},
            {"dist_c", dist_c.to_json()}, {"dist_i", dist_i.to_json()}};
  }
};

struct SeparationResult {
  double analytic_pos = 0.0;
  double analytic_neg = 0.0;
  double empirical_pos = 0.0;
  double empirical_neg = 0.0;
  std::size_t trials = 0;
  std::size_t group_size = 0;
  double ci_halfwidth = 0.0;  // larger of the two conditional 95% halfwidths
  std::size_t zero_variance_trials = 0;
  std::size_t n_correct = 0;
  std::size_t n_incorrect = 0;
  double scale = 1.0;  // DAPO token weight applied to every advantage

  json to_json() const {
    return {{"analytic_pos", analytic_pos},
            {"analytic_neg", analytic_neg},
            {"empirical_pos", empirical_pos},
            {"empirical_neg", empirical_neg},
            {"trials", trials},
            {"group_size", group_size},
            {"ci_halfwidth", ci_halfwidth},
            {"zero_variance_trials", zero_variance_trials},
            {"n_correct", n_correct},
            {"n_incorrect", n_incorrect},
            {"scale", scale}};
  }
};

// Large-G limits of the conditional advantage means:
// pos = (1-p)(mu_c - mu_i)/sigma, neg = -p(mu_c - mu_i)/sigma.
inline std::pair<double, double> analytic_gap(const RewardLawSpec& spec) {
  spec.validate();
  const double sigma = std::sqrt(spec.mixture_variance());
  const double delta = spec.mu_c() - spec.mu_i();
  return {(1.0 - spec.p) * delta / sigma, -spec.p * delta / sigma};
}

namespace detail {

inline SeparationResult run_separation(const RewardLawSpec& spec, std::size_t group_size,
                                       std::size_t trials, std::uint64_t seed, double scale) {
  spec.validate();
  if (group_size < 2) throw NumericError("group size must be >= 2");
  if (trials < 1) throw NumericError("trials must be >= 1");
  if (scale < 0.0) throw ContractError("token weight scale must be >= 0");

  SeparationResult result;
  result.trials = trials;
  result.group_size = group_size;
  result.scale = scale;
  const auto [pos, neg] = analytic_gap(spec);
  result.analytic_pos = scale * pos;
  result.analytic_neg = scale * neg;

  double sum_pos = 0.0, sumsq_pos = 0.0;
  double sum_neg = 0.0, sumsq_neg = 0.0;
  std::vector<double> rewards(group_size);
  std::vector<bool> correct(group_size);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    Rng rng(derive_seed(seed, trial));
    for (std::size_t i = 0; i < group_size; ++i) {
      correct[i] = rng.bernoulli(spec.p);
      rewards[i] = correct[i] ? spec.dist_c.sample(rng) : spec.dist_i.sample(rng);
    }
    const AdvantageVector adv = normalize_advantages(rewards);
    if (adv.group_std == 0.0) {
      ++result.zero_variance_trials;
      continue;
    }
    for (std::size_t i = 0; i < group_size; ++i) {
      const double a = scale * adv.values[i];
      if (correct[i]) {
        sum_pos += a;
        sumsq_pos += a * a;
        ++result.n_correct;
      } else {
        sum_neg += a;
        sumsq_neg += a * a;
        ++result.n_incorrect;
      }
    }
  }
  auto finish = [](double sum, double sumsq, std::size_t n, double& mean_out) -> double {
    if (n == 0) return 0.0;
    mean_out = sum / static_cast<double>(n);
    if (n < 2) return 0.0;
    const double var =
        (sumsq - sum * sum / static_cast<double>(n)) / static_cast<double>(n - 1);
    return 1.96 * std::sqrt(std::max(var, 0.0) / static_cast<double>(n));
  };
  const double hw_pos = finish(sum_pos, sumsq_pos, result.n_correct, result.empirical_pos);
  const double hw_neg = finish(sum_neg, sumsq_neg, result.n_incorrect, result.empirical_neg);
  result.ci_halfwidth = std::max(hw_pos, hw_neg);
  return result;
}

}  // namespace detail

inline SeparationResult simulate_separation(const RewardLawSpec& spec, std::size_t group_size,
                                            std::size_t trials, std::uint64_t seed) {
  return detail::run_separation(spec, group_size, trials, seed, 1.0);
}

// DAPO scales trajectory advantages by nonnegative token weights; the
// conditional means scale by exactly c and keep their signs for c > 0.
inline SeparationResult dapo_scaling_check(const RewardLawSpec& spec, double c,
                                           std::size_t group_size, std::size_t trials,
                                           std::uint64_t seed) {
  return detail::run_separation(spec, group_size, trials, seed, c);
}

}  // namespace vprm
