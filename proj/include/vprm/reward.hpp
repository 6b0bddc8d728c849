// Verifiable process reward composition: binary step name/label match
// scores, weighted per-step rewards, the terminal outcome reward, and the
// format reward, under the full / steps_only / outcome_only variants.
//
// Predicted steps align positionally with the gold steps; a missing
// predicted step scores zero on both components and steps emitted beyond
// the gold length contribute nothing. With normalize_process the process
// sum is divided by the mode's maximum achievable sum, so process_total
// stays in [0, 1].
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vprm/common.hpp"
#include "vprm/instance.hpp"
#include "vprm/trace.hpp"

namespace vprm {

struct RewardWeights {
  double w_name = 0.5;
  double w_label = 0.5;
  double w_outcome = 1.0;
  double w_format = 1.0;
  bool normalize_process = true;

  void validate() const {
    if (w_name < 0 || w_label < 0 || w_outcome < 0 || w_format < 0) {
      throw ValidationError("reward weights must be nonnegative");
    }
    if (w_name == 0 && w_label == 0 && w_outcome == 0 && w_format == 0) {
      throw ValidationError("at least one reward weight must be positive");
    }
  }
};

enum class RewardVariant { Full, StepsOnly, OutcomeOnly };

inline std::string variant_to_string(RewardVariant v) {
  switch (v) {
    case RewardVariant::Full: return "full";
    case RewardVariant::StepsOnly: return "steps_only";
    case RewardVariant::OutcomeOnly: return "outcome_only";
  }
  throw ValidationError("invalid reward variant");
}

inline RewardVariant variant_from_string(std::string_view s) {
  const std::string t = normalize_ident(s);
  if (t == "full") return RewardVariant::Full;
  if (t == "steps_only") return RewardVariant::StepsOnly;
  if (t == "outcome_only") return RewardVariant::OutcomeOnly;
  throw ValidationError("unknown reward variant: '" + std::string(s) + "'");
}

struct RewardMode {
  RewardVariant variant = RewardVariant::Full;
  bool include_outcome = true;

  void validate() const {
    if (variant == RewardVariant::OutcomeOnly && !include_outcome) {
      throw ValidationError("outcome_only mode requires include_outcome");
    }
  }
};

// Flat config document: {w_name, w_label, w_outcome, w_format,
// normalize_process, variant, include_outcome}; all fields optional with
// engine defaults.
struct RewardConfig {
  RewardWeights weights;
  RewardMode mode;

  void validate() const {
    weights.validate();
    mode.validate();
  }

  static RewardConfig from_json(const json& j) {
    RewardConfig cfg;
    cfg.weights.w_name = j.value("w_name", cfg.weights.w_name);
    cfg.weights.w_label = j.value("w_label", cfg.weights.w_label);
    cfg.weights.w_outcome = j.value("w_outcome", cfg.weights.w_outcome);
    cfg.weights.w_format = j.value("w_format", cfg.weights.w_format);
    cfg.weights.normalize_process = j.value("normalize_process", cfg.weights.normalize_process);
    if (j.contains("variant")) cfg.mode.variant = variant_from_string(j.at("variant").get<std::string>());
    cfg.mode.include_outcome = j.value("include_outcome", cfg.mode.include_outcome);
    cfg.validate();
    return cfg;
  }

  json to_json() const {
    return {{"w_name", weights.w_name},
            {"w_label", weights.w_label},
            {"w_outcome", weights.w_outcome},
            {"w_format", weights.w_format},
            {"normalize_process", weights.normalize_process},
            {"variant", variant_to_string(mode.variant)},
            {"include_outcome", mode.include_outcome}};
  }
};

struct StepScore {
  double name_score = 0.0;   // effective s^n under the active mode
  double label_score = 0.0;  // effective s^l under the active mode
  double reward = 0.0;       // r_t = w_name * name_score + w_label * label_score
};

struct RewardBreakdown {
  std::vector<StepScore> per_step;
  int outcome = 0;  // predicted risk == gold risk
  int format = 0;
  double process_total = 0.0;
  double total = 0.0;
  RewardVariant variant = RewardVariant::Full;
  int extra_steps = 0;  // predicted steps beyond the gold length, scored 0

  json to_json() const {
    json steps = json::array();
    for (const auto& s : per_step) {
      steps.push_back(
          {{"name_score", s.name_score}, {"label_score", s.label_score}, {"reward", s.reward}});
    }
    return {{"per_step", steps},       {"outcome", outcome},
            {"format", format},        {"process_total", process_total},
            {"total", total},          {"variant", variant_to_string(variant)},
            {"extra_steps", extra_steps}};
  }
};

// Binary exact match after normalization; instantiates both s^n and s^l.
inline double match_score(std::string_view predicted, std::string_view gold) {
  return ident_equal(predicted, gold) ? 1.0 : 0.0;
}

inline int outcome_reward(RiskLabel predicted, RiskLabel gold) { return predicted == gold ? 1 : 0; }

namespace detail {

inline StepScore score_step(std::size_t index, const ReasoningTrace& trace,
                            const InstanceRecord& gold, const RewardWeights& weights,
                            const RewardMode& mode) {
  StepScore score;
  if (mode.variant == RewardVariant::OutcomeOnly) return score;
  if (index < trace.steps.size()) {
    score.name_score = match_score(trace.steps[index].name, gold.gold_steps[index].name);
    if (mode.variant == RewardVariant::Full) {
      score.label_score = match_score(trace.steps[index].label, gold.gold_steps[index].label);
    }
  }
  score.reward = weights.w_name * score.name_score + weights.w_label * score.label_score;
  return score;
}

// Maximum achievable per-step weight under the mode; the normalization
// denominator is this times the gold step count.
inline double active_step_weight(const RewardWeights& weights, const RewardMode& mode) {
  switch (mode.variant) {
    case RewardVariant::Full: return weights.w_name + weights.w_label;
    case RewardVariant::StepsOnly: return weights.w_name;
    case RewardVariant::OutcomeOnly: return 0.0;
  }
  return 0.0;
}

}  // namespace detail

// r_t for the 1-based step index t.
inline double step_reward(int t, const ReasoningTrace& trace, const InstanceRecord& gold,
                          const RewardWeights& weights, const RewardMode& mode) {
  if (t < 1 || static_cast<std::size_t>(t) > gold.gold_steps.size()) {
    throw ContractError("step index " + std::to_string(t) + " outside schema range [1, " +
                        std::to_string(gold.gold_steps.size()) + "]");
  }
  return detail::score_step(static_cast<std::size_t>(t) - 1, trace, gold, weights, mode).reward;
}

inline RewardBreakdown total_reward(const ReasoningTrace& trace, const InstanceRecord& gold,
                                    const RewardWeights& weights, const RewardMode& mode,
                                    int format_bit) {
  weights.validate();
  mode.validate();
  if (trace.domain != gold.domain) {
    throw SchemaError("trace domain " + domain_to_string(trace.domain) +
                      " does not match record domain " + domain_to_string(gold.domain));
  }
  RewardBreakdown out;
  out.variant = mode.variant;
  out.format = format_bit != 0 ? 1 : 0;
  const std::size_t gold_len = gold.gold_steps.size();
  double process_sum = 0.0;
  for (std::size_t i = 0; i < gold_len; ++i) {
    StepScore s = detail::score_step(i, trace, gold, weights, mode);
    process_sum += s.reward;
    out.per_step.push_back(s);
  }
  if (trace.steps.size() > gold_len) {
    out.extra_steps = static_cast<int>(trace.steps.size() - gold_len);
  }
  if (mode.variant == RewardVariant::OutcomeOnly) {
    out.process_total = 0.0;
  } else if (weights.normalize_process) {
    const double denom = detail::active_step_weight(weights, mode) * static_cast<double>(gold_len);
    out.process_total = denom > 0.0 ? process_sum / denom : 0.0;
  } else {
    out.process_total = process_sum;
  }
  out.outcome = outcome_reward(trace.risk, gold.gold_risk);
  out.total = out.process_total + weights.w_format * out.format;
  if (mode.include_outcome) out.total += weights.w_outcome * out.outcome;
  return out;
}

}  // namespace vprm
