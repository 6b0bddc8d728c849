// Dataset-level task metrics: Accuracy and macro-F1 over risk labels,
// Coherence of each prediction against the decision macro applied to the
// model's own step labels, and Coherent Accuracy.
//
// Unparsable predictions count as wrong for accuracy. Records without a
// complete own-label assignment have no defined coherence bit; lenient
// mode (the default) scores them 0, strict mode excludes them from the
// coherence and CA denominators and counts them separately.
#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vprm/common.hpp"
#include "vprm/rules.hpp"
#include "vprm/schema.hpp"

namespace vprm {

struct EvalRecord {
  std::string instance_id;
  DomainId domain = DomainId::A;
  std::optional<RiskLabel> predicted_risk;  // absent when unparsable
  RiskLabel gold_risk = RiskLabel::Moderate;
  std::optional<Assignment> step_labels;  // the model's own labels

  static EvalRecord from_json(const json& j) {
    EvalRecord rec;
    rec.instance_id = j.at("id").get<std::string>();
    rec.domain = domain_from_string(j.at("domain").get<std::string>());
    rec.gold_risk = risk_from_any(j.at("gold_risk").get<std::string>());
    if (j.contains("predicted_risk") && !j.at("predicted_risk").is_null()) {
      rec.predicted_risk = risk_from_any(j.at("predicted_risk").get<std::string>());
    }
    if (j.contains("step_labels") && j.at("step_labels").is_object()) {
      Assignment a;
      for (const auto& [name, label] : j.at("step_labels").items()) {
        a[name] = label.get<std::string>();
      }
      rec.step_labels = std::move(a);
    }
    return rec;
  }

  json to_json() const {
    json j = {{"id", instance_id},
              {"domain", domain_to_string(domain)},
              {"gold_risk", risk_to_string(gold_risk)},
              {"predicted_risk",
               predicted_risk ? json(risk_to_string(*predicted_risk)) : json(nullptr)}};
    if (step_labels) {
      json labels = json::object();
      for (const auto& [name, label] : *step_labels) labels[name] = label;
      j["step_labels"] = labels;
    }
    return j;
  }
};

enum class CoherenceMode { Lenient, Strict };

struct CoherenceResult {
  // per-record: 1 coherent, 0 incoherent, -1 undefined (no complete labels
  // or no prediction)
  std::vector<int> per_record;
  double mean = 0.0;
  std::size_t included = 0;
  std::size_t excluded = 0;
};

namespace detail {

// C_i is defined only when the record carries a prediction and a complete,
// in-vocabulary own-label assignment.
inline int coherence_bit(const EvalRecord& rec, const RuleTableSet& rules,
                         const SchemaSet& schemas) {
  if (!rec.predicted_risk || !rec.step_labels) return -1;
  try {
    const RiskLabel implied =
        evaluate_macro(rules.table(rec.domain), schemas.domain(rec.domain), *rec.step_labels);
    return implied == *rec.predicted_risk ? 1 : 0;
  } catch (const SchemaError&) {
    return -1;  // incomplete or out-of-vocabulary assignment
  }
}

}  // namespace detail

inline CoherenceResult coherence(const std::vector<EvalRecord>& records, const RuleTableSet& rules,
                                 const SchemaSet& schemas,
                                 CoherenceMode mode = CoherenceMode::Lenient) {
  CoherenceResult out;
  out.per_record.reserve(records.size());
  double sum = 0.0;
  for (const auto& rec : records) {
    int bit = detail::coherence_bit(rec, rules, schemas);
    if (bit < 0 && mode == CoherenceMode::Lenient) bit = 0;
    out.per_record.push_back(bit);
    if (bit < 0) {
      ++out.excluded;
    } else {
      ++out.included;
      sum += bit;
    }
  }
  out.mean = out.included > 0 ? sum / static_cast<double>(out.included) : 0.0;
  return out;
}

// CA = (1/N) sum 1[C_i = 1 and predicted == gold]; the denominator is the
// record count, not the coherent count (see ca_conditional for the latter).
inline double coherent_accuracy(const std::vector<EvalRecord>& records, const RuleTableSet& rules,
                                const SchemaSet& schemas,
                                CoherenceMode mode = CoherenceMode::Lenient) {
  const CoherenceResult coh = coherence(records, rules, schemas, mode);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (coh.per_record[i] == 1 && records[i].predicted_risk &&
        *records[i].predicted_risk == records[i].gold_risk) {
      ++hits;
    }
  }
  return coh.included > 0 ? static_cast<double>(hits) / static_cast<double>(coh.included) : 0.0;
}

struct ClassStats {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // gold count
};

struct ClassificationResult {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::map<std::string, ClassStats> per_class;  // classes present in the golds
  std::size_t unparsable = 0;
};

inline ClassificationResult classification_metrics(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw NumericError("classification metrics need a nonempty dataset");
  ClassificationResult out;
  static constexpr std::array<RiskLabel, 3> kClasses = {RiskLabel::Low, RiskLabel::Moderate,
                                                        RiskLabel::High};
  std::map<RiskLabel, std::size_t> tp, fp, fn, support;
  std::size_t correct = 0;
  for (const auto& rec : records) {
    ++support[rec.gold_risk];
    if (!rec.predicted_risk) {
      ++out.unparsable;
      ++fn[rec.gold_risk];  // unparsable counts as a miss on the gold class
      continue;
    }
    if (*rec.predicted_risk == rec.gold_risk) {
      ++correct;
      ++tp[rec.gold_risk];
    } else {
      ++fp[*rec.predicted_risk];
      ++fn[rec.gold_risk];
    }
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(records.size());
  double f1_sum = 0.0;
  std::size_t classes = 0;
  for (RiskLabel cls : kClasses) {
    if (support[cls] == 0) continue;  // absent from golds: excluded from the macro
    ClassStats stats;
    stats.support = support[cls];
    const double tp_d = static_cast<double>(tp[cls]);
    const double denom_p = tp_d + static_cast<double>(fp[cls]);
    const double denom_r = tp_d + static_cast<double>(fn[cls]);
    stats.precision = denom_p > 0 ? tp_d / denom_p : 0.0;
    stats.recall = denom_r > 0 ? tp_d / denom_r : 0.0;
    stats.f1 = (stats.precision + stats.recall) > 0
                   ? 2.0 * stats.precision * stats.recall / (stats.precision + stats.recall)
                   : 0.0;
    out.per_class[risk_to_string(cls)] = stats;
    f1_sum += stats.f1;
    ++classes;
  }
  out.macro_f1 = classes > 0 ? f1_sum / static_cast<double>(classes) : 0.0;
  return out;
}

struct MetricsReport {
  std::size_t n = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double coherence = 0.0;
  double coherent_accuracy = 0.0;
  double ca_conditional = 0.0;  // denominator = coherent count; comparison only
  std::map<std::string, ClassStats> per_class;
  std::size_t unparsable_count = 0;
  std::size_t coherence_excluded = 0;

  json to_json() const {
    json classes = json::object();
    for (const auto& [name, stats] : per_class) {
      classes[name] = {{"precision", stats.precision},
                       {"recall", stats.recall},
                       {"f1", stats.f1},
                       {"support", stats.support}};
    }
    return {{"n", n},
            {"accuracy", accuracy},
            {"macro_f1", macro_f1},
            {"coherence", coherence},
            {"coherent_accuracy", coherent_accuracy},
            {"ca_conditional", ca_conditional},
            {"per_class", classes},
            {"unparsable_count", unparsable_count},
            {"coherence_excluded", coherence_excluded}};
  }

  std::string to_table() const {
    auto pct = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f", v);
      return std::string(buf);
    };
    std::string out;
    out += "n                  " + std::to_string(n) + "\n";
    out += "accuracy           " + pct(accuracy) + "\n";
    out += "macro_f1           " + pct(macro_f1) + "\n";
    out += "coherence          " + pct(coherence) + "\n";
    out += "coherent_accuracy  " + pct(coherent_accuracy) + "\n";
    out += "ca_conditional     " + pct(ca_conditional) + "\n";
    out += "unparsable         " + std::to_string(unparsable_count) + "\n";
    for (const auto& [name, stats] : per_class) {
      out += "class " + name + "  P=" + pct(stats.precision) + " R=" + pct(stats.recall) +
             " F1=" + pct(stats.f1) + " support=" + std::to_string(stats.support) + "\n";
    }
    return out;
  }
};

inline MetricsReport compute_metrics(const std::vector<EvalRecord>& records,
                                     const RuleTableSet& rules, const SchemaSet& schemas,
                                     CoherenceMode mode = CoherenceMode::Lenient) {
  if (records.empty()) throw NumericError("metrics need a nonempty dataset");
  MetricsReport report;
  report.n = records.size();
  const ClassificationResult cls = classification_metrics(records);
  report.accuracy = cls.accuracy;
  report.macro_f1 = cls.macro_f1;
  report.per_class = cls.per_class;
  report.unparsable_count = cls.unparsable;
  const CoherenceResult coh = coherence(records, rules, schemas, mode);
  report.coherence = coh.mean;
  report.coherence_excluded = coh.excluded;
  report.coherent_accuracy = coherent_accuracy(records, rules, schemas, mode);
  std::size_t coherent = 0, coherent_and_correct = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (coh.per_record[i] == 1) {
      ++coherent;
      if (records[i].predicted_risk && *records[i].predicted_risk == records[i].gold_risk) {
        ++coherent_and_correct;
      }
    }
  }
  report.ca_conditional =
      coherent > 0 ? static_cast<double>(coherent_and_correct) / static_cast<double>(coherent) : 0.0;
  return report;
}

}  // namespace vprm
