// Deterministic decision macros: ordered first-match-wins guard lists that
// map a complete step-label assignment to a risk label. Domain A's default
// table reproduces the RoB2 randomisation macro; B-I defaults are
// engine-designed in the same early-exit style and fully overridable via
// the rule-table config document.
#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vprm/common.hpp"
#include "vprm/schema.hpp"

namespace vprm {

// Assignment keys and values are compared in normalized form.
using Assignment = std::map<std::string, std::string>;

struct Guard {
  std::string step_name;
  std::string label;
  RiskLabel result = RiskLabel::Moderate;
};

struct RuleTable {
  DomainId domain = DomainId::A;
  std::vector<Guard> guards;
  RiskLabel fallback = RiskLabel::Low;
};

// First matching guard wins, else the table default. The assignment must
// cover every step of the domain; evaluation never consults gold data.
inline RiskLabel evaluate_macro(const RuleTable& table, const DomainSchema& schema,
                                const Assignment& assignment) {
  // normalized name -> normalized label, validated against the schema
  std::map<std::string, std::string> norm;
  for (const auto& [name, label] : assignment) {
    const StepSpec* spec = schema.find_step(name);
    if (spec == nullptr) {
      throw SchemaError("assignment references unknown step '" + name + "' in domain " +
                        domain_to_string(schema.id));
    }
    if (!spec->allows_label(label)) {
      throw SchemaError("label '" + label + "' is not allowed for step '" + spec->name + "'");
    }
    norm[normalize_ident(spec->name)] = normalize_ident(label);
  }
  for (const auto& step : schema.steps) {
    if (!norm.count(normalize_ident(step.name))) {
      throw SchemaError("incomplete assignment: missing step '" + step.name + "' in domain " +
                        domain_to_string(schema.id));
    }
  }
  for (const auto& guard : table.guards) {
    auto it = norm.find(normalize_ident(guard.step_name));
    if (it != norm.end() && it->second == normalize_ident(guard.label)) {
      return guard.result;
    }
  }
  return table.fallback;
}

// Exhaustive enumeration of (assignment, risk) rows in lexicographic schema
// order; refuses when the label-space product exceeds the bound.
inline std::vector<std::pair<Assignment, RiskLabel>> enumerate_truth_table(
    const RuleTable& table, const DomainSchema& schema, std::size_t max_rows = 1000000) {
  std::size_t rows = 1;
  for (const auto& step : schema.steps) {
    rows *= step.allowed_labels.size();
    if (rows > max_rows) {
      throw ContractError("truth table for domain " + domain_to_string(schema.id) + " has " +
                          std::to_string(rows) + "+ rows, above the bound of " +
                          std::to_string(max_rows));
    }
  }
  std::vector<std::pair<Assignment, RiskLabel>> out;
  out.reserve(rows);
  std::vector<std::size_t> idx(schema.steps.size(), 0);
  for (std::size_t r = 0; r < rows; ++r) {
    Assignment a;
    for (std::size_t s = 0; s < schema.steps.size(); ++s) {
      a[schema.steps[s].name] = schema.steps[s].allowed_labels[idx[s]];
    }
    RiskLabel risk = evaluate_macro(table, schema, a);
    out.emplace_back(std::move(a), risk);
    // odometer increment, last step varies fastest
    for (std::size_t s = schema.steps.size(); s-- > 0;) {
      if (++idx[s] < schema.steps[s].allowed_labels.size()) break;
      idx[s] = 0;
    }
  }
  return out;
}

// Immutable after load; evaluation is pure and parallel-safe.
class RuleTableSet {
 public:
  static RuleTableSet from_json(const json& doc, const SchemaSet& schemas) {
    RuleTableSet set;
    if (!doc.is_object() || !doc.contains("domains") || !doc.at("domains").is_object()) {
      throw ValidationError("rule-table document must be an object with a 'domains' object");
    }
    set.version_ = doc.value("version", std::string("unversioned"));
    for (const auto& [key, val] : doc.at("domains").items()) {
      const DomainId id = domain_from_string(key);
      const DomainSchema& schema = schemas.domain(id);
      RuleTable table;
      table.domain = id;
      if (!val.contains("guards") || !val.at("guards").is_array()) {
        throw ValidationError("domain " + key + ": 'guards' must be an array");
      }
      for (const auto& g : val.at("guards")) {
        Guard guard;
        guard.step_name = g.at("step").get<std::string>();
        guard.label = g.at("label").get<std::string>();
        guard.result = risk_from_any(g.at("risk").get<std::string>());
        const StepSpec* spec = schema.find_step(guard.step_name);
        if (spec == nullptr) {
          throw ValidationError("domain " + key + ": guard references unknown step '" +
                                guard.step_name + "'");
        }
        if (!spec->allows_label(guard.label)) {
          throw ValidationError("domain " + key + ": guard on step '" + spec->name +
                                "' uses label '" + guard.label + "' outside its vocabulary");
        }
        table.guards.push_back(std::move(guard));
      }
      table.fallback = risk_from_any(val.at("default").get<std::string>());
      set.tables_[id] = std::move(table);
    }
    for (DomainId d : kAllDomains) {
      if (!set.tables_.count(d)) {
        throw ValidationError("rule-table document is missing domain " + domain_to_string(d));
      }
    }
    return set;
  }

  static RuleTableSet builtin(const SchemaSet& schemas);

  const std::string& version() const { return version_; }

  const RuleTable& table(DomainId id) const {
    auto it = tables_.find(id);
    if (it == tables_.end()) throw SchemaError("no rule table for domain " + domain_to_string(id));
    return it->second;
  }

  json to_json() const {
    json domains = json::object();
    for (const auto& [id, table] : tables_) {
      json guards = json::array();
      for (const auto& g : table.guards) {
        guards.push_back(
            {{"step", g.step_name}, {"label", g.label}, {"risk", risk_to_string(g.result)}});
      }
      domains[domain_to_string(id)] = {{"guards", guards},
                                       {"default", risk_to_string(table.fallback)}};
    }
    return {{"version", version_}, {"domains", domains}};
  }

 private:
  std::string version_;
  std::map<DomainId, RuleTable> tables_;
};

// Domain A transcribes the published randomisation macro. The remaining
// tables are engine defaults in the same style: missing reporting first,
// then disqualifying findings in step order, else low.
inline constexpr std::string_view kDefaultRuleTablesJson = R"JSON({
  "version": "rob-rules-v1",
  "domains": {
    "A": {
      "guards": [
        {"step": "Identify_randomization_report", "label": "not_reported", "risk": "moderate"},
        {"step": "Classify_randomization_method", "label": "non_random", "risk": "high"},
        {"step": "Assess_sequence_predictability", "label": "predictable", "risk": "moderate"},
        {"step": "Baseline_imbalance", "label": "likely", "risk": "high"}
      ],
      "default": "low"
    },
    "B": {
      "guards": [
        {"step": "Identify_concealment_report", "label": "not_reported", "risk": "moderate"},
        {"step": "Determine_concealment_method", "label": "inadequate", "risk": "high"},
        {"step": "Assess_possibility_of_foreknowledge", "label": "possible", "risk": "high"}
      ],
      "default": "low"
    },
    "C": {
      "guards": [
        {"step": "Identify_blinding_report", "label": "not_reported", "risk": "moderate"},
        {"step": "Assess_blinding_status", "label": "none", "risk": "high"},
        {"step": "Evaluate_blinding_effectiveness", "label": "ineffective", "risk": "high"},
        {"step": "Assess_blinding_status", "label": "participants", "risk": "moderate"},
        {"step": "Assess_blinding_status", "label": "personnel", "risk": "moderate"}
      ],
      "default": "low"
    },
    "D": {
      "guards": [
        {"step": "Identify_outcome_blinding_report", "label": "not_reported", "risk": "moderate"},
        {"step": "Assess_assessor_blinding", "label": "no", "risk": "high"},
        {"step": "Evaluate_blinding_effect_on_measurement", "label": "possible", "risk": "moderate"}
      ],
      "default": "low"
    },
    "E": {
      "guards": [
        {"step": "Quantify_missing_data", "label": "none", "risk": "low"},
        {"step": "Identify_missing_data_reason", "label": "not_reported", "risk": "moderate"},
        {"step": "Assess_handling_of_missing_data", "label": "inappropriate", "risk": "high"},
        {"step": "Estimate_bias_due_to_missing_data", "label": "likely", "risk": "high"},
        {"step": "Identify_missing_data_reason", "label": "inadequate", "risk": "moderate"}
      ],
      "default": "low"
    },
    "F": {
      "guards": [
        {"step": "Identify_protocol_availability", "label": "not_available", "risk": "moderate"},
        {"step": "Compare_outcomes_reported", "label": "none", "risk": "high"},
        {"step": "Evaluate_reporting_selectivity", "label": "yes", "risk": "high"},
        {"step": "Evaluate_reporting_selectivity", "label": "possible", "risk": "moderate"},
        {"step": "Detect_unexpected_outcomes", "label": "added", "risk": "moderate"}
      ],
      "default": "low"
    },
    "G": {
      "guards": [
        {"step": "Identify_baseline_outcomes_report", "label": "not_reported", "risk": "moderate"},
        {"step": "Evaluate_impact_of_differences", "label": "likely_impact", "risk": "high"},
        {"step": "Compare_baseline_outcomes", "label": "different", "risk": "moderate"}
      ],
      "default": "low"
    },
    "H": {
      "guards": [
        {"step": "Identify_baseline_characteristics_report", "label": "not_reported", "risk": "moderate"},
        {"step": "Evaluate_impact_of_differences", "label": "likely_impact", "risk": "high"},
        {"step": "Compare_baseline_characteristics", "label": "different", "risk": "moderate"}
      ],
      "default": "low"
    },
    "I": {
      "guards": [
        {"step": "Identify_contamination_risk_report", "label": "not_reported", "risk": "moderate"},
        {"step": "Assess_contamination_impact", "label": "likely_impact", "risk": "high"},
        {"step": "Assess_contamination_possibility", "label": "possible", "risk": "moderate"}
      ],
      "default": "low"
    }
  }
})JSON";

inline RuleTableSet RuleTableSet::builtin(const SchemaSet& schemas) {
  return RuleTableSet::from_json(json::parse(kDefaultRuleTablesJson), schemas);
}

}  // namespace vprm
