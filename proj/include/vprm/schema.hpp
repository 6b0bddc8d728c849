// Canonical vocabularies for the nine bias domains: step names, step label
// sets, and the three risk labels. The schema is data, loaded from a
// versioned JSON document; a default document ships embedded in the engine
// and as configs/schema.json.
#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vprm/common.hpp"

namespace vprm {

using json = nlohmann::json;

enum class DomainId : char { A = 'A', B = 'B', C = 'C', D = 'D', E = 'E', F = 'F', G = 'G', H = 'H', I = 'I' };

inline constexpr std::array<DomainId, 9> kAllDomains = {
    DomainId::A, DomainId::B, DomainId::C, DomainId::D, DomainId::E,
    DomainId::F, DomainId::G, DomainId::H, DomainId::I};

inline char domain_char(DomainId d) { return static_cast<char>(d); }

inline DomainId domain_from_string(std::string_view s) {
  std::string t(normalize_ident(s));
  if (t.size() == 1) {
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
    if (c >= 'A' && c <= 'I') return static_cast<DomainId>(c);
  }
  throw SchemaError("unknown bias domain id: '" + std::string(s) + "' (expected A-I)");
}

inline std::string domain_to_string(DomainId d) { return std::string(1, domain_char(d)); }

enum class RiskLabel { Low, Moderate, High };

inline std::string risk_to_string(RiskLabel r) {
  switch (r) {
    case RiskLabel::Low: return "low";
    case RiskLabel::Moderate: return "moderate";
    case RiskLabel::High: return "high";
  }
  throw SchemaError("invalid risk label value");
}

inline std::optional<RiskLabel> try_risk_from_string(std::string_view s) {
  const std::string t = normalize_ident(s);
  if (t == "low") return RiskLabel::Low;
  if (t == "moderate") return RiskLabel::Moderate;
  if (t == "high") return RiskLabel::High;
  return std::nullopt;
}

inline RiskLabel risk_from_string(std::string_view s) {
  if (auto r = try_risk_from_string(s)) return *r;
  throw SchemaError("unknown risk label: '" + std::string(s) + "'");
}

// "+" -> low, "-" -> high, "?" -> moderate. Accepts both the ASCII hyphen
// and U+2212 for the minus glyph.
inline RiskLabel risk_from_symbol(std::string_view symbol) {
  if (symbol == "+") return RiskLabel::Low;
  if (symbol == "?") return RiskLabel::Moderate;
  if (symbol == "-" || symbol == "−") return RiskLabel::High;
  throw SchemaError("unknown risk symbol: '" + std::string(symbol) + "' (expected +, ?, -)");
}

inline std::string symbol_from_risk(RiskLabel r) {
  switch (r) {
    case RiskLabel::Low: return "+";
    case RiskLabel::Moderate: return "?";
    case RiskLabel::High: return "-";
  }
  throw SchemaError("invalid risk label value");
}

// Accepts either the word form or the symbol form; used by dataset loaders.
inline RiskLabel risk_from_any(std::string_view s) {
  if (auto r = try_risk_from_string(s)) return *r;
  return risk_from_symbol(s);
}

// One assessment question within a domain: canonical name, its categorical
// label vocabulary, and its 1-based position.
struct StepSpec {
  std::string name;
  std::vector<std::string> allowed_labels;
  int position = 0;

  bool allows_label(std::string_view label) const {
    const std::string norm = normalize_ident(label);
    for (const auto& l : allowed_labels) {
      if (normalize_ident(l) == norm) return true;
    }
    return false;
  }
};

struct DomainSchema {
  DomainId id = DomainId::A;
  std::string title;
  std::vector<StepSpec> steps;

  const StepSpec* find_step(std::string_view name) const {
    const std::string norm = normalize_ident(name);
    for (const auto& s : steps) {
      if (normalize_ident(s.name) == norm) return &s;
    }
    return nullptr;
  }
};

// Immutable after load; freely shareable across threads.
class SchemaSet {
 public:
  static SchemaSet from_json(const json& doc) {
    SchemaSet set;
    if (!doc.is_object() || !doc.contains("domains") || !doc.at("domains").is_object()) {
      throw ValidationError("schema document must be an object with a 'domains' object");
    }
    set.version_ = doc.value("version", std::string("unversioned"));
    const auto& domains = doc.at("domains");
    for (const auto& [key, val] : domains.items()) {
      const DomainId id = domain_from_string(key);
      DomainSchema ds;
      ds.id = id;
      ds.title = val.value("title", std::string());
      if (!val.contains("steps") || !val.at("steps").is_array() || val.at("steps").empty()) {
        throw ValidationError("domain " + key + ": 'steps' must be a nonempty array");
      }
      int pos = 1;
      for (const auto& step : val.at("steps")) {
        StepSpec spec;
        spec.name = step.at("name").get<std::string>();
        if (normalize_ident(spec.name).empty()) {
          throw ValidationError("domain " + key + ": step name must be non-empty");
        }
        for (const auto& l : step.at("labels")) {
          spec.allowed_labels.push_back(l.get<std::string>());
        }
        if (spec.allowed_labels.size() < 2) {
          throw ValidationError("domain " + key + ", step '" + spec.name +
                                "': needs at least 2 labels");
        }
        spec.position = pos++;
        for (const auto& prev : ds.steps) {
          if (ident_equal(prev.name, spec.name)) {
            throw ValidationError("domain " + key + ": duplicate step name '" + spec.name + "'");
          }
        }
        ds.steps.push_back(std::move(spec));
      }
      set.domains_[id] = std::move(ds);
    }
    for (DomainId d : kAllDomains) {
      if (!set.domains_.count(d)) {
        throw ValidationError("schema document is missing domain " + domain_to_string(d));
      }
    }
    return set;
  }

  static SchemaSet builtin();

  const std::string& version() const { return version_; }

  const DomainSchema& domain(DomainId id) const {
    auto it = domains_.find(id);
    if (it == domains_.end()) throw SchemaError("no schema for domain " + domain_to_string(id));
    return it->second;
  }

  // Ordered step list for a domain, byte-identical to the configured schema.
  const std::vector<StepSpec>& step_schema(DomainId id) const { return domain(id).steps; }

  json to_json() const {
    json domains = json::object();
    for (const auto& [id, ds] : domains_) {
      json steps = json::array();
      for (const auto& s : ds.steps) {
        steps.push_back({{"name", s.name}, {"labels", s.allowed_labels}});
      }
      domains[domain_to_string(id)] = {{"title", ds.title}, {"steps", steps}};
    }
    return {{"version", version_}, {"domains", domains}};
  }

 private:
  std::string version_;
  std::map<DomainId, DomainSchema> domains_;
};

// Step names and label vocabularies per domain; canonical name casing
// follows the engine's steps-and-labels listing.
inline constexpr std::string_view kDefaultSchemaJson = R"JSON({
  "version": "rob-schema-v1",
  "domains": {
    "A": {
      "title": "Random sequence generation",
      "steps": [
        {"name": "Identify_randomization_report", "labels": ["reported", "not_reported"]},
        {"name": "Classify_randomization_method", "labels": ["random", "non_random"]},
        {"name": "Assess_sequence_predictability", "labels": ["unpredictable", "predictable"]},
        {"name": "Baseline_imbalance", "labels": ["likely", "none"]}
      ]
    },
    "B": {
      "title": "Allocation concealment",
      "steps": [
        {"name": "Identify_concealment_report", "labels": ["reported", "not_reported"]},
        {"name": "Determine_concealment_method", "labels": ["adequate", "inadequate"]},
        {"name": "Assess_possibility_of_foreknowledge", "labels": ["no", "possible"]}
      ]
    },
    "C": {
      "title": "Blinding of participants and personnel",
      "steps": [
        {"name": "Identify_blinding_report", "labels": ["reported", "not_reported"]},
        {"name": "Assess_blinding_status", "labels": ["participants", "personnel", "both", "none"]},
        {"name": "Evaluate_blinding_effectiveness", "labels": ["effective", "ineffective"]}
      ]
    },
    "D": {
      "title": "Blinding of outcome assessment",
      "steps": [
        {"name": "Identify_outcome_blinding_report", "labels": ["reported", "not_reported"]},
        {"name": "Assess_assessor_blinding", "labels": ["yes", "no"]},
        {"name": "Evaluate_blinding_effect_on_measurement", "labels": ["no", "possible"]}
      ]
    },
    "E": {
      "title": "Incomplete outcome data",
      "steps": [
        {"name": "Quantify_missing_data", "labels": ["none", "low", "high"]},
        {"name": "Identify_missing_data_reason", "labels": ["adequate", "inadequate", "not_reported"]},
        {"name": "Assess_handling_of_missing_data", "labels": ["appropriate", "inappropriate"]},
        {"name": "Estimate_bias_due_to_missing_data", "labels": ["unlikely", "likely"]}
      ]
    },
    "F": {
      "title": "Selective reporting",
      "steps": [
        {"name": "Identify_protocol_availability", "labels": ["available", "not_available"]},
        {"name": "Compare_outcomes_reported", "labels": ["all", "partial", "none"]},
        {"name": "Detect_unexpected_outcomes", "labels": ["none", "added"]},
        {"name": "Evaluate_reporting_selectivity", "labels": ["no", "possible", "yes"]}
      ]
    },
    "G": {
      "title": "Baseline outcomes similar",
      "steps": [
        {"name": "Identify_baseline_outcomes_report", "labels": ["reported", "not_reported"]},
        {"name": "Compare_baseline_outcomes", "labels": ["similar", "different"]},
        {"name": "Evaluate_impact_of_differences", "labels": ["likely_impact", "unlikely_impact"]}
      ]
    },
    "H": {
      "title": "Baseline characteristics similar",
      "steps": [
        {"name": "Identify_baseline_characteristics_report", "labels": ["reported", "not_reported"]},
        {"name": "Compare_baseline_characteristics", "labels": ["similar", "different"]},
        {"name": "Evaluate_impact_of_differences", "labels": ["likely_impact", "unlikely_impact"]}
      ]
    },
    "I": {
      "title": "Contamination",
      "steps": [
        {"name": "Identify_contamination_risk_report", "labels": ["reported", "not_reported"]},
        {"name": "Assess_contamination_possibility", "labels": ["possible", "unlikely"]},
        {"name": "Assess_contamination_impact", "labels": ["likely_impact", "unlikely_impact"]}
      ]
    }
  }
})JSON";

inline SchemaSet SchemaSet::builtin() {
  return SchemaSet::from_json(json::parse(kDefaultSchemaJson));
}

}  // namespace vprm
