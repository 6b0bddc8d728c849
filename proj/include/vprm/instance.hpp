// One paper-risk pair: a bias domain, the gold step labels, and the gold
// risk label, plus optional source text and provenance carried through
// unchanged. The scoring path never reads the context.
#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vprm/common.hpp"
#include "vprm/rules.hpp"
#include "vprm/schema.hpp"

namespace vprm {

struct GoldStep {
  std::string name;
  std::string label;
};

struct InstanceRecord {
  std::string id;
  DomainId domain = DomainId::A;
  std::string comparison;
  std::string outcome;
  RiskLabel gold_risk = RiskLabel::Moderate;
  std::vector<GoldStep> gold_steps;
  std::optional<std::string> context;
  json provenance;  // opaque metadata, defaults to null

  // Gold steps must mirror the domain schema: same names in order, labels
  // from the step vocabulary.
  void validate(const SchemaSet& schemas) const {
    const DomainSchema& schema = schemas.domain(domain);
    if (gold_steps.size() != schema.steps.size()) {
      throw ValidationError("record '" + id + "': expected " +
                            std::to_string(schema.steps.size()) + " gold steps for domain " +
                            domain_to_string(domain) + ", got " +
                            std::to_string(gold_steps.size()));
    }
    for (std::size_t i = 0; i < gold_steps.size(); ++i) {
      const StepSpec& spec = schema.steps[i];
      if (!ident_equal(gold_steps[i].name, spec.name)) {
        throw ValidationError("record '" + id + "': gold step " + std::to_string(i + 1) +
                              " is '" + gold_steps[i].name + "', schema expects '" + spec.name +
                              "'");
      }
      if (!spec.allows_label(gold_steps[i].label)) {
        throw ValidationError("record '" + id + "': label '" + gold_steps[i].label +
                              "' is not in the vocabulary of step '" + spec.name + "'");
      }
    }
  }

  Assignment gold_assignment() const {
    Assignment a;
    for (const auto& s : gold_steps) a[s.name] = s.label;
    return a;
  }

  static InstanceRecord from_json(const json& j) {
    InstanceRecord rec;
    rec.id = j.at("id").get<std::string>();
    rec.domain = domain_from_string(j.at("domain").get<std::string>());
    rec.comparison = j.value("comparison", std::string());
    rec.outcome = j.value("outcome", std::string());
    rec.gold_risk = risk_from_any(j.at("gold_risk").get<std::string>());
    for (const auto& s : j.at("gold_steps")) {
      rec.gold_steps.push_back({s.at("name").get<std::string>(), s.at("label").get<std::string>()});
    }
    if (j.contains("context") && !j.at("context").is_null()) {
      rec.context = j.at("context").get<std::string>();
    }
    if (j.contains("provenance")) rec.provenance = j.at("provenance");
    return rec;
  }

  json to_json() const {
    json steps = json::array();
    for (const auto& s : gold_steps) steps.push_back({{"name", s.name}, {"label", s.label}});
    json j = {{"id", id},
              {"domain", domain_to_string(domain)},
              {"comparison", comparison},
              {"outcome", outcome},
              {"gold_risk", risk_to_string(gold_risk)},
              {"gold_steps", steps}};
    if (context) j["context"] = *context;
    if (!provenance.is_null()) j["provenance"] = provenance;
    return j;
  }
};

}  // namespace vprm
