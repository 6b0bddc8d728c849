#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "vprm/rules.hpp"

using namespace vprm;

namespace {

// Independent transcription of the published domain-A macro, kept separate
// from the guard-table evaluator it checks.
RiskLabel macro_a_oracle(const std::string& report, const std::string& method,
                         const std::string& predictability, const std::string& imbalance) {
  if (report == "not_reported") return RiskLabel::Moderate;
  if (method == "non_random") return RiskLabel::High;
  if (predictability == "predictable") return RiskLabel::Moderate;
  if (imbalance == "likely") return RiskLabel::High;
  return RiskLabel::Low;
}

}  // namespace

TEST_CASE("domain-A table reproduces the published macro on all 16 assignments") {
  const SchemaSet schemas = SchemaSet::builtin();
  const RuleTableSet rules = RuleTableSet::builtin(schemas);
  const RuleTable& table = rules.table(DomainId::A);
  const DomainSchema& schema = schemas.domain(DomainId::A);

  for (std::string report : {"reported", "not_reported"}) {
    for (std::string method : {"random", "non_random"}) {
      for (std::string pred : {"unpredictable", "predictable"}) {
        for (std::string imb : {"likely", "none"}) {
          Assignment a = {{"Identify_randomization_report", report},
                          {"Classify_randomization_method", method},
                          {"Assess_sequence_predictability", pred},
                          {"Baseline_imbalance", imb}};
          CAPTURE(report, method, pred, imb);
          CHECK(evaluate_macro(table, schema, a) == macro_a_oracle(report, method, pred, imb));
        }
      }
    }
  }
}

TEST_CASE("domain-A guard order follows the early-exit reading") {
  const SchemaSet schemas = SchemaSet::builtin();
  const RuleTableSet rules = RuleTableSet::builtin(schemas);
  const RuleTable& table = rules.table(DomainId::A);
  const DomainSchema& schema = schemas.domain(DomainId::A);

  // not_reported dominates everything else
  CHECK(evaluate_macro(table, schema,
                       {{"Identify_randomization_report", "not_reported"},
                        {"Classify_randomization_method", "non_random"},
                        {"Assess_sequence_predictability", "predictable"},
                        {"Baseline_imbalance", "likely"}}) == RiskLabel::Moderate);
  CHECK(evaluate_macro(table, schema,
                       {{"Identify_randomization_report", "reported"},
                        {"Classify_randomization_method", "non_random"},
                        {"Assess_sequence_predictability", "unpredictable"},
                        {"Baseline_imbalance", "none"}}) == RiskLabel::High);
  CHECK(evaluate_macro(table, schema,
                       {{"Identify_randomization_report", "reported"},
                        {"Classify_randomization_method", "random"},
                        {"Assess_sequence_predictability", "unpredictable"},
                        {"Baseline_imbalance", "none"}}) == RiskLabel::Low);
  CHECK(evaluate_macro(table, schema,
                       {{"Identify_randomization_report", "reported"},
                        {"Classify_randomization_method", "random"},
                        {"Assess_sequence_predictability", "predictable"},
                        {"Baseline_imbalance", "none"}}) == RiskLabel::Moderate);
}

TEST_CASE("evaluate_macro rejects incomplete or out-of-vocabulary assignments") {
  const SchemaSet schemas = SchemaSet::builtin();
  const RuleTableSet rules = RuleTableSet::builtin(schemas);
  const RuleTable& table = rules.table(DomainId::A);
  const DomainSchema& schema = schemas.domain(DomainId::A);

  Assignment missing = {{"Identify_randomization_report", "reported"}};
  CHECK_THROWS_AS(evaluate_macro(table, schema, missing), SchemaError);

  Assignment bad_label = {{"Identify_randomization_report", "sometimes"},
                          {"Classify_randomization_method", "random"},
                          {"Assess_sequence_predictability", "unpredictable"},
                          {"Baseline_imbalance", "none"}};
  CHECK_THROWS_AS(evaluate_macro(table, schema, bad_label), SchemaError);

  Assignment unknown_step = {{"Identify_randomization_report", "reported"},
                             {"Classify_randomization_method", "random"},
                             {"Assess_sequence_predictability", "unpredictable"},
                             {"Baseline_imbalance", "none"},
                             {"Not_a_step", "reported"}};
  CHECK_THROWS_AS(evaluate_macro(table, schema, unknown_step), SchemaError);
}

TEST_CASE("normalization applies to assignment keys and labels") {
  const SchemaSet schemas = SchemaSet::builtin();
  const RuleTableSet rules = RuleTableSet::builtin(schemas);
  Assignment a = {{"identify_randomization_report", "Reported"},
                  {"Classify_Randomization_Method", "random"},
                  {"Assess_sequence_predictability", "unpredictable"},
                  {"Baseline_Imbalance", " none "}};
  CHECK(evaluate_macro(rules.table(DomainId::A), schemas.domain(DomainId::A), a) ==
        RiskLabel::Low);
}

TEST_CASE("truth-table enumeration") {
  const SchemaSet schemas = SchemaSet::builtin();
  const RuleTableSet rules = RuleTableSet::builtin(schemas);

  SECTION("domain A has 2*2*2*2 = 16 rows") {
    const auto rows = enumerate_truth_table(rules.table(DomainId::A), schemas.domain(DomainId::A));
    CHECK(rows.size() == 16);
  }
  SECTION("domain C has 2*4*2 = 16 rows") {
    const auto rows = enumerate_truth_table(rules.table(DomainId::C), schemas.domain(DomainId::C));
    CHECK(rows.size() == 16);
  }
  SECTION("each row agrees with evaluate_macro and every domain is total") {
    for (DomainId d : kAllDomains) {
      const auto rows = enumerate_truth_table(rules.table(d), schemas.domain(d));
      std::size_t expected = 1;
      for (const auto& step : schemas.domain(d).steps) expected *= step.allowed_labels.size();
      REQUIRE(rows.size() == expected);
      for (const auto& [assignment, risk] : rows) {
        CHECK(evaluate_macro(rules.table(d), schemas.domain(d), assignment) == risk);
      }
    }
  }
  SECTION("the row bound is enforced") {
    CHECK_THROWS_AS(
        enumerate_truth_table(rules.table(DomainId::A), schemas.domain(DomainId::A), 8),
        ContractError);
  }
}

TEST_CASE("rule-table config loading") {
  const SchemaSet schemas = SchemaSet::builtin();

  SECTION("shipped config equals the built-in default") {
    std::ifstream in(std::string(VPRM_SOURCE_DIR) + "/configs/rule_tables.json");
    REQUIRE(in.good());
    const RuleTableSet from_file = RuleTableSet::from_json(json::parse(in), schemas);
    CHECK(from_file.to_json() == RuleTableSet::builtin(schemas).to_json());
  }

  SECTION("guard on a nonexistent label is a validation error") {
    json doc = RuleTableSet::builtin(schemas).to_json();
    doc["domains"]["A"]["guards"][0]["label"] = "maybe";
    CHECK_THROWS_AS(RuleTableSet::from_json(doc, schemas), ValidationError);
  }

  SECTION("guard on an unknown step is a validation error naming the guard") {
    json doc = RuleTableSet::builtin(schemas).to_json();
    doc["domains"]["B"]["guards"][0]["step"] = "No_such_step";
    CHECK_THROWS_WITH(RuleTableSet::from_json(doc, schemas),
                      Catch::Matchers::ContainsSubstring("No_such_step"));
  }

  SECTION("a config override changes evaluation for that domain") {
    json doc = RuleTableSet::builtin(schemas).to_json();
    doc["domains"]["B"]["default"] = "high";
    const RuleTableSet overridden = RuleTableSet::from_json(doc, schemas);
    Assignment clean = {{"Identify_concealment_report", "reported"},
                        {"Determine_concealment_method", "adequate"},
                        {"Assess_possibility_of_foreknowledge", "no"}};
    CHECK(evaluate_macro(overridden.table(DomainId::B), schemas.domain(DomainId::B), clean) ==
          RiskLabel::High);
    CHECK(evaluate_macro(RuleTableSet::builtin(schemas).table(DomainId::B),
                         schemas.domain(DomainId::B), clean) == RiskLabel::Low);
  }

  SECTION("a document missing a domain is rejected") {
    json doc = RuleTableSet::builtin(schemas).to_json();
    doc["domains"].erase("I");
    CHECK_THROWS_AS(RuleTableSet::from_json(doc, schemas), ValidationError);
  }
}

TEST_CASE("guard order matters and the config array fixes it") {
  const SchemaSet schemas = SchemaSet::builtin();
  json doc = RuleTableSet::builtin(schemas).to_json();
  auto& guards = doc["domains"]["A"]["guards"];
  std::swap(guards[0], guards[1]);
  const RuleTableSet permuted = RuleTableSet::from_json(doc, schemas);
  const Assignment a = {{"Identify_randomization_report", "not_reported"},
                        {"Classify_randomization_method", "non_random"},
                        {"Assess_sequence_predictability", "unpredictable"},
                        {"Baseline_imbalance", "none"}};
  CHECK(evaluate_macro(RuleTableSet::builtin(schemas).table(DomainId::A),
                       schemas.domain(DomainId::A), a) == RiskLabel::Moderate);
  CHECK(evaluate_macro(permuted.table(DomainId::A), schemas.domain(DomainId::A), a) ==
        RiskLabel::High);
}

TEST_CASE("evaluation is deterministic") {
  const SchemaSet schemas = SchemaSet::builtin();
  const RuleTableSet rules = RuleTableSet::builtin(schemas);
  Assignment a = {{"Identify_concealment_report", "reported"},
                  {"Determine_concealment_method", "inadequate"},
                  {"Assess_possibility_of_foreknowledge", "possible"}};
  const RiskLabel first = evaluate_macro(rules.table(DomainId::B), schemas.domain(DomainId::B), a);
  for (int i = 0; i < 100; ++i) {
    CHECK(evaluate_macro(rules.table(DomainId::B), schemas.domain(DomainId::B), a) == first);
  }
  CHECK(first == RiskLabel::High);
}
