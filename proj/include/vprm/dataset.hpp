// Dataset ingestion and batch scoring. Datasets are JSONL, one
// InstanceRecord per line; traces are JSONL {"id", "trace"} pairs keyed by
// record id. score_batch emits one JSON result line per (record, trace)
// pair ordered by record id, followed by an aggregate metrics summary.
#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vprm/common.hpp"
#include "vprm/instance.hpp"
#include "vprm/metrics.hpp"
#include "vprm/reward.hpp"
#include "vprm/rules.hpp"
#include "vprm/schema.hpp"
#include "vprm/trace.hpp"

namespace vprm {

// Immutable scoring context: vocabularies, rule tables, reward defaults,
// and a hash of all three for health reporting and audit.
struct EngineConfig {
  SchemaSet schemas;
  RuleTableSet rules;
  RewardConfig reward;

  static EngineConfig builtin() {
    EngineConfig cfg{SchemaSet::builtin(), RuleTableSet::builtin(SchemaSet::builtin()), {}};
    return cfg;
  }

  std::string config_hash() const {
    // FNV-1a over the canonical (key-sorted) serialisations
    const std::string blob =
        schemas.to_json().dump() + rules.to_json().dump() + reward.to_json().dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : blob) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
  }
};

struct LoadIssue {
  int line = 0;
  std::string message;
};

struct DatasetLoadResult {
  std::vector<InstanceRecord> records;
  std::vector<LoadIssue> issues;  // per-line problems in lenient mode
};

inline DatasetLoadResult load_dataset_stream(std::istream& in, const SchemaSet& schemas,
                                             bool strict = false) {
  DatasetLoadResult out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      InstanceRecord rec = InstanceRecord::from_json(json::parse(line));
      rec.validate(schemas);
      out.records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      if (strict) {
        throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
      }
      out.issues.push_back({line_no, e.what()});
    }
  }
  if (line_no == 0) out.issues.push_back({0, "dataset file is empty"});
  return out;
}

inline DatasetLoadResult load_dataset(const std::string& path, const SchemaSet& schemas,
                                      bool strict = false) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset file: " + path);
  return load_dataset_stream(in, schemas, strict);
}

struct TraceInput {
  std::string id;
  std::string text;
};

inline std::vector<TraceInput> load_traces(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open trace file: " + path);
  std::vector<TraceInput> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("trace").get<std::string>()});
    } catch (const std::exception& e) {
      throw ValidationError("trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// EvalRecord view of one scored (record, trace) pair; own step labels are
// keyed by the trace's step names, first occurrence wins.
inline EvalRecord make_eval_record(const InstanceRecord& record, const ParseReport& report) {
  EvalRecord rec;
  rec.instance_id = record.id;
  rec.domain = record.domain;
  rec.gold_risk = record.gold_risk;
  if (report.ok && report.trace) {
    rec.predicted_risk = report.trace->risk;
    Assignment own;
    for (const auto& step : report.trace->steps) {
      own.emplace(step.name, step.label);  // emplace keeps the first occurrence
    }
    rec.step_labels = std::move(own);
  }
  return rec;
}

// Full scoring path for one parsed trace against one record; shared
// verbatim by the CLI batch scorer and the HTTP service.
inline json score_parsed(const InstanceRecord& record, const ParseReport& report,
                         const EngineConfig& config, const RewardConfig& reward) {
  json parse_summary = {{"ok", report.ok}, {"format_ok", report.format_ok}};
  json diags = json::array();
  for (const auto& d : report.diagnostics) {
    diags.push_back({{"line", d.line}, {"message", d.message}});
  }
  parse_summary["diagnostics"] = diags;

  json result = {{"id", record.id}, {"parse", parse_summary}};
  const int format_bit = format_reward(report);
  if (report.ok && report.trace) {
    const RewardBreakdown breakdown =
        total_reward(*report.trace, record, reward.weights, reward.mode, format_bit);
    result["reward"] = breakdown.to_json();
    result["predicted_risk"] = risk_to_string(report.trace->risk);
  } else {
    // unparsable: every reward component except the format bit is zero
    RewardBreakdown breakdown;
    breakdown.variant = reward.mode.variant;
    breakdown.format = format_bit;
    breakdown.total = reward.weights.w_format * format_bit;
    result["reward"] = breakdown.to_json();
    result["predicted_risk"] = nullptr;
  }
  const EvalRecord eval = make_eval_record(record, report);
  const int coherent = detail::coherence_bit(eval, config.rules, config.schemas);
  result["coherent"] = coherent < 0 ? json(nullptr) : json(coherent);
  result["gold_risk"] = risk_to_string(record.gold_risk);
  return result;
}

inline json score_one(const InstanceRecord& record, const std::string& trace_text,
                      const EngineConfig& config, const RewardConfig& reward) {
  return score_parsed(record, parse_trace(trace_text, record.domain), config, reward);
}

struct ScoreBatchResult {
  std::vector<json> lines;  // one per (record, trace), then error entries
  json summary;

  std::string to_jsonl() const {
    std::string out;
    for (const auto& line : lines) {
      out += line.dump();
      out += "\n";
    }
    out += summary.dump();
    out += "\n";
    return out;
  }
};

inline ScoreBatchResult score_batch(const std::vector<InstanceRecord>& records,
                                    const std::vector<TraceInput>& traces,
                                    const EngineConfig& config, const RewardConfig& reward) {
  std::map<std::string, const InstanceRecord*> by_id;
  for (const auto& rec : records) {
    if (!by_id.emplace(rec.id, &rec).second) {
      throw ValidationError("duplicate record id '" + rec.id + "' in dataset");
    }
  }
  struct Entry {
    std::string id;
    std::size_t input_index;
    json line;
  };
  std::vector<Entry> entries;
  std::vector<EvalRecord> evals;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto it = by_id.find(traces[i].id);
    if (it == by_id.end()) {
      entries.push_back(
          {traces[i].id, i, json{{"id", traces[i].id}, {"error", "unknown record id"}}});
      continue;
    }
    const InstanceRecord& record = *it->second;
    const ParseReport report = parse_trace(traces[i].text, record.domain);
    entries.push_back({record.id, i, score_parsed(record, report, config, reward)});
    evals.push_back(make_eval_record(record, report));
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.id != b.id) return a.id < b.id;
    return a.input_index < b.input_index;
  });
  ScoreBatchResult out;
  for (auto& e : entries) out.lines.push_back(std::move(e.line));
  json summary = {{"summary", true}};
  if (!evals.empty()) {
    summary["metrics"] = compute_metrics(evals, config.rules, config.schemas).to_json();
  }
  out.summary = std::move(summary);
  return out;
}

}  // namespace vprm
