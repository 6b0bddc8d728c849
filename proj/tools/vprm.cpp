// vprm command-line interface.
//
// Subcommands: score, metrics, simulate, verify-theorem, serve,
// validate-config. Exit codes: 0 success, 1 validation failure, 2 internal
// error. Config paths come from flags, falling back to the VPRM_CONFIG
// environment variable (a JSON file naming schema/rules/reward paths), and
// finally to the built-in defaults.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vprm/dataset.hpp"
#include "vprm/metrics.hpp"
#include "vprm/policy_sim.hpp"
#include "vprm/service.hpp"
#include "vprm/theorem.hpp"

namespace {

using vprm::json;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw vprm::ValidationError("cannot open file: " + path);
  return json::parse(in);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw vprm::ValidationError("cannot open file for writing: " + path);
  out << content;
}

struct ConfigPaths {
  std::string schema;
  std::string rules;
  std::string reward;
};

// flag > VPRM_CONFIG entry > builtin
ConfigPaths resolve_config_paths(const ConfigPaths& flags) {
  ConfigPaths paths = flags;
  if (const char* env = std::getenv("VPRM_CONFIG")) {
    const json j = read_json_file(env);
    if (paths.schema.empty()) paths.schema = j.value("schema", std::string());
    if (paths.rules.empty()) paths.rules = j.value("rules", std::string());
    if (paths.reward.empty()) paths.reward = j.value("reward", std::string());
  }
  return paths;
}

vprm::EngineConfig load_engine_config(const ConfigPaths& flags) {
  const ConfigPaths paths = resolve_config_paths(flags);
  vprm::SchemaSet schemas = paths.schema.empty()
                                ? vprm::SchemaSet::builtin()
                                : vprm::SchemaSet::from_json(read_json_file(paths.schema));
  vprm::RuleTableSet rules =
      paths.rules.empty() ? vprm::RuleTableSet::builtin(schemas)
                          : vprm::RuleTableSet::from_json(read_json_file(paths.rules), schemas);
  vprm::RewardConfig reward = paths.reward.empty()
                                  ? vprm::RewardConfig{}
                                  : vprm::RewardConfig::from_json(read_json_file(paths.reward));
  return {std::move(schemas), std::move(rules), reward};
}

int cmd_score(const ConfigPaths& paths, const std::string& dataset_path,
              const std::string& traces_path, const std::string& out_path, bool strict) {
  const vprm::EngineConfig config = load_engine_config(paths);
  const auto loaded = vprm::load_dataset(dataset_path, config.schemas, strict);
  for (const auto& issue : loaded.issues) {
    std::cerr << "dataset line " << issue.line << ": " << issue.message << "\n";
  }
  const auto traces = vprm::load_traces(traces_path);
  const vprm::ScoreBatchResult result =
      vprm::score_batch(loaded.records, traces, config, config.reward);
  if (out_path.empty()) {
    std::cout << result.to_jsonl();
  } else {
    write_text_file(out_path, result.to_jsonl());
  }
  return 0;
}

int cmd_metrics(const ConfigPaths& paths, const std::string& input_path,
                const std::string& mode_name, const std::string& json_out) {
  const vprm::EngineConfig config = load_engine_config(paths);
  std::ifstream in(input_path);
  if (!in) throw vprm::ValidationError("cannot open eval file: " + input_path);
  std::vector<vprm::EvalRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(vprm::EvalRecord::from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw vprm::ValidationError("eval line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  const auto mode = vprm::normalize_ident(mode_name) == "strict" ? vprm::CoherenceMode::Strict
                                                                 : vprm::CoherenceMode::Lenient;
  const vprm::MetricsReport report =
      vprm::compute_metrics(records, config.rules, config.schemas, mode);
  std::cout << report.to_table();
  if (!json_out.empty()) write_text_file(json_out, report.to_json().dump(2) + "\n");
  return 0;
}

struct SimulateArgs {
  std::string domain = "A";
  std::string algo = "grpo";
  std::string variant = "full";
  bool no_outcome = false;
  std::size_t instances = 8;
  std::size_t group_size = 16;
  std::size_t iterations = 500;
  std::size_t inner_epochs = 1;
  double learning_rate = 0.5;
  double beta = 0.0;
  double eps = 0.2;
  double eps_low = 0.2;
  double eps_high = 0.28;
  std::uint64_t seed = 7;
  bool distinct_golds = false;
  std::string init = "uniform";
  std::string log_path;
  std::string summary_path;
};

int cmd_simulate(const ConfigPaths& paths, const SimulateArgs& args) {
  const vprm::EngineConfig config = load_engine_config(paths);
  vprm::Simulator sim(config.schemas, config.rules);
  const vprm::DomainId domain = vprm::domain_from_string(args.domain);

  vprm::TrainConfig train;
  train.optim.algo = vprm::algo_from_string(args.algo);
  train.optim.eps = args.eps;
  train.optim.eps_low = args.eps_low;
  train.optim.eps_high = args.eps_high;
  train.optim.beta = args.beta;
  train.reward = config.reward;
  train.reward.mode.variant = vprm::variant_from_string(args.variant);
  train.reward.mode.include_outcome =
      !args.no_outcome || train.reward.mode.variant == vprm::RewardVariant::OutcomeOnly;
  train.group_size = args.group_size;
  train.iterations = args.iterations;
  train.inner_epochs = args.inner_epochs;
  train.learning_rate = args.learning_rate;
  train.seed = args.seed;

  const auto dataset = sim.make_dataset(domain, args.instances, args.seed, !args.distinct_golds);
  vprm::TabularPolicy policy = sim.init_policy(
      domain, args.seed,
      vprm::normalize_ident(args.init) == "random" ? vprm::PolicyInit::Random
                                                   : vprm::PolicyInit::Uniform);
  const vprm::TrainingLog log = sim.train(policy, dataset, train);

  std::string jsonl;
  for (const auto& it : log.iterations) {
    jsonl += it.to_json().dump();
    jsonl += "\n";
  }
  if (args.log_path.empty()) {
    std::cout << jsonl;
  } else {
    write_text_file(args.log_path, jsonl);
  }
  json summary = log.summary();
  summary["algo"] = args.algo;
  summary["variant"] = vprm::variant_to_string(train.reward.mode.variant);
  summary["include_outcome"] = train.reward.mode.include_outcome;
  summary["domain"] = vprm::domain_to_string(domain);
  summary["group_size"] = train.group_size;
  summary["seed"] = train.seed;
  summary["learning_rate"] = train.learning_rate;
  if (args.summary_path.empty()) {
    std::cerr << summary.dump(2) << "\n";
  } else {
    write_text_file(args.summary_path, summary.dump(2) + "\n");
  }
  return 0;
}

struct TheoremArgs {
  double p = 0.5;
  double mu_c = 1.0;
  double mu_i = 0.0;
  std::string dist_c = "point_mass";
  std::string dist_i = "point_mass";
  double half_width_c = 0.0;
  double half_width_i = 0.0;
  double sigma_c = 0.0;
  double sigma_i = 0.0;
  std::size_t group_size = 1024;
  std::size_t trials = 10000;
  std::uint64_t seed = 1;
  std::optional<double> scale;
  std::string json_out;
};

int cmd_verify_theorem(const TheoremArgs& args) {
  auto make_law = [](const std::string& kind, double mean, double half_width, double sigma) {
    return vprm::LawDescriptor::from_json(
        json{{"kind", kind}, {"half_width", half_width}, {"sigma", sigma}}, mean);
  };
  vprm::RewardLawSpec spec;
  spec.p = args.p;
  spec.dist_c = make_law(args.dist_c, args.mu_c, args.half_width_c, args.sigma_c);
  spec.dist_i = make_law(args.dist_i, args.mu_i, args.half_width_i, args.sigma_i);
  spec.validate();

  const vprm::SeparationResult result =
      args.scale ? vprm::dapo_scaling_check(spec, *args.scale, args.group_size, args.trials,
                                            args.seed)
                 : vprm::simulate_separation(spec, args.group_size, args.trials, args.seed);

  std::cout << "spec: p=" << spec.p << " mu_c=" << spec.mu_c() << " mu_i=" << spec.mu_i()
            << " sigma=" << std::sqrt(spec.mixture_variance()) << "\n"
            << "analytic  E[A|correct]=" << result.analytic_pos
            << "  E[A|incorrect]=" << result.analytic_neg << "\n"
            << "empirical E[A|correct]=" << result.empirical_pos
            << "  E[A|incorrect]=" << result.empirical_neg << "\n"
            << "trials=" << result.trials << " G=" << result.group_size
            << " ci_halfwidth=" << result.ci_halfwidth
            << " zero_variance_trials=" << result.zero_variance_trials << "\n"
            << "sign separation: "
            << (result.empirical_pos > 0 && result.empirical_neg < 0 ? "holds" : "VIOLATED")
            << "\n";
  json out = result.to_json();
  out["spec"] = spec.to_json();
  if (!args.json_out.empty()) write_text_file(args.json_out, out.dump(2) + "\n");
  return result.empirical_pos > 0 && result.empirical_neg < 0 ? 0 : 1;
}

int cmd_serve(const ConfigPaths& paths, const std::string& host, int port,
              const std::string& dataset_path, bool strict) {
  const vprm::EngineConfig config = load_engine_config(paths);
  std::vector<vprm::InstanceRecord> records;
  if (!dataset_path.empty()) {
    auto loaded = vprm::load_dataset(dataset_path, config.schemas, strict);
    for (const auto& issue : loaded.issues) {
      std::cerr << "dataset line " << issue.line << ": " << issue.message << "\n";
    }
    records = std::move(loaded.records);
  }
  vprm::ScoringService service(config, std::move(records));
  std::cerr << "vprm " << vprm::kEngineVersion << " serving on " << host << ":" << port
            << " (config " << config.config_hash() << ")\n";
  service.listen(host, port);
  return 0;
}

int cmd_validate_config(const ConfigPaths& paths) {
  const vprm::EngineConfig config = load_engine_config(paths);
  // cross-validate: every rule table must evaluate totally over its domain
  for (vprm::DomainId d : vprm::kAllDomains) {
    const auto rows =
        vprm::enumerate_truth_table(config.rules.table(d), config.schemas.domain(d));
    std::cout << "domain " << vprm::domain_to_string(d) << ": "
              << config.schemas.domain(d).steps.size() << " steps, " << rows.size()
              << " assignments, total\n";
  }
  std::cout << "schema version: " << config.schemas.version() << "\n"
            << "rules version:  " << config.rules.version() << "\n"
            << "reward config:  " << config.reward.to_json().dump() << "\n"
            << "config hash:    " << config.config_hash() << "\n"
            << "OK\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vprm: verifiable process reward engine for risk-of-bias reasoning traces"};
  app.require_subcommand(1);

  ConfigPaths paths;
  app.add_option("--schema", paths.schema, "schema config JSON (default: built-in)");
  app.add_option("--rules", paths.rules, "rule-table config JSON (default: built-in)");
  app.add_option("--reward-config", paths.reward, "reward config JSON (default: built-in)");

  auto* score = app.add_subcommand("score", "score traces against a JSONL dataset");
  std::string dataset_path, traces_path, out_path;
  bool strict = false;
  score->add_option("--dataset", dataset_path, "JSONL dataset of gold records")->required();
  score->add_option("--traces", traces_path, "JSONL traces keyed by record id")->required();
  score->add_option("--out", out_path, "output JSONL path (default: stdout)");
  score->add_flag("--strict", strict, "abort on the first invalid dataset line");

  auto* metrics = app.add_subcommand("metrics", "compute metrics over an eval JSONL file");
  std::string eval_path, mode_name = "lenient", metrics_json;
  metrics->add_option("--input", eval_path, "JSONL of eval records")->required();
  metrics->add_option("--coherence-mode", mode_name, "lenient|strict (default lenient)");
  metrics->add_option("--json", metrics_json, "write the full report JSON here");

  auto* simulate = app.add_subcommand("simulate", "train the tabular policy simulator");
  SimulateArgs sim_args;
  simulate->add_option("--domain", sim_args.domain, "bias domain A-I (default A)");
  simulate->add_option("--algo", sim_args.algo, "grpo|dapo (default grpo)");
  simulate->add_option("--variant", sim_args.variant, "full|steps_only|outcome_only");
  simulate->add_flag("--no-outcome", sim_args.no_outcome, "exclude the outcome reward");
  simulate->add_option("--instances", sim_args.instances, "dataset size (default 8)");
  simulate->add_option("--group-size", sim_args.group_size, "G (default 16)");
  simulate->add_option("--iterations", sim_args.iterations, "training iterations (default 500)");
  simulate->add_option("--inner-epochs", sim_args.inner_epochs, "updates per sampled batch");
  simulate->add_option("--lr", sim_args.learning_rate, "learning rate (default 0.5)");
  simulate->add_option("--beta", sim_args.beta, "GRPO KL coefficient (default 0)");
  simulate->add_option("--eps", sim_args.eps, "GRPO clip radius (default 0.2)");
  simulate->add_option("--eps-low", sim_args.eps_low, "DAPO lower clip radius (default 0.2)");
  simulate->add_option("--eps-high", sim_args.eps_high, "DAPO upper clip radius (default 0.28)");
  simulate->add_option("--seed", sim_args.seed, "master seed (default 7)");
  simulate->add_flag("--distinct-golds", sim_args.distinct_golds,
                     "draw a fresh gold assignment per instance");
  simulate->add_option("--init", sim_args.init, "uniform|random policy init");
  simulate->add_option("--log", sim_args.log_path, "JSONL training log path (default stdout)");
  simulate->add_option("--summary", sim_args.summary_path, "summary JSON path (default stderr)");

  auto* theorem = app.add_subcommand("verify-theorem", "Monte-Carlo check of sign separation");
  TheoremArgs th_args;
  double scale_value = 1.0;
  theorem->add_option("--p", th_args.p, "P(correct) in (0,1)");
  theorem->add_option("--mu-c", th_args.mu_c, "E[R | correct]");
  theorem->add_option("--mu-i", th_args.mu_i, "E[R | incorrect]");
  theorem->add_option("--dist-c", th_args.dist_c, "point_mass|uniform|truncated_normal");
  theorem->add_option("--dist-i", th_args.dist_i, "point_mass|uniform|truncated_normal");
  theorem->add_option("--half-width-c", th_args.half_width_c, "uniform half width (correct)");
  theorem->add_option("--half-width-i", th_args.half_width_i, "uniform half width (incorrect)");
  theorem->add_option("--sigma-c", th_args.sigma_c, "truncated-normal sigma (correct)");
  theorem->add_option("--sigma-i", th_args.sigma_i, "truncated-normal sigma (incorrect)");
  theorem->add_option("--group-size", th_args.group_size, "G (default 1024)");
  theorem->add_option("--trials", th_args.trials, "Monte-Carlo trials (default 10000)");
  theorem->add_option("--seed", th_args.seed, "master seed");
  auto* scale_opt =
      theorem->add_option("--scale", scale_value, "DAPO token-weight scaling check c >= 0");
  theorem->add_option("--json", th_args.json_out, "write the result JSON here");

  auto* serve = app.add_subcommand("serve", "run the HTTP scoring service");
  std::string host = "0.0.0.0";
  int port = 8080;
  std::string serve_dataset;
  serve->add_option("--host", host, "bind address (default 0.0.0.0)");
  serve->add_option("--port", port, "port (default 8080)");
  serve->add_option("--dataset", serve_dataset, "JSONL dataset served by record id");
  serve->add_flag("--strict", strict, "abort on the first invalid dataset line");

  auto* validate = app.add_subcommand("validate-config", "validate config documents and exit");

  CLI11_PARSE(app, argc, argv);

  try {
    if (score->parsed()) return cmd_score(paths, dataset_path, traces_path, out_path, strict);
    if (metrics->parsed()) return cmd_metrics(paths, eval_path, mode_name, metrics_json);
    if (simulate->parsed()) return cmd_simulate(paths, sim_args);
    if (theorem->parsed()) {
      if (scale_opt->count() > 0) th_args.scale = scale_value;
      return cmd_verify_theorem(th_args);
    }
    if (serve->parsed()) return cmd_serve(paths, host, port, serve_dataset, strict);
    if (validate->parsed()) return cmd_validate_config(paths);
  } catch (const vprm::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const vprm::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 1;
  } catch (const vprm::ContractError& e) {
    std::cerr << "contract error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
