// Stateless HTTP scoring service. All scoring state is immutable after
// startup; per-request reward overrides are allowed but rule tables are
// fixed per deployment so scored ground truth stays auditable. Only a
// monotonic request counter is shared, updated atomically.
//
// Endpoints:
//   POST /score       ScoreRequest array -> ScoreResponse array
//   POST /advantages  reward groups -> per-group normalized advantages
//   GET  /health      engine version + config hash
//   GET  /schema/{domain}
#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "vprm/common.hpp"
#include "vprm/dataset.hpp"
#include "vprm/group_optim.hpp"

namespace vprm {

class ScoringService {
 public:
  explicit ScoringService(EngineConfig config, std::vector<InstanceRecord> dataset = {})
      : config_(std::move(config)) {
    for (auto& rec : dataset) {
      const std::string id = rec.id;
      if (!records_.emplace(id, std::move(rec)).second) {
        throw ValidationError("duplicate record id '" + id + "' in service dataset");
      }
    }
    setup_routes();
  }

  // Blocks until stop(); throws when the port cannot be bound.
  void listen(const std::string& host, int port) {
    if (!server_.listen(host, port)) {
      throw ValidationError("cannot bind " + host + ":" + std::to_string(port));
    }
  }

  // Binds an ephemeral port and serves on a background-friendly handle;
  // returns the chosen port. Used by tests.
  int bind_any_port(const std::string& host = "127.0.0.1") {
    const int port = server_.bind_to_any_port(host);
    if (port <= 0) throw ValidationError("cannot bind an ephemeral port on " + host);
    return port;
  }

  void listen_after_bind() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  bool is_running() const { return server_.is_running(); }

  std::uint64_t requests_served() const { return requests_.load(); }

 private:
  static void reply_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void setup_routes() {
    server_.Post("/score", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&]() -> std::pair<int, json> {
        json body;
        try {
          body = json::parse(req.body);
        } catch (const std::exception& e) {
          return {400, json{{"error", "malformed JSON body"}, {"detail", e.what()}}};
        }
        if (!body.is_array()) {
          return {400, json{{"error", "body must be a ScoreRequest array"}}};
        }
        json out = json::array();
        for (std::size_t i = 0; i < body.size(); ++i) {
          const json& entry = body[i];
          try {
            InstanceRecord record;
            if (entry.contains("record_id")) {
              const auto id = entry.at("record_id").get<std::string>();
              const auto it = records_.find(id);
              if (it == records_.end()) {
                return {422, json{{"error", "unknown record id"}, {"request_index", i}, {"id", id}}};
              }
              record = it->second;
            } else if (entry.contains("gold")) {
              record = InstanceRecord::from_json(entry.at("gold"));
              record.validate(config_.schemas);
            } else {
              return {422, json{{"error", "request needs 'record_id' or inline 'gold'"},
                                {"request_index", i}}};
            }
            RewardConfig reward = config_.reward;
            if (entry.contains("reward")) {
              json merged = reward.to_json();
              merged.update(entry.at("reward"));
              reward = RewardConfig::from_json(merged);
            }
            json line = score_one(record, entry.at("trace_text").get<std::string>(), config_, reward);
            line["engine_version"] = kEngineVersion;
            out.push_back(std::move(line));
          } catch (const SchemaError& e) {
            return {422, json{{"error", e.what()}, {"request_index", i}}};
          } catch (const ValidationError& e) {
            return {422, json{{"error", e.what()}, {"request_index", i}}};
          } catch (const json::exception& e) {
            return {400, json{{"error", e.what()}, {"request_index", i}}};
          }
        }
        return {200, out};
      });
    });

    server_.Post("/advantages", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&]() -> std::pair<int, json> {
        json body;
        try {
          body = json::parse(req.body);
        } catch (const std::exception& e) {
          return {400, json{{"error", "malformed JSON body"}, {"detail", e.what()}}};
        }
        if (!body.is_object() || !body.contains("groups") || !body.at("groups").is_array()) {
          return {400, json{{"error", "body must contain a 'groups' array"}}};
        }
        bool filter = body.value("dapo_filter", false);
        if (body.contains("algo")) {
          filter = filter || algo_from_string(body.at("algo").get<std::string>()) == Algo::Dapo;
        }
        json out_groups = json::array();
        for (std::size_t gi = 0; gi < body.at("groups").size(); ++gi) {
          const json& g = body.at("groups")[gi];
          try {
            const auto rewards = g.at("rewards").get<std::vector<double>>();
            const AdvantageVector adv = normalize_advantages(rewards);
            bool kept = true;
            if (filter) {
              if (g.contains("correctness")) {
                kept = dapo_filter(g.at("correctness").get<std::vector<bool>>());
              } else {
                // verifiable rewards: a zero-variance group is all-correct or
                // all-wrong, exactly what dynamic sampling drops
                kept = adv.group_std > 0.0;
              }
            }
            json entry = {{"kept", kept}};
            if (kept) {
              entry["advantages"] = adv.values;
              entry["mean"] = adv.group_mean;
              entry["std"] = adv.group_std;
            }
            out_groups.push_back(std::move(entry));
          } catch (const NumericError& e) {
            return {422, json{{"error", e.what()}, {"group_index", gi}}};
          } catch (const json::exception& e) {
            return {400, json{{"error", e.what()}, {"group_index", gi}}};
          }
        }
        return {200, json{{"groups", out_groups}}};
      });
    });

    server_.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      handle(res, [&]() -> std::pair<int, json> {
        return {200, json{{"version", kEngineVersion},
                          {"config_hash", config_.config_hash()},
                          {"records", records_.size()},
                          {"requests_served", requests_.load()}}};
      });
    });

    server_.Get(R"(/schema/([A-Za-z]))", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&]() -> std::pair<int, json> {
        try {
          const DomainId id = domain_from_string(req.matches[1].str());
          const DomainSchema& schema = config_.schemas.domain(id);
          json steps = json::array();
          for (const auto& s : schema.steps) {
            steps.push_back({{"name", s.name}, {"labels", s.allowed_labels}});
          }
          return {200, json{{"domain", domain_to_string(id)}, {"title", schema.title}, {"steps", steps}}};
        } catch (const SchemaError& e) {
          return {422, json{{"error", e.what()}}};
        }
      });
    });
  }

  template <typename Handler>
  void handle(httplib::Response& res, Handler&& body) {
    requests_.fetch_add(1, std::memory_order_relaxed);
    try {
      auto [status, payload] = body();
      reply_json(res, status, payload);
    } catch (const std::exception& e) {
      // opaque id in the response; detail stays server-side
      const auto id = requests_.load(std::memory_order_relaxed);
      std::fprintf(stderr, "[vprm-service] error %llu: %s\n",
                   static_cast<unsigned long long>(id), e.what());
      reply_json(res, 500, json{{"error", "internal error"}, {"incident", id}});
    }
  }

  EngineConfig config_;
  std::map<std::string, InstanceRecord> records_;
  httplib::Server server_;
  std::atomic<std::uint64_t> requests_{0};
};

}  // namespace vprm
