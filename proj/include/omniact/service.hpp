#pragma once

// HTTP prediction service. Handlers are plain functions of the request body
// so they can be exercised without a socket; ServiceServer binds them to
// routes.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "omniact/backend.hpp"
#include "omniact/converter.hpp"
#include "omniact/corpus.hpp"
#include "omniact/prompt.hpp"

namespace omniact {

struct ServiceConfig {
  BackendConfig backend;
  std::optional<std::filesystem::path> corpus;  // few-shot pool and /stats source; ingest persists here
  std::filesystem::path feedback_log = "feedback.jsonl";
  std::optional<std::filesystem::path> learned_exemplars;  // output of `fewshots promote`
  std::optional<std::filesystem::path> converter_fixtures;
  std::string host = "127.0.0.1";
  int port = 8080;

  // Relative paths resolve against base_dir.
  static ServiceConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ServiceConfig load(const std::filesystem::path& path);
};

struct HttpResult {
  int status = 200;
  nlohmann::ordered_json body;
};

class PredictionService {
 public:
  PredictionService(std::shared_ptr<Backend> backend, Corpus corpus, std::filesystem::path feedback_log,
                    ConverterRegistry converters = {}, Corpus learned_exemplars = {},
                    std::optional<std::filesystem::path> corpus_path = std::nullopt);

  static std::unique_ptr<PredictionService> from_config(const ServiceConfig& config);

  HttpResult predict(const std::string& body);
  HttpResult feedback(const std::string& body);
  HttpResult actions() const;
  HttpResult stats() const;
  HttpResult ingest(const std::string& body);
  HttpResult convert(const std::string& body) const;

 private:
  struct Served {
    DiaryEntry entry;  // capture + context of the request
    Family family;
    Level level;
    TargetModality target;
    std::vector<Label> shown;
  };

  void rebuild_stores();  // requires corpus_mu_ held exclusively

  std::shared_ptr<Backend> backend_;
  ConverterRegistry converters_;
  std::optional<std::filesystem::path> corpus_path_;
  Corpus learned_;

  mutable std::shared_mutex corpus_mu_;
  Corpus corpus_;
  FewShotStore action_store_;
  FewShotStore target_store_;

  std::mutex served_mu_;
  std::map<std::string, Served> served_;

  mutable std::mutex feedback_mu_;
  std::filesystem::path feedback_log_;
  std::set<std::string> feedback_keys_;  // request_id + '\n' + selected
  std::size_t feedback_records_ = 0;
  std::size_t feedback_misses_ = 0;
};

// Turns logged feedback into single-action exemplar entries
// (id "fb-<request_id prefix>-<label>"), one per specific-level record.
Corpus promote_feedback(const std::filesystem::path& feedback_log);

class ServiceServer {
 public:
  explicit ServiceServer(PredictionService& service);
  ~ServiceServer();
  ServiceServer(const ServiceServer&) = delete;
  ServiceServer& operator=(const ServiceServer&) = delete;

  // Port 0 binds an ephemeral port. Returns the bound port or throws.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace omniact
