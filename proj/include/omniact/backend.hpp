#pragma once

// Predictor backends. Every backend answers two questions behind one
// interface: PromptBundle -> completion text, and tuple -> ranked labels.
// Callers never branch on the concrete kind.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "omniact/error.hpp"
#include "omniact/prompt.hpp"
#include "omniact/taxonomy.hpp"

namespace omniact {

enum class BackendKind : std::uint8_t { HttpChat, LogprobClassifier, Mock };

std::string_view to_string(BackendKind kind);
BackendKind parse_backend_kind(std::string_view text);

struct BackendConfig {
  BackendKind kind = BackendKind::Mock;
  std::optional<std::string> endpoint;  // required for http kinds, e.g. "https://host/v1"
  std::string model_name = "mock";
  double temperature = 0.0;
  std::size_t max_in_flight = 4;
  std::chrono::milliseconds timeout{30'000};
  std::size_t retries = 2;
  std::chrono::milliseconds backoff{500};  // first retry delay, doubled each attempt
  std::size_t max_tokens = 1024;

  // Mock settings: "rules" (keyword table) or "oracle" (answers ground truth).
  std::string mock_mode = "rules";
  std::optional<std::filesystem::path> rules;
  std::optional<std::filesystem::path> oracle_corpus;

  std::optional<std::filesystem::path> cache_dir;

  // Relative paths are resolved against base_dir.
  static BackendConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static BackendConfig load(const std::filesystem::path& path);
  // Throws Error when an invariant is violated.
  void validate() const;
};

enum class BackendErrorKind : std::uint8_t { Timeout, HttpStatus, RateLimited, Unreachable, BadResponse, Unsupported };

std::string_view to_string(BackendErrorKind kind);

class BackendError : public Error {
 public:
  BackendError(BackendErrorKind kind, const std::string& what, int status = 0)
      : Error(what), kind_(kind), status_(status) {}
  BackendErrorKind kind() const { return kind_; }
  int status() const { return status_; }
  bool retryable() const {
    return kind_ == BackendErrorKind::Timeout || kind_ == BackendErrorKind::RateLimited ||
           kind_ == BackendErrorKind::Unreachable || (kind_ == BackendErrorKind::HttpStatus && status_ >= 500);
  }

 private:
  BackendErrorKind kind_;
  int status_;
};

class UnknownLabelEmitted : public Error {
 public:
  explicit UnknownLabelEmitted(const std::string& raw)
      : Error("classifier emitted no label inside the taxonomy: " + raw) {}
};

class RuleParseError : public Error {
 public:
  using Error::Error;
};

// Ordered (label, score) pairs, scores non-increasing, length <= requested n.
struct RankedLabels {
  std::vector<std::pair<Label, double>> items;

  std::vector<Label> labels() const;
  nlohmann::json to_json() const;
  static RankedLabels from_json(const nlohmann::json& j);
};

// Top-n of `scores` (one per label of the space, canonical order) by score,
// ties in canonical order. Throws std::invalid_argument when n exceeds the
// label space or the score vector has the wrong size.
RankedLabels rank_labels(LabelSpace space, const std::vector<double>& scores, std::size_t n);

class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string chat(const PromptBundle& bundle) = 0;
  virtual RankedLabels classify(const std::string& tuple, LabelSpace space, std::size_t n) = 0;

  virtual std::string model_name() const = 0;
  virtual std::size_t max_in_flight() const { return 1; }
  // Requests that reached the underlying predictor (cache hits excluded).
  virtual std::size_t request_count() const { return requests_.load(); }

 protected:
  void count_request() { ++requests_; }

 private:
  std::atomic<std::size_t> requests_{0};
};

// sha256(model_name, purpose, payload) as lowercase hex.
std::string cache_key(std::string_view model_name, std::string_view purpose, std::string_view payload);

// Content-addressed response store: one file per key holding
// {key, request, response, timestamp}. Writes go through a temp file and a
// rename, so concurrent writers of the same key are last-writer-wins.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const nlohmann::json& request, const std::string& response) const;
  std::filesystem::path path_for(const std::string& key) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

class CachingBackend : public Backend {
 public:
  CachingBackend(std::shared_ptr<Backend> inner, ResponseCache cache);

  std::string chat(const PromptBundle& bundle) override;
  RankedLabels classify(const std::string& tuple, LabelSpace space, std::size_t n) override;
  std::string model_name() const override { return inner_->model_name(); }
  std::size_t max_in_flight() const override { return inner_->max_in_flight(); }
  std::size_t request_count() const override { return inner_->request_count(); }

  std::size_t hits() const { return hits_.load(); }
  const ResponseCache& cache() const { return cache_; }

 private:
  std::shared_ptr<Backend> inner_;
  ResponseCache cache_;
  std::atomic<std::size_t> hits_{0};
};

// Builds the backend a config describes, wrapped in a cache when cache_dir is
// set.
std::shared_ptr<Backend> make_backend(const BackendConfig& config);

}  // namespace omniact
