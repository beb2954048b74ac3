#pragma once

// Clients for OpenAI-compatible HTTP endpoints: a chat-completion backend
// (in-context and fine-tuned chat models) and a legacy completion backend
// that ranks labels by the log-probabilities of the first completion token.

#include <atomic>
#include <string>

#include <nlohmann/json.hpp>

#include "omniact/backend.hpp"

namespace omniact {

// Bearer token source for all HTTP backends.
inline constexpr const char* kApiKeyEnv = "OMNIACT_API_KEY";

// Separator between a tuple and its completion in legacy fine-tune data.
inline constexpr std::string_view kLegacySeparator = "\n\n###\n\n";

// POSTs JSON with timeout, bounded retries and exponential backoff on
// timeouts, connection failures, 429 and 5xx.
class HttpTransport {
 public:
  explicit HttpTransport(const BackendConfig& config);

  nlohmann::json post_json(const std::string& path, const nlohmann::json& body);
  // Attempts made, including retries.
  std::size_t attempts() const { return attempts_.load(); }

 private:
  std::string scheme_host_port_;
  std::string base_path_;
  std::chrono::milliseconds timeout_;
  std::size_t retries_;
  std::chrono::milliseconds backoff_;
  std::atomic<std::size_t> attempts_{0};
};

class HttpChatBackend : public Backend {
 public:
  explicit HttpChatBackend(const BackendConfig& config);

  // POST {endpoint}/chat/completions; returns choices[0].message.content.
  std::string chat(const PromptBundle& bundle) override;
  // Throws BackendError(Unsupported).
  RankedLabels classify(const std::string& tuple, LabelSpace space, std::size_t n) override;
  std::string model_name() const override { return config_.model_name; }
  std::size_t max_in_flight() const override { return config_.max_in_flight; }

  const HttpTransport& transport() const { return transport_; }

 private:
  BackendConfig config_;
  HttpTransport transport_;
};

class LogprobClassifier : public Backend {
 public:
  explicit LogprobClassifier(const BackendConfig& config);

  // Throws BackendError(Unsupported).
  std::string chat(const PromptBundle& bundle) override;
  // POST {endpoint}/completions with prompt = tuple + separator, reads the
  // first token's top_logprobs and maps tokens onto the label space.
  // Throws UnknownLabelEmitted when no candidate token is a label.
  RankedLabels classify(const std::string& tuple, LabelSpace space, std::size_t n) override;
  std::string model_name() const override { return config_.model_name; }
  std::size_t max_in_flight() const override { return config_.max_in_flight; }

 private:
  BackendConfig config_;
  HttpTransport transport_;
};

// Ranks the top_logprobs object of a completion response. Exposed for tests.
RankedLabels rank_logprobs(const nlohmann::json& top_logprobs, LabelSpace space, std::size_t n);

}  // namespace omniact
