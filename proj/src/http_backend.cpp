#include "omniact/http_backend.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <thread>

#include "omniact/parser.hpp"

namespace omniact {
namespace {

using json = nlohmann::json;

BackendError transport_error(httplib::Error err) {
  const auto what = "request failed: " + httplib::to_string(err);
  switch (err) {
    case httplib::Error::Read:
    case httplib::Error::Write:
    case httplib::Error::ConnectionTimeout:
      return BackendError(BackendErrorKind::Timeout, what);
    default:
      return BackendError(BackendErrorKind::Unreachable, what);
  }
}

// Maps one completion token onto a label: exact normalization first, then a
// unique prefix of a canonical name (first tokens are often word pieces).
std::optional<Label> token_label(std::string_view token, LabelSpace space) {
  if (auto l = try_normalize_label(token, space)) return l;
  const auto folded = fold_label(token);
  if (folded.empty()) return std::nullopt;
  std::optional<Label> found;
  for (auto l : all_labels(space)) {
    if (fold_label(canonical_name(l)).rfind(folded, 0) == 0) {
      if (found) return std::nullopt;
      found = l;
    }
  }
  return found;
}

}  // namespace

HttpTransport::HttpTransport(const BackendConfig& config)
    : timeout_(config.timeout), retries_(config.retries), backoff_(config.backoff) {
  const auto& endpoint = config.endpoint.value_or("");
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) throw Error("endpoint '" + endpoint + "' has no scheme");
  const auto path_start = endpoint.find('/', scheme_end + 3);
  scheme_host_port_ = endpoint.substr(0, path_start);
  base_path_ = path_start == std::string::npos ? "" : endpoint.substr(path_start);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
}

json HttpTransport::post_json(const std::string& path, const json& body) {
  httplib::Headers headers;
  if (const char* key = std::getenv(kApiKeyEnv); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const auto payload = body.dump(-1, ' ', false, json::error_handler_t::replace);
  const auto seconds = timeout_.count() / 1000;
  const auto micros = (timeout_.count() % 1000) * 1000;

  for (std::size_t attempt = 0;; ++attempt) {
    ++attempts_;
    std::optional<BackendError> failure;
    {
      // Clients are cheap and not safe to share across threads.
      httplib::Client client(scheme_host_port_);
      client.set_connection_timeout(seconds, micros);
      client.set_read_timeout(seconds, micros);
      client.set_write_timeout(seconds, micros);
      auto res = client.Post(base_path_ + path, headers, payload, "application/json");
      if (!res) {
        failure = transport_error(res.error());
      } else if (res->status == 429) {
        failure = BackendError(BackendErrorKind::RateLimited, "rate limited (429)", 429);
      } else if (res->status < 200 || res->status >= 300) {
        failure = BackendError(BackendErrorKind::HttpStatus, "HTTP " + std::to_string(res->status), res->status);
      } else {
        json j = json::parse(res->body, nullptr, false);
        if (j.is_discarded()) throw BackendError(BackendErrorKind::BadResponse, "response body is not JSON");
        return j;
      }
    }
    if (!failure->retryable() || attempt >= retries_) throw *failure;
    std::this_thread::sleep_for(backoff_ * (1LL << std::min<std::size_t>(attempt, 16)));
  }
}

HttpChatBackend::HttpChatBackend(const BackendConfig& config) : config_(config), transport_(config) {}

std::string HttpChatBackend::chat(const PromptBundle& bundle) {
  count_request();
  json body;
  body["model"] = config_.model_name;
  body["temperature"] = config_.temperature;
  body["max_tokens"] = config_.max_tokens;
  body["messages"] = json::array();
  for (const auto& m : bundle.messages) {
    body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  const auto res = transport_.post_json("/chat/completions", body);
  try {
    return res.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw BackendError(BackendErrorKind::BadResponse, "response has no choices[0].message.content");
  }
}

RankedLabels HttpChatBackend::classify(const std::string&, LabelSpace, std::size_t) {
  throw BackendError(BackendErrorKind::Unsupported, "chat backend does not classify; use logprob_classifier");
}

LogprobClassifier::LogprobClassifier(const BackendConfig& config) : config_(config), transport_(config) {}

std::string LogprobClassifier::chat(const PromptBundle&) {
  throw BackendError(BackendErrorKind::Unsupported, "logprob classifier does not chat; use http_chat");
}

RankedLabels LogprobClassifier::classify(const std::string& tuple, LabelSpace space, std::size_t n) {
  if (n > space_size(space)) throw std::invalid_argument("n exceeds the label space");
  count_request();
  json body;
  body["model"] = config_.model_name;
  body["prompt"] = tuple + std::string(kLegacySeparator);
  body["max_tokens"] = 1;
  body["temperature"] = config_.temperature;
  body["logprobs"] = std::max<std::size_t>(n, 5);
  const auto res = transport_.post_json("/completions", body);
  json top;
  try {
    top = res.at("choices").at(0).at("logprobs").at("top_logprobs").at(0);
  } catch (const json::exception&) {
    throw BackendError(BackendErrorKind::BadResponse, "response has no choices[0].logprobs.top_logprobs[0]");
  }
  return rank_logprobs(top, space, n);
}

RankedLabels rank_logprobs(const json& top_logprobs, LabelSpace space, std::size_t n) {
  if (!top_logprobs.is_object()) throw BackendError(BackendErrorKind::BadResponse, "top_logprobs is not an object");
  std::vector<double> prob(space_size(space), 0.0);
  std::vector<bool> seen(space_size(space), false);
  for (const auto& [token, lp] : top_logprobs.items()) {
    if (!lp.is_number()) continue;
    if (auto l = token_label(token, space)) {
      prob[l->code] += std::exp(lp.get<double>());
      seen[l->code] = true;
    }
  }
  if (std::find(seen.begin(), seen.end(), true) == seen.end()) throw UnknownLabelEmitted(top_logprobs.dump());
  auto ranked = rank_labels(space, prob, std::min(n, space_size(space)));
  std::erase_if(ranked.items, [&](const auto& item) { return !seen[item.first.code]; });
  return ranked;
}

}  // namespace omniact
