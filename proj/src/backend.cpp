#include "omniact/backend.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "omniact/http_backend.hpp"
#include "omniact/mock_backend.hpp"

namespace omniact {
namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::HttpChat:
      return "http_chat";
    case BackendKind::LogprobClassifier:
      return "logprob_classifier";
    case BackendKind::Mock:
      return "mock";
  }
  return "";
}

BackendKind parse_backend_kind(std::string_view text) {
  for (auto k : {BackendKind::HttpChat, BackendKind::LogprobClassifier, BackendKind::Mock}) {
    if (to_string(k) == text) return k;
  }
  throw Error("unknown backend kind '" + std::string(text) + "'");
}

std::string_view to_string(BackendErrorKind kind) {
  switch (kind) {
    case BackendErrorKind::Timeout:
      return "timeout";
    case BackendErrorKind::HttpStatus:
      return "http_status";
    case BackendErrorKind::RateLimited:
      return "rate_limited";
    case BackendErrorKind::Unreachable:
      return "unreachable";
    case BackendErrorKind::BadResponse:
      return "bad_response";
    case BackendErrorKind::Unsupported:
      return "unsupported";
  }
  return "";
}

BackendConfig BackendConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error("backend config must be a JSON object");
  static const std::vector<std::string> known = {
      "kind",    "endpoint", "model_name", "temperature", "max_in_flight", "timeout_ms",   "retries",
      "backoff_ms", "max_tokens", "mock_mode", "rules", "oracle_corpus", "cache_dir"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error("unknown backend config key '" + key + "'");
    }
  }
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  BackendConfig c;
  try {
    if (j.contains("kind")) c.kind = parse_backend_kind(j.at("kind").get<std::string>());
    if (j.contains("endpoint")) c.endpoint = j.at("endpoint").get<std::string>();
    if (j.contains("model_name")) c.model_name = j.at("model_name").get<std::string>();
    if (j.contains("temperature")) c.temperature = j.at("temperature").get<double>();
    if (j.contains("max_in_flight")) c.max_in_flight = j.at("max_in_flight").get<std::size_t>();
    if (j.contains("timeout_ms")) c.timeout = std::chrono::milliseconds(j.at("timeout_ms").get<std::int64_t>());
    if (j.contains("retries")) c.retries = j.at("retries").get<std::size_t>();
    if (j.contains("backoff_ms")) c.backoff = std::chrono::milliseconds(j.at("backoff_ms").get<std::int64_t>());
    if (j.contains("max_tokens")) c.max_tokens = j.at("max_tokens").get<std::size_t>();
    if (j.contains("mock_mode")) c.mock_mode = j.at("mock_mode").get<std::string>();
    if (j.contains("rules")) c.rules = resolve(j.at("rules").get<std::string>());
    if (j.contains("oracle_corpus")) c.oracle_corpus = resolve(j.at("oracle_corpus").get<std::string>());
    if (j.contains("cache_dir")) c.cache_dir = resolve(j.at("cache_dir").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(std::string("backend config: ") + e.what());
  }
  c.validate();
  return c;
}

BackendConfig BackendConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open backend config " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error("backend config " + path.string() + " is not valid JSON");
  return from_json(j, path.parent_path());
}

void BackendConfig::validate() const {
  if (temperature < 0.0 || temperature > 2.0) throw Error("temperature must be in [0, 2]");
  if (max_in_flight == 0) throw Error("max_in_flight must be >= 1");
  if (timeout.count() <= 0) throw Error("timeout must be positive");
  if (backoff.count() < 0) throw Error("backoff must be non-negative");
  if (kind != BackendKind::Mock && (!endpoint || endpoint->empty())) {
    throw Error("backend kind " + std::string(to_string(kind)) + " requires an endpoint");
  }
  if (kind == BackendKind::Mock) {
    if (mock_mode != "rules" && mock_mode != "oracle") throw Error("mock_mode must be 'rules' or 'oracle'");
    if (mock_mode == "oracle" && !oracle_corpus) throw Error("oracle mock requires oracle_corpus");
  }
}

std::vector<Label> RankedLabels::labels() const {
  std::vector<Label> out;
  for (const auto& [label, _] : items) out.push_back(label);
  return out;
}

json RankedLabels::to_json() const {
  json list = json::array();
  for (const auto& [label, score] : items) {
    list.push_back({{"space", to_string(label.space)}, {"label", canonical_name(label)}, {"score", score}});
  }
  return list;
}

RankedLabels RankedLabels::from_json(const json& j) {
  RankedLabels r;
  for (const auto& item : j) {
    const auto space = item.at("space").get<std::string>();
    LabelSpace s = space == "general" ? LabelSpace::General : space == "target" ? LabelSpace::Target : LabelSpace::Specific;
    r.items.emplace_back(normalize_label(item.at("label").get<std::string>(), s), item.at("score").get<double>());
  }
  return r;
}

RankedLabels rank_labels(LabelSpace space, const std::vector<double>& scores, std::size_t n) {
  const auto labels = all_labels(space);
  if (scores.size() != labels.size()) throw std::invalid_argument("score vector does not match the label space");
  if (n > labels.size()) {
    throw std::invalid_argument("n = " + std::to_string(n) + " exceeds the " + std::string(to_string(space)) +
                                " label space (" + std::to_string(labels.size()) + ")");
  }
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RankedLabels r;
  for (std::size_t i = 0; i < n; ++i) r.items.emplace_back(labels[order[i]], scores[order[i]]);
  return r;
}

std::string cache_key(std::string_view model_name, std::string_view purpose, std::string_view payload) {
  // Length-prefixed fields so ("ab","c") and ("a","bc") differ.
  std::string material;
  for (auto part : {model_name, purpose, payload}) {
    material += std::to_string(part.size());
    material += ':';
    material += part;
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(material.data(), material.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

fs::path ResponseCache::path_for(const std::string& key) const { return dir_ / (key + ".json"); }

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  std::ifstream in(path_for(key));
  if (!in) return std::nullopt;
  json j = json::parse(in, nullptr, false);
  // A torn or foreign file is treated as a miss and overwritten later.
  if (j.is_discarded() || !j.is_object() || j.value("key", "") != key || !j.contains("response") ||
      !j["response"].is_string()) {
    return std::nullopt;
  }
  return j["response"].get<std::string>();
}

void ResponseCache::put(const std::string& key, const json& request, const std::string& response) const {
  nlohmann::ordered_json j;
  j["key"] = key;
  j["request"] = request;
  j["response"] = response;
  j["timestamp"] = std::chrono::duration_cast<std::chrono::seconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  thread_local std::mt19937_64 salt{std::random_device{}()};
  const auto tmp = dir_ / (key + ".tmp." + std::to_string(salt()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write cache file " + tmp.string());
    out << j.dump(-1, ' ', false, json::error_handler_t::replace);
  }
  fs::rename(tmp, path_for(key));
}

CachingBackend::CachingBackend(std::shared_ptr<Backend> inner, ResponseCache cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {
  if (!inner_) throw Error("caching backend needs an inner backend");
}

std::string CachingBackend::chat(const PromptBundle& bundle) {
  const auto payload = bundle.serialize();
  const auto key = cache_key(inner_->model_name(), to_string(bundle.purpose), payload);
  if (auto hit = cache_.get(key)) {
    ++hits_;
    return *hit;
  }
  auto response = inner_->chat(bundle);
  cache_.put(key, bundle.to_json(), response);
  return response;
}

RankedLabels CachingBackend::classify(const std::string& tuple, LabelSpace space, std::size_t n) {
  nlohmann::ordered_json request;
  request["tuple"] = tuple;
  request["space"] = to_string(space);
  request["n"] = n;
  const auto key = cache_key(inner_->model_name(), "classify", request.dump());
  if (auto hit = cache_.get(key)) {
    json j = json::parse(*hit, nullptr, false);
    if (!j.is_discarded()) {
      ++hits_;
      return RankedLabels::from_json(j);
    }
  }
  auto ranked = inner_->classify(tuple, space, n);
  cache_.put(key, request, ranked.to_json().dump());
  return ranked;
}

std::shared_ptr<Backend> make_backend(const BackendConfig& config) {
  config.validate();
  std::shared_ptr<Backend> backend;
  switch (config.kind) {
    case BackendKind::HttpChat:
      backend = std::make_shared<HttpChatBackend>(config);
      break;
    case BackendKind::LogprobClassifier:
      backend = std::make_shared<LogprobClassifier>(config);
      break;
    case BackendKind::Mock:
      if (config.mock_mode == "oracle") {
        backend = MockBackend::oracle(load_corpus(*config.oracle_corpus), config.model_name);
      } else {
        auto table = config.rules ? RuleTable::load(*config.rules) : RuleTable{};
        backend = MockBackend::rules(std::move(table), config.model_name);
      }
      break;
  }
  if (config.cache_dir) backend = std::make_shared<CachingBackend>(backend, ResponseCache(*config.cache_dir));
  return backend;
}

}  // namespace omniact
