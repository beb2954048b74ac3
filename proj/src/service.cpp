#include "omniact/service.hpp"

#include <httplib.h>

#include <chrono>
#include <fstream>
#include <future>
#include <sstream>

#include "omniact/error.hpp"
#include "omniact/parser.hpp"

namespace omniact {
namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

HttpResult error_result(int status, const std::string& message) {
  HttpResult r;
  r.status = status;
  r.body["error"] = message;
  return r;
}

HttpResult schema_result(const std::exception& e) {
  HttpResult r = error_result(400, e.what());
  if (const auto* s = dynamic_cast<const SchemaError*>(&e)) {
    r.body["line"] = s->line();
    r.body["field"] = s->field();
  } else if (const auto* l = dynamic_cast<const LabelOutsideTaxonomy*>(&e)) {
    r.body["line"] = l->line();
    r.body["field"] = "labels";
    r.body["value"] = l->raw();
  } else if (const auto* d = dynamic_cast<const DuplicateId*>(&e)) {
    r.body["line"] = d->line();
    r.body["field"] = "id";
    r.body["value"] = d->id();
  }
  return r;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw Error("unknown field '" + key + "'");
    }
  }
}

// One exemplar per modality present in the pool, lowest id first.
FewShotStore target_store_for(const Corpus& pool) {
  try {
    return select_fewshots_target(pool);
  } catch (const MissingModality&) {
    FewShotStore store;
    for (auto l : all_labels(LabelSpace::Target)) {
      const DiaryEntry* best = nullptr;
      for (const auto& e : pool) {
        if (e.labels && e.labels->target == as_modality(l) && (!best || e.id < best->id)) best = &e;
      }
      if (best) store.exemplars.push_back({*best, Provenance::Fixed});
    }
    return store;
  }
}

std::int64_t now_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

ServiceConfig ServiceConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error("service config must be a JSON object");
  check_keys(j, {"backend", "corpus", "feedback_log", "learned_exemplars", "converter_fixtures", "host", "port"});
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  ServiceConfig c;
  try {
    c.backend = BackendConfig::from_json(j.value("backend", json::object()), base_dir);
    if (j.contains("corpus")) c.corpus = resolve(j.at("corpus").get<std::string>());
    if (j.contains("feedback_log")) c.feedback_log = resolve(j.at("feedback_log").get<std::string>());
    if (j.contains("learned_exemplars")) c.learned_exemplars = resolve(j.at("learned_exemplars").get<std::string>());
    if (j.contains("converter_fixtures")) {
      c.converter_fixtures = resolve(j.at("converter_fixtures").get<std::string>());
    }
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
  } catch (const json::exception& e) {
    throw Error(std::string("service config: ") + e.what());
  }
  return c;
}

ServiceConfig ServiceConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open service config " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error("service config " + path.string() + " is not valid JSON");
  return from_json(j, path.parent_path());
}

PredictionService::PredictionService(std::shared_ptr<Backend> backend, Corpus corpus, fs::path feedback_log,
                                     ConverterRegistry converters, Corpus learned_exemplars,
                                     std::optional<fs::path> corpus_path)
    : backend_(std::move(backend)),
      converters_(std::move(converters)),
      corpus_path_(std::move(corpus_path)),
      learned_(std::move(learned_exemplars)),
      corpus_(std::move(corpus)),
      feedback_log_(std::move(feedback_log)) {
  if (!backend_) throw Error("service needs a backend");
  for (const auto& e : corpus_) {
    if (!e.labels) throw UnlabeledEntry(e.id);
  }
  rebuild_stores();
  // Replaying the existing log restores idempotency across restarts.
  std::ifstream in(feedback_log_);
  for (std::string line; std::getline(in, line);) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) continue;
    feedback_keys_.insert(j.value("request_id", "") + '\n' + j.value("selected", ""));
    ++feedback_records_;
    if (!j.value("selected_in_shown", true)) ++feedback_misses_;
  }
}

std::unique_ptr<PredictionService> PredictionService::from_config(const ServiceConfig& config) {
  auto backend = make_backend(config.backend);
  Corpus corpus = config.corpus && fs::exists(*config.corpus) ? load_corpus(*config.corpus) : Corpus{};
  Corpus learned = config.learned_exemplars ? load_corpus(*config.learned_exemplars) : Corpus{};
  auto fixtures = std::make_shared<ConverterFixtures>(
      config.converter_fixtures ? ConverterFixtures::load(*config.converter_fixtures) : ConverterFixtures{});
  return std::make_unique<PredictionService>(std::move(backend), std::move(corpus), config.feedback_log,
                                             default_registry(fixtures), std::move(learned), config.corpus);
}

void PredictionService::rebuild_stores() {
  action_store_ = select_fewshots_actions(corpus_).promoted(learned_);
  target_store_ = target_store_for(corpus_);
}

HttpResult PredictionService::predict(const std::string& body) {
  json req = json::parse(body, nullptr, false);
  if (req.is_discarded() || !req.is_object()) return error_result(400, "request body must be a JSON object");

  DiaryEntry entry;
  Family family;
  Level level;
  std::size_t n = 3;
  try {
    check_keys(req, {"capture", "context", "family", "level", "n"});
    json as_entry = {{"id", "request"}, {"capture", req.value("capture", json())}};
    if (req.contains("context")) as_entry["context"] = req["context"];
    entry = entry_from_json(as_entry, 1);
    if (!req.contains("family")) throw Error("field 'family' is required");
    family = parse_family(req.at("family").get<std::string>());
    level = req.contains("level") ? parse_level(req.at("level").get<std::string>()) : Level::Specific;
    if (req.contains("n")) n = req.at("n").get<std::size_t>();
    if (n < 1 || n > space_size(space_of(level))) throw Error("n must be between 1 and the label space size");
    if (!entry.capture.has_family(family)) {
      throw Error("capture has no " + std::string(to_string(family)) + " fields for family=" +
                  std::string(to_string(family)));
    }
  } catch (const std::exception& e) {
    return schema_result(e);
  }

  PromptBundle target_bundle;
  PromptBundle action_bundle;
  {
    std::shared_lock lock(corpus_mu_);
    target_bundle = build_target_prompt(entry, family, target_store_, ContextVariant::Full,
                                        target_store_.empty() ? PromptMode::FineTuned : PromptMode::InContext);
    action_bundle = build_action_prompt(entry, level, n, action_store_, ContextVariant::Full,
                                        action_store_.empty() ? PromptMode::FineTuned : PromptMode::InContext);
  }

  // Independent calls: the action prediction never waits on the target.
  auto target_future = std::async(std::launch::async, [&] { return backend_->chat(target_bundle); });
  std::string action_raw;
  std::string target_raw;
  try {
    action_raw = backend_->chat(action_bundle);
  } catch (const std::exception& e) {
    try {
      target_future.get();
    } catch (const std::exception&) {
    }
    return error_result(502, std::string("backend failure: ") + e.what());
  }
  try {
    target_raw = target_future.get();
  } catch (const std::exception& e) {
    return error_result(502, std::string("backend failure: ") + e.what());
  }

  const auto target_set = parse_prediction(target_raw, expected_for(family), 1);
  const auto action_set = parse_prediction(action_raw, expected_for(level), n);
  if (target_set.failed() || action_set.failed()) {
    HttpResult r = error_result(422, "model output yielded no valid predictions");
    r.body["raw"] = {{"target", target_raw}, {"actions", action_raw}};
    return r;
  }

  ojson canonical_req;
  canonical_req["entry"] = entry_to_json(entry);
  canonical_req["family"] = to_string(family);
  canonical_req["level"] = to_string(level);
  canonical_req["n"] = n;
  const auto request_id = cache_key(backend_->model_name(), "predict", canonical_req.dump()).substr(0, 32);

  HttpResult r;
  r.body["request_id"] = request_id;
  r.body["family"] = to_string(family);
  r.body["level"] = to_string(level);
  const auto target = as_modality(target_set.predictions.front().label);
  r.body["target"] = {{"modality", canonical_name(target)}, {"cot", target_set.predictions.front().cot}};
  auto actions = ojson::array();
  for (const auto& p : action_set.predictions) {
    ojson a;
    a["label"] = canonical_name(p.label);
    a["display_name"] = display_name(p.label);
    a["general_parent"] = level == Level::General
                              ? canonical_name(p.label)
                              : canonical_name(general_of(as_specific(p.label)));
    a["cot"] = p.cot;
    actions.push_back(std::move(a));
  }
  r.body["actions"] = std::move(actions);
  r.body["more"] = design_space_json();

  std::lock_guard lock(served_mu_);
  served_[request_id] = Served{entry, family, level, target, action_set.labels()};
  return r;
}

HttpResult PredictionService::feedback(const std::string& body) {
  json req = json::parse(body, nullptr, false);
  if (req.is_discarded() || !req.is_object()) return error_result(400, "request body must be a JSON object");
  std::string request_id;
  std::string selected_raw;
  std::optional<std::string> target_raw;
  try {
    check_keys(req, {"request_id", "selected", "shown", "target_confirmed"});
    request_id = req.at("request_id").get<std::string>();
    selected_raw = req.at("selected").get<std::string>();
    if (req.contains("target_confirmed") && !req["target_confirmed"].is_null()) {
      target_raw = req["target_confirmed"].get<std::string>();
    }
  } catch (const std::exception& e) {
    return error_result(400, e.what());
  }

  Served served;
  {
    std::lock_guard lock(served_mu_);
    auto it = served_.find(request_id);
    if (it == served_.end()) return error_result(404, "unknown request_id '" + request_id + "'");
    served = it->second;
  }
  const auto selected = try_normalize_label(selected_raw, space_of(served.level));
  if (!selected) return error_result(400, "selected '" + selected_raw + "' is not a " +
                                              std::string(to_string(served.level)) + " action");
  std::optional<TargetModality> target;
  if (target_raw) {
    auto t = try_normalize_label(*target_raw, LabelSpace::Target);
    if (!t) return error_result(400, "target_confirmed '" + *target_raw + "' is not a target modality");
    target = as_modality(*t);
  }
  const bool in_shown = std::find(served.shown.begin(), served.shown.end(), *selected) != served.shown.end();
  const std::string selected_name(canonical_name(*selected));

  std::lock_guard lock(feedback_mu_);
  HttpResult r;
  r.body["request_id"] = request_id;
  r.body["selected"] = selected_name;
  r.body["selected_in_shown"] = in_shown;
  if (!feedback_keys_.insert(request_id + '\n' + selected_name).second) {
    r.body["status"] = "duplicate";
    return r;
  }
  ojson row;
  row["request_id"] = request_id;
  auto shown = ojson::array();
  for (auto l : served.shown) shown.push_back(canonical_name(l));
  row["shown"] = std::move(shown);
  row["selected"] = selected_name;
  row["selected_in_shown"] = in_shown;
  row["level"] = to_string(served.level);
  row["family"] = to_string(served.family);
  row["predicted_target"] = canonical_name(served.target);
  row["target_confirmed"] = target ? ojson(canonical_name(*target)) : ojson(nullptr);
  auto entry = entry_to_json(served.entry);
  row["capture"] = entry["capture"];
  row["context"] = entry["context"];
  row["timestamp"] = now_seconds();
  std::ofstream out(feedback_log_, std::ios::app | std::ios::binary);
  if (!out) {
    feedback_keys_.erase(request_id + '\n' + selected_name);
    return error_result(500, "cannot append to feedback log");
  }
  out << row.dump() << '\n';
  out.flush();
  ++feedback_records_;
  if (!in_shown) ++feedback_misses_;
  r.body["status"] = "logged";
  return r;
}

HttpResult PredictionService::actions() const {
  HttpResult r;
  r.body = ojson::parse(taxonomy_json().dump());
  return r;
}

HttpResult PredictionService::stats() const {
  HttpResult r;
  {
    std::shared_lock lock(corpus_mu_);
    r.body = compute_stats(corpus_).to_json();
  }
  std::lock_guard lock(feedback_mu_);
  r.body["feedback"] = {{"records", feedback_records_}, {"selected_outside_shown", feedback_misses_}};
  return r;
}

HttpResult PredictionService::ingest(const std::string& body) {
  Corpus incoming;
  try {
    incoming = parse_corpus(std::string_view(body));
  } catch (const std::exception& e) {
    return schema_result(e);
  }
  if (incoming.empty()) return error_result(400, "no entries in body");
  for (std::size_t i = 0; i < incoming.size(); ++i) {
    if (!incoming[i].labels) {
      HttpResult r = error_result(400, "entry '" + incoming[i].id + "' has no labels");
      r.body["field"] = "labels";
      return r;
    }
  }
  std::unique_lock lock(corpus_mu_);
  for (const auto& e : incoming) {
    auto clash = std::find_if(corpus_.begin(), corpus_.end(), [&](const DiaryEntry& x) { return x.id == e.id; });
    if (clash != corpus_.end()) {
      HttpResult r = error_result(409, "entry id '" + e.id + "' already exists");
      r.body["field"] = "id";
      return r;
    }
  }
  corpus_.insert(corpus_.end(), incoming.begin(), incoming.end());
  rebuild_stores();
  if (corpus_path_) save_corpus(corpus_, *corpus_path_);
  HttpResult r;
  r.body["ingested"] = incoming.size();
  r.body["entry_count"] = corpus_.size();
  return r;
}

HttpResult PredictionService::convert(const std::string& body) const {
  json req = json::parse(body, nullptr, false);
  if (req.is_discarded() || !req.is_object()) return error_result(400, "request body must be a JSON object");
  try {
    const auto capture = converters_.convert(RawDescriptor::from_json(req));
    DiaryEntry e;
    e.id = "converted";
    e.capture = capture;
    HttpResult r;
    r.body["capture"] = entry_to_json(e)["capture"];
    return r;
  } catch (const NoConverter& e) {
    return error_result(404, e.what());
  } catch (const ConversionFailed& e) {
    return error_result(422, e.what());
  } catch (const std::exception& e) {
    return error_result(400, e.what());
  }
}

Corpus promote_feedback(const fs::path& feedback_log) {
  std::ifstream in(feedback_log);
  if (!in) throw Error("cannot open feedback log " + feedback_log.string());
  Corpus out;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    json row = json::parse(line, nullptr, false);
    if (row.is_discarded()) throw SchemaError(line_no, "", "feedback row is not JSON");
    if (row.value("level", "specific") != "specific") continue;
    const auto selected = row.at("selected").get<std::string>();
    const auto target = row["target_confirmed"].is_string() ? row["target_confirmed"].get<std::string>()
                                                            : row.value("predicted_target", "");
    json entry;
    entry["id"] = "fb-" + row.at("request_id").get<std::string>().substr(0, 12) + "-" + selected;
    entry["capture"] = row.at("capture");
    if (row.contains("context")) entry["context"] = row["context"];
    entry["labels"] = {{"target", target}, {"specific_actions", {selected}}};
    auto e = entry_from_json(entry, line_no);
    try {
      validate_entry(e, line_no);
    } catch (const SchemaError&) {
      continue;  // e.g. a confirmed target the capture cannot carry
    }
    if (ids.insert(e.id).second) out.push_back(std::move(e));
  }
  return out;
}

struct ServiceServer::Impl {
  PredictionService& service;
  httplib::Server server;

  explicit Impl(PredictionService& s) : service(s) {
    auto send = [](httplib::Response& res, const HttpResult& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    server.Post("/predict", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, service.predict(req.body));
    });
    server.Post("/feedback", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, service.feedback(req.body));
    });
    server.Get("/actions", [this, send](const httplib::Request&, httplib::Response& res) {
      send(res, service.actions());
    });
    server.Get("/stats", [this, send](const httplib::Request&, httplib::Response& res) {
      send(res, service.stats());
    });
    server.Post("/corpus", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, service.ingest(req.body));
    });
    server.Post("/convert", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, service.convert(req.body));
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      res.status = 500;
      res.set_content(json{{"error", what}}.dump(), "application/json");
    });
  }
};

ServiceServer::ServiceServer(PredictionService& service) : impl_(std::make_unique<Impl>(service)) {}

ServiceServer::~ServiceServer() { stop(); }

int ServiceServer::bind(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void ServiceServer::listen() { impl_->server.listen_after_bind(); }

void ServiceServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace omniact
