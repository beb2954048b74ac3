#include <httplib.h>

#include <atomic>
#include <deque>
#include <filesystem>
#include <mutex>
#include <thread>

#include <gtest/gtest.h>

#include "omniact/backend.hpp"
#include "omniact/evaluator.hpp"
#include "omniact/http_backend.hpp"
#include "omniact/mock_backend.hpp"
#include "omniact/parser.hpp"

using namespace omniact;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path kData = OMNIACT_DATA_DIR;

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("omniact_backend_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Local OpenAI-style endpoint. Each request pops the next scripted status;
// an empty script answers 200.
class FakeEndpoint {
 public:
  FakeEndpoint() {
    auto handle = [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      {
        std::lock_guard lock(mu);
        last_body = json::parse(req.body);
        last_auth = req.get_header_value("Authorization");
        if (!script.empty()) {
          const int status = script.front();
          script.pop_front();
          if (status != 200) {
            res.status = status;
            res.set_content("{}", "application/json");
            return;
          }
        }
      }
      json body;
      if (req.path.ends_with("/chat/completions")) {
        body["choices"] = json::array({{{"message", {{"role", "assistant"}, {"content", reply}}}}});
      } else {
        body["choices"] = json::array({{{"logprobs", {{"top_logprobs", json::array({logprobs})}}}}});
      }
      res.set_content(body.dump(), "application/json");
    };
    server.Post("/v1/chat/completions", handle);
    server.Post("/v1/completions", handle);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeEndpoint() {
    server.stop();
    thread.join();
  }

  BackendConfig config(BackendKind kind = BackendKind::HttpChat) const {
    BackendConfig c;
    c.kind = kind;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    c.model_name = "test-model";
    c.retries = 2;
    c.backoff = std::chrono::milliseconds(1);
    c.timeout = std::chrono::milliseconds(2000);
    return c;
  }

  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};
  std::mutex mu;
  std::deque<int> script;
  json last_body;
  std::string last_auth;
  std::string reply = R"([{"chain_of_thoughts":"x","prediction":"Search online"}])";
  json logprobs = {{" Search", -0.1}, {" Remember", -1.0}, {" Teleport", -0.5}, {" Remind", -3.0}};
};

PromptBundle simple_bundle() {
  DiaryEntry e;
  e.id = "q";
  e.capture.objects = {"book"};
  return build_action_prompt(e, Level::Specific, 3, {}, ContextVariant::Full, PromptMode::FineTuned);
}

}  // namespace

TEST(RankLabels, UniformScoresFollowTaxonomyOrder) {
  const auto r = rank_labels(LabelSpace::Specific, std::vector<double>(17, 0.3), 3);
  const auto all = all_labels(LabelSpace::Specific);
  EXPECT_EQ(r.labels(), std::vector<Label>(all.begin(), all.begin() + 3));
}

TEST(RankLabels, ScoresOrder) {
  std::vector<double> s(7, 0.0);
  s[static_cast<int>(GeneralAction::Save)] = 0.5;
  s[static_cast<int>(GeneralAction::Share)] = 0.3;
  s[static_cast<int>(GeneralAction::LookUp)] = 0.2;
  const auto r = rank_labels(LabelSpace::General, s, 2);
  EXPECT_EQ(r.labels(), (std::vector<Label>{to_label(GeneralAction::Save), to_label(GeneralAction::Share)}));
  EXPECT_GE(r.items[0].second, r.items[1].second);
  EXPECT_EQ(RankedLabels::from_json(r.to_json()).items, r.items);
}

TEST(RankLabels, Preconditions) {
  EXPECT_THROW(rank_labels(LabelSpace::Specific, std::vector<double>(17, 0.0), 20), std::invalid_argument);
  EXPECT_THROW(rank_labels(LabelSpace::Specific, std::vector<double>(7, 0.0), 3), std::invalid_argument);
}

TEST(CacheKey, CollidesOnlyOnIdenticalInput) {
  const auto a = cache_key("m", "action_specific", "payload");
  EXPECT_EQ(a, cache_key("m", "action_specific", "payload"));
  EXPECT_EQ(a.size(), 64u);
  EXPECT_NE(a, cache_key("m2", "action_specific", "payload"));
  EXPECT_NE(a, cache_key("m", "action_general", "payload"));
  EXPECT_NE(a, cache_key("m", "action_specific", "payload "));
  // Field boundaries are unambiguous.
  EXPECT_NE(cache_key("ab", "c", "d"), cache_key("a", "bc", "d"));
}

TEST(MockRules, MenuWhileOrderingSharesWithOthers) {
  auto mock = MockBackend::rules(RuleTable::load(kData / "mock_rules.json"));
  DiaryEntry e;
  e.id = "menu";
  e.capture.scene_caption = "a menu board in a cafe";
  e.capture.visible_text = {"MENU", "LATTE 4.50"};
  e.context.activity = "deciding what to order";
  const auto out = mock->chat(build_action_prompt(e, Level::Specific, 3, {}, ContextVariant::Full,
                                                  PromptMode::FineTuned));
  EXPECT_NE(out.find("\"prediction\":\"Share with others\""), std::string::npos) << out;
  EXPECT_EQ(mock->request_count(), 1u);
}

TEST(MockRules, EmptyTableAnswersCorpusDominantList) {
  const auto corpus = load_corpus(kData / "sample_corpus.jsonl");
  const auto stats = compute_stats(corpus);
  RuleTable table;
  table.default_fallbacks(stats);
  auto mock = MockBackend::rules(table);
  for (auto level : {Level::General, Level::Specific}) {
    for (std::size_t n : {1u, 2u, 3u}) {
      for (const auto& e : corpus) {
        const auto bundle = build_action_prompt(e, level, n, {}, ContextVariant::Full, PromptMode::FineTuned);
        const auto parsed = parse_prediction(mock->chat(bundle), expected_for(level), n);
        ASSERT_EQ(parsed.labels(), stats.top(level, n)) << e.id;
        ASSERT_EQ(mock->classify(format_tuple(e, ContextVariant::Full), space_of(level), n).labels(),
                  stats.top(level, n));
      }
    }
  }
}

TEST(MockRules, DefaultFallbackIsPublishedOrder) {
  auto mock = MockBackend::rules(RuleTable{});
  const auto stats = compute_stats(paper_distribution_corpus());
  const auto r = mock->classify(R"({"objects":["x"]})", LabelSpace::Specific, 3);
  EXPECT_EQ(r.labels(), stats.top(Level::Specific, 3));
  EXPECT_EQ(mock->classify(R"({"objects":["x"]})", LabelSpace::General, 3).labels(), stats.top(Level::General, 3));
}

TEST(MockRules, Deterministic) {
  const auto table = RuleTable::load(kData / "mock_rules.json");
  auto a = MockBackend::rules(table);
  auto b = MockBackend::rules(table);
  for (const auto& e : load_corpus(kData / "sample_corpus.jsonl")) {
    const auto bundle = build_action_prompt(e, Level::Specific, 3, {}, ContextVariant::Full, PromptMode::FineTuned);
    EXPECT_EQ(a->chat(bundle), b->chat(bundle));
  }
}

TEST(MockRules, ParseErrors) {
  EXPECT_THROW(RuleTable::from_json(json::array()), RuleParseError);
  EXPECT_THROW(RuleTable::from_json(json::parse(R"({"rules":[{"when":{"colour":"red"},"actions":["Remind"]}]})")),
               RuleParseError);
  EXPECT_THROW(RuleTable::from_json(json::parse(R"({"rules":[{"when":{"any":"x"},"actions":["Teleport"]}]})")),
               RuleParseError);
  EXPECT_THROW(RuleTable::from_json(json::parse(R"({"rules":[{"when":{"any":"x"}}]})")), RuleParseError);
  EXPECT_THROW(RuleTable::from_json(json::parse(R"({"fallback_visual":"speech"})")), RuleParseError);
  EXPECT_THROW(RuleTable::load("/nonexistent/rules.json"), RuleParseError);
}

TEST(MockOracle, AnswersTruth) {
  const auto corpus = load_corpus(kData / "sample_corpus.jsonl");
  auto mock = MockBackend::oracle(corpus);
  for (const auto& e : corpus) {
    for (auto level : {Level::General, Level::Specific}) {
      const auto truth = e.labels->label_set(level);
      const auto bundle = build_action_prompt(e, level, 4, {}, ContextVariant::None, PromptMode::FineTuned);
      EXPECT_EQ(parse_prediction(mock->chat(bundle), expected_for(level), 4).labels(), truth);
      auto ranked = mock->classify(format_tuple(e, ContextVariant::Full), space_of(level), 1).labels();
      EXPECT_EQ(ranked.front(), truth.front());
    }
  }
}

TEST(Cache, SecondRunIssuesNoRequests) {
  const auto dir = fresh_dir("cache");
  auto inner = MockBackend::rules(RuleTable::load(kData / "mock_rules.json"));
  CachingBackend cached(inner, ResponseCache(dir));
  const auto corpus = load_corpus(kData / "sample_corpus.jsonl");
  std::vector<std::string> first;
  for (const auto& e : corpus)
    first.push_back(cached.chat(build_action_prompt(e, Level::Specific, 3, {}, ContextVariant::Full,
                                                    PromptMode::FineTuned)));
  const auto after_first = cached.request_count();
  EXPECT_EQ(after_first, corpus.size());

  // A new process sees the same files.
  auto inner2 = MockBackend::rules(RuleTable::load(kData / "mock_rules.json"));
  CachingBackend again(inner2, ResponseCache(dir));
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(again.chat(build_action_prompt(corpus[i], Level::Specific, 3, {}, ContextVariant::Full,
                                             PromptMode::FineTuned)),
              first[i]);
  }
  EXPECT_EQ(again.request_count(), 0u);
  EXPECT_EQ(again.hits(), corpus.size());

  const auto r1 = again.classify(R"({"objects":["x"]})", LabelSpace::Specific, 3);
  const auto r2 = again.classify(R"({"objects":["x"]})", LabelSpace::Specific, 3);
  EXPECT_EQ(r1.items, r2.items);
  EXPECT_EQ(again.request_count(), 1u);

  // Stored records are auditable.
  std::size_t files = 0;
  for (const auto& f : fs::directory_iterator(dir)) {
    ++files;
    const auto rec = json::parse(std::ifstream(f.path()));
    EXPECT_TRUE(rec.contains("key") && rec.contains("request") && rec.contains("response") &&
                rec.contains("timestamp"));
  }
  EXPECT_EQ(files, corpus.size() + 1);
  fs::remove_all(dir);
}

TEST(Cache, ConcurrentWritersSameKey) {
  const auto dir = fresh_dir("concurrent");
  ResponseCache cache(dir);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 50; ++i) cache.put("k", json::object(), "same");
    });
  for (auto& t : threads) t.join();
  EXPECT_EQ(cache.get("k"), "same");
  EXPECT_FALSE(cache.get("missing"));
  fs::remove_all(dir);
}

TEST(Config, Validation) {
  BackendConfig c;
  c.kind = BackendKind::HttpChat;
  EXPECT_THROW(c.validate(), Error);
  c.endpoint = "http://localhost:1/v1";
  EXPECT_NO_THROW(c.validate());
  c.max_in_flight = 0;
  EXPECT_THROW(c.validate(), Error);

  BackendConfig m;
  m.mock_mode = "oracle";
  EXPECT_THROW(m.validate(), Error);

  EXPECT_THROW(BackendConfig::from_json(json::parse(R"({"kind":"mock","colour":1})")), Error);
  EXPECT_THROW(BackendConfig::from_json(json::parse(R"({"kind":"gpt"})")), Error);
  const auto loaded = BackendConfig::load(kData / "backend_openai.json");
  EXPECT_EQ(loaded.kind, BackendKind::HttpChat);
  EXPECT_DOUBLE_EQ(loaded.temperature, 0.0);
  ASSERT_TRUE(loaded.cache_dir);
  EXPECT_TRUE(loaded.cache_dir->is_absolute());
}

TEST(Config, MakeBackendFromFile) {
  auto backend = make_backend(BackendConfig::load(kData / "backend_mock.json"));
  ASSERT_NE(backend, nullptr);
  EXPECT_FALSE(backend->model_name().empty());
}

TEST(Http, ChatWireFormat) {
  FakeEndpoint ep;
  setenv(kApiKeyEnv, "secret-token", 1);
  HttpChatBackend chat(ep.config());
  const auto out = chat.chat(simple_bundle());
  unsetenv(kApiKeyEnv);
  EXPECT_EQ(out, ep.reply);
  std::lock_guard lock(ep.mu);
  EXPECT_EQ(ep.last_body["model"], "test-model");
  EXPECT_EQ(ep.last_body["temperature"], 0.0);
  EXPECT_EQ(ep.last_body["messages"][0]["role"], "system");
  EXPECT_EQ(ep.last_body["messages"].size(), 2u);
  EXPECT_EQ(ep.last_auth, "Bearer secret-token");
  EXPECT_THROW(chat.classify("{}", LabelSpace::Specific, 3), BackendError);
}

TEST(Http, RetriesServerErrorsThenSucceeds) {
  FakeEndpoint ep;
  ep.script = {500, 429};
  HttpChatBackend chat(ep.config());
  EXPECT_EQ(chat.chat(simple_bundle()), ep.reply);
  EXPECT_EQ(chat.transport().attempts(), 3u);
}

TEST(Http, GivesUpAfterRetries) {
  FakeEndpoint ep;
  ep.script = {503, 503, 503, 503};
  HttpChatBackend chat(ep.config());
  try {
    chat.chat(simple_bundle());
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.kind(), BackendErrorKind::HttpStatus);
    EXPECT_EQ(e.status(), 503);
  }
  EXPECT_EQ(chat.transport().attempts(), 3u);
}

TEST(Http, RateLimitSurfaced) {
  FakeEndpoint ep;
  ep.script = {429, 429, 429};
  HttpChatBackend chat(ep.config());
  try {
    chat.chat(simple_bundle());
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.kind(), BackendErrorKind::RateLimited);
  }
}

TEST(Http, ClientErrorNotRetried) {
  FakeEndpoint ep;
  ep.script = {400};
  HttpChatBackend chat(ep.config());
  EXPECT_THROW(chat.chat(simple_bundle()), BackendError);
  EXPECT_EQ(chat.transport().attempts(), 1u);
}

TEST(Http, UnreachableAfterThreeAttempts) {
  int port;
  {
    FakeEndpoint closed;
    port = closed.port;
  }
  auto config = FakeEndpoint{}.config();
  config.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  HttpChatBackend chat(config);
  try {
    chat.chat(simple_bundle());
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.kind(), BackendErrorKind::Unreachable);
  }
  EXPECT_EQ(chat.transport().attempts(), 3u);
}

TEST(Http, CachedBundleSkipsNetwork) {
  FakeEndpoint ep;
  const auto dir = fresh_dir("http_cache");
  CachingBackend cached(std::make_shared<HttpChatBackend>(ep.config()), ResponseCache(dir));
  cached.chat(simple_bundle());
  cached.chat(simple_bundle());
  EXPECT_EQ(ep.hits.load(), 1);
  EXPECT_EQ(cached.request_count(), 1u);
  fs::remove_all(dir);
}

TEST(Logprob, ClassifierRanksTokens) {
  FakeEndpoint ep;
  LogprobClassifier clf(ep.config(BackendKind::LogprobClassifier));
  const auto r = clf.classify(R"({"objects":["x"]})", LabelSpace::Specific, 3);
  EXPECT_EQ(r.labels(), (std::vector<Label>{to_label(SpecificAction::SearchOnline), to_label(SpecificAction::Remember),
                                            to_label(SpecificAction::Remind)}));
  std::lock_guard lock(ep.mu);
  EXPECT_TRUE(ep.last_body["prompt"].get<std::string>().ends_with("\n\n###\n\n"));
  EXPECT_EQ(ep.last_body["max_tokens"], 1);
  EXPECT_GE(ep.last_body["logprobs"].get<int>(), 3);
  EXPECT_THROW(clf.chat(simple_bundle()), BackendError);
}

TEST(Logprob, RankingRules) {
  // Summed per label; unknown tokens ignored; ambiguous prefixes ignored.
  const json top = {{" Save", -0.5}, {" save", -0.6}, {" Share", -0.1}, {" Look", -1.0}, {" zzz", -0.01}};
  const auto r = rank_logprobs(top, LabelSpace::General, 3);
  EXPECT_EQ(r.labels().front(), to_label(GeneralAction::Save));
  EXPECT_EQ(r.labels().size(), 3u);
  EXPECT_THROW(rank_logprobs(json{{" Teleport", -0.1}}, LabelSpace::Specific, 3), UnknownLabelEmitted);
  const auto spec = rank_logprobs(json{{" Share", -0.1}, {" Translate", -2.0}}, LabelSpace::Specific, 3);
  EXPECT_EQ(spec.labels(), std::vector<Label>{to_label(SpecificAction::Translate)});
}

TEST(BackendErrors, Retryable) {
  EXPECT_TRUE(BackendError(BackendErrorKind::Timeout, "").retryable());
  EXPECT_TRUE(BackendError(BackendErrorKind::HttpStatus, "", 502).retryable());
  EXPECT_FALSE(BackendError(BackendErrorKind::HttpStatus, "", 404).retryable());
  EXPECT_FALSE(BackendError(BackendErrorKind::BadResponse, "").retryable());
}
