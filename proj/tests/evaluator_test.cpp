#include <algorithm>
#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "omniact/error.hpp"
#include "omniact/evaluator.hpp"
#include "omniact/mock_backend.hpp"
#include "oracles.hpp"

using namespace omniact;
namespace fs = std::filesystem;

namespace {

const fs::path kData = OMNIACT_DATA_DIR;
const fs::path kTestData = OMNIACT_TEST_DATA_DIR;

Label G(GeneralAction a) { return to_label(a); }
Label S(SpecificAction a) { return to_label(a); }

std::vector<std::string> names_of(const std::vector<Label>& labels) {
  std::vector<std::string> out;
  for (auto l : labels) out.emplace_back(canonical_name(l));
  return out;
}

Label from_name(const std::string& name, LabelSpace space) { return normalize_label(name, space); }

// Random (G, P) pair over a space: |G| in 1..4, |P| in 0..4, P distinct.
std::pair<std::vector<Label>, std::vector<Label>> random_pair(std::mt19937_64& rng, LabelSpace space) {
  auto labels = all_labels(space);
  std::shuffle(labels.begin(), labels.end(), rng);
  const std::size_t g = 1 + rng() % 4;
  std::vector<Label> truth(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(g));
  std::shuffle(labels.begin(), labels.end(), rng);
  const std::size_t p = rng() % 5;
  std::vector<Label> pred(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(p));
  return {truth, pred};
}

}  // namespace

TEST(Accuracy, HandCases) {
  EXPECT_DOUBLE_EQ(score_sample("a", {G(GeneralAction::Share)},
                                {G(GeneralAction::Share), G(GeneralAction::Save), G(GeneralAction::LookUp)})
                       .score,
                   1.0);
  EXPECT_DOUBLE_EQ(score_sample("b", {S(SpecificAction::ShareWithOthers), S(SpecificAction::SaveForReference)},
                                {S(SpecificAction::SearchOnline), S(SpecificAction::Remember),
                                 S(SpecificAction::Recognize)})
                       .score,
                   0.0);
  const auto four = score_sample("c",
                                 {S(SpecificAction::Remember), S(SpecificAction::Remind), S(SpecificAction::Compare),
                                  S(SpecificAction::Calculate)},
                                 {S(SpecificAction::Remind), S(SpecificAction::Translate), S(SpecificAction::Compare)});
  EXPECT_EQ(four.correct, 2u);
  EXPECT_DOUBLE_EQ(four.score, 2.0 / 3.0);
  std::vector<SampleScore> avg = {score_sample("d", {G(GeneralAction::Save)}, {G(GeneralAction::Save)}),
                                  score_sample("e", {G(GeneralAction::Save), G(GeneralAction::Share)},
                                               {G(GeneralAction::Save), G(GeneralAction::Remind)})};
  EXPECT_DOUBLE_EQ(avg[1].score, 0.5);
  EXPECT_DOUBLE_EQ(full_match_accuracy(avg), 0.75);
}

TEST(Accuracy, FailuresScoreZero) {
  EXPECT_DOUBLE_EQ(score_sample("x", {G(GeneralAction::Save)}, {}).score, 0.0);
  const auto failed = score_sample("y", {G(GeneralAction::Save)}, {G(GeneralAction::Save)}, true);
  EXPECT_DOUBLE_EQ(failed.score, 0.0);
  EXPECT_TRUE(failed.parse_failed);
  EXPECT_THROW(full_match_accuracy({}), EmptyEvaluation);
}

TEST(Accuracy, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2024);
  for (auto space : {LabelSpace::General, LabelSpace::Specific}) {
    std::vector<SampleScore> samples;
    std::vector<oracle::NamedSample> named;
    for (int i = 0; i < 1000; ++i) {
      auto [g, p] = random_pair(rng, space);
      named.emplace_back(names_of(g), names_of(p));
      samples.push_back(score_sample(std::to_string(i), g, p));
      ASSERT_EQ(samples.back().score, oracle::sample_score(named.back().first, named.back().second));
      ASSERT_GE(samples.back().score, 0.0);
      ASSERT_LE(samples.back().score, 1.0);
    }
    EXPECT_EQ(full_match_accuracy(samples), oracle::accuracy(named));
  }
}

TEST(Accuracy, PrefixExtensionNeverLowersHits) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 2000; ++i) {
    auto labels = all_labels(LabelSpace::Specific);
    std::shuffle(labels.begin(), labels.end(), rng);
    const std::size_t g = 1 + rng() % 4;
    std::vector<Label> truth(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(g));
    std::shuffle(labels.begin(), labels.end(), rng);
    std::size_t prev_c = 0;
    for (std::size_t k = 1; k <= 3; ++k) {
      std::vector<Label> pred(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(k));
      const auto s = score_sample("p", truth, pred);
      EXPECT_GE(s.correct, prev_c);
      prev_c = s.correct;
      EXPECT_DOUBLE_EQ(s.score, oracle::sample_score(names_of(truth), names_of(pred)));
      if (g == 1 && k > 1) {
        std::vector<Label> top1(labels.begin(), labels.begin() + 1);
        EXPECT_GE(s.score, score_sample("p", truth, top1).score);
      }
    }
  }
  // With several true labels the denominator grows with |P|, so a longer
  // list can score lower than its first element.
  const auto top1 = score_sample("c", {G(GeneralAction::Save), G(GeneralAction::Share)}, {G(GeneralAction::Save)});
  const auto top3 = score_sample("c", {G(GeneralAction::Save), G(GeneralAction::Share)},
                                 {G(GeneralAction::Save), G(GeneralAction::Remind), G(GeneralAction::Complex)});
  EXPECT_DOUBLE_EQ(top1.score, 1.0);
  EXPECT_DOUBLE_EQ(top3.score, 0.5);
}

TEST(Split, SeventyFiveTwentyFive) {
  const auto corpus = generate_synthetic({4, 100});
  const auto s = split_corpus(corpus, 7);
  EXPECT_EQ(s.train.size(), 75u);
  EXPECT_EQ(s.test.size(), 25u);
  std::set<std::string> train_ids;
  for (const auto& e : s.train) train_ids.insert(e.id);
  std::set<std::string> all = train_ids;
  for (const auto& e : s.test) {
    EXPECT_FALSE(train_ids.count(e.id));
    all.insert(e.id);
  }
  EXPECT_EQ(all.size(), 100u);
  const auto again = split_corpus(corpus, 7);
  EXPECT_EQ(again.train, s.train);
  EXPECT_EQ(again.test, s.test);
  EXPECT_NE(split_corpus(corpus, 8).test, s.test);
}

TEST(Split, Errors) {
  const auto corpus = generate_synthetic({4, 3});
  EXPECT_THROW(split_corpus(corpus, 1), CorpusTooSmall);
  EXPECT_THROW(split_corpus(generate_synthetic({4, 10}), 1, 1.0), Error);
  const auto tiny = split_corpus(generate_synthetic({4, 4}), 1, 0.01);
  EXPECT_EQ(tiny.train.size(), 1u);
  EXPECT_EQ(tiny.test.size(), 3u);
}

TEST(Split, Stratified) {
  const auto corpus = generate_synthetic({9, 400});
  const auto s = split_corpus(corpus, 7, 0.75, true);
  EXPECT_EQ(s.train.size() + s.test.size(), 400u);
  std::map<TargetModality, std::pair<int, int>> counts;
  for (const auto& e : s.train) counts[e.labels->target].first++;
  for (const auto& e : s.test) counts[e.labels->target].second++;
  for (const auto& [m, c] : counts) EXPECT_NEAR(c.first / double(c.first + c.second), 0.75, 0.02);
}

TEST(Dominant, PaperFixture) {
  const auto stats = compute_stats(paper_distribution_corpus());
  EXPECT_EQ(dominant_baseline(stats, Level::General, 3),
            (std::vector<Label>{G(GeneralAction::Save), G(GeneralAction::Share), G(GeneralAction::LookUp)}));
  EXPECT_EQ(dominant_baseline(stats, Level::Specific, 3),
            (std::vector<Label>{S(SpecificAction::ShareWithOthers), S(SpecificAction::SaveForReference),
                                S(SpecificAction::SearchOnline)}));
  EXPECT_EQ(dominant_baseline(stats, Level::General, 1), std::vector<Label>{G(GeneralAction::Save)});
}

TEST(Dominant, MatchesAnalyticExpectation) {
  const auto corpus = generate_synthetic({1, 1000});
  for (auto level : {Level::General, Level::Specific}) {
    for (std::size_t n : {1u, 2u, 3u}) {
      EvalConfig c;
      c.technique = Technique::Dominant;
      c.level = level;
      c.top_n = n;
      const auto report = eval_actions(c, corpus, nullptr);
      const auto expected = oracle::dominant_expectation(level == Level::General, n);
      ASSERT_TRUE(report.accuracy);
      EXPECT_NEAR(*report.accuracy, expected.accuracy, 0.05) << to_string(level) << " n=" << n;
      EXPECT_EQ(report.test_size, 250u);
    }
  }
}

TEST(Dominant, AnalyticTopMatchesPublishedOrder) {
  EXPECT_EQ(oracle::dominant_expectation(false, 3).top,
            (oracle::Names{"ShareWithOthers", "SaveForReference", "SearchOnline"}));
  double sum = 0;
  for (const auto& [name, p] : oracle::dominant_expectation(false, 1).inclusion) sum += p;
  // Expected |G| = sum of inclusion probabilities.
  const double mean_k = (183.0 * 1 + 147 * 2 + 44 * 3 + 8 * 4) / 382.0;
  EXPECT_NEAR(sum, mean_k, 1e-9);
}

TEST(Confusion, WorkedExamples) {
  std::vector<SampleScore> one = {
      score_sample("1", {G(GeneralAction::Share)},
                   {G(GeneralAction::Share), G(GeneralAction::Save), G(GeneralAction::LookUp)})};
  const auto m1 = confusion(one, LabelSpace::General);
  EXPECT_DOUBLE_EQ(m1.at(G(GeneralAction::Share), G(GeneralAction::Share)), 1.0);
  double total = 0;
  for (const auto& row : m1.cells)
    for (double c : row) total += c;
  EXPECT_DOUBLE_EQ(total, 1.0);

  std::vector<SampleScore> two = {
      score_sample("2", {G(GeneralAction::Share), G(GeneralAction::Save)},
                   {G(GeneralAction::Share), G(GeneralAction::LookUp), G(GeneralAction::Remind)})};
  const auto m2 = confusion(two, LabelSpace::General);
  EXPECT_DOUBLE_EQ(m2.at(G(GeneralAction::Share), G(GeneralAction::Share)), 1.0);
  EXPECT_DOUBLE_EQ(m2.at(G(GeneralAction::Save), G(GeneralAction::LookUp)), 0.5);
  EXPECT_DOUBLE_EQ(m2.at(G(GeneralAction::Save), G(GeneralAction::Remind)), 0.5);
  EXPECT_DOUBLE_EQ(m2.at(G(GeneralAction::Save), G(GeneralAction::Save)), 0.0);
  EXPECT_DOUBLE_EQ(m2.at(G(GeneralAction::Share), G(GeneralAction::LookUp)), 0.0);

  std::vector<SampleScore> three = {score_sample("3", {G(GeneralAction::Remind)}, {}, true)};
  const auto m3 = confusion(three, LabelSpace::General);
  for (const auto& row : m3.cells)
    for (double c : row) EXPECT_EQ(c, 0.0);
  EXPECT_DOUBLE_EQ(m3.appearances[static_cast<std::size_t>(GeneralAction::Remind)], 1.0);
}

TEST(Confusion, MatchesBruteForceOnRandomSamples) {
  std::mt19937_64 rng(50);
  for (auto space : {LabelSpace::General, LabelSpace::Specific}) {
    std::vector<SampleScore> samples;
    std::vector<oracle::NamedSample> named;
    for (int i = 0; i < 50; ++i) {
      auto [g, p] = random_pair(rng, space);
      named.emplace_back(names_of(g), names_of(p));
      samples.push_back(score_sample(std::to_string(i), g, p));
    }
    const auto m = confusion(samples, space);
    const auto o = oracle::confusion(named);
    for (auto t : all_labels(space)) {
      const std::string tn(canonical_name(t));
      std::size_t both = 0;
      for (const auto& [g, p] : named)
        if (std::count(g.begin(), g.end(), tn) && std::count(p.begin(), p.end(), tn)) ++both;
      EXPECT_EQ(m.at(t, t), static_cast<double>(both)) << tn;
      for (auto p : all_labels(space)) EXPECT_NEAR(m.at(t, p), o.at(tn, std::string(canonical_name(p))), 1e-12);
      EXPECT_EQ(m.appearances[t.code], o.appearances.count(tn) ? o.appearances.at(tn) : 0.0);
    }
    const auto norm = m.normalized();
    for (std::size_t r = 0; r < norm.size(); ++r) {
      double sum = 0;
      for (double c : norm[r]) {
        EXPECT_GE(c, 0.0);
        sum += c;
      }
      EXPECT_LE(sum, 1.0 + 1e-12);
    }
  }
}

TEST(Confusion, CsvShape) {
  ConfusionMatrix m(LabelSpace::General);
  const auto csv = m.to_csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 8);
  EXPECT_NE(csv.find("MediaManipulation"), std::string::npos);
}

TEST(Breakdown, SingleLabelPerfect) {
  std::vector<SampleScore> s;
  for (int i = 0; i < 5; ++i) s.push_back(score_sample("a", {G(GeneralAction::Save)}, {G(GeneralAction::Save)}));
  const auto b = breakdown_by_action_count(s);
  EXPECT_EQ(b.buckets.at("1").accuracy, 1.0);
  EXPECT_FALSE(b.buckets.at("2").accuracy);
  EXPECT_FALSE(b.buckets.at(">2").accuracy);
}

TEST(Breakdown, HandComputedBuckets) {
  using SA = SpecificAction;
  std::vector<SampleScore> s = {
      score_sample("1", {S(SA::Remind)}, {S(SA::Remind)}),                                        // 1
      score_sample("2", {S(SA::Remind)}, {S(SA::Compare)}),                                       // 0
      score_sample("3", {S(SA::Remind), S(SA::Compare)}, {S(SA::Remind), S(SA::Translate)}),      // 0.5
      score_sample("4", {S(SA::Remind), S(SA::Compare)}, {S(SA::Compare), S(SA::Remind)}),        // 1
      score_sample("5", {S(SA::Remind), S(SA::Compare)}, {S(SA::Calculate)}),                     // 0
      score_sample("6", {S(SA::Remind), S(SA::Compare), S(SA::Calculate)}, {S(SA::Remind)}),      // 1
      score_sample("7", {S(SA::Remind), S(SA::Compare), S(SA::Calculate)},
                   {S(SA::Remind), S(SA::Translate), S(SA::Digitize)}),                            // 1/3
      score_sample("8", {S(SA::Remind), S(SA::Compare), S(SA::Calculate), S(SA::Digitize)},
                   {S(SA::Remind), S(SA::Compare), S(SA::Translate)}),                             // 2/3
  };
  const auto b = breakdown_by_action_count(s);
  EXPECT_DOUBLE_EQ(*b.buckets.at("1").accuracy, 0.5);
  EXPECT_DOUBLE_EQ(*b.buckets.at("2").accuracy, 0.5);
  EXPECT_DOUBLE_EQ(*b.buckets.at("3").accuracy, (1.0 + 1.0 / 3.0) / 2.0);
  EXPECT_DOUBLE_EQ(*b.buckets.at("4").accuracy, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(*b.buckets.at(">2").accuracy, (1.0 + 1.0 / 3.0 + 2.0 / 3.0) / 3.0);
  std::size_t total = 0;
  for (auto key : {"1", "2", "3", "4"}) total += b.buckets.at(key).count;
  EXPECT_EQ(total, s.size());
  EXPECT_EQ(b.buckets.at(">2").count, 3u);
}

TEST(EvalActions, OracleIsPerfectEverywhere) {
  const auto corpus = load_corpus(kData / "sample_corpus.jsonl");
  auto mock = MockBackend::oracle(corpus);
  for (auto technique : {Technique::Oracle, Technique::FineTuned, Technique::InContext, Technique::Classifier}) {
    for (auto level : {Level::General, Level::Specific}) {
      for (std::size_t n : {1u, 2u, 3u}) {
        EvalConfig c;
        c.technique = technique;
        c.level = level;
        c.top_n = n;
        const auto r = eval_actions(c, corpus, mock.get());
        EXPECT_EQ(r.accuracy, 1.0) << to_string(technique) << ' ' << to_string(level) << ' ' << n;
        EXPECT_EQ(r.parse_failures, 0u);
        EXPECT_EQ(r.backend_failures, 0u);
      }
    }
  }
}

TEST(EvalActions, IncontextExcludesExemplarsFromTest) {
  const auto corpus = load_corpus(kData / "sample_corpus.jsonl");
  auto mock = MockBackend::rules(RuleTable::load(kData / "mock_rules.json"));
  EvalConfig c;
  const auto r = eval_actions(c, corpus, mock.get());
  ASSERT_FALSE(r.fewshot_ids.empty());
  for (const auto& s : r.samples)
    EXPECT_EQ(std::count(r.fewshot_ids.begin(), r.fewshot_ids.end(), s.entry_id), 0) << s.entry_id;
  EXPECT_EQ(r.train_size + r.test_size, corpus.size());
}

TEST(EvalActions, DeterministicReports) {
  const auto corpus = load_corpus(kData / "sample_corpus.jsonl");
  EvalConfig c;
  auto a = MockBackend::rules(RuleTable::load(kData / "mock_rules.json"));
  auto b = MockBackend::rules(RuleTable::load(kData / "mock_rules.json"));
  EXPECT_EQ(eval_actions(c, corpus, a.get()).to_json().dump(), eval_actions(c, corpus, b.get()).to_json().dump());
}

TEST(EvalActions, FailuresAreTallied) {
  class Broken : public Backend {
   public:
    std::string chat(const PromptBundle& b) override {
      count_request();
      if (b.entry_id.back() % 2) throw BackendError(BackendErrorKind::Timeout, "timed out");
      return "no json here";
    }
    RankedLabels classify(const std::string&, LabelSpace, std::size_t) override { return {}; }
    std::string model_name() const override { return "broken"; }
  } broken;
  const auto corpus = load_corpus(kData / "sample_corpus.jsonl");
  EvalConfig c;
  c.technique = Technique::FineTuned;
  const auto r = eval_actions(c, corpus, &broken);
  EXPECT_EQ(r.parse_failures + r.backend_failures, r.test_size);
  EXPECT_GT(r.parse_failures, 0u);
  EXPECT_GT(r.backend_failures, 0u);
  EXPECT_EQ(r.accuracy, 0.0);
  const auto j = r.to_json();
  EXPECT_EQ(j["samples"][0]["detail"].is_string(), true);
}

TEST(EvalActions, ReportCarriesReferenceLabel) {
  const auto corpus = load_corpus(kData / "sample_corpus.jsonl");
  EvalConfig c;
  c.technique = Technique::Dominant;
  const auto j = eval_actions(c, corpus, nullptr).to_json();
  EXPECT_EQ(j["reference"]["label"], std::string(kReferenceLabel));
  EXPECT_FALSE(j["oracle_upper_bound"].get<bool>());
  EXPECT_THROW(eval_actions(EvalConfig{}, corpus, nullptr), Error);
}

TEST(EvalActions, ConfigValidation) {
  EvalConfig c;
  c.top_n = 0;
  EXPECT_THROW(c.validate(), Error);
  c.top_n = 3;
  c.split_ratio = 0.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(EvalTarget, OracleAndAbsentCells) {
  const auto corpus = load_corpus(kData / "sample_corpus.jsonl");
  auto mock = MockBackend::oracle(corpus);
  EvalConfig c;
  c.technique = Technique::Oracle;
  const auto r = eval_target(c, corpus, mock.get());
  EXPECT_EQ(r.visual_accuracy, 1.0);
  EXPECT_EQ(r.audio_accuracy, 1.0);
  EXPECT_EQ(r.parse_failures, 0u);

  Corpus visual_only;
  for (const auto& e : corpus)
    if (target_family(e) == Family::Visual) visual_only.push_back(e);
  const auto v = eval_target(c, visual_only, mock.get());
  EXPECT_TRUE(v.visual_accuracy);
  EXPECT_FALSE(v.audio_accuracy);
  EXPECT_TRUE(v.to_json()["audio_accuracy"].is_null());
}

TEST(EvalTarget, IncontextRulesRuns) {
  const auto corpus = load_corpus(kData / "sample_corpus.jsonl");
  auto mock = MockBackend::rules(RuleTable::load(kData / "mock_rules.json"));
  EvalConfig c;
  const auto r = eval_target(c, corpus, mock.get());
  EXPECT_EQ(r.visual_count + r.audio_count, r.test_size);
  EXPECT_EQ(r.parse_failures, 0u);
}

TEST(Ablation, OracleAllOnes) {
  const auto corpus = load_corpus(kData / "sample_corpus.jsonl");
  auto mock = MockBackend::oracle(corpus);
  EvalConfig c;
  c.technique = Technique::Oracle;
  const auto grid = ablation_grid(c, corpus, mock.get());
  for (auto v : kAllContextVariants)
    for (auto f : kAllModalityFilters) EXPECT_EQ(grid.at(v, f), 1.0);
  const auto j = grid.to_json();
  ASSERT_EQ(j["rows"].size(), 4u);
  for (const auto& row : j["rows"])
    for (auto key : {"audio_only", "visual_only", "all"}) EXPECT_TRUE(row.contains(key));
}

TEST(Ablation, ActivityContextHelps) {
  const auto corpus = load_corpus(kTestData / "activity_fixture.jsonl");
  auto mock = MockBackend::rules(RuleTable::load(kTestData / "activity_rules.json"));
  EvalConfig c;
  c.technique = Technique::FineTuned;
  c.top_n = 1;
  const auto grid = ablation_grid(c, corpus, mock.get());
  for (auto f : kAllModalityFilters) {
    ASSERT_TRUE(grid.at(ContextVariant::None, f));
    EXPECT_GE(*grid.at(ContextVariant::Full, f), *grid.at(ContextVariant::None, f));
    EXPECT_GE(*grid.at(ContextVariant::ActivityOnly, f), *grid.at(ContextVariant::None, f));
  }
  EXPECT_GT(*grid.at(ContextVariant::Full, ModalityFilter::All), *grid.at(ContextVariant::None, ModalityFilter::All));
}

TEST(ReferenceTables, Labeled) {
  const auto t = reference_tables();
  EXPECT_TRUE(t.contains("overall_accuracy"));
  EXPECT_TRUE(t.contains("target_accuracy"));
  EXPECT_TRUE(t.contains("context_ablation"));
  EXPECT_TRUE(t.contains("action_count_breakdown"));
}
