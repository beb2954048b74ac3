// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "omniact/backend.hpp"
#include "omniact/evaluator.hpp"
#include "omniact/export.hpp"
#include "omniact/http_backend.hpp"
#include "omniact/mock_backend.hpp"
#include "omniact/parser.hpp"
#include "omniact/prompt.hpp"
#include "oracles.hpp"

using namespace omniact;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path kData = OMNIACT_DATA_DIR;
const fs::path kTestData = OMNIACT_TEST_DATA_DIR;

// Collects failed conditions for one criterion.
struct Check {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<std::string> names_of(const std::vector<Label>& labels) {
  std::vector<std::string> out;
  for (auto l : labels) out.emplace_back(canonical_name(l));
  return out;
}

std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (const auto& x : xs) out += (out.empty() ? "" : ",") + x;
  return out;
}

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

std::vector<json> read_jsonl(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
  return out;
}

Label G(GeneralAction a) { return to_label(a); }
Label S(SpecificAction a) { return to_label(a); }

void metric_oracle(Check& c) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1000);
  std::vector<SampleScore> samples;
  std::vector<oracle::NamedSample> named;
  for (int i = 0; i < 1000; ++i) {
    auto [g, p] = random_pair(rng, i % 2 ? LabelSpace::Specific : LabelSpace::General);
    named.emplace_back(names_of(g), names_of(p));
    samples.push_back(score_sample(std::to_string(i), g, p));
    c.expect(samples.back().score == oracle::sample_score(named.back().first, named.back().second),
             "sample " + std::to_string(i));
  }
  c.expect(full_match_accuracy(samples) == oracle::accuracy(named), "mean accuracy");
  c.expect(seconds_since(t0) < 5.0, "runtime >= 5 s");
}

void hand_cases(Check& c) {
  const double a = score_sample("a", {G(GeneralAction::Share)},
                                {G(GeneralAction::Share), G(GeneralAction::Save), G(GeneralAction::LookUp)})
                       .score;
  const double b = score_sample("b", {S(SpecificAction::ShareWithOthers), S(SpecificAction::SaveForReference)},
                                {S(SpecificAction::SearchOnline), S(SpecificAction::Remember),
                                 S(SpecificAction::Recognize)})
                       .score;
  const double d = score_sample("c",
                                {S(SpecificAction::Remember), S(SpecificAction::Remind), S(SpecificAction::Compare),
                                 S(SpecificAction::Calculate)},
                                {S(SpecificAction::Remind), S(SpecificAction::Translate), S(SpecificAction::Compare)})
                       .score;
  std::vector<SampleScore> mean = {score_sample("x", {G(GeneralAction::Save)}, {G(GeneralAction::Save)}),
                                   score_sample("y", {G(GeneralAction::Save), G(GeneralAction::Share)},
                                                {G(GeneralAction::Save), G(GeneralAction::Remind)})};
  c.expect(a == 1.0, "single truth inside top-3");
  c.expect(b == 0.0, "disjoint sets");
  c.expect(d == 2.0 / 3.0, "two of three");
  c.expect(full_match_accuracy(mean) == 0.75, "mean of 1.0 and 0.5");
}

void taxonomy_integrity(Check& c) {
  c.expect(list_definitions(Level::General).size() == 7, "7 generals");
  c.expect(list_definitions(Level::Specific).size() == 17, "17 specifics");
  std::map<std::string, std::size_t> children;
  for (auto s : all_labels(LabelSpace::Specific)) {
    const std::string name(canonical_name(s));
    const std::string parent(canonical_name(general_of(as_specific(s))));
    c.expect(parent == oracle::parent_of(name), "parent of " + name);
    ++children[parent];
  }
  c.expect(children.size() == 7, "every general has a child");
  const auto& lines = oracle::specific_definition_lines();
  const auto& defs = list_definitions(Level::Specific);
  const auto specific = action_system_prompt(Level::Specific, 3);
  const auto general = action_system_prompt(Level::General, 3);
  const auto cot = cot_system_prompt();
  for (std::size_t i = 0; i < lines.size() && i < defs.size(); ++i) {
    c.expect(defs[i].line() == lines[i], "definition " + lines[i]);
    c.expect(specific.find(lines[i]) != std::string::npos, "specific prompt lacks " + lines[i]);
    c.expect(cot.find(lines[i]) != std::string::npos, "cot prompt lacks " + lines[i]);
    c.expect(general.find(defs[i].grouped_line()) != std::string::npos, "general prompt lacks " + lines[i]);
  }
}

void dominant_fidelity(Check& c) {
  const auto corpus = load_corpus(kData / "paper_distribution.jsonl");
  c.expect(corpus.size() == 382, "fixture has 382 entries");
  const auto stats = compute_stats(corpus);
  const auto general = names_of(dominant_baseline(stats, Level::General, 3));
  const auto specific = names_of(dominant_baseline(stats, Level::Specific, 3));
  c.expect(general == oracle::Names{"Save", "Share", "LookUp"}, "general top-3 " + join(general));
  c.expect(specific == oracle::Names{"ShareWithOthers", "SaveForReference", "SearchOnline"},
           "specific top-3 " + join(specific));
}

void oracle_end_to_end(Check& c) {
  const auto t0 = Clock::now();
  const auto corpus = load_corpus(kData / "sample_corpus.jsonl");
  auto mock = MockBackend::oracle(corpus);
  for (auto level : {Level::General, Level::Specific}) {
    for (std::size_t n = 1; n <= 3; ++n) {
      EvalConfig config;
      config.technique = Technique::Oracle;
      config.level = level;
      config.top_n = n;
      const auto r = eval_actions(config, corpus, mock.get());
      const std::string tag = std::string(to_string(level)) + " top-" + std::to_string(n);
      c.expect(r.accuracy == 1.0, tag + " accuracy");
      c.expect(r.parse_failures == 0, tag + " parse failures");
      c.expect(r.backend_failures == 0, tag + " backend failures");
    }
  }
  c.expect(seconds_since(t0) < 10.0, "runtime >= 10 s");
}

void deterministic_pipeline(Check& c) {
  const auto corpus = load_corpus(kData / "sample_corpus.jsonl");
  const auto cache = fs::temp_directory_path() / "omniact_acceptance_cache";
  fs::remove_all(cache);
  auto run = [&](std::size_t& requests) {
    auto bc = BackendConfig::load(kData / "backend_mock.json");
    bc.cache_dir = cache;
    auto backend = make_backend(bc);
    EvalConfig config;
    config.split_seed = 7;
    std::string out = eval_actions(config, corpus, backend.get()).to_json().dump(2);
    config.level = Level::General;
    out += eval_actions(config, corpus, backend.get()).to_json().dump(2);
    out += eval_target(config, corpus, backend.get()).to_json().dump(2);
    requests = backend->request_count();
    return out;
  };
  std::size_t first_requests = 0;
  std::size_t second_requests = 0;
  const auto first = run(first_requests);
  const auto second = run(second_requests);
  c.expect(first == second, "reports differ");
  c.expect(first_requests > 0, "first run issued no requests");
  c.expect(second_requests == 0, "second run issued " + std::to_string(second_requests) + " requests");
  fs::remove_all(cache);
}

void generator_distribution(Check& c) {
  const auto t0 = Clock::now();
  const std::size_t n = 10000;
  const auto corpus = generate_synthetic({1, n});
  c.expect(corpus.size() == n, "size");
  std::map<std::size_t, std::size_t> counts;
  std::map<std::string, std::size_t> targets;
  for (const auto& e : corpus) {
    ++counts[e.labels->specific_actions.size()];
    ++targets[std::string(canonical_name(e.labels->target))];
  }
  const double k_expected[] = {183, 147, 44, 8};
  for (std::size_t k = 1; k <= 4; ++k) {
    const double p = static_cast<double>(counts[k]) / n;
    c.expect(std::abs(p - k_expected[k - 1] / 382.0) <= 0.03, "P(k=" + std::to_string(k) + ")");
  }
  const std::map<std::string, double> t_expected = {
      {"scene", 55}, {"object", 120}, {"text", 79}, {"speech", 51}, {"sound", 77}};
  for (const auto& [name, w] : t_expected) {
    const double p = static_cast<double>(targets[name]) / n;
    c.expect(std::abs(p - w / 382.0) <= 0.03, "target " + name);
  }
  const double visual = static_cast<double>(targets["scene"] + targets["object"] + targets["text"]);
  c.expect(std::abs(visual / (static_cast<double>(n) - visual) - 2.0) <= 0.1, "visual:audio ratio");
  c.expect(seconds_since(t0) < 30.0, "runtime >= 30 s");
}

void parser_robustness(Check& c) {
  const auto cases = oracle::load_parser_cases(kTestData / "parser_fixtures.jsonl");
  c.expect(cases.size() >= 20, "fewer than 20 fixtures");
  for (const auto& pc : cases) {
    const auto set = parse_prediction(pc.raw, parse_expected(pc.expected), pc.n);
    std::vector<std::string> kinds;
    for (const auto& w : set.warnings) kinds.emplace_back(to_string(w.kind));
    c.expect(names_of(set.labels()) == pc.labels, pc.name + " labels");
    c.expect(kinds == pc.warnings, pc.name + " warnings");
  }
  std::mt19937_64 rng(10000);
  const Expected kinds[] = {Expected::ActionGeneral, Expected::ActionSpecific, Expected::TargetVisual,
                            Expected::TargetAudio};
  for (int i = 0; i < 10000; ++i) {
    std::string raw(rng() % 256, '\0');
    for (auto& ch : raw) ch = static_cast<char>(rng() % 256);
    try {
      parse_prediction(raw, kinds[i % 4], 1 + rng() % 3);
    } catch (const std::exception& e) {
      c.expect(false, std::string("fuzz input threw: ") + e.what());
      break;
    }
  }
}

void confusion_rule(Check& c) {
  const auto m1 = confusion(std::vector<SampleScore>{score_sample(
                                "1", {G(GeneralAction::Share)},
                                {G(GeneralAction::Share), G(GeneralAction::Save), G(GeneralAction::LookUp)})},
                            LabelSpace::General);
  double total = 0;
  for (const auto& row : m1.cells)
    for (double x : row) total += x;
  c.expect(m1.at(G(GeneralAction::Share), G(GeneralAction::Share)) == 1.0 && total == 1.0,
           "hit with spurious extras adds nothing off-diagonal");

  const auto m2 = confusion(std::vector<SampleScore>{score_sample(
                                "2", {G(GeneralAction::Share), G(GeneralAction::Save)},
                                {G(GeneralAction::Share), G(GeneralAction::LookUp), G(GeneralAction::Remind)})},
                            LabelSpace::General);
  c.expect(m2.at(G(GeneralAction::Share), G(GeneralAction::Share)) == 1.0 &&
               m2.at(G(GeneralAction::Save), G(GeneralAction::LookUp)) == 0.5 &&
               m2.at(G(GeneralAction::Save), G(GeneralAction::Remind)) == 0.5,
           "fractional attribution");

  const auto m3 = confusion(std::vector<SampleScore>{score_sample("3", {G(GeneralAction::Remind)}, {}, true)},
                            LabelSpace::General);
  total = 0;
  for (const auto& row : m3.cells)
    for (double x : row) total += x;
  c.expect(total == 0.0 && m3.appearances[to_label(GeneralAction::Remind).code] == 1.0, "parse failure row");

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
      c.expect(m.at(t, t) == static_cast<double>(both), "diagonal " + tn);
      for (auto p : all_labels(space)) {
        c.expect(std::abs(m.at(t, p) - o.at(tn, std::string(canonical_name(p)))) < 1e-12,
                 "cell " + tn + "/" + std::string(canonical_name(p)));
      }
    }
  }
}

void ablation_shape(Check& c) {
  const auto corpus = load_corpus(kTestData / "activity_fixture.jsonl");
  auto mock = MockBackend::rules(RuleTable::load(kTestData / "activity_rules.json"));
  EvalConfig config;
  config.technique = Technique::FineTuned;
  config.top_n = 1;
  const auto grid = ablation_grid(config, corpus, mock.get());
  const auto j = grid.to_json();
  c.expect(j["rows"].size() == 4, "4 context rows");
  for (const auto& row : j["rows"])
    for (auto key : {"audio_only", "visual_only", "all"}) c.expect(row.contains(key), std::string("column ") + key);
  for (auto v : kAllContextVariants)
    for (auto f : kAllModalityFilters)
      c.expect(grid.at(v, f).has_value(),
               std::string("cell ") + std::string(to_string(v)) + "/" + std::string(to_string(f)));
  for (auto f : kAllModalityFilters) {
    const auto full = grid.at(ContextVariant::Full, f);
    const auto none = grid.at(ContextVariant::None, f);
    c.expect(full && none && *full >= *none, "Full < None for " + std::string(to_string(f)));
  }
}

void export_round_trip(Check& c) {
  const auto corpus = load_corpus(kData / "sample_corpus.jsonl");
  for (auto level : {Level::General, Level::Specific}) {
    const auto lines = read_jsonl(to_jsonl(finetune_chat_records(corpus, level)));
    c.expect(lines.size() == corpus.size(), "chat line count");
    for (std::size_t i = 0; i < lines.size() && i < corpus.size(); ++i) {
      const auto& e = corpus[i];
      c.expect(lines[i]["messages"][1]["content"] == format_tuple(e, ContextVariant::Full), e.id + " chat input");
      const auto parsed = parse_prediction(lines[i]["messages"][2]["content"].get<std::string>(),
                                           expected_for(level), kSpecificCount);
      c.expect(parsed.warnings.empty() && parsed.labels() == e.labels->label_set(level), e.id + " chat labels");
      for (const auto& p : parsed.predictions) c.expect(p.cot == *e.labels->cot, e.id + " chat cot");
    }
  }

  const auto lines = read_jsonl(to_jsonl(finetune_legacy_records(corpus, LegacyTask::Action, Level::Specific)));
  std::size_t expected = 0;
  for (const auto& e : corpus) expected += e.labels->specific_actions.size();
  c.expect(lines.size() == expected, "legacy line count " + std::to_string(lines.size()) + " != " +
                                         std::to_string(expected));
  std::size_t at = 0;
  for (const auto& e : corpus) {
    for (auto s : e.labels->specific_actions) {
      if (at >= lines.size()) break;
      const auto prompt = lines[at]["prompt"].get<std::string>();
      const auto completion = lines[at]["completion"].get<std::string>();
      c.expect(prompt == format_tuple(e, ContextVariant::Full) + std::string(kLegacySeparator), e.id + " prompt");
      c.expect(!completion.empty() && completion.front() == ' ' && normalize_specific(completion.substr(1)) == s,
               e.id + " completion");
      ++at;
    }
  }
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
      {"metric oracle equivalence (1000 instances, < 5 s)", metric_oracle},
      {"full-match accuracy hand cases", hand_cases},
      {"taxonomy integrity and verbatim definitions in prompts", taxonomy_integrity},
      {"dominant baseline on the paper-distribution fixture", dominant_fidelity},
      {"oracle end-to-end accuracy 1.0 (top-1/2/3, both levels, < 10 s)", oracle_end_to_end},
      {"deterministic pipeline with cached second run", deterministic_pipeline},
      {"generator distribution (n = 10000, < 30 s)", generator_distribution},
      {"parser fixtures and 10000-input fuzz", parser_robustness},
      {"confusion-matrix attribution rule", confusion_rule},
      {"ablation grid shape and Full >= None", ablation_shape},
      {"fine-tune export round-trip and legacy line count", export_round_trip},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Check c;
    try {
      run(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("threw: ") + e.what());
    }
    std::cout << (c.failures.empty() ? "PASS" : "FAIL") << "  " << name;
    if (!c.failures.empty()) {
      ++failed;
      std::cout << "  [" << c.failures.size() << " problem(s); first: " << c.failures.front() << "]";
    }
    std::cout << '\n';
  }
  std::cout << (failed ? std::to_string(failed) + " criterion(s) failed" : "all criteria passed") << '\n';
  return failed ? 1 : 0;
}
