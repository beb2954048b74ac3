#include "omniact/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "omniact/error.hpp"
#include "omniact/parser.hpp"
#include "omniact/prompt.hpp"
#include "omniact/random.hpp"

namespace omniact {
namespace {

using ojson = nlohmann::ordered_json;

// Calls fn(i) for i in [0, count) on up to `workers` threads; results are
// stored by index so completion order never shows. fn must not throw.
template <typename F>
auto run_indexed(std::size_t count, std::size_t workers, F fn) {
  using R = decltype(fn(std::size_t{}));
  std::vector<R> out(count);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) out[i] = fn(i);
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
  if (workers == 1) {
    work();
    return out;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  pool.clear();
  return out;
}

std::string fmt(std::optional<double> v, int digits = 4) {
  if (!v) return "absent";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, *v);
  return buf;
}

ojson opt_json(std::optional<double> v) { return v ? ojson(*v) : ojson(nullptr); }

ojson names(const std::vector<Label>& labels) {
  auto out = ojson::array();
  for (auto l : labels) out.push_back(canonical_name(l));
  return out;
}

bool passes(const DiaryEntry& e, ModalityFilter f) {
  switch (f) {
    case ModalityFilter::All:
      return true;
    case ModalityFilter::VisualOnly:
      return target_family(e) == Family::Visual;
    case ModalityFilter::AudioOnly:
      return target_family(e) == Family::Audio;
  }
  return true;
}

Corpus filtered(const Corpus& corpus, ModalityFilter f) {
  Corpus out;
  for (const auto& e : corpus) {
    if (passes(e, f)) out.push_back(e);
  }
  return out;
}

std::size_t column_of(ModalityFilter f) {
  switch (f) {
    case ModalityFilter::AudioOnly:
      return 0;
    case ModalityFilter::VisualOnly:
      return 1;
    case ModalityFilter::All:
      return 2;
  }
  return 2;
}

void require_labels(const Corpus& corpus) {
  for (const auto& e : corpus) {
    if (!e.labels) throw UnlabeledEntry(e.id);
  }
}

std::optional<double> mean_score(const std::vector<SampleScore>& samples, std::optional<Family> family) {
  std::vector<SampleScore> subset;
  for (const auto& s : samples) {
    if (!family || s.family == *family) subset.push_back(s);
  }
  if (subset.empty()) return std::nullopt;
  return full_match_accuracy(subset);
}

ojson sample_json(const SampleScore& s) {
  ojson j;
  j["entry_id"] = s.entry_id;
  j["family"] = to_string(s.family);
  j["truth"] = names(s.truth);
  j["predicted"] = names(s.predicted);
  j["correct"] = s.correct;
  j["score"] = s.score;
  j["parse_failed"] = s.parse_failed;
  j["backend_failed"] = s.backend_failed;
  if (s.parse_failed || s.backend_failed) j["detail"] = s.detail;
  return j;
}

ojson reference_for_actions(Level level) {
  auto all = reference_tables();
  ojson j;
  j["label"] = kReferenceLabel;
  j["overall_accuracy"] = all["overall_accuracy"][std::string(to_string(level))];
  j["context_ablation"] = all["context_ablation"];
  j["action_count_breakdown"] = all["action_count_breakdown"][std::string(to_string(level))];
  return j;
}

}  // namespace

std::string_view to_string(Technique t) {
  switch (t) {
    case Technique::InContext:
      return "icl";
    case Technique::FineTuned:
      return "finetuned";
    case Technique::Classifier:
      return "classifier";
    case Technique::Dominant:
      return "dominant";
    case Technique::Oracle:
      return "oracle";
  }
  return "";
}

std::string_view to_string(ModalityFilter f) {
  switch (f) {
    case ModalityFilter::All:
      return "all";
    case ModalityFilter::VisualOnly:
      return "visual_only";
    case ModalityFilter::AudioOnly:
      return "audio_only";
  }
  return "";
}

Technique parse_technique(std::string_view text) {
  for (auto t : {Technique::InContext, Technique::FineTuned, Technique::Classifier, Technique::Dominant,
                 Technique::Oracle}) {
    if (to_string(t) == text) return t;
  }
  throw Error("unknown technique '" + std::string(text) + "'");
}

ModalityFilter parse_modality_filter(std::string_view text) {
  for (auto f : {ModalityFilter::All, ModalityFilter::VisualOnly, ModalityFilter::AudioOnly}) {
    if (to_string(f) == text) return f;
  }
  throw Error("unknown modality filter '" + std::string(text) + "'");
}

void EvalConfig::validate() const {
  if (top_n < 1) throw Error("top_n must be >= 1");
  if (top_n > space_size(space_of(level))) throw Error("top_n exceeds the label space");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw Error("split_ratio must be in (0, 1)");
}

ojson EvalConfig::to_json() const {
  ojson j;
  j["technique"] = to_string(technique);
  j["level"] = to_string(level);
  j["top_n"] = top_n;
  j["context_variant"] = to_string(context_variant);
  j["modality_filter"] = to_string(modality_filter);
  j["split_seed"] = split_seed;
  j["split_ratio"] = split_ratio;
  j["stratified"] = stratified;
  return j;
}

SampleScore score_sample(std::string entry_id, std::vector<Label> truth, std::vector<Label> predicted,
                         bool parse_failed) {
  SampleScore s;
  s.entry_id = std::move(entry_id);
  s.truth = std::move(truth);
  s.predicted = std::move(predicted);
  s.parse_failed = parse_failed;
  std::vector<Label> seen;
  for (auto p : s.predicted) {
    if (std::find(seen.begin(), seen.end(), p) != seen.end()) continue;
    seen.push_back(p);
    if (std::find(s.truth.begin(), s.truth.end(), p) != s.truth.end()) ++s.correct;
  }
  if (!parse_failed && !s.predicted.empty() && !s.truth.empty()) {
    s.score = static_cast<double>(s.correct) / static_cast<double>(std::min(s.truth.size(), s.predicted.size()));
  }
  return s;
}

double full_match_accuracy(std::span<const SampleScore> samples) {
  if (samples.empty()) throw EmptyEvaluation();
  double sum = 0.0;
  for (const auto& s : samples) sum += s.score;
  return sum / static_cast<double>(samples.size());
}

Split split_corpus(const Corpus& corpus, std::uint64_t seed, double ratio, bool stratified) {
  if (corpus.size() < 4) throw CorpusTooSmall(corpus.size());
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error("split ratio must be in (0, 1)");
  Rng rng(seed);
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  auto cut = [&](std::vector<std::size_t> idx, bool clamp) {
    rng.shuffle(idx);
    auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(idx.size())));
    if (clamp) k = std::clamp<std::size_t>(k, 1, idx.size() - 1);
    train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    test_idx.insert(test_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
  };
  if (stratified) {
    std::map<TargetModality, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const auto key = corpus[i].labels ? corpus[i].labels->target : TargetModality::Scene;
      groups[key].push_back(i);
    }
    for (auto& [_, idx] : groups) cut(std::move(idx), false);
    if (train_idx.empty() || test_idx.empty()) {
      train_idx.clear();
      test_idx.clear();
      stratified = false;
    }
  }
  if (!stratified) {
    std::vector<std::size_t> idx(corpus.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    cut(std::move(idx), true);
  }
  Split s;
  for (auto i : train_idx) s.train.push_back(corpus[i]);
  for (auto i : test_idx) s.test.push_back(corpus[i]);
  return s;
}

std::vector<Label> dominant_baseline(const CorpusStats& train_stats, Level level, std::size_t n) {
  return train_stats.top(level, n);
}

ConfusionMatrix::ConfusionMatrix(LabelSpace s)
    : space(s), cells(space_size(s), std::vector<double>(space_size(s), 0.0)), appearances(space_size(s), 0.0) {}

double ConfusionMatrix::at(Label truth, Label predicted) const { return cells.at(truth.code).at(predicted.code); }

std::vector<std::vector<double>> ConfusionMatrix::normalized() const {
  auto out = cells;
  for (std::size_t r = 0; r < out.size(); ++r) {
    for (auto& v : out[r]) v = appearances[r] > 0 ? v / appearances[r] : 0.0;
  }
  return out;
}

std::string ConfusionMatrix::to_csv(bool normalize) const {
  const auto labels = all_labels(space);
  const auto m = normalize ? normalized() : cells;
  std::ostringstream out;
  out << "truth\\predicted";
  for (auto l : labels) out << ',' << canonical_name(l);
  out << '\n';
  for (std::size_t r = 0; r < labels.size(); ++r) {
    out << canonical_name(labels[r]);
    for (double v : m[r]) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  return out.str();
}

ojson ConfusionMatrix::to_json() const {
  ojson j;
  j["space"] = to_string(space);
  j["labels"] = names(all_labels(space));
  j["appearances"] = appearances;
  j["counts"] = cells;
  j["normalized"] = normalized();
  return j;
}

ConfusionMatrix confusion(std::span<const SampleScore> samples, LabelSpace space) {
  ConfusionMatrix m(space);
  for (const auto& s : samples) {
    std::vector<Label> missed;
    std::vector<Label> spurious;
    for (auto g : s.truth) {
      if (g.space != space) continue;
      m.appearances[g.code] += 1.0;
      if (std::find(s.predicted.begin(), s.predicted.end(), g) != s.predicted.end()) {
        m.cells[g.code][g.code] += 1.0;
      } else {
        missed.push_back(g);
      }
    }
    for (auto p : s.predicted) {
      if (p.space != space) continue;
      if (std::find(s.truth.begin(), s.truth.end(), p) == s.truth.end() &&
          std::find(spurious.begin(), spurious.end(), p) == spurious.end()) {
        spurious.push_back(p);
      }
    }
    if (missed.empty() || spurious.empty()) continue;
    const double share = 1.0 / static_cast<double>(spurious.size());
    for (auto g : missed) {
      for (auto p : spurious) m.cells[g.code][p.code] += share;
    }
  }
  return m;
}

ojson ActionCountBreakdown::to_json() const {
  ojson j;
  for (const auto& [key, b] : buckets) {
    j[key] = {{"count", b.count}, {"accuracy", opt_json(b.accuracy)}};
  }
  return j;
}

ActionCountBreakdown breakdown_by_action_count(std::span<const SampleScore> samples) {
  std::map<std::string, std::pair<std::size_t, double>> acc;
  for (const char* key : {"1", "2", "3", "4", ">2"}) acc[key] = {0, 0.0};
  for (const auto& s : samples) {
    const auto k = std::clamp<std::size_t>(s.truth.size(), 1, kMaxActionsPerEntry);
    auto& bucket = acc[std::to_string(k)];
    ++bucket.first;
    bucket.second += s.score;
    if (k > 2) {
      ++acc[">2"].first;
      acc[">2"].second += s.score;
    }
  }
  ActionCountBreakdown out;
  for (const auto& [key, v] : acc) {
    Bucket b;
    b.count = v.first;
    if (v.first > 0) b.accuracy = v.second / static_cast<double>(v.first);
    out.buckets[key] = b;
  }
  return out;
}

ojson reference_tables() {
  ojson j;
  j["label"] = kReferenceLabel;
  j["target_accuracy"] = ojson::array({
      {{"approach", "intent classification"}, {"visual", 70.6}, {"audio", 92.3}},
      {{"approach", "in-context learning (cot)"}, {"visual", 62.3}, {"audio", 90.1}},
      {{"approach", "fine-tuning (cot)"}, {"visual", 70.7}, {"audio", 90.9}},
  });
  auto row = [](const char* approach, std::array<double, 3> v) {
    return ojson{{"approach", approach}, {"top1", v[0]}, {"top2", v[1]}, {"top3", v[2]}};
  };
  j["overall_accuracy"]["general"] = ojson::array({
      row("dominant", {47.4, 61.3, 78.1}),
      row("intent classification", {46.0, 61.1, 83.1}),
      row("fine-tuning (gpt-3.5)", {57.7, 67.2, 84.9}),
      row("in-context learning (gpt-3.5)", {57.9, 65.2, 78.6}),
      row("in-context learning (gpt-4)", {60.3, 69.9, 94.3}),
  });
  j["overall_accuracy"]["specific"] = ojson::array({
      row("dominant", {39.3, 45.3, 54.8}),
      row("intent classification", {41.7, 40.6, 54.3}),
      row("fine-tuning (gpt-3.5)", {48.1, 50.2, 60.1}),
      row("in-context learning (gpt-3.5)", {36.4, 40.1, 46.3}),
      row("in-context learning (gpt-4)", {44.4, 52.9, 67.1}),
  });
  auto ablation = [](std::array<double, 4> v) {
    return ojson{{"none", v[0]}, {"location", v[1]}, {"activity", v[2]}, {"full", v[3]}};
  };
  j["context_ablation"]["audio_only"] = ablation({47.5, 47.7, 59.7, 60.0});
  j["context_ablation"]["visual_only"] = ablation({55.1, 59.1, 67.5, 70.8});
  j["context_ablation"]["all"] = ablation({52.5, 55.2, 64.9, 67.1});
  auto counts = [](std::array<double, 6> v) {
    return ojson{{"1", v[0]}, {"2", v[1]}, {"3", v[2]}, {"4", v[3]}, {">2", v[4]}, {"all", v[5]}};
  };
  j["action_count_breakdown"]["general"] = counts({98.7, 91.2, 68.6, 87.5, 85.5, 94.3});
  j["action_count_breakdown"]["specific"] = counts({73.7, 64.1, 50.3, 79.2, 61.1, 67.1});
  return j;
}

ojson EvalReport::to_json() const {
  ojson j;
  j["kind"] = "actions";
  j["config"] = config.to_json();
  j["model_name"] = model_name;
  j["oracle_upper_bound"] = config.technique == Technique::Oracle;
  j["train_size"] = train_size;
  j["test_size"] = test_size;
  j["fewshot_ids"] = fewshot_ids;
  j["uncovered"] = names(uncovered);
  j["accuracy"] = opt_json(accuracy);
  j["visual_accuracy"] = opt_json(visual_accuracy);
  j["audio_accuracy"] = opt_json(audio_accuracy);
  j["parse_failures"] = parse_failures;
  j["backend_failures"] = backend_failures;
  j["action_count_breakdown"] = breakdown.to_json();
  j["confusion"] = confusion_matrix.to_json();
  auto list = ojson::array();
  for (const auto& s : samples) list.push_back(sample_json(s));
  j["samples"] = std::move(list);
  j["reference"] = reference_for_actions(config.level);
  return j;
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  out << "actions: technique=" << to_string(config.technique) << " level=" << to_string(config.level)
      << " top_n=" << config.top_n << " context=" << to_string(config.context_variant)
      << " filter=" << to_string(config.modality_filter) << " seed=" << config.split_seed << '\n';
  if (config.technique == Technique::Oracle) out << "ORACLE BACKEND: upper bound for plumbing checks, not a result\n";
  out << "model: " << model_name << "  train/test: " << train_size << '/' << test_size
      << "  exemplars: " << fewshot_ids.size() << '\n';
  out << "accuracy: " << fmt(accuracy) << "  visual: " << fmt(visual_accuracy) << "  audio: " << fmt(audio_accuracy)
      << '\n';
  out << "parse failures: " << parse_failures << "  backend failures: " << backend_failures << '\n';
  out << "by number of actions:";
  for (const auto& [key, b] : breakdown.buckets) out << "  " << key << ": " << fmt(b.accuracy) << " (n=" << b.count << ')';
  out << '\n';
  if (!uncovered.empty()) {
    out << "exemplars do not cover:";
    for (auto l : uncovered) out << ' ' << canonical_name(l);
    out << '\n';
  }
  out << "reference (" << kReferenceLabel << "): see report JSON\n";
  return out.str();
}

EvalReport eval_actions(const EvalConfig& config, const Corpus& corpus, Backend* backend) {
  config.validate();
  require_labels(corpus);
  if (!backend && config.technique != Technique::Dominant) throw Error("technique needs a backend");
  const auto split = split_corpus(corpus, config.split_seed, config.split_ratio, config.stratified);
  const auto test = filtered(split.test, config.modality_filter);
  const auto level = config.level;
  const auto n = config.top_n;

  EvalReport report;
  report.config = config;
  report.model_name = backend ? backend->model_name() : "dominant";
  report.train_size = split.train.size();
  report.test_size = test.size();
  report.confusion_matrix = ConfusionMatrix(space_of(level));

  FewShotStore store;
  if (config.technique == Technique::InContext) {
    store = select_fewshots_actions(split.train);
    report.fewshot_ids = store.ids();
    report.uncovered = store.uncovered;
  }
  std::vector<Label> dominant;
  if (config.technique == Technique::Dominant) dominant = dominant_baseline(compute_stats(split.train), level, n);

  auto run_one = [&](std::size_t i) {
    const auto& e = test[i];
    auto truth = e.labels->label_set(level);
    SampleScore s;
    try {
      switch (config.technique) {
        case Technique::Dominant:
          s = score_sample(e.id, truth, dominant);
          break;
        case Technique::Classifier: {
          auto ranked = backend->classify(format_tuple(e, config.context_variant), space_of(level), n);
          s = score_sample(e.id, truth, ranked.labels());
          break;
        }
        case Technique::InContext:
        case Technique::FineTuned:
        case Technique::Oracle: {
          const auto mode = config.technique == Technique::InContext ? PromptMode::InContext : PromptMode::FineTuned;
          const auto bundle = build_action_prompt(e, level, n, store, config.context_variant, mode);
          const auto raw = backend->chat(bundle);
          const auto parsed = parse_prediction(raw, expected_for(level), n);
          s = score_sample(e.id, truth, parsed.labels(), parsed.failed());
          if (parsed.failed()) s.detail = raw;
          break;
        }
      }
    } catch (const std::exception& ex) {
      s = score_sample(e.id, truth, {});
      s.backend_failed = true;
      s.detail = ex.what();
    }
    s.family = target_family(e);
    return s;
  };
  const std::size_t workers = backend && config.technique != Technique::Dominant ? backend->max_in_flight() : 1;
  report.samples = run_indexed(test.size(), workers, run_one);

  for (const auto& s : report.samples) {
    report.parse_failures += s.parse_failed ? 1 : 0;
    report.backend_failures += s.backend_failed ? 1 : 0;
  }
  report.accuracy = mean_score(report.samples, std::nullopt);
  report.visual_accuracy = mean_score(report.samples, Family::Visual);
  report.audio_accuracy = mean_score(report.samples, Family::Audio);
  report.confusion_matrix = confusion(report.samples, space_of(level));
  report.breakdown = breakdown_by_action_count(report.samples);
  return report;
}

ojson TargetReport::to_json() const {
  ojson j;
  j["kind"] = "target";
  j["config"] = config.to_json();
  j["model_name"] = model_name;
  j["oracle_upper_bound"] = config.technique == Technique::Oracle;
  j["train_size"] = train_size;
  j["test_size"] = test_size;
  j["visual_count"] = visual_count;
  j["audio_count"] = audio_count;
  j["visual_accuracy"] = opt_json(visual_accuracy);
  j["audio_accuracy"] = opt_json(audio_accuracy);
  j["parse_failures"] = parse_failures;
  j["backend_failures"] = backend_failures;
  auto list = ojson::array();
  for (const auto& s : samples) {
    ojson x;
    x["entry_id"] = s.entry_id;
    x["family"] = to_string(s.family);
    x["truth"] = canonical_name(s.truth);
    x["predicted"] = s.predicted ? ojson(canonical_name(*s.predicted)) : ojson(nullptr);
    x["correct"] = s.correct;
    x["parse_failed"] = s.parse_failed;
    x["backend_failed"] = s.backend_failed;
    if (s.parse_failed || s.backend_failed) x["detail"] = s.detail;
    list.push_back(std::move(x));
  }
  j["samples"] = std::move(list);
  ojson ref;
  ref["label"] = kReferenceLabel;
  ref["target_accuracy"] = reference_tables()["target_accuracy"];
  j["reference"] = std::move(ref);
  return j;
}

std::string TargetReport::to_text() const {
  std::ostringstream out;
  out << "target: technique=" << to_string(config.technique) << " context=" << to_string(config.context_variant)
      << " seed=" << config.split_seed << '\n';
  if (config.technique == Technique::Oracle) out << "ORACLE BACKEND: upper bound for plumbing checks, not a result\n";
  out << "model: " << model_name << "  train/test: " << train_size << '/' << test_size << '\n';
  out << "approach            visual   audio\n";
  out << to_string(config.technique);
  for (auto pad = to_string(config.technique).size(); pad < 20; ++pad) out << ' ';
  out << fmt(visual_accuracy) << "   " << fmt(audio_accuracy) << "   (n=" << visual_count << '/' << audio_count
      << ")\n";
  out << "parse failures: " << parse_failures << "  backend failures: " << backend_failures << '\n';
  return out.str();
}

TargetReport eval_target(const EvalConfig& config, const Corpus& corpus, Backend* backend) {
  config.validate();
  require_labels(corpus);
  if (!backend && config.technique != Technique::Dominant) throw Error("technique needs a backend");
  const auto split = split_corpus(corpus, config.split_seed, config.split_ratio, config.stratified);
  const auto test = filtered(split.test, config.modality_filter);

  TargetReport report;
  report.config = config;
  report.model_name = backend ? backend->model_name() : "dominant";
  report.train_size = split.train.size();
  report.test_size = test.size();

  FewShotStore store;
  if (config.technique == Technique::InContext) store = select_fewshots_target(split.train);
  std::array<TargetModality, 2> dominant{TargetModality::Object, TargetModality::Sound};
  if (config.technique == Technique::Dominant) {
    const auto stats = compute_stats(split.train);
    for (auto family : {Family::Visual, Family::Audio}) {
      std::size_t best = 0;
      for (const auto& m : list_modalities(family)) {
        const auto count = stats.target_counts[static_cast<std::size_t>(m.modality)];
        if (count > best) {
          best = count;
          dominant[family == Family::Visual ? 0 : 1] = m.modality;
        }
      }
    }
  }

  auto run_one = [&](std::size_t i) {
    const auto& e = test[i];
    TargetSample s;
    s.entry_id = e.id;
    s.family = target_family(e);
    s.truth = e.labels->target;
    try {
      switch (config.technique) {
        case Technique::Dominant:
          s.predicted = dominant[s.family == Family::Visual ? 0 : 1];
          break;
        case Technique::Classifier: {
          auto ranked = backend->classify(format_tuple(e, config.context_variant), LabelSpace::Target,
                                          kModalityCount);
          for (auto l : ranked.labels()) {
            if (family_of(as_modality(l)) == s.family) {
              s.predicted = as_modality(l);
              break;
            }
          }
          s.parse_failed = !s.predicted;
          break;
        }
        case Technique::InContext:
        case Technique::FineTuned:
        case Technique::Oracle: {
          const auto mode = config.technique == Technique::InContext ? PromptMode::InContext : PromptMode::FineTuned;
          const auto bundle = build_target_prompt(e, s.family, store, config.context_variant, mode);
          const auto raw = backend->chat(bundle);
          const auto parsed = parse_prediction(raw, expected_for(s.family), 1);
          if (parsed.failed()) {
            s.parse_failed = true;
            s.detail = raw;
          } else {
            s.predicted = as_modality(parsed.predictions.front().label);
          }
          break;
        }
      }
    } catch (const std::exception& ex) {
      s.backend_failed = true;
      s.detail = ex.what();
    }
    s.correct = s.predicted && *s.predicted == s.truth;
    return s;
  };
  const std::size_t workers = backend && config.technique != Technique::Dominant ? backend->max_in_flight() : 1;
  report.samples = run_indexed(test.size(), workers, run_one);

  std::array<std::size_t, 2> hits{};
  for (const auto& s : report.samples) {
    const auto f = s.family == Family::Visual ? 0 : 1;
    (f == 0 ? report.visual_count : report.audio_count) += 1;
    hits[f] += s.correct ? 1 : 0;
    report.parse_failures += s.parse_failed ? 1 : 0;
    report.backend_failures += s.backend_failed ? 1 : 0;
  }
  if (report.visual_count) report.visual_accuracy = static_cast<double>(hits[0]) / report.visual_count;
  if (report.audio_count) report.audio_accuracy = static_cast<double>(hits[1]) / report.audio_count;
  return report;
}

std::optional<double> AblationGrid::at(ContextVariant v, ModalityFilter f) const {
  return cells[static_cast<std::size_t>(v)][column_of(f)];
}

ojson AblationGrid::to_json() const {
  ojson j;
  j["kind"] = "ablation";
  j["config"] = base.to_json();
  auto rows = ojson::array();
  for (auto v : kAllContextVariants) {
    ojson row;
    row["context_variant"] = to_string(v);
    for (auto f : kAllModalityFilters) {
      row[std::string(to_string(f))] = {{"accuracy", opt_json(at(v, f))},
                                        {"test_size", test_sizes[static_cast<std::size_t>(v)][column_of(f)]}};
    }
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  ojson ref;
  ref["label"] = kReferenceLabel;
  ref["context_ablation"] = reference_tables()["context_ablation"];
  j["reference"] = std::move(ref);
  return j;
}

std::string AblationGrid::to_text() const {
  std::ostringstream out;
  out << "context ablation: technique=" << to_string(base.technique) << " level=" << to_string(base.level)
      << " top_n=" << base.top_n << " seed=" << base.split_seed << '\n';
  out << "                 none      location  activity  full\n";
  for (auto f : kAllModalityFilters) {
    std::string name(to_string(f));
    name.resize(17, ' ');
    out << name;
    for (auto v : kAllContextVariants) {
      auto cell = fmt(at(v, f));
      cell.resize(10, ' ');
      out << cell;
    }
    out << '\n';
  }
  return out.str();
}

AblationGrid ablation_grid(const EvalConfig& base, const Corpus& corpus, Backend* backend) {
  AblationGrid grid;
  grid.base = base;
  for (auto v : kAllContextVariants) {
    for (auto f : kAllModalityFilters) {
      auto config = base;
      config.context_variant = v;
      config.modality_filter = f;
      const auto report = eval_actions(config, corpus, backend);
      grid.cells[static_cast<std::size_t>(v)][column_of(f)] = report.accuracy;
      grid.test_sizes[static_cast<std::size_t>(v)][column_of(f)] = report.test_size;
    }
  }
  return grid;
}

}  // namespace omniact
