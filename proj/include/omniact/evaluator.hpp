#pragma once

// Evaluation harness: full-match accuracy, target accuracy, the dominant
// baseline, confusion matrices, the context ablation grid and the
// breakdown by number of ground-truth actions.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "omniact/backend.hpp"
#include "omniact/corpus.hpp"
#include "omniact/taxonomy.hpp"

namespace omniact {

enum class Technique : std::uint8_t { InContext, FineTuned, Classifier, Dominant, Oracle };
enum class ModalityFilter : std::uint8_t { All, VisualOnly, AudioOnly };

inline constexpr std::array<ModalityFilter, 3> kAllModalityFilters = {ModalityFilter::AudioOnly,
                                                                      ModalityFilter::VisualOnly, ModalityFilter::All};

std::string_view to_string(Technique t);
std::string_view to_string(ModalityFilter f);
Technique parse_technique(std::string_view text);
ModalityFilter parse_modality_filter(std::string_view text);

struct EvalConfig {
  Technique technique = Technique::InContext;
  Level level = Level::Specific;
  std::size_t top_n = 3;
  ContextVariant context_variant = ContextVariant::Full;
  ModalityFilter modality_filter = ModalityFilter::All;
  std::uint64_t split_seed = 7;
  double split_ratio = 0.75;
  bool stratified = false;

  // Throws Error unless top_n >= 1 and 0 < split_ratio < 1.
  void validate() const;
  nlohmann::ordered_json to_json() const;
};

struct SampleScore {
  std::string entry_id;
  std::vector<Label> truth;      // G
  std::vector<Label> predicted;  // P, in rank order
  std::size_t correct = 0;       // C = |G ∩ P|
  double score = 0.0;            // C / min(|G|, |P|), 0 when P is empty
  bool parse_failed = false;
  bool backend_failed = false;
  Family family = Family::Visual;  // target family of the entry
  std::string detail;              // raw output or error text for failures
};

// Scores one sample. Empty P or parse_failed scores 0.
SampleScore score_sample(std::string entry_id, std::vector<Label> truth, std::vector<Label> predicted,
                         bool parse_failed = false);

// Mean per-sample score. Throws EmptyEvaluation.
double full_match_accuracy(std::span<const SampleScore> samples);

struct Split {
  Corpus train;
  Corpus test;
};

// Seeded shuffle then split at round(ratio * n), clamped so both sides are
// non-empty. Stratified mode splits each target modality separately.
// Throws CorpusTooSmall when fewer than 4 entries.
Split split_corpus(const Corpus& corpus, std::uint64_t seed, double ratio = 0.75, bool stratified = false);

// Top-n labels of the training distribution, ties in canonical order.
std::vector<Label> dominant_baseline(const CorpusStats& train_stats, Level level, std::size_t n);

struct ConfusionMatrix {
  LabelSpace space = LabelSpace::Specific;
  std::vector<std::vector<double>> cells;  // [truth][predicted], raw event mass
  std::vector<double> appearances;         // ground-truth appearances per label

  explicit ConfusionMatrix(LabelSpace s = LabelSpace::Specific);

  double at(Label truth, Label predicted) const;
  // Rows divided by appearances; rows without appearances stay zero.
  std::vector<std::vector<double>> normalized() const;
  std::string to_csv(bool normalize = true) const;
  nlohmann::ordered_json to_json() const;
};

// Diagonal +1 per g in G∩P. When some g is missed, each missed g adds
// 1/|P\G| to every spurious p in P\G. Appearances count every g in G.
ConfusionMatrix confusion(std::span<const SampleScore> samples, LabelSpace space);

struct Bucket {
  std::size_t count = 0;
  std::optional<double> accuracy;  // absent when count == 0
};

// Buckets keyed "1".."4" and ">2" (pooled 3 and 4).
struct ActionCountBreakdown {
  std::map<std::string, Bucket> buckets;
  nlohmann::ordered_json to_json() const;
};

ActionCountBreakdown breakdown_by_action_count(std::span<const SampleScore> samples);

// Display-only numbers from the original study, never acceptance targets.
nlohmann::ordered_json reference_tables();
inline constexpr std::string_view kReferenceLabel = "published reference, not reproduced";

struct EvalReport {
  EvalConfig config;
  std::string model_name;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::vector<std::string> fewshot_ids;
  std::vector<Label> uncovered;
  std::optional<double> accuracy;
  std::optional<double> visual_accuracy;
  std::optional<double> audio_accuracy;
  std::size_t parse_failures = 0;
  std::size_t backend_failures = 0;
  ConfusionMatrix confusion_matrix;
  ActionCountBreakdown breakdown;
  std::vector<SampleScore> samples;

  nlohmann::ordered_json to_json() const;
  std::string to_text() const;
};

// Runs the configured technique over the test split. Backend failures and
// unparseable outputs are tallied and scored 0. The backend may be null for
// the dominant technique.
EvalReport eval_actions(const EvalConfig& config, const Corpus& corpus, Backend* backend);

struct TargetSample {
  std::string entry_id;
  Family family = Family::Visual;
  TargetModality truth = TargetModality::Scene;
  std::optional<TargetModality> predicted;
  bool correct = false;
  bool parse_failed = false;
  bool backend_failed = false;
  std::string detail;
};

struct TargetReport {
  EvalConfig config;
  std::string model_name;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::size_t visual_count = 0;
  std::size_t audio_count = 0;
  // Visual (3-class) and audio (2-class) are never pooled; absent when the
  // test split has no entry of that family.
  std::optional<double> visual_accuracy;
  std::optional<double> audio_accuracy;
  std::size_t parse_failures = 0;
  std::size_t backend_failures = 0;
  std::vector<TargetSample> samples;

  nlohmann::ordered_json to_json() const;
  std::string to_text() const;
};

TargetReport eval_target(const EvalConfig& config, const Corpus& corpus, Backend* backend);

// Context variant rows (None, LocationOnly, ActivityOnly, Full) by modality
// filter columns (audio_only, visual_only, all). Each cell is an independent
// eval_actions run; absent when the filtered test split is empty.
struct AblationGrid {
  EvalConfig base;
  std::array<std::array<std::optional<double>, 3>, 4> cells{};
  std::array<std::array<std::size_t, 3>, 4> test_sizes{};

  std::optional<double> at(ContextVariant v, ModalityFilter f) const;
  nlohmann::ordered_json to_json() const;
  std::string to_text() const;
};

AblationGrid ablation_grid(const EvalConfig& base, const Corpus& corpus, Backend* backend);

}  // namespace omniact
