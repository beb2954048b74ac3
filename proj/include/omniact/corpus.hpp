#pragma once

// Diary-style capture entries: data model, JSONL (de)serialization with
// line-addressed validation, corpus statistics, a distribution-driven
// synthetic generator and the canonical tuple rendering fed to models.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "omniact/taxonomy.hpp"

namespace omniact {

struct ContextInfo {
  std::optional<std::string> location;
  std::optional<std::string> activity;

  bool operator==(const ContextInfo&) const = default;
};

struct StructuredCapture {
  std::optional<std::string> scene_caption;
  std::vector<std::string> objects;
  std::vector<std::string> visible_text;
  std::vector<std::string> sound_classes;
  std::optional<std::string> speech_transcript;

  bool has_visual() const { return scene_caption || !objects.empty() || !visible_text.empty(); }
  bool has_audio() const { return !sound_classes.empty() || speech_transcript.has_value(); }
  bool empty() const { return !has_visual() && !has_audio(); }
  bool has_family(Family f) const { return f == Family::Visual ? has_visual() : has_audio(); }

  bool operator==(const StructuredCapture&) const = default;
};

struct Labels {
  TargetModality target = TargetModality::Scene;
  std::vector<SpecificAction> specific_actions;  // 1..4, distinct
  std::optional<std::string> goal_reason;
  std::optional<std::string> cot;

  // Deduplicated image of specific_actions under general_of, first-seen order.
  std::vector<GeneralAction> general_actions() const;
  // Ground-truth set at a level, as labels.
  std::vector<Label> label_set(Level level) const;

  bool operator==(const Labels&) const = default;
};

inline constexpr std::size_t kMaxActionsPerEntry = 4;

struct DiaryEntry {
  std::string id;
  StructuredCapture capture;
  ContextInfo context;
  std::optional<Labels> labels;

  bool operator==(const DiaryEntry&) const = default;
};

using Corpus = std::vector<DiaryEntry>;

// Family of the labelled target; used for modality filters and ratios.
Family target_family(const DiaryEntry& entry);

// Throws SchemaError / LabelOutsideTaxonomy with the given line number.
DiaryEntry entry_from_json(const nlohmann::json& j, std::size_t line = 0);
void validate_entry(const DiaryEntry& entry, std::size_t line = 0);
nlohmann::ordered_json entry_to_json(const DiaryEntry& entry);
std::string entry_to_line(const DiaryEntry& entry);

// One JSON object per line; blank lines are skipped. Throws SchemaError,
// DuplicateId or LabelOutsideTaxonomy carrying the 1-based line number.
Corpus parse_corpus(std::istream& in);
Corpus parse_corpus(std::string_view text);
Corpus load_corpus(const std::filesystem::path& path);

std::string serialize_corpus(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

struct CorpusStats {
  std::size_t entry_count = 0;
  std::array<std::size_t, kModalityCount> target_counts{};
  std::array<std::size_t, kGeneralCount> general_counts{};
  std::array<std::size_t, kSpecificCount> specific_counts{};
  // appearances / entry_count; may sum to more than 1.
  std::array<double, kGeneralCount> general_frequency{};
  std::array<double, kSpecificCount> specific_frequency{};
  std::map<std::size_t, std::size_t> action_count_histogram;
  std::size_t visual_count = 0;
  std::size_t audio_count = 0;

  std::optional<double> visual_audio_ratio() const;
  double frequency(Label label) const;
  // Top-n labels of a level by frequency, ties in canonical order.
  std::vector<Label> top(Level level, std::size_t n) const;
  nlohmann::ordered_json to_json() const;
  std::string to_text() const;
};

// Throws UnlabeledEntry.
CorpusStats compute_stats(const Corpus& corpus);

// Published marginals that drive the generator.
namespace distribution {
// P(|actions| = 1..4) ∝ these counts.
inline constexpr std::array<double, 4> kActionCount = {183, 147, 44, 8};
// Target modality weights in TargetModality order (scene, object, text, sound, speech).
inline constexpr std::array<double, kModalityCount> kTarget = {55, 120, 79, 77, 51};
// Specific-action appearance counts over 382 entries, SpecificAction order.
inline constexpr std::array<double, kSpecificCount> kSpecific = {45, 150, 70, 110, 30, 14, 17, 90, 30,
                                                                 18, 18, 18, 12, 7,  1,  3,  8};
// Share of audio-target entries captured on video (carry a scene caption).
inline constexpr double kAudioFromVideo = 48.0 / 128.0;
}  // namespace distribution

struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t n = 100;
};

// Deterministic under seed. Label sets are drawn as: |actions| from
// kActionCount, then that many distinct actions weighted by kSpecific
// without replacement; target from kTarget.
Corpus generate_synthetic(const SynthConfig& config);

// 382 entries whose action-count histogram, target counts and specific
// appearance counts equal the published marginals exactly.
Corpus paper_distribution_corpus();

enum class ContextVariant : std::uint8_t { None, LocationOnly, ActivityOnly, Full };

inline constexpr std::array<ContextVariant, 4> kAllContextVariants = {
    ContextVariant::None, ContextVariant::LocationOnly, ContextVariant::ActivityOnly, ContextVariant::Full};

std::string_view to_string(ContextVariant variant);
ContextVariant parse_context_variant(std::string_view text);

// Compact JSON object, keys in the fixed order scene_description, objects,
// visible_text, sounds, speech, location, activity. Visual keys appear only
// for visual captures and audio keys only for audio captures; context keys
// are filtered by the variant.
std::string format_tuple(const DiaryEntry& entry, ContextVariant variant);

}  // namespace omniact
