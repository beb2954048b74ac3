#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "omniact/prompt.hpp"
#include "omniact/taxonomy.hpp"

namespace omniact {

enum class Expected : std::uint8_t { ActionGeneral, ActionSpecific, TargetVisual, TargetAudio };

LabelSpace space_of(Expected expected);
Expected expected_for(Purpose purpose);
Expected expected_for(Level level);
Expected expected_for(Family family);
std::string_view to_string(Expected expected);
Expected parse_expected(std::string_view text);

enum class WarningKind : std::uint8_t {
  ParseError,         // no usable JSON in the output
  LabelError,         // a prediction did not normalize onto the taxonomy
  FamilyMismatch,     // a target outside the requested family
  MissingPrediction,  // an element without a "prediction" value
  Duplicate,          // repeated label, dropped
  Truncated,          // more than n predictions
};

std::string_view to_string(WarningKind kind);
WarningKind parse_warning_kind(std::string_view text);

struct ParseWarning {
  WarningKind kind;
  std::string detail;

  bool operator==(const ParseWarning&) const = default;
};

struct Prediction {
  std::string cot;
  Label label;

  bool operator==(const Prediction&) const = default;
};

struct PredictionSet {
  std::vector<Prediction> predictions;
  std::string raw;
  std::vector<ParseWarning> warnings;

  // No valid prediction survived; the evaluator scores these 0.
  bool failed() const { return predictions.empty(); }
  std::vector<Label> labels() const;
  bool has_warning(WarningKind kind) const;
};

// Finds the first balanced JSON object/array in `raw` that carries
// predictions (prose, code fences and restated text around it are skipped).
// Trailing commas are tolerated. Never throws.
std::optional<nlohmann::json> extract_prediction_json(std::string_view raw);

// Never throws on any input: malformed output yields an empty set with
// warnings. Labels are normalized, deduplicated (first wins) and truncated
// to n.
PredictionSet parse_prediction(std::string_view raw, Expected expected, std::size_t n);

// Canonical answer JSON for a set: a list of {chain_of_thoughts, prediction}
// for actions, a single {chain-of-thoughts, prediction} dict for targets.
std::string render_prediction_set(const PredictionSet& set, Expected expected);

}  // namespace omniact
