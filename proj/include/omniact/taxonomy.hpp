#pragma once

// The closed design space of follow-up actions (7 general, 17 specific) and
// the five target-information modalities. Everything here is immutable
// static data; all functions are safe to call concurrently.

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace omniact {

enum class GeneralAction : std::uint8_t {
  Share,
  Save,
  Remind,
  LookUp,
  DigitalExtract,
  Complex,
  MediaManipulation,
};

enum class SpecificAction : std::uint8_t {
  ShareOnSocialMedia,
  ShareWithOthers,
  Remember,
  SaveForReference,
  SaveToList,
  KeepTrack,
  Remind,
  SearchOnline,
  Recognize,
  Translate,
  ExtractAndAccess,
  Transcribe,
  Digitize,
  Compare,
  Calculate,
  EditMedia,
  AugmentMedia,
};

enum class TargetModality : std::uint8_t { Scene, Object, Text, Sound, Speech };

enum class Family : std::uint8_t { Visual, Audio };

enum class Level : std::uint8_t { General, Specific };

inline constexpr std::size_t kGeneralCount = 7;
inline constexpr std::size_t kSpecificCount = 17;
inline constexpr std::size_t kModalityCount = 5;

GeneralAction general_of(SpecificAction action);
Family family_of(TargetModality modality);

// A value from one of the three closed label spaces. Ordering is the
// canonical taxonomy order within a space, which is what every tie-break in
// the library uses.
enum class LabelSpace : std::uint8_t { General, Specific, Target };

struct Label {
  LabelSpace space = LabelSpace::Specific;
  std::uint8_t code = 0;

  auto operator<=>(const Label&) const = default;
};

constexpr LabelSpace space_of(Level level) {
  return level == Level::General ? LabelSpace::General : LabelSpace::Specific;
}

constexpr Label to_label(GeneralAction a) { return {LabelSpace::General, static_cast<std::uint8_t>(a)}; }
constexpr Label to_label(SpecificAction a) { return {LabelSpace::Specific, static_cast<std::uint8_t>(a)}; }
constexpr Label to_label(TargetModality m) { return {LabelSpace::Target, static_cast<std::uint8_t>(m)}; }

constexpr GeneralAction as_general(Label l) { return static_cast<GeneralAction>(l.code); }
constexpr SpecificAction as_specific(Label l) { return static_cast<SpecificAction>(l.code); }
constexpr TargetModality as_modality(Label l) { return static_cast<TargetModality>(l.code); }

std::size_t space_size(LabelSpace space);

// All labels of a space in canonical order.
std::vector<Label> all_labels(LabelSpace space);

// Identifier-style name used in files and APIs ("SearchOnline", "scene").
std::string_view canonical_name(Label label);
// Human-facing name the model sees in prompts ("Search online").
std::string_view display_name(Label label);

std::string_view canonical_name(GeneralAction a);
std::string_view canonical_name(SpecificAction a);
std::string_view canonical_name(TargetModality m);
std::string_view to_string(Level level);
std::string_view to_string(Family family);
std::string_view to_string(LabelSpace space);

Level parse_level(std::string_view text);
Family parse_family(std::string_view text);

struct ActionDefinition {
  Level level;
  std::uint8_t code;
  std::string_view name;          // canonical
  std::string_view display_name;  // as listed in the flat action list
  std::string_view grouped_name;  // as listed under a "(general)" header
  std::string_view definition;    // text after "<display_name>: "
  std::vector<std::string_view> aliases;
  std::optional<GeneralAction> parent;

  Label label() const {
    return {level == Level::General ? LabelSpace::General : LabelSpace::Specific, code};
  }
  // "Search online: Search for more information online related to specific goals"
  std::string line() const;
  std::string grouped_line() const;
};

// Deterministic, listing-order definitions. Length 7 or 17.
const std::vector<ActionDefinition>& list_definitions(Level level);
const ActionDefinition& definition_of(Label label);

struct ModalityDefinition {
  TargetModality modality;
  std::string_view name;
  std::string_view definition;
};

std::span<const ModalityDefinition> list_modalities(Family family);

// Case-, whitespace- and punctuation-folded form used for label matching.
std::string fold_label(std::string_view raw);

// Exact match on the folded canonical name, display name, grouped name, then
// aliases. No edit-distance matching. Throws NoMatch.
Label normalize_label(std::string_view raw, LabelSpace space);
SpecificAction normalize_specific(std::string_view raw);
GeneralAction normalize_general(std::string_view raw);
TargetModality normalize_modality(std::string_view raw);

std::optional<Label> try_normalize_label(std::string_view raw, LabelSpace space);

// [{name, level, parent, definition, aliases}, ...] for both levels.
nlohmann::json taxonomy_json();

// General groups with their specific children, in listing order.
nlohmann::json design_space_json();

}  // namespace omniact
