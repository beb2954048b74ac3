#include "omniact/taxonomy.hpp"

#include <algorithm>
#include <cctype>

#include "omniact/error.hpp"

namespace omniact {
namespace {

using G = GeneralAction;
using S = SpecificAction;

constexpr std::array<G, kSpecificCount> kParent = {
    G::Share,          G::Share,          G::Save,           G::Save,    G::Save,
    G::Save,           G::Remind,         G::LookUp,         G::LookUp,  G::LookUp,
    G::DigitalExtract, G::DigitalExtract, G::DigitalExtract, G::Complex, G::Complex,
    G::MediaManipulation, G::MediaManipulation,
};

// Definition strings are the exact lines shown to the model.
std::vector<ActionDefinition> make_specific() {
  auto def = [](S s, std::string_view name, std::string_view display, std::string_view grouped,
                std::string_view definition, std::vector<std::string_view> aliases) {
    return ActionDefinition{Level::Specific,
                            static_cast<std::uint8_t>(s),
                            name,
                            display,
                            grouped,
                            definition,
                            std::move(aliases),
                            kParent[static_cast<std::size_t>(s)]};
  };
  return {
      def(S::ShareOnSocialMedia, "ShareOnSocialMedia", "Share on social media", "Share on social media",
          "Share/upload on social platforms", {"Post on social media", "Sharing on social media"}),
      def(S::ShareWithOthers, "ShareWithOthers", "Share with others", "Share with others",
          "Send the info to specific entities", {"Sharing with others", "Send to others"}),
      def(S::Remember, "Remember", "Remember", "Remember",
          "Cherish a specific experience/moment for later recall", {"Remember the moment", "Cherish"}),
      def(S::SaveForReference, "SaveForReference", "For reference", "For reference",
          "Store information for later usage or consultation", {"Save for reference"}),
      def(S::SaveToList, "SaveToList", "To list", "To list",
          "Add information to a designated, organized collection", {"Save to list", "Save to a list"}),
      def(S::KeepTrack, "KeepTrack", "Keep track", "Keep track", "Record the development of a task or goal",
          {"Keep track of progress", "Keeping track of progress"}),
      def(S::Remind, "Remind", "Remind", "Remind", "Make an alert or notice to remember something later",
          {"Set a reminder", "Reminder"}),
      def(S::SearchOnline, "SearchOnline", "Search online", "Search online",
          "Search for more information online related to specific goals", {"Search"}),
      def(S::Recognize, "Recognize", "Recognize", "Recognize",
          "Identify the information using specific tools (e.g., song names)", {"Recognise"}),
      def(S::Translate, "Translate", "Translate", "Translate",
          "Translate text/speech from one language to another", {}),
      def(S::ExtractAndAccess, "ExtractAndAccess", "Extract and access", "Extract and access",
          "Extract and utilize information from sources", {}),
      def(S::Transcribe, "Transcribe", "Transcribe", "Transcribe", "Convert audio to text", {}),
      def(S::Digitize, "Digitize", "Digitize", "Digitize",
          "Transform information to a digital format for easier access", {"Digitalize", "Digitise"}),
      def(S::Compare, "Compare", "Compare", "Compare", "Compare similarity and difference between two sets of info",
          {}),
      def(S::Calculate, "Calculate", "Calculate", "Calculate",
          "Perform mathematical operations to solve a problem/task", {}),
      def(S::EditMedia, "EditMedia", "Edit media", "Edit media",
          "Enhance images or sounds to improve overall experience", {}),
      def(S::AugmentMedia, "AugmentMedia", "Augment", "Augment visual/audio",
          "Modify media files to accomplish a specific task", {"Augment visual/audio", "Augment media"}),
  };
}

std::vector<ActionDefinition> make_general() {
  auto def = [](G g, std::string_view name, std::string_view display, std::string_view definition,
                std::vector<std::string_view> aliases) {
    return ActionDefinition{Level::General, static_cast<std::uint8_t>(g), name, display, display, definition,
                            std::move(aliases), std::nullopt};
  };
  return {
      def(G::Share, "Share", "Share", "Make information available to other people", {}),
      def(G::Save, "Save", "Save", "Store information to retrieve it later", {}),
      def(G::Remind, "Remind", "Remind", "Create an alert to act on information later", {}),
      def(G::LookUp, "LookUp", "Look up", "Find more details about the information", {"Query"}),
      def(G::DigitalExtract, "DigitalExtract", "Digital extract", "Obtain and use information in digital form",
          {"Digital extraction"}),
      def(G::Complex, "Complex", "Complex", "Process information from more than one source",
          {"Complex actions", "Complex action"}),
      def(G::MediaManipulation, "MediaManipulation", "Augment", "Alter media content for a specific outcome",
          {"Augment", "Media manipulation", "Media manipulate"}),
  };
}

constexpr std::array<ModalityDefinition, kModalityCount> kModalities = {{
    {TargetModality::Scene, "scene", "users would like to take actions on the whole visual content"},
    {TargetModality::Object, "object", "users would like to take actions on specific physical objects they see"},
    {TargetModality::Text, "text", "users would like to take actions on visible text in the scene"},
    {TargetModality::Sound, "sound", "users would like to take actions on acoustic sound they hear"},
    {TargetModality::Speech, "speech", "users would like to take actions on someone's speech"},
}};

const std::vector<ActionDefinition>& specific_defs() {
  static const auto defs = make_specific();
  return defs;
}

const std::vector<ActionDefinition>& general_defs() {
  static const auto defs = make_general();
  return defs;
}

bool matches(const ActionDefinition& d, const std::string& folded) {
  if (fold_label(d.name) == folded || fold_label(d.display_name) == folded ||
      fold_label(d.grouped_name) == folded)
    return true;
  return std::any_of(d.aliases.begin(), d.aliases.end(),
                     [&](std::string_view a) { return fold_label(a) == folded; });
}

}  // namespace

GeneralAction general_of(SpecificAction action) { return kParent[static_cast<std::size_t>(action)]; }

Family family_of(TargetModality modality) {
  switch (modality) {
    case TargetModality::Scene:
    case TargetModality::Object:
    case TargetModality::Text:
      return Family::Visual;
    case TargetModality::Sound:
    case TargetModality::Speech:
      return Family::Audio;
  }
  return Family::Visual;
}

std::size_t space_size(LabelSpace space) {
  switch (space) {
    case LabelSpace::General:
      return kGeneralCount;
    case LabelSpace::Specific:
      return kSpecificCount;
    case LabelSpace::Target:
      return kModalityCount;
  }
  return 0;
}

std::vector<Label> all_labels(LabelSpace space) {
  std::vector<Label> out;
  for (std::size_t i = 0; i < space_size(space); ++i) out.push_back({space, static_cast<std::uint8_t>(i)});
  return out;
}

std::string_view canonical_name(Label label) {
  if (label.space == LabelSpace::Target) return kModalities.at(label.code).name;
  return definition_of(label).name;
}

std::string_view display_name(Label label) {
  if (label.space == LabelSpace::Target) return kModalities.at(label.code).name;
  return definition_of(label).display_name;
}

std::string_view canonical_name(GeneralAction a) { return canonical_name(to_label(a)); }
std::string_view canonical_name(SpecificAction a) { return canonical_name(to_label(a)); }
std::string_view canonical_name(TargetModality m) { return canonical_name(to_label(m)); }

std::string_view to_string(Level level) { return level == Level::General ? "general" : "specific"; }
std::string_view to_string(Family family) { return family == Family::Visual ? "visual" : "audio"; }

std::string_view to_string(LabelSpace space) {
  switch (space) {
    case LabelSpace::General:
      return "general";
    case LabelSpace::Specific:
      return "specific";
    case LabelSpace::Target:
      return "target";
  }
  return "";
}

Level parse_level(std::string_view text) {
  if (text == "general") return Level::General;
  if (text == "specific") return Level::Specific;
  throw Error("unknown level '" + std::string(text) + "' (expected general|specific)");
}

Family parse_family(std::string_view text) {
  if (text == "visual") return Family::Visual;
  if (text == "audio") return Family::Audio;
  throw Error("unknown family '" + std::string(text) + "' (expected visual|audio)");
}

std::string ActionDefinition::line() const { return std::string(display_name) + ": " + std::string(definition); }

std::string ActionDefinition::grouped_line() const {
  return std::string(grouped_name) + ": " + std::string(definition);
}

const std::vector<ActionDefinition>& list_definitions(Level level) {
  return level == Level::General ? general_defs() : specific_defs();
}

const ActionDefinition& definition_of(Label label) {
  if (label.space == LabelSpace::Target) throw Error("target modalities have no action definition");
  return list_definitions(label.space == LabelSpace::General ? Level::General : Level::Specific).at(label.code);
}

std::span<const ModalityDefinition> list_modalities(Family family) {
  if (family == Family::Visual) return std::span(kModalities).subspan(0, 3);
  return std::span(kModalities).subspan(3, 2);
}

std::string fold_label(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (unsigned char c : raw) {
    if (c >= 0x80) {
      out.push_back(static_cast<char>(c));
    } else if (std::isalnum(c)) {
      out.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  return out;
}

std::optional<Label> try_normalize_label(std::string_view raw, LabelSpace space) {
  const std::string folded = fold_label(raw);
  if (folded.empty()) return std::nullopt;
  if (space == LabelSpace::Target) {
    for (const auto& m : kModalities) {
      if (fold_label(m.name) == folded) return to_label(m.modality);
    }
    // Survey wording ("The whole scene", "Objects", "sounds").
    if (folded == "wholescene" || folded == "thewholescene") return to_label(TargetModality::Scene);
    if (folded == "objects") return to_label(TargetModality::Object);
    if (folded == "visibletext") return to_label(TargetModality::Text);
    if (folded == "sounds" || folded == "acousticsound") return to_label(TargetModality::Sound);
    return std::nullopt;
  }
  const auto& defs = list_definitions(space == LabelSpace::General ? Level::General : Level::Specific);
  for (const auto& d : defs) {
    if (matches(d, folded)) return d.label();
  }
  return std::nullopt;
}

Label normalize_label(std::string_view raw, LabelSpace space) {
  if (auto l = try_normalize_label(raw, space)) return *l;
  throw NoMatch(std::string(raw));
}

SpecificAction normalize_specific(std::string_view raw) {
  return as_specific(normalize_label(raw, LabelSpace::Specific));
}

GeneralAction normalize_general(std::string_view raw) { return as_general(normalize_label(raw, LabelSpace::General)); }

TargetModality normalize_modality(std::string_view raw) {
  return as_modality(normalize_label(raw, LabelSpace::Target));
}

nlohmann::json taxonomy_json() {
  auto records = nlohmann::json::array();
  for (Level level : {Level::General, Level::Specific}) {
    for (const auto& d : list_definitions(level)) {
      nlohmann::json r;
      r["name"] = d.name;
      r["level"] = to_string(level);
      r["parent"] = d.parent ? nlohmann::json(canonical_name(*d.parent)) : nlohmann::json(nullptr);
      r["display_name"] = d.display_name;
      r["definition"] = d.definition;
      auto aliases = nlohmann::json::array();
      for (auto a : d.aliases) aliases.push_back(a);
      r["aliases"] = std::move(aliases);
      records.push_back(std::move(r));
    }
  }
  return records;
}

nlohmann::json design_space_json() {
  auto groups = nlohmann::json::array();
  for (const auto& g : list_definitions(Level::General)) {
    nlohmann::json group;
    group["general"] = g.name;
    group["display_name"] = g.display_name;
    auto children = nlohmann::json::array();
    for (const auto& s : list_definitions(Level::Specific)) {
      if (s.parent && static_cast<std::uint8_t>(*s.parent) == g.code) {
        children.push_back({{"name", s.name}, {"display_name", s.display_name}, {"definition", s.definition}});
      }
    }
    group["specific"] = std::move(children);
    groups.push_back(std::move(group));
  }
  return groups;
}

}  // namespace omniact
