#include "omniact/prompt.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "omniact/error.hpp"

namespace omniact {
namespace {

using ojson = nlohmann::ordered_json;

constexpr std::string_view kActionIntro =
    "You are an assistant that predicts the follow-up actions users will take based on multimodal information "
    "input using chain-of-thoughts analysis.\n"
    "Provide up to [NUM_OF_PREDICTION] most likely follow-up actions from the following options (with "
    "definition):\n\n";

constexpr std::string_view kSpecificOutput =
    "Output in a list of JSON dicts, where applicable:  \"chain-of-thoughts\", \"prediction\" (the follow-up "
    "actions)";

constexpr std::string_view kGeneralOutput =
    "Output the prediction result in a list of JSON dicts (the length will be the number of prediction), where "
    "applicable: \"chain_of_thoughts\", \"prediction\"\n\n"
    "Output the general category";

constexpr std::string_view kTargetIntro =
    "You are an assistant that predicts the target information that users take follow-up actions on when they "
    "encounter multimodal information using chain-of-thoughts analysis.\n\n";

constexpr std::string_view kTargetOutput =
    "Output the prediction result in a JSON dict, where applicable: \"chain-of-thoughts\", \"prediction\"";

constexpr std::string_view kCotIntro =
    "You are an assistant that produces chain-of-thoughts analysis leading to reasons about why users take "
    "specific follow-up actions from a third-person perspective. You should operate under the assumption that "
    "the goal is not known to you.\n\n";

std::string flat_action_list() {
  std::string out = "Follow-up actions:\n";
  bool first = true;
  for (const auto& d : list_definitions(Level::Specific)) {
    if (!first) out += "\n";
    out += d.line();
    out += "\n";
    first = false;
  }
  return out;
}

std::string grouped_action_list() {
  std::string out;
  for (const auto& g : list_definitions(Level::General)) {
    out += "(general)\n";
    out += g.grouped_name;
    out += "\n(specific)\n";
    for (const auto& s : list_definitions(Level::Specific)) {
      if (s.parent && static_cast<std::uint8_t>(*s.parent) == g.code) {
        out += s.grouped_line();
        out += "\n";
      }
    }
    out += "\n";
  }
  return out;
}

std::string exemplar_cot(const DiaryEntry& e) {
  if (e.labels && e.labels->cot) return *e.labels->cot;
  if (e.labels && e.labels->goal_reason) return *e.labels->goal_reason;
  return "";
}

void append_pair(PromptBundle& b, std::string user, std::string assistant) {
  b.messages.push_back({Role::User, std::move(user)});
  b.messages.push_back({Role::Assistant, std::move(assistant)});
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System:
      return "system";
    case Role::User:
      return "user";
    case Role::Assistant:
      return "assistant";
  }
  return "";
}

std::string_view to_string(Purpose purpose) {
  switch (purpose) {
    case Purpose::CotGen:
      return "cot_gen";
    case Purpose::TargetVisual:
      return "target_visual";
    case Purpose::TargetAudio:
      return "target_audio";
    case Purpose::ActionGeneral:
      return "action_general";
    case Purpose::ActionSpecific:
      return "action_specific";
  }
  return "";
}

Role parse_role(std::string_view text) {
  if (text == "system") return Role::System;
  if (text == "user") return Role::User;
  if (text == "assistant") return Role::Assistant;
  throw Error("unknown role '" + std::string(text) + "'");
}

Purpose parse_purpose(std::string_view text) {
  for (auto p : {Purpose::CotGen, Purpose::TargetVisual, Purpose::TargetAudio, Purpose::ActionGeneral,
                 Purpose::ActionSpecific}) {
    if (to_string(p) == text) return p;
  }
  throw Error("unknown purpose '" + std::string(text) + "'");
}

Purpose action_purpose(Level level) {
  return level == Level::General ? Purpose::ActionGeneral : Purpose::ActionSpecific;
}

Purpose target_purpose(Family family) {
  return family == Family::Visual ? Purpose::TargetVisual : Purpose::TargetAudio;
}

std::string_view to_string(Provenance p) {
  return p == Provenance::Fixed ? "fixed" : "learned-from-feedback";
}

ojson PromptBundle::to_json() const {
  ojson j;
  j["purpose"] = to_string(purpose);
  j["n_predictions"] = n_predictions;
  j["context_variant"] = to_string(context_variant);
  auto msgs = ojson::array();
  for (const auto& m : messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  j["messages"] = std::move(msgs);
  return j;
}

std::string PromptBundle::serialize() const { return to_json().dump(); }

bool FewShotStore::contains(std::string_view id) const {
  return std::any_of(exemplars.begin(), exemplars.end(), [&](const Exemplar& x) { return x.entry.id == id; });
}

std::vector<std::string> FewShotStore::ids() const {
  std::vector<std::string> out;
  for (const auto& x : exemplars) out.push_back(x.entry.id);
  return out;
}

FewShotStore FewShotStore::promoted(const std::vector<DiaryEntry>& learned) const {
  FewShotStore copy = *this;
  for (const auto& e : learned) {
    if (!copy.contains(e.id)) copy.exemplars.push_back({e, Provenance::LearnedFromFeedback});
  }
  return copy;
}

std::string action_system_prompt(Level level, std::size_t n) {
  std::string intro(kActionIntro);
  const std::string placeholder = "[NUM_OF_PREDICTION]";
  intro.replace(intro.find(placeholder), placeholder.size(), std::to_string(n));
  if (level == Level::Specific) return intro + flat_action_list() + "\n" + std::string(kSpecificOutput);
  return intro + grouped_action_list() + std::string(kGeneralOutput);
}

std::string target_system_prompt(Family family) {
  std::string out(kTargetIntro);
  const auto modalities = list_modalities(family);
  out += family == Family::Visual ? "The target information include three categories: "
                                  : "The target information include two categories: ";
  for (std::size_t i = 0; i < modalities.size(); ++i) {
    if (i) out += ", ";
    out += modalities[i].name;
  }
  out += ":\n\n";
  for (const auto& m : modalities) {
    out += m.name;
    out += ": ";
    out += m.definition;
    out += "\n\n";
  }
  out += kTargetOutput;
  return out;
}

std::string cot_system_prompt() {
  return std::string(kCotIntro) + flat_action_list() + "\n" + std::string(kSpecificOutput);
}

std::string render_action_answer(const DiaryEntry& entry, Level level) {
  if (!entry.labels) throw UnlabeledEntry(entry.id);
  const auto cot = exemplar_cot(entry);
  auto list = ojson::array();
  for (auto label : entry.labels->label_set(level)) {
    list.push_back({{"chain_of_thoughts", cot}, {"prediction", display_name(label)}});
  }
  return list.dump();
}

std::string render_target_answer(const DiaryEntry& entry) {
  if (!entry.labels) throw UnlabeledEntry(entry.id);
  ojson j;
  j["chain-of-thoughts"] = exemplar_cot(entry);
  j["prediction"] = canonical_name(entry.labels->target);
  return j.dump();
}

PromptBundle build_action_prompt(const DiaryEntry& entry, Level level, std::size_t n, const FewShotStore& fewshots,
                                 ContextVariant variant, PromptMode mode) {
  if (n == 0) throw Error("number of predictions must be >= 1");
  if (mode == PromptMode::InContext && fewshots.empty()) throw EmptyFewShots();
  PromptBundle b;
  b.purpose = action_purpose(level);
  b.n_predictions = n;
  b.context_variant = variant;
  b.entry_id = entry.id;
  b.messages.push_back({Role::System, action_system_prompt(level, n)});
  if (mode == PromptMode::InContext) {
    for (const auto& x : fewshots.exemplars) {
      append_pair(b, format_tuple(x.entry, variant), render_action_answer(x.entry, level));
    }
  }
  b.messages.push_back({Role::User, format_tuple(entry, variant)});
  return b;
}

PromptBundle build_target_prompt(const DiaryEntry& entry, Family family, const FewShotStore& fewshots,
                                 ContextVariant variant, PromptMode mode) {
  if (!entry.capture.has_family(family)) {
    throw FamilyMismatch("entry '" + entry.id + "' has no " + std::string(to_string(family)) + " content");
  }
  PromptBundle b;
  b.purpose = target_purpose(family);
  b.n_predictions = 1;
  b.context_variant = variant;
  b.entry_id = entry.id;
  b.messages.push_back({Role::System, target_system_prompt(family)});
  if (mode == PromptMode::InContext) {
    for (const auto& x : fewshots.exemplars) {
      if (!x.entry.labels || family_of(x.entry.labels->target) != family) continue;
      if (!x.entry.capture.has_family(family)) continue;
      append_pair(b, format_tuple(x.entry, variant), render_target_answer(x.entry));
    }
  }
  b.messages.push_back({Role::User, format_tuple(entry, variant)});
  return b;
}

PromptBundle build_cot_generation_prompt(const DiaryEntry& entry, ContextVariant variant) {
  if (!entry.labels || !entry.labels->goal_reason) throw MissingGoalReason(entry.id);
  PromptBundle b;
  b.purpose = Purpose::CotGen;
  b.context_variant = variant;
  b.entry_id = entry.id;
  b.messages.push_back({Role::System, cot_system_prompt()});
  std::string actions;
  for (auto s : entry.labels->specific_actions) {
    if (!actions.empty()) actions += ", ";
    actions += display_name(to_label(s));
  }
  std::string user = "Input: " + format_tuple(entry, variant) + "\nFollow-up actions: " + actions +
                     "\nGoal and reason: " + *entry.labels->goal_reason;
  b.messages.push_back({Role::User, std::move(user)});
  return b;
}

FewShotStore select_fewshots_actions(const Corpus& pool) {
  std::vector<const DiaryEntry*> candidates;
  for (const auto& e : pool) {
    if (e.labels) candidates.push_back(&e);
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const DiaryEntry* a, const DiaryEntry* b) { return a->id < b->id; });

  std::set<SpecificAction> uncovered;
  for (auto l : all_labels(LabelSpace::Specific)) uncovered.insert(as_specific(l));
  std::vector<bool> taken(candidates.size(), false);

  FewShotStore store;
  while (!uncovered.empty()) {
    std::size_t best = candidates.size();
    std::size_t best_gain = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (taken[i]) continue;
      std::size_t gain = 0;
      for (auto s : candidates[i]->labels->specific_actions) gain += uncovered.count(s);
      if (gain > best_gain) {
        best_gain = gain;
        best = i;
      }
    }
    if (best_gain == 0) break;
    taken[best] = true;
    for (auto s : candidates[best]->labels->specific_actions) uncovered.erase(s);
    store.exemplars.push_back({*candidates[best], Provenance::Fixed});
  }
  for (auto s : uncovered) store.uncovered.push_back(to_label(s));
  return store;
}

FewShotStore select_fewshots_target(const Corpus& pool) {
  std::map<TargetModality, const DiaryEntry*> lowest;
  for (const auto& e : pool) {
    if (!e.labels) continue;
    auto [it, inserted] = lowest.emplace(e.labels->target, &e);
    if (!inserted && e.id < it->second->id) it->second = &e;
  }
  FewShotStore store;
  for (auto l : all_labels(LabelSpace::Target)) {
    auto it = lowest.find(as_modality(l));
    if (it == lowest.end()) throw MissingModality(std::string(canonical_name(l)));
    store.exemplars.push_back({*it->second, Provenance::Fixed});
  }
  return store;
}

}  // namespace omniact
