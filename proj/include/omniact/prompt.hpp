#pragma once

// Chat prompt assembly for the three model tasks: chain-of-thought
// generation from participant goals, target-information prediction and
// follow-up action prediction, plus few-shot exemplar selection.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "omniact/corpus.hpp"
#include "omniact/taxonomy.hpp"

namespace omniact {

enum class Role : std::uint8_t { System, User, Assistant };

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

enum class Purpose : std::uint8_t { CotGen, TargetVisual, TargetAudio, ActionGeneral, ActionSpecific };

std::string_view to_string(Role role);
std::string_view to_string(Purpose purpose);
Role parse_role(std::string_view text);
Purpose parse_purpose(std::string_view text);

Purpose action_purpose(Level level);
Purpose target_purpose(Family family);

struct PromptBundle {
  std::vector<ChatMessage> messages;
  Purpose purpose = Purpose::ActionSpecific;
  std::size_t n_predictions = 0;  // action bundles only
  ContextVariant context_variant = ContextVariant::Full;
  // Which entry the bundle was built for. Bookkeeping only: it is not part
  // of serialize() and never reaches a model.
  std::string entry_id;

  const std::string& system() const { return messages.front().content; }
  const std::string& query() const { return messages.back().content; }

  nlohmann::ordered_json to_json() const;
  // Canonical bytes; the cache key is computed over this.
  std::string serialize() const;

  bool operator==(const PromptBundle&) const = default;
};

enum class Provenance : std::uint8_t { Fixed, LearnedFromFeedback };

std::string_view to_string(Provenance p);

struct Exemplar {
  DiaryEntry entry;
  Provenance provenance = Provenance::Fixed;
};

struct FewShotStore {
  std::vector<Exemplar> exemplars;
  // Categories the selection could not cover (warning, not error).
  std::vector<Label> uncovered;

  bool empty() const { return exemplars.empty(); }
  std::size_t size() const { return exemplars.size(); }
  bool contains(std::string_view id) const;
  std::vector<std::string> ids() const;
  // Copy-on-promote: returns a new store with the feedback-derived entries
  // appended; the original is unchanged.
  FewShotStore promoted(const std::vector<DiaryEntry>& learned) const;
};

// In-context bundles carry exemplar pairs and require a non-empty store.
// Fine-tuned bundles are system + query only.
enum class PromptMode : std::uint8_t { InContext, FineTuned };

std::string action_system_prompt(Level level, std::size_t n);
std::string target_system_prompt(Family family);
std::string cot_system_prompt();

// Answer text for an exemplar, in the same JSON the model is asked to emit.
std::string render_action_answer(const DiaryEntry& entry, Level level);
std::string render_target_answer(const DiaryEntry& entry);

// Throws EmptyFewShots (in-context with no exemplars) or Error for n == 0.
PromptBundle build_action_prompt(const DiaryEntry& entry, Level level, std::size_t n, const FewShotStore& fewshots,
                                 ContextVariant variant, PromptMode mode = PromptMode::InContext);

// Throws FamilyMismatch when the capture has no content of that family.
PromptBundle build_target_prompt(const DiaryEntry& entry, Family family, const FewShotStore& fewshots,
                                 ContextVariant variant = ContextVariant::Full,
                                 PromptMode mode = PromptMode::InContext);

// Throws MissingGoalReason.
PromptBundle build_cot_generation_prompt(const DiaryEntry& entry, ContextVariant variant = ContextVariant::Full);

// Greedy set cover over specific-action labels: pick the entry covering the
// most still-uncovered actions, ties by ascending id, until everything is
// covered or no entry adds coverage. Unlabeled pool entries are ignored.
FewShotStore select_fewshots_actions(const Corpus& pool);

// One entry per target modality, lowest id per modality. Throws MissingModality.
FewShotStore select_fewshots_target(const Corpus& pool);

}  // namespace omniact
