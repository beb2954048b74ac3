#pragma once

// Deterministic offline backend used by tests, CI and local development.
//
// Rules mode answers from a keyword table: each rule lists conditions on the
// query tuple (all must hold) and the actions / target it votes for. Fired
// actions are padded with the fallback list (dominant labels) up to n.
// Oracle mode answers the ground truth of a known corpus and exists only to
// validate the plumbing; its accuracy is an upper bound, not a result.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "omniact/backend.hpp"
#include "omniact/corpus.hpp"

namespace omniact {

struct RuleCondition {
  // A tuple key (scene_description, objects, visible_text, sounds, speech,
  // location, activity) or "any" for the whole tuple.
  std::string field;
  // Case-insensitive substring.
  std::string contains;
};

struct MockRule {
  std::vector<RuleCondition> when;
  std::vector<SpecificAction> actions;
  std::optional<TargetModality> target;
  std::string cot;
};

struct RuleTable {
  std::vector<MockRule> rules;
  std::vector<SpecificAction> fallback_specific;
  std::vector<GeneralAction> fallback_general;
  std::optional<TargetModality> fallback_visual;
  std::optional<TargetModality> fallback_audio;

  // Throws RuleParseError.
  static RuleTable from_json(const nlohmann::json& j);
  static RuleTable load(const std::filesystem::path& path);
  // Fills fallback lists that the table left empty from corpus frequencies.
  void default_fallbacks(const CorpusStats& stats);
};

class MockBackend : public Backend {
 public:
  enum class Mode : std::uint8_t { Rules, Oracle };

  static std::shared_ptr<MockBackend> rules(RuleTable table, std::string name = "mock-rules");
  static std::shared_ptr<MockBackend> oracle(const Corpus& truth, std::string name = "mock-oracle");

  std::string chat(const PromptBundle& bundle) override;
  RankedLabels classify(const std::string& tuple, LabelSpace space, std::size_t n) override;
  std::string model_name() const override { return name_; }
  std::size_t max_in_flight() const override { return 8; }

  Mode mode() const { return mode_; }

 private:
  MockBackend(Mode mode, std::string name) : mode_(mode), name_(std::move(name)) {}

  std::vector<Label> rule_actions(const nlohmann::json& tuple, Level level, std::size_t n, std::string* cot) const;
  std::optional<TargetModality> rule_target(const nlohmann::json& tuple, Family family, std::string* cot) const;
  const DiaryEntry* lookup(const std::string& entry_id, const std::string& tuple) const;

  Mode mode_;
  std::string name_;
  RuleTable table_;
  std::map<std::string, DiaryEntry> by_id_;
  std::map<std::string, std::string> id_by_tuple_;  // full-context tuple -> id
};

// Heuristic target guess from tuple content alone.
TargetModality guess_target(const nlohmann::json& tuple, Family family);

}  // namespace omniact
