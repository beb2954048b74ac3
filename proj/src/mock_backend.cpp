#include "omniact/mock_backend.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>

#include "omniact/parser.hpp"

namespace omniact {
namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool value_contains(const json& v, const std::string& needle) {
  if (v.is_string()) return lower(v.get<std::string>()).find(needle) != std::string::npos;
  if (v.is_array()) {
    return std::any_of(v.begin(), v.end(), [&](const json& x) { return value_contains(x, needle); });
  }
  return false;
}

bool holds(const RuleCondition& c, const json& tuple) {
  const auto needle = lower(c.contains);
  if (c.field == "any") return lower(tuple.dump()).find(needle) != std::string::npos;
  auto it = tuple.find(c.field);
  return it != tuple.end() && value_contains(*it, needle);
}

bool fires(const MockRule& rule, const json& tuple) {
  return std::all_of(rule.when.begin(), rule.when.end(), [&](const RuleCondition& c) { return holds(c, tuple); });
}

json parse_tuple(std::string_view text) {
  json j = json::parse(text, nullptr, false);
  return j.is_object() ? j : json::object();
}

// Order of labels by published appearance counts, used when a rule table
// names no fallback.
std::vector<SpecificAction> published_specific_order() {
  std::vector<std::size_t> idx(kSpecificCount);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [](std::size_t a, std::size_t b) {
    return distribution::kSpecific[a] > distribution::kSpecific[b];
  });
  std::vector<SpecificAction> out;
  for (auto i : idx) out.push_back(static_cast<SpecificAction>(i));
  return out;
}

std::vector<GeneralAction> published_general_order() {
  std::array<double, kGeneralCount> weight{};
  for (std::size_t i = 0; i < kSpecificCount; ++i) {
    weight[static_cast<std::size_t>(general_of(static_cast<SpecificAction>(i)))] += distribution::kSpecific[i];
  }
  std::vector<std::size_t> idx(kGeneralCount);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return weight[a] > weight[b]; });
  std::vector<GeneralAction> out;
  for (auto i : idx) out.push_back(static_cast<GeneralAction>(i));
  return out;
}

void push_unique(std::vector<Label>& out, Label l) {
  if (std::find(out.begin(), out.end(), l) == out.end()) out.push_back(l);
}

std::string action_answer(const std::vector<Label>& labels, const std::string& cot) {
  auto list = ojson::array();
  for (auto l : labels) list.push_back({{"chain_of_thoughts", cot}, {"prediction", display_name(l)}});
  return list.dump();
}

std::string target_answer(TargetModality m, const std::string& cot) {
  ojson j;
  j["chain-of-thoughts"] = cot;
  j["prediction"] = canonical_name(m);
  return j.dump();
}

// The tuple inside a chain-of-thought generation query ("Input: {...}\n...").
std::string cot_query_tuple(const std::string& query) {
  const auto start = query.find('{');
  const auto end = query.find("\nFollow-up actions:");
  if (start == std::string::npos || end == std::string::npos || end < start) return "{}";
  return query.substr(start, end - start);
}

std::string cot_query_goal(const std::string& query) {
  static const std::string marker = "Goal and reason: ";
  const auto at = query.rfind(marker);
  return at == std::string::npos ? "" : query.substr(at + marker.size());
}

std::vector<std::string> string_list(const json& j, const char* key) {
  std::vector<std::string> out;
  auto it = j.find(key);
  if (it == j.end()) return out;
  if (it->is_string()) {
    out.push_back(it->get<std::string>());
  } else if (it->is_array()) {
    for (const auto& x : *it) {
      if (!x.is_string()) throw RuleParseError(std::string("'") + key + "' must hold strings");
      out.push_back(x.get<std::string>());
    }
  } else {
    throw RuleParseError(std::string("'") + key + "' must be a string or a list of strings");
  }
  return out;
}

}  // namespace

RuleTable RuleTable::from_json(const json& j) {
  if (!j.is_object()) throw RuleParseError("rule table must be a JSON object");
  RuleTable t;
  static const std::vector<std::string> fields = {"any",    "scene_description", "objects", "visible_text",
                                                  "sounds", "speech",            "location", "activity"};
  try {
    for (const auto& r : j.value("rules", json::array())) {
      MockRule rule;
      for (const auto& [field, needle] : r.at("when").items()) {
        if (std::find(fields.begin(), fields.end(), field) == fields.end()) {
          throw RuleParseError("unknown rule field '" + field + "'");
        }
        for (const auto& s : string_list(r.at("when"), field.c_str())) rule.when.push_back({field, s});
      }
      for (const auto& a : string_list(r, "actions")) rule.actions.push_back(normalize_specific(a));
      if (r.contains("target")) rule.target = normalize_modality(r.at("target").get<std::string>());
      rule.cot = r.value("cot", "");
      if (rule.actions.empty() && !rule.target) throw RuleParseError("rule votes for neither actions nor a target");
      t.rules.push_back(std::move(rule));
    }
    for (const auto& a : string_list(j, "fallback_specific")) t.fallback_specific.push_back(normalize_specific(a));
    for (const auto& a : string_list(j, "fallback_general")) t.fallback_general.push_back(normalize_general(a));
    if (j.contains("fallback_visual")) t.fallback_visual = normalize_modality(j.at("fallback_visual").get<std::string>());
    if (j.contains("fallback_audio")) t.fallback_audio = normalize_modality(j.at("fallback_audio").get<std::string>());
  } catch (const NoMatch& e) {
    throw RuleParseError(std::string("rule table: ") + e.what());
  } catch (const json::exception& e) {
    throw RuleParseError(std::string("rule table: ") + e.what());
  }
  if (t.fallback_visual && family_of(*t.fallback_visual) != Family::Visual) {
    throw RuleParseError("fallback_visual is not a visual modality");
  }
  if (t.fallback_audio && family_of(*t.fallback_audio) != Family::Audio) {
    throw RuleParseError("fallback_audio is not an audio modality");
  }
  return t;
}

RuleTable RuleTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuleParseError("cannot open rule table " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw RuleParseError("rule table " + path.string() + " is not valid JSON");
  return from_json(j);
}

void RuleTable::default_fallbacks(const CorpusStats& stats) {
  if (fallback_specific.empty()) {
    for (auto l : stats.top(Level::Specific, kSpecificCount)) fallback_specific.push_back(as_specific(l));
  }
  if (fallback_general.empty()) {
    for (auto l : stats.top(Level::General, kGeneralCount)) fallback_general.push_back(as_general(l));
  }
}

TargetModality guess_target(const json& tuple, Family family) {
  auto has = [&](const char* key) {
    auto it = tuple.find(key);
    return it != tuple.end() && !(it->is_array() && it->empty());
  };
  if (family == Family::Audio) return has("speech") ? TargetModality::Speech : TargetModality::Sound;
  if (has("visible_text")) return TargetModality::Text;
  if (has("objects")) return TargetModality::Object;
  return TargetModality::Scene;
}

std::shared_ptr<MockBackend> MockBackend::rules(RuleTable table, std::string name) {
  if (table.fallback_specific.empty()) table.fallback_specific = published_specific_order();
  if (table.fallback_general.empty()) table.fallback_general = published_general_order();
  std::shared_ptr<MockBackend> b(new MockBackend(Mode::Rules, std::move(name)));
  b->table_ = std::move(table);
  return b;
}

std::shared_ptr<MockBackend> MockBackend::oracle(const Corpus& truth, std::string name) {
  std::shared_ptr<MockBackend> b(new MockBackend(Mode::Oracle, std::move(name)));
  for (const auto& e : truth) {
    if (!e.labels) continue;
    b->by_id_.emplace(e.id, e);
    for (auto v : kAllContextVariants) b->id_by_tuple_.emplace(format_tuple(e, v), e.id);
  }
  return b;
}

std::vector<Label> MockBackend::rule_actions(const json& tuple, Level level, std::size_t n, std::string* cot) const {
  std::vector<Label> out;
  for (const auto& rule : table_.rules) {
    if (!fires(rule, tuple)) continue;
    if (cot->empty() && !rule.actions.empty()) *cot = rule.cot;
    for (auto a : rule.actions) push_unique(out, level == Level::General ? to_label(general_of(a)) : to_label(a));
  }
  if (level == Level::General) {
    for (auto g : table_.fallback_general) push_unique(out, to_label(g));
  } else {
    for (auto s : table_.fallback_specific) push_unique(out, to_label(s));
  }
  if (out.size() > n) out.resize(n);
  return out;
}

std::optional<TargetModality> MockBackend::rule_target(const json& tuple, Family family, std::string* cot) const {
  for (const auto& rule : table_.rules) {
    if (rule.target && family_of(*rule.target) == family && fires(rule, tuple)) {
      *cot = rule.cot;
      return rule.target;
    }
  }
  return std::nullopt;
}

const DiaryEntry* MockBackend::lookup(const std::string& entry_id, const std::string& tuple) const {
  if (auto it = by_id_.find(entry_id); it != by_id_.end()) return &it->second;
  if (auto it = id_by_tuple_.find(tuple); it != id_by_tuple_.end()) return &by_id_.at(it->second);
  return nullptr;
}

std::string MockBackend::chat(const PromptBundle& bundle) {
  count_request();
  const auto& query = bundle.query();
  switch (bundle.purpose) {
    case Purpose::CotGen: {
      const auto goal = cot_query_goal(query);
      const auto tuple = parse_tuple(cot_query_tuple(query));
      std::string lead = "The user encountered this content";
      if (auto it = tuple.find("activity"); it != tuple.end() && it->is_string()) {
        lead = "The user was " + it->get<std::string>();
      }
      ojson j;
      j["chain-of-thoughts"] = lead + ". " + goal;
      return ojson::array({j}).dump();
    }
    case Purpose::TargetVisual:
    case Purpose::TargetAudio: {
      const auto family = bundle.purpose == Purpose::TargetVisual ? Family::Visual : Family::Audio;
      if (mode_ == Mode::Oracle) {
        const auto* e = lookup(bundle.entry_id, query);
        if (!e) return "{}";
        return target_answer(e->labels->target, e->labels->cot.value_or(""));
      }
      const auto tuple = parse_tuple(query);
      std::string cot;
      auto target = rule_target(tuple, family, &cot);
      if (!target) {
        const auto fallback = family == Family::Visual ? table_.fallback_visual : table_.fallback_audio;
        target = fallback ? *fallback : guess_target(tuple, family);
      }
      return target_answer(*target, cot);
    }
    case Purpose::ActionGeneral:
    case Purpose::ActionSpecific: {
      const auto level = bundle.purpose == Purpose::ActionGeneral ? Level::General : Level::Specific;
      const auto n = std::max<std::size_t>(bundle.n_predictions, 1);
      if (mode_ == Mode::Oracle) {
        const auto* e = lookup(bundle.entry_id, query);
        if (!e) return "[]";
        auto labels = e->labels->label_set(level);
        if (labels.size() > n) labels.resize(n);
        return action_answer(labels, e->labels->cot.value_or(""));
      }
      std::string cot;
      return action_answer(rule_actions(parse_tuple(query), level, n, &cot), cot);
    }
  }
  return "[]";
}

RankedLabels MockBackend::classify(const std::string& tuple, LabelSpace space, std::size_t n) {
  count_request();
  std::vector<double> scores(space_size(space), 0.0);
  auto vote = [&](const std::vector<Label>& labels, double top) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto& s = scores[labels[i].code];
      s = std::max(s, top - 0.01 * static_cast<double>(i));
    }
  };
  if (mode_ == Mode::Oracle) {
    if (const auto* e = lookup("", tuple)) {
      if (space == LabelSpace::Target) {
        vote({to_label(e->labels->target)}, 1.0);
      } else {
        vote(e->labels->label_set(space == LabelSpace::General ? Level::General : Level::Specific), 1.0);
      }
    }
    return rank_labels(space, scores, n);
  }
  const auto j = parse_tuple(tuple);
  if (space == LabelSpace::Target) {
    for (auto family : {Family::Visual, Family::Audio}) {
      const bool present = family == Family::Visual ? (j.contains("scene_description") || j.contains("objects"))
                                                    : j.contains("sounds");
      if (!present) continue;
      std::string cot;
      auto t = rule_target(j, family, &cot);
      vote({to_label(t ? *t : guess_target(j, family))}, t ? 1.0 : 0.5);
    }
    return rank_labels(space, scores, n);
  }
  const auto level = space == LabelSpace::General ? Level::General : Level::Specific;
  std::string cot;
  std::vector<Label> fired;
  for (const auto& rule : table_.rules) {
    if (!fires(rule, j)) continue;
    for (auto a : rule.actions) push_unique(fired, level == Level::General ? to_label(general_of(a)) : to_label(a));
  }
  vote(fired, 1.0);
  std::vector<Label> fallback;
  if (level == Level::General) {
    for (auto g : table_.fallback_general) fallback.push_back(to_label(g));
  } else {
    for (auto s : table_.fallback_specific) fallback.push_back(to_label(s));
  }
  vote(fallback, 0.5);
  return rank_labels(space, scores, n);
}

}  // namespace omniact
