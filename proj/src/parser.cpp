#include "omniact/parser.hpp"

#include <algorithm>
#include <cctype>

#include "omniact/error.hpp"

namespace omniact {
namespace {

using json = nlohmann::json;

struct RawItem {
  std::string cot;
  std::optional<json> label;  // nullopt: element had no prediction
};

RawItem item(std::string cot, const json& label) { return {std::move(cot), std::optional<json>(std::in_place, label)}; }

// Index one past the bracket matching raw[start], or npos when unbalanced.
std::size_t match_bracket(std::string_view raw, std::size_t start) {
  std::string stack;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < raw.size(); ++i) {
    const char c = raw[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_string = true;
        break;
      case '[':
      case '{':
        stack.push_back(c);
        break;
      case ']':
      case '}':
        if (stack.empty() || (c == ']') != (stack.back() == '[')) return std::string_view::npos;
        stack.pop_back();
        if (stack.empty()) return i + 1;
        break;
      default:
        break;
    }
  }
  return std::string_view::npos;
}

// Drops commas that directly precede a closing bracket (outside strings).
std::string strip_trailing_commas(std::string_view text) {
  std::string out;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      out.push_back(c);
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') in_string = true;
    if (c == ',') {
      std::size_t j = i + 1;
      while (j < text.size() && (text[j] == ' ' || text[j] == '\n' || text[j] == '\r' || text[j] == '\t')) ++j;
      if (j < text.size() && (text[j] == ']' || text[j] == '}')) continue;
    }
    out.push_back(c);
  }
  return out;
}

std::string cot_of(const json& obj) {
  for (const char* key : {"chain_of_thoughts", "chain-of-thoughts", "chain_of_thought", "chain-of-thought"}) {
    auto it = obj.find(key);
    if (it != obj.end() && it->is_string()) return it->get<std::string>();
  }
  return "";
}

void collect(const json& v, std::vector<RawItem>& out, int depth = 0);

void collect_object(const json& obj, std::vector<RawItem>& out, int depth) {
  if (auto p = obj.find("prediction"); p != obj.end()) {
    const auto cot = cot_of(obj);
    if (p->is_array()) {
      for (const auto& x : *p) out.push_back(item(cot, x));
    } else if (p->is_null()) {
      out.push_back({cot, std::nullopt});
    } else {
      out.push_back(item(cot, *p));
    }
    return;
  }
  if (auto p = obj.find("predictions"); p != obj.end() && p->is_array()) {
    collect(*p, out, depth + 1);
    return;
  }
  out.push_back({cot_of(obj), std::nullopt});
}

void collect(const json& v, std::vector<RawItem>& out, int depth) {
  if (depth > 4) return;
  if (v.is_object()) {
    collect_object(v, out, depth);
  } else if (v.is_array()) {
    for (const auto& x : v) {
      if (x.is_object()) {
        collect_object(x, out, depth + 1);
      } else if (x.is_string()) {
        out.push_back(item("", x));
      } else {
        out.push_back({"", std::nullopt});
      }
    }
  }
}

// Reads a JSON string literal starting at raw[i] == '"'.
std::optional<std::string> string_literal_at(std::string_view raw, std::size_t i, std::size_t* end) {
  if (i >= raw.size() || raw[i] != '"') return std::nullopt;
  bool escaped = false;
  for (std::size_t j = i + 1; j < raw.size(); ++j) {
    if (escaped) {
      escaped = false;
    } else if (raw[j] == '\\') {
      escaped = true;
    } else if (raw[j] == '"') {
      json v = json::parse(raw.substr(i, j - i + 1), nullptr, false);
      if (v.is_discarded() || !v.is_string()) return std::nullopt;
      *end = j + 1;
      return v.get<std::string>();
    }
  }
  return std::nullopt;
}

// String value following a key that ends at key_end (`"key" : "value"`).
std::optional<std::string> value_after_key(std::string_view raw, std::size_t key_end, std::size_t* end) {
  std::size_t i = key_end;
  while (i < raw.size() && std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
  if (i >= raw.size() || raw[i] != ':') return std::nullopt;
  ++i;
  while (i < raw.size() && std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
  return string_literal_at(raw, i, end);
}

// Bare `"prediction": "..."` pairs outside any well-formed JSON value, with
// the closest preceding chain-of-thought value attached.
std::vector<RawItem> salvage_pairs(std::string_view raw) {
  std::vector<RawItem> out;
  std::string cot;
  std::size_t i = 0;
  while (i < raw.size()) {
    const auto q = raw.find('"', i);
    if (q == std::string_view::npos) break;
    std::size_t key_end = 0;
    auto key = string_literal_at(raw, q, &key_end);
    if (!key) {
      i = q + 1;
      continue;
    }
    std::size_t value_end = 0;
    const bool is_cot = fold_label(*key) == "chainofthoughts" || fold_label(*key) == "chainofthought";
    if (is_cot || *key == "prediction") {
      if (auto value = value_after_key(raw, key_end, &value_end)) {
        if (is_cot) {
          cot = *value;
        } else {
          out.push_back(item(cot, json(*value)));
        }
        i = value_end;
        continue;
      }
    }
    i = key_end;
  }
  return out;
}

bool carries_predictions(const json& v) {
  std::vector<RawItem> items;
  collect(v, items);
  return std::any_of(items.begin(), items.end(), [](const RawItem& r) { return r.label.has_value(); });
}

}  // namespace

LabelSpace space_of(Expected expected) {
  switch (expected) {
    case Expected::ActionGeneral:
      return LabelSpace::General;
    case Expected::ActionSpecific:
      return LabelSpace::Specific;
    default:
      return LabelSpace::Target;
  }
}

Expected expected_for(Purpose purpose) {
  switch (purpose) {
    case Purpose::ActionGeneral:
      return Expected::ActionGeneral;
    case Purpose::TargetVisual:
      return Expected::TargetVisual;
    case Purpose::TargetAudio:
      return Expected::TargetAudio;
    default:
      return Expected::ActionSpecific;
  }
}

Expected expected_for(Level level) {
  return level == Level::General ? Expected::ActionGeneral : Expected::ActionSpecific;
}

Expected expected_for(Family family) {
  return family == Family::Visual ? Expected::TargetVisual : Expected::TargetAudio;
}

std::string_view to_string(Expected expected) {
  switch (expected) {
    case Expected::ActionGeneral:
      return "action_general";
    case Expected::ActionSpecific:
      return "action_specific";
    case Expected::TargetVisual:
      return "target_visual";
    case Expected::TargetAudio:
      return "target_audio";
  }
  return "";
}

Expected parse_expected(std::string_view text) {
  for (auto e : {Expected::ActionGeneral, Expected::ActionSpecific, Expected::TargetVisual, Expected::TargetAudio}) {
    if (to_string(e) == text) return e;
  }
  throw Error("unknown expected output kind '" + std::string(text) + "'");
}

std::string_view to_string(WarningKind kind) {
  switch (kind) {
    case WarningKind::ParseError:
      return "parse_error";
    case WarningKind::LabelError:
      return "label_error";
    case WarningKind::FamilyMismatch:
      return "family_mismatch";
    case WarningKind::MissingPrediction:
      return "missing_prediction";
    case WarningKind::Duplicate:
      return "duplicate";
    case WarningKind::Truncated:
      return "truncated";
  }
  return "";
}

WarningKind parse_warning_kind(std::string_view text) {
  for (auto k : {WarningKind::ParseError, WarningKind::LabelError, WarningKind::FamilyMismatch,
                 WarningKind::MissingPrediction, WarningKind::Duplicate, WarningKind::Truncated}) {
    if (to_string(k) == text) return k;
  }
  throw Error("unknown warning kind '" + std::string(text) + "'");
}

std::vector<Label> PredictionSet::labels() const {
  std::vector<Label> out;
  for (const auto& p : predictions) out.push_back(p.label);
  return out;
}

bool PredictionSet::has_warning(WarningKind kind) const {
  return std::any_of(warnings.begin(), warnings.end(), [&](const ParseWarning& w) { return w.kind == kind; });
}

std::optional<json> extract_prediction_json(std::string_view raw) {
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] != '[' && raw[i] != '{') continue;
    const auto end = match_bracket(raw, i);
    if (end == std::string_view::npos) continue;
    const auto candidate = raw.substr(i, end - i);
    json v = json::parse(candidate, nullptr, false);
    if (v.is_discarded()) v = json::parse(strip_trailing_commas(candidate), nullptr, false);
    if (!v.is_discarded() && carries_predictions(v)) return v;
  }
  return std::nullopt;
}

PredictionSet parse_prediction(std::string_view raw, Expected expected, std::size_t n) {
  PredictionSet set;
  set.raw = std::string(raw);
  const auto space = space_of(expected);

  std::vector<RawItem> items;
  try {
    if (auto doc = extract_prediction_json(raw)) {
      collect(*doc, items);
    } else {
      items = salvage_pairs(raw);
    }
  } catch (const std::exception&) {
    items.clear();
  }
  if (items.empty()) {
    set.warnings.push_back({WarningKind::ParseError, "no JSON with predictions found"});
    return set;
  }

  for (const auto& item : items) {
    if (!item.label) {
      set.warnings.push_back({WarningKind::MissingPrediction, "element without a prediction"});
      continue;
    }
    const std::string text =
        item.label->is_string() ? item.label->get<std::string>() : item.label->dump(-1, ' ', false, json::error_handler_t::replace);
    auto label = try_normalize_label(text, space);
    if (!label) {
      set.warnings.push_back({WarningKind::LabelError, text});
      continue;
    }
    if (space == LabelSpace::Target) {
      const auto family = expected == Expected::TargetVisual ? Family::Visual : Family::Audio;
      if (family_of(as_modality(*label)) != family) {
        set.warnings.push_back({WarningKind::FamilyMismatch, text});
        continue;
      }
    }
    const bool seen = std::any_of(set.predictions.begin(), set.predictions.end(),
                                  [&](const Prediction& p) { return p.label == *label; });
    if (seen) {
      set.warnings.push_back({WarningKind::Duplicate, std::string(canonical_name(*label))});
      continue;
    }
    set.predictions.push_back({item.cot, *label});
  }
  if (set.predictions.size() > n) {
    set.warnings.push_back({WarningKind::Truncated, "kept " + std::to_string(n) + " of " +
                                                        std::to_string(set.predictions.size())});
    set.predictions.resize(n);
  }
  return set;
}

std::string render_prediction_set(const PredictionSet& set, Expected expected) {
  if (space_of(expected) == LabelSpace::Target) {
    nlohmann::ordered_json j;
    j["chain-of-thoughts"] = set.predictions.empty() ? "" : set.predictions.front().cot;
    j["prediction"] = set.predictions.empty() ? "" : std::string(canonical_name(set.predictions.front().label));
    return j.dump();
  }
  auto list = nlohmann::ordered_json::array();
  for (const auto& p : set.predictions) {
    list.push_back({{"chain_of_thoughts", p.cot}, {"prediction", display_name(p.label)}});
  }
  return list.dump();
}

}  // namespace omniact
