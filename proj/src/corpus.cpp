#include "omniact/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_set>

#include "omniact/error.hpp"
#include "omniact/random.hpp"

namespace omniact {
namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, std::size_t line,
                std::string_view prefix) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw SchemaError(line, std::string(prefix) + key, "unknown field");
    }
  }
}

std::optional<std::string> optional_string(const json& obj, const char* key, std::size_t line,
                                           const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw SchemaError(line, path, "expected a string");
  auto value = it->get<std::string>();
  if (value.empty()) throw SchemaError(line, path, "empty string; omit the field instead");
  return value;
}

std::vector<std::string> string_list(const json& obj, const char* key, std::size_t line, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_array()) throw SchemaError(line, path, "expected an array of strings");
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) throw SchemaError(line, path, "expected an array of strings");
    auto s = v.get<std::string>();
    if (s.empty()) throw SchemaError(line, path, "empty string element");
    out.push_back(std::move(s));
  }
  return out;
}

const json& require_object(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_object()) throw SchemaError(line, key, "expected an object");
  return *it;
}

}  // namespace

std::vector<GeneralAction> Labels::general_actions() const {
  std::vector<GeneralAction> out;
  for (auto s : specific_actions) {
    auto g = general_of(s);
    if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
  }
  return out;
}

std::vector<Label> Labels::label_set(Level level) const {
  std::vector<Label> out;
  if (level == Level::Specific) {
    for (auto s : specific_actions) out.push_back(to_label(s));
  } else {
    for (auto g : general_actions()) out.push_back(to_label(g));
  }
  return out;
}

Family target_family(const DiaryEntry& entry) {
  if (entry.labels) return family_of(entry.labels->target);
  return entry.capture.has_visual() ? Family::Visual : Family::Audio;
}

void validate_entry(const DiaryEntry& e, std::size_t line) {
  if (e.id.empty()) throw SchemaError(line, "id", "must be a non-empty string");
  if (e.capture.empty()) throw SchemaError(line, "capture", "at least one capture field must be populated");
  if (e.context.location && e.context.location->empty())
    throw SchemaError(line, "context.location", "empty string; omit the field instead");
  if (e.context.activity && e.context.activity->empty())
    throw SchemaError(line, "context.activity", "empty string; omit the field instead");
  if (!e.labels) return;
  const auto& l = *e.labels;
  if (l.specific_actions.empty() || l.specific_actions.size() > kMaxActionsPerEntry) {
    throw SchemaError(line, "labels.specific_actions",
                      "expected 1.." + std::to_string(kMaxActionsPerEntry) + " actions, got " +
                          std::to_string(l.specific_actions.size()));
  }
  std::set<SpecificAction> seen(l.specific_actions.begin(), l.specific_actions.end());
  if (seen.size() != l.specific_actions.size())
    throw SchemaError(line, "labels.specific_actions", "duplicate action");
  if (!e.capture.has_family(family_of(l.target))) {
    throw SchemaError(line, "labels.target",
                      "target '" + std::string(canonical_name(l.target)) + "' has no " +
                          std::string(to_string(family_of(l.target))) + " content in the capture");
  }
  if (l.goal_reason && l.goal_reason->empty()) throw SchemaError(line, "labels.goal_reason", "empty string");
  if (l.cot && l.cot->empty()) throw SchemaError(line, "labels.cot", "empty string");
}

DiaryEntry entry_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) throw SchemaError(line, "<entry>", "expected a JSON object");
  check_keys(j, {"id", "capture", "context", "labels"}, line, "");

  DiaryEntry e;
  auto id = j.find("id");
  if (id == j.end() || !id->is_string()) throw SchemaError(line, "id", "expected a string");
  e.id = id->get<std::string>();

  const auto& cap = require_object(j, "capture", line);
  check_keys(cap, {"scene_caption", "objects", "visible_text", "sound_classes", "speech_transcript"}, line,
             "capture.");
  e.capture.scene_caption = optional_string(cap, "scene_caption", line, "capture.scene_caption");
  e.capture.objects = string_list(cap, "objects", line, "capture.objects");
  e.capture.visible_text = string_list(cap, "visible_text", line, "capture.visible_text");
  e.capture.sound_classes = string_list(cap, "sound_classes", line, "capture.sound_classes");
  e.capture.speech_transcript = optional_string(cap, "speech_transcript", line, "capture.speech_transcript");

  if (auto ctx = j.find("context"); ctx != j.end() && !ctx->is_null()) {
    if (!ctx->is_object()) throw SchemaError(line, "context", "expected an object");
    check_keys(*ctx, {"location", "activity"}, line, "context.");
    e.context.location = optional_string(*ctx, "location", line, "context.location");
    e.context.activity = optional_string(*ctx, "activity", line, "context.activity");
  }

  if (auto lab = j.find("labels"); lab != j.end() && !lab->is_null()) {
    if (!lab->is_object()) throw SchemaError(line, "labels", "expected an object");
    check_keys(*lab, {"target", "specific_actions", "goal_reason", "cot"}, line, "labels.");
    Labels l;
    auto target = lab->find("target");
    if (target == lab->end() || !target->is_string()) throw SchemaError(line, "labels.target", "expected a string");
    auto t = try_normalize_label(target->get<std::string>(), LabelSpace::Target);
    if (!t) throw LabelOutsideTaxonomy(line, target->get<std::string>());
    l.target = as_modality(*t);

    auto actions = lab->find("specific_actions");
    if (actions == lab->end() || !actions->is_array())
      throw SchemaError(line, "labels.specific_actions", "expected an array of strings");
    for (const auto& a : *actions) {
      if (!a.is_string()) throw SchemaError(line, "labels.specific_actions", "expected an array of strings");
      auto s = try_normalize_label(a.get<std::string>(), LabelSpace::Specific);
      if (!s) throw LabelOutsideTaxonomy(line, a.get<std::string>());
      l.specific_actions.push_back(as_specific(*s));
    }
    l.goal_reason = optional_string(*lab, "goal_reason", line, "labels.goal_reason");
    l.cot = optional_string(*lab, "cot", line, "labels.cot");
    e.labels = std::move(l);
  }

  validate_entry(e, line);
  return e;
}

ojson entry_to_json(const DiaryEntry& e) {
  ojson j;
  j["id"] = e.id;
  ojson cap = ojson::object();
  if (e.capture.scene_caption) cap["scene_caption"] = *e.capture.scene_caption;
  cap["objects"] = e.capture.objects;
  cap["visible_text"] = e.capture.visible_text;
  cap["sound_classes"] = e.capture.sound_classes;
  if (e.capture.speech_transcript) cap["speech_transcript"] = *e.capture.speech_transcript;
  j["capture"] = std::move(cap);
  ojson ctx = ojson::object();
  if (e.context.location) ctx["location"] = *e.context.location;
  if (e.context.activity) ctx["activity"] = *e.context.activity;
  j["context"] = std::move(ctx);
  if (e.labels) {
    ojson lab;
    lab["target"] = canonical_name(e.labels->target);
    auto actions = ojson::array();
    for (auto s : e.labels->specific_actions) actions.push_back(canonical_name(s));
    lab["specific_actions"] = std::move(actions);
    if (e.labels->goal_reason) lab["goal_reason"] = *e.labels->goal_reason;
    if (e.labels->cot) lab["cot"] = *e.labels->cot;
    j["labels"] = std::move(lab);
  }
  return j;
}

std::string entry_to_line(const DiaryEntry& e) { return entry_to_json(e).dump(); }

Corpus parse_corpus(std::istream& in) {
  Corpus corpus;
  std::unordered_set<std::string> ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw SchemaError(line, "<entry>", "not valid JSON");
    auto entry = entry_from_json(j, line);
    if (!ids.insert(entry.id).second) throw DuplicateId(line, entry.id);
    corpus.push_back(std::move(entry));
  }
  return corpus;
}

Corpus parse_corpus(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_corpus(in);
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file: " + path.string());
  return parse_corpus(in);
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& e : corpus) {
    out += entry_to_line(e);
    out += '\n';
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write corpus file: " + path.string());
  out << serialize_corpus(corpus);
}

// ---------------------------------------------------------------- stats

std::optional<double> CorpusStats::visual_audio_ratio() const {
  if (audio_count == 0) return std::nullopt;
  return static_cast<double>(visual_count) / static_cast<double>(audio_count);
}

double CorpusStats::frequency(Label label) const {
  switch (label.space) {
    case LabelSpace::General:
      return general_frequency.at(label.code);
    case LabelSpace::Specific:
      return specific_frequency.at(label.code);
    case LabelSpace::Target:
      return entry_count ? static_cast<double>(target_counts.at(label.code)) / entry_count : 0.0;
  }
  return 0.0;
}

std::vector<Label> CorpusStats::top(Level level, std::size_t n) const {
  auto labels = all_labels(space_of(level));
  std::stable_sort(labels.begin(), labels.end(),
                   [this](Label a, Label b) { return frequency(a) > frequency(b); });
  if (labels.size() > n) labels.resize(n);
  return labels;
}

CorpusStats compute_stats(const Corpus& corpus) {
  CorpusStats st;
  st.entry_count = corpus.size();
  for (const auto& e : corpus) {
    if (!e.labels) throw UnlabeledEntry(e.id);
    const auto& l = *e.labels;
    ++st.target_counts[static_cast<std::size_t>(l.target)];
    for (auto s : l.specific_actions) ++st.specific_counts[static_cast<std::size_t>(s)];
    for (auto g : l.general_actions()) ++st.general_counts[static_cast<std::size_t>(g)];
    ++st.action_count_histogram[l.specific_actions.size()];
    if (family_of(l.target) == Family::Visual) {
      ++st.visual_count;
    } else {
      ++st.audio_count;
    }
  }
  if (st.entry_count > 0) {
    const double n = static_cast<double>(st.entry_count);
    for (std::size_t i = 0; i < kGeneralCount; ++i) st.general_frequency[i] = st.general_counts[i] / n;
    for (std::size_t i = 0; i < kSpecificCount; ++i) st.specific_frequency[i] = st.specific_counts[i] / n;
  }
  return st;
}

nlohmann::ordered_json CorpusStats::to_json() const {
  ojson j;
  j["entry_count"] = entry_count;
  ojson targets;
  for (auto l : all_labels(LabelSpace::Target)) targets[std::string(canonical_name(l))] = target_counts[l.code];
  j["target_counts"] = std::move(targets);
  auto freq_block = [this](Level level) {
    ojson block;
    for (auto l : all_labels(space_of(level))) {
      const auto count = level == Level::General ? general_counts[l.code] : specific_counts[l.code];
      block[std::string(canonical_name(l))] = {{"count", count}, {"frequency", frequency(l)}};
    }
    return block;
  };
  j["general_actions"] = freq_block(Level::General);
  j["specific_actions"] = freq_block(Level::Specific);
  ojson hist;
  for (const auto& [k, v] : action_count_histogram) hist[std::to_string(k)] = v;
  j["action_count_histogram"] = std::move(hist);
  j["visual_count"] = visual_count;
  j["audio_count"] = audio_count;
  if (auto r = visual_audio_ratio()) {
    j["visual_audio_ratio"] = *r;
  } else {
    j["visual_audio_ratio"] = nullptr;
  }
  return j;
}

std::string CorpusStats::to_text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << "entries: " << entry_count << "  (visual " << visual_count << ", audio " << audio_count;
  if (auto r = visual_audio_ratio()) os << ", ratio " << std::setprecision(2) << *r << std::setprecision(1);
  os << ")\n\ntarget information\n";
  for (auto l : all_labels(LabelSpace::Target))
    os << "  " << std::left << std::setw(24) << canonical_name(l) << std::right << std::setw(6)
       << target_counts[l.code] << '\n';
  for (Level level : {Level::General, Level::Specific}) {
    os << '\n' << to_string(level) << " actions (count, % of entries)\n";
    for (auto l : all_labels(space_of(level))) {
      const auto count = level == Level::General ? general_counts[l.code] : specific_counts[l.code];
      os << "  " << std::left << std::setw(24) << canonical_name(l) << std::right << std::setw(6) << count
         << std::setw(8) << 100.0 * frequency(l) << '\n';
    }
  }
  os << "\nactions per entry\n";
  for (const auto& [k, v] : action_count_histogram) os << "  " << k << ": " << v << '\n';
  return os.str();
}

// ---------------------------------------------------------------- generation

namespace {

// Template phrases per specific action, used to fill synthetic captures so
// that content correlates with labels.
struct Phrase {
  std::string_view scene;
  std::string_view object;
  std::string_view text;
  std::string_view sound;
  std::string_view speech;
  std::string_view location;
  std::string_view activity;
  std::string_view goal;
};

constexpr std::array<Phrase, kSpecificCount> kPhrases = {{
    {"a sunset over a lake", "sunset", "#weekendvibes", "crowd cheering", "this view is unreal", "park",
     "hiking with friends", "post it on social media"},
    {"a birthday party in a living room", "birthday cake", "Happy Birthday Mia", "laughter",
     "we should all meet again next week", "home", "chatting with family", "send it to a family member"},
    {"a dog playing in the snow", "dog", "Est. 1998", "music", "that was hilarious", "neighborhood",
     "walking the dog", "remember this moment later"},
    {"a checkout counter in a store", "gift card", "PROMO CODE 4821", "store announcement",
     "the code is valid until the end of the month", "grocery store", "shopping in a store",
     "keep the information for later use"},
    {"a bookstore shelf", "book", "Recommended Reads", "song", "this one is on the staff picks", "bookstore",
     "browsing a bookstore", "add it to a list"},
    {"a home gym", "dumbbell", "Reps: 12", "piano", "that was your best time yet", "gym", "working out",
     "track progress toward a goal"},
    {"an airport departures board", "flight schedule board", "Departs 18:40", "announcement chime",
     "boarding begins at gate twelve", "airport", "waiting at the airport", "be reminded later"},
    {"a clothing store aisle", "pair of jeans", "Slim Straight 32x30", "engine noise",
     "the new model comes out in spring", "mall", "shopping for clothes", "look it up online"},
    {"a cafe with background music", "plant", "Now Playing", "music", "who sings this song", "cafe",
     "having coffee", "identify what it is"},
    {"a train station entrance", "street sign", "Sortie", "foreign speech", "ou est la gare", "train station",
     "traveling abroad", "understand it in another language"},
    {"a poster on a wall", "QR code poster", "scan me: example.org/event", "doorbell",
     "call this number to book", "street", "walking downtown", "open the linked information directly"},
    {"a lecture hall", "projector screen", "Chapter 5", "speech", "today we cover chapter five", "classroom",
     "attending a lecture", "get the words as text"},
    {"a desk with paperwork", "printed receipt", "TOTAL $42.10", "voice memo", "note to self about the budget",
     "home office", "organizing paperwork", "keep a digital copy"},
    {"a drug store shelf", "shampoo bottle", "$7.99 / 12 oz", "store music", "this one is cheaper per ounce",
     "drug store", "shopping in a drug store", "compare it with similar products"},
    {"a kitchen counter", "nutrition label", "Calories 240", "blender", "that is three servings", "kitchen",
     "tracking meals", "work out the totals"},
    {"a group photo at a party", "group photo", "Cheers", "background noise", "say cheese", "party",
     "taking photos", "touch up the media"},
    {"a rabbit in a backyard", "rabbit", "Caution", "bird calls", "it looks sick", "backyard",
     "watching a pet", "zoom in for a better view"},
}};

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

DiaryEntry make_entry(std::string id, TargetModality target, const std::vector<SpecificAction>& actions,
                      bool audio_from_video) {
  DiaryEntry e;
  e.id = std::move(id);
  const Phrase& lead = kPhrases[static_cast<std::size_t>(actions.front())];
  std::vector<std::string> goals;
  for (auto a : actions) goals.emplace_back(kPhrases[static_cast<std::size_t>(a)].goal);

  auto& cap = e.capture;
  if (family_of(target) == Family::Visual) {
    cap.scene_caption = std::string(lead.scene);
    for (auto a : actions) cap.objects.emplace_back(kPhrases[static_cast<std::size_t>(a)].object);
    if (target == TargetModality::Text) {
      for (auto a : actions) cap.visible_text.emplace_back(kPhrases[static_cast<std::size_t>(a)].text);
    }
  } else {
    for (auto a : actions) cap.sound_classes.emplace_back(kPhrases[static_cast<std::size_t>(a)].sound);
    if (target == TargetModality::Speech) {
      cap.sound_classes.insert(cap.sound_classes.begin(), "speech");
      cap.speech_transcript = std::string(lead.speech);
    }
    if (audio_from_video) cap.scene_caption = std::string(lead.scene);
  }
  e.context.location = std::string(lead.location);
  e.context.activity = std::string(lead.activity);

  Labels l;
  l.target = target;
  l.specific_actions = actions;
  l.goal_reason = "I wanted to " + join(goals, " and ") + ".";
  l.cot = "The user was " + std::string(lead.activity) + " at the " + std::string(lead.location) +
          ". They may want to " + join(goals, " and ") + ".";
  e.labels = std::move(l);
  return e;
}

std::vector<SpecificAction> draw_actions(Rng& rng, std::size_t k) {
  std::array<double, kSpecificCount> weights = distribution::kSpecific;
  std::vector<SpecificAction> out;
  for (std::size_t i = 0; i < k; ++i) {
    auto idx = rng.weighted(weights);
    out.push_back(static_cast<SpecificAction>(idx));
    weights[idx] = 0;
  }
  return out;
}

std::string padded_id(std::string_view prefix, std::size_t i, int width) {
  std::ostringstream os;
  os << prefix << std::setw(width) << std::setfill('0') << i;
  return os.str();
}

}  // namespace

Corpus generate_synthetic(const SynthConfig& config) {
  Rng rng(config.seed);
  Corpus corpus;
  corpus.reserve(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    const auto k = rng.weighted(distribution::kActionCount) + 1;
    const auto target = static_cast<TargetModality>(rng.weighted(distribution::kTarget));
    auto actions = draw_actions(rng, k);
    const bool video = family_of(target) == Family::Audio && rng.uniform() < distribution::kAudioFromVideo;
    corpus.push_back(make_entry(padded_id("syn-", i + 1, 6), target, actions, video));
  }
  return corpus;
}

Corpus paper_distribution_corpus() {
  constexpr std::size_t kEntries = 382;
  std::vector<std::size_t> ks;
  for (std::size_t k = 0; k < distribution::kActionCount.size(); ++k)
    ks.insert(ks.end(), static_cast<std::size_t>(distribution::kActionCount[k]), k + 1);
  std::vector<TargetModality> targets;
  for (std::size_t m = 0; m < kModalityCount; ++m)
    targets.insert(targets.end(), static_cast<std::size_t>(distribution::kTarget[m]),
                   static_cast<TargetModality>(m));

  Rng rng(382);
  rng.shuffle(ks);
  rng.shuffle(targets);

  // Realize the exact specific-action appearance counts: visit entries by
  // decreasing label count and give each the k actions with the most
  // remaining quota (a Gale-Ryser style construction). Ties rotate with the
  // entry index so co-occurrences spread across actions.
  std::array<std::size_t, kSpecificCount> remaining{};
  for (std::size_t s = 0; s < kSpecificCount; ++s) remaining[s] = static_cast<std::size_t>(distribution::kSpecific[s]);
  std::vector<std::size_t> order(kEntries);
  for (std::size_t i = 0; i < kEntries; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ks[a] > ks[b]; });

  std::vector<std::vector<SpecificAction>> assigned(kEntries);
  for (std::size_t i : order) {
    std::vector<std::size_t> candidates(kSpecificCount);
    for (std::size_t s = 0; s < kSpecificCount; ++s) candidates[s] = (s + i) % kSpecificCount;
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return remaining[a] > remaining[b]; });
    for (std::size_t j = 0; j < ks[i]; ++j) {
      const auto s = candidates[j];
      if (remaining[s] == 0) throw Error("paper distribution quotas are not realizable");
      --remaining[s];
      assigned[i].push_back(static_cast<SpecificAction>(s));
    }
  }

  Corpus corpus;
  std::size_t audio_seen = 0;
  for (std::size_t i = 0; i < kEntries; ++i) {
    bool video = false;
    if (family_of(targets[i]) == Family::Audio) video = (audio_seen++ % 8) < 3;  // 48 of 128
    corpus.push_back(make_entry(padded_id("paper-", i + 1, 4), targets[i], assigned[i], video));
  }
  return corpus;
}

// ---------------------------------------------------------------- tuples

std::string_view to_string(ContextVariant variant) {
  switch (variant) {
    case ContextVariant::None:
      return "none";
    case ContextVariant::LocationOnly:
      return "location";
    case ContextVariant::ActivityOnly:
      return "activity";
    case ContextVariant::Full:
      return "full";
  }
  return "";
}

ContextVariant parse_context_variant(std::string_view text) {
  if (text == "none") return ContextVariant::None;
  if (text == "location" || text == "location_only") return ContextVariant::LocationOnly;
  if (text == "activity" || text == "activity_only") return ContextVariant::ActivityOnly;
  if (text == "full") return ContextVariant::Full;
  throw Error("unknown context variant '" + std::string(text) + "' (expected none|location|activity|full)");
}

std::string format_tuple(const DiaryEntry& entry, ContextVariant variant) {
  const auto& cap = entry.capture;
  ojson j = ojson::object();
  if (cap.has_visual()) {
    if (cap.scene_caption) j["scene_description"] = *cap.scene_caption;
    j["objects"] = cap.objects;
    j["visible_text"] = cap.visible_text;
  }
  if (cap.has_audio()) {
    j["sounds"] = cap.sound_classes;
    if (cap.speech_transcript) j["speech"] = *cap.speech_transcript;
  }
  const bool keep_location = variant == ContextVariant::LocationOnly || variant == ContextVariant::Full;
  const bool keep_activity = variant == ContextVariant::ActivityOnly || variant == ContextVariant::Full;
  if (keep_location && entry.context.location) j["location"] = *entry.context.location;
  if (keep_activity && entry.context.activity) j["activity"] = *entry.context.activity;
  return j.dump();
}

}  // namespace omniact
