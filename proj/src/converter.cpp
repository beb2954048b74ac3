#include "omniact/converter.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace omniact {
namespace {

using json = nlohmann::json;

std::string key_of(Family f, const std::string& kind) { return std::string(to_string(f)) + "/" + kind; }

std::vector<std::string> strings(const json& j) {
  std::vector<std::string> out;
  for (const auto& x : j) out.push_back(x.get<std::string>());
  return out;
}

// Runs of upper-case words ("MILK CHOCOLATE TOFFEE ALMONDS") in free text.
std::vector<std::string> upper_runs(const std::string& text) {
  std::vector<std::string> out;
  std::string run;
  std::string word;
  auto flush_word = [&] {
    const bool upper = word.size() > 1 && std::none_of(word.begin(), word.end(), [](unsigned char c) {
                         return std::islower(c);
                       }) && std::any_of(word.begin(), word.end(), [](unsigned char c) { return std::isupper(c); });
    if (upper) {
      if (!run.empty()) run += ' ';
      run += word;
    } else if (!run.empty()) {
      out.push_back(run);
      run.clear();
    }
    word.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush_word();
    } else {
      word += c;
    }
  }
  flush_word();
  if (!run.empty()) out.push_back(run);
  return out;
}

class CaptionMock : public Converter {
 public:
  explicit CaptionMock(std::shared_ptr<const ConverterFixtures> f) : fixtures_(std::move(f)) {}
  std::string name() const override { return "fixed-caption-image-mock"; }
  Family modality() const override { return Family::Visual; }
  std::string media_kind() const override { return "image"; }
  void convert(const RawDescriptor& raw, StructuredCapture& out) const override {
    auto it = fixtures_->images.find(raw.fixture);
    if (it == fixtures_->images.end()) throw ConversionFailed("no caption fixture for '" + raw.fixture + "'");
    out.scene_caption = it->second.first;
    out.objects = it->second.second;
  }

 private:
  std::shared_ptr<const ConverterFixtures> fixtures_;
};

class OcrMock : public Converter {
 public:
  explicit OcrMock(std::shared_ptr<const ConverterFixtures> f) : fixtures_(std::move(f)) {}
  std::string name() const override { return "keyword-ocr-mock"; }
  Family modality() const override { return Family::Visual; }
  std::string media_kind() const override { return "image_text"; }
  void convert(const RawDescriptor& raw, StructuredCapture& out) const override {
    if (auto it = fixtures_->ocr.find(raw.fixture); it != fixtures_->ocr.end()) {
      out.visible_text = it->second;
      return;
    }
    if (auto t = raw.extra.find("text"); t != raw.extra.end() && t->is_string()) {
      out.visible_text = upper_runs(t->get<std::string>());
      if (!out.visible_text.empty()) return;
    }
    throw ConversionFailed("no text found in '" + raw.fixture + "'");
  }

 private:
  std::shared_ptr<const ConverterFixtures> fixtures_;
};

class SoundMock : public Converter {
 public:
  explicit SoundMock(std::shared_ptr<const ConverterFixtures> f) : fixtures_(std::move(f)) {}
  std::string name() const override { return "lookup-sound-mock"; }
  Family modality() const override { return Family::Audio; }
  std::string media_kind() const override { return "audio"; }
  void convert(const RawDescriptor& raw, StructuredCapture& out) const override {
    auto it = fixtures_->sounds.find(raw.fixture);
    if (it == fixtures_->sounds.end()) throw ConversionFailed("no sound fixture for '" + raw.fixture + "'");
    out.sound_classes = it->second.first;
    out.speech_transcript = it->second.second;
  }

 private:
  std::shared_ptr<const ConverterFixtures> fixtures_;
};

}  // namespace

RawDescriptor RawDescriptor::from_json(const json& j) {
  if (!j.is_object()) throw Error("descriptor must be a JSON object");
  RawDescriptor d;
  try {
    d.modality = parse_family(j.at("modality").get<std::string>());
    d.media_kind = j.at("media_kind").get<std::string>();
    d.fixture = j.value("fixture", "");
  } catch (const json::exception& e) {
    throw Error(std::string("descriptor: ") + e.what());
  }
  for (const auto& [k, v] : j.items()) {
    if (k != "modality" && k != "media_kind" && k != "fixture") d.extra[k] = v;
  }
  return d;
}

void ConverterRegistry::add(std::shared_ptr<Converter> converter) {
  auto key = std::make_pair(converter->modality(), converter->media_kind());
  if (converters_.count(key)) throw DuplicateConverter(key_of(key.first, key.second));
  converters_.emplace(std::move(key), std::move(converter));
}

StructuredCapture ConverterRegistry::convert(const RawDescriptor& raw) const {
  auto it = converters_.find({raw.modality, raw.media_kind});
  if (it == converters_.end()) throw NoConverter(key_of(raw.modality, raw.media_kind));
  StructuredCapture out;
  it->second->convert(raw, out);
  if (out.empty()) throw ConversionFailed(it->second->name() + " produced an empty capture");
  return out;
}

std::vector<std::string> ConverterRegistry::keys() const {
  std::vector<std::string> out;
  for (const auto& [key, _] : converters_) out.push_back(key_of(key.first, key.second));
  return out;
}

ConverterFixtures ConverterFixtures::from_json(const json& j) {
  ConverterFixtures f;
  try {
    const json images = j.value("images", json::object());
    const json ocr = j.value("ocr", json::object());
    const json sounds = j.value("sounds", json::object());
    for (const auto& [name, v] : images.items()) {
      f.images[name] = {v.at("caption").get<std::string>(), strings(v.value("objects", json::array()))};
    }
    for (const auto& [name, v] : ocr.items()) f.ocr[name] = strings(v);
    for (const auto& [name, v] : sounds.items()) {
      std::optional<std::string> speech;
      if (v.contains("speech")) speech = v.at("speech").get<std::string>();
      f.sounds[name] = {strings(v.at("sound_classes")), speech};
    }
  } catch (const json::exception& e) {
    throw Error(std::string("converter fixtures: ") + e.what());
  }
  return f;
}

ConverterFixtures ConverterFixtures::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open converter fixtures " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error("converter fixtures " + path.string() + " are not valid JSON");
  return from_json(j);
}

std::shared_ptr<Converter> make_caption_mock(std::shared_ptr<const ConverterFixtures> fixtures) {
  return std::make_shared<CaptionMock>(std::move(fixtures));
}

std::shared_ptr<Converter> make_ocr_mock(std::shared_ptr<const ConverterFixtures> fixtures) {
  return std::make_shared<OcrMock>(std::move(fixtures));
}

std::shared_ptr<Converter> make_sound_mock(std::shared_ptr<const ConverterFixtures> fixtures) {
  return std::make_shared<SoundMock>(std::move(fixtures));
}

ConverterRegistry default_registry(std::shared_ptr<const ConverterFixtures> fixtures) {
  ConverterRegistry r;
  r.add(make_caption_mock(fixtures));
  r.add(make_ocr_mock(fixtures));
  r.add(make_sound_mock(fixtures));
  return r;
}

void AudioContextBuffer::push(Frame frame) {
  if (!frames_.empty() && frame.timestamp_s < frames_.back().timestamp_s) {
    throw Error("audio frames must arrive in time order");
  }
  frames_.push_back(std::move(frame));
  const double newest = frames_.back().timestamp_s;
  while (!frames_.empty() && newest - frames_.front().timestamp_s > window_s_) frames_.pop_front();
}

double AudioContextBuffer::span_s() const {
  return frames_.empty() ? 0.0 : frames_.back().timestamp_s - frames_.front().timestamp_s;
}

void AudioContextBuffer::fill(StructuredCapture& out) const {
  std::string speech;
  for (const auto& f : frames_) {
    for (const auto& s : f.sound_classes) {
      if (std::find(out.sound_classes.begin(), out.sound_classes.end(), s) == out.sound_classes.end()) {
        out.sound_classes.push_back(s);
      }
    }
    if (f.speech) {
      if (!speech.empty()) speech += ' ';
      speech += *f.speech;
    }
  }
  if (!speech.empty()) out.speech_transcript = speech;
}

json AudioContextBuffer::metadata() const {
  json j;
  j["window_s"] = window_s_;
  j["span_s"] = span_s();
  j["frames"] = frames_.size();
  if (!frames_.empty()) {
    j["from_s"] = frames_.front().timestamp_s;
    j["to_s"] = frames_.back().timestamp_s;
  }
  return j;
}

}  // namespace omniact
