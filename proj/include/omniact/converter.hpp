#pragma once

// Raw media -> structured capture fields. Real perception models are out of
// scope; the bundled converters answer from fixture tables.

#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "omniact/corpus.hpp"
#include "omniact/error.hpp"

namespace omniact {

class NoConverter : public Error {
 public:
  explicit NoConverter(const std::string& key) : Error("no converter registered for " + key) {}
};

class ConversionFailed : public Error {
 public:
  using Error::Error;
};

class DuplicateConverter : public Error {
 public:
  explicit DuplicateConverter(const std::string& key) : Error("a converter is already registered for " + key) {}
};

// {"modality": "visual"|"audio", "media_kind": "...", "fixture": "menu.jpg", ...}
struct RawDescriptor {
  Family modality = Family::Visual;
  std::string media_kind;
  std::string fixture;
  nlohmann::json extra = nlohmann::json::object();

  // Throws Error on a malformed descriptor.
  static RawDescriptor from_json(const nlohmann::json& j);
};

class Converter {
 public:
  virtual ~Converter() = default;
  virtual std::string name() const = 0;
  virtual Family modality() const = 0;
  virtual std::string media_kind() const = 0;
  // Populates the fields this converter owns. Throws ConversionFailed.
  virtual void convert(const RawDescriptor& raw, StructuredCapture& out) const = 0;
};

class ConverterRegistry {
 public:
  // Throws DuplicateConverter when (modality, media kind) is taken.
  void add(std::shared_ptr<Converter> converter);
  // Throws NoConverter / ConversionFailed. The result is non-empty.
  StructuredCapture convert(const RawDescriptor& raw) const;
  std::vector<std::string> keys() const;

 private:
  std::map<std::pair<Family, std::string>, std::shared_ptr<Converter>> converters_;
};

// Fixture tables for the bundled mocks:
// {"images": {name: {"caption", "objects"}}, "ocr": {name: [lines]},
//  "sounds": {name: {"sound_classes", "speech"}}}
struct ConverterFixtures {
  std::map<std::string, std::pair<std::string, std::vector<std::string>>> images;
  std::map<std::string, std::vector<std::string>> ocr;
  std::map<std::string, std::pair<std::vector<std::string>, std::optional<std::string>>> sounds;

  static ConverterFixtures from_json(const nlohmann::json& j);
  static ConverterFixtures load(const std::filesystem::path& path);
};

// (visual, "image"): fixed caption and object list per fixture name.
std::shared_ptr<Converter> make_caption_mock(std::shared_ptr<const ConverterFixtures> fixtures);
// (visual, "image_text"): OCR lines per fixture, or the upper-case runs of
// an inline "text" field.
std::shared_ptr<Converter> make_ocr_mock(std::shared_ptr<const ConverterFixtures> fixtures);
// (audio, "audio"): sound classes and optional speech per fixture.
std::shared_ptr<Converter> make_sound_mock(std::shared_ptr<const ConverterFixtures> fixtures);

ConverterRegistry default_registry(std::shared_ptr<const ConverterFixtures> fixtures);

// Rolling audio context: keeps the sound classes and speech heard during the
// most recent window (5 s by default) before a trigger.
class AudioContextBuffer {
 public:
  struct Frame {
    double timestamp_s = 0.0;
    std::vector<std::string> sound_classes;
    std::optional<std::string> speech;
  };

  explicit AudioContextBuffer(double window_s = 5.0) : window_s_(window_s) {}

  // Frames must arrive in non-decreasing time order.
  void push(Frame frame);
  const std::deque<Frame>& frames() const { return frames_; }
  // Latest minus earliest retained timestamp; never above the window.
  double span_s() const;
  // Distinct sound classes in arrival order plus the joined speech.
  void fill(StructuredCapture& out) const;
  nlohmann::json metadata() const;

 private:
  double window_s_;
  std::deque<Frame> frames_;
};

}  // namespace omniact
