#include "omniact/export.hpp"

#include <fstream>

#include "omniact/error.hpp"
#include "omniact/http_backend.hpp"
#include "omniact/prompt.hpp"

namespace omniact {

using ojson = nlohmann::ordered_json;

std::vector<ojson> finetune_chat_records(const Corpus& corpus, Level level, std::size_t n, ContextVariant variant) {
  const auto system = action_system_prompt(level, n);
  std::vector<ojson> out;
  out.reserve(corpus.size());
  for (const auto& e : corpus) {
    if (!e.labels || !e.labels->cot) throw MissingCot(e.id);
    auto answer = ojson::array();
    for (auto l : e.labels->label_set(level)) {
      answer.push_back({{"chain_of_thoughts", *e.labels->cot}, {"prediction", canonical_name(l)}});
    }
    ojson record;
    record["messages"] = ojson::array({
        {{"role", "system"}, {"content", system}},
        {{"role", "user"}, {"content", format_tuple(e, variant)}},
        {{"role", "assistant"}, {"content", answer.dump()}},
    });
    out.push_back(std::move(record));
  }
  return out;
}

std::vector<ojson> finetune_legacy_records(const Corpus& corpus, LegacyTask task, Level level, ContextVariant variant) {
  std::vector<ojson> out;
  for (const auto& e : corpus) {
    if (!e.labels) throw UnlabeledEntry(e.id);
    const auto prompt = format_tuple(e, variant) + std::string(kLegacySeparator);
    const auto labels = task == LegacyTask::Target ? std::vector<Label>{to_label(e.labels->target)}
                                                   : e.labels->label_set(level);
    for (auto l : labels) {
      ojson record;
      record["prompt"] = prompt;
      record["completion"] = " " + std::string(canonical_name(l));
      out.push_back(std::move(record));
    }
  }
  return out;
}

std::string to_jsonl(const std::vector<ojson>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

void write_jsonl(const std::vector<ojson>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << to_jsonl(records);
}

}  // namespace omniact
