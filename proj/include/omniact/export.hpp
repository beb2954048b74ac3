#pragma once

// Fine-tuning data export. Chat records carry system / user / assistant
// messages with the chain of thought in the answer; legacy records are
// prompt/completion pairs for the log-probability classifier.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "omniact/corpus.hpp"

namespace omniact {

enum class LegacyTask : std::uint8_t { Target, Action };

// One record per entry: {"messages": [system, user = tuple, assistant]}.
// The assistant answer is a JSON list of {chain_of_thoughts, prediction}
// with canonical label names. Throws MissingCot for entries without labels
// or without chain-of-thought text.
std::vector<nlohmann::ordered_json> finetune_chat_records(const Corpus& corpus, Level level, std::size_t n = 3,
                                                          ContextVariant variant = ContextVariant::Full);

// One record per (entry, label): {"prompt": tuple + separator,
// "completion": " " + canonical name}. Target task: one line per entry.
std::vector<nlohmann::ordered_json> finetune_legacy_records(const Corpus& corpus, LegacyTask task, Level level,
                                                            ContextVariant variant = ContextVariant::Full);

std::string to_jsonl(const std::vector<nlohmann::ordered_json>& records);
void write_jsonl(const std::vector<nlohmann::ordered_json>& records, const std::filesystem::path& path);

}  // namespace omniact
