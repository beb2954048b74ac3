// omniact command-line interface: corpus tools, prompt inspection, fine-tune
// export, evaluation and the prediction service.

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

#include "omniact/backend.hpp"
#include "omniact/corpus.hpp"
#include "omniact/evaluator.hpp"
#include "omniact/export.hpp"
#include "omniact/mock_backend.hpp"
#include "omniact/prompt.hpp"
#include "omniact/service.hpp"

namespace {

using namespace omniact;

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

const DiaryEntry& find_entry(const Corpus& corpus, const std::string& id) {
  for (const auto& e : corpus) {
    if (e.id == id) return e;
  }
  throw Error("no entry with id '" + id + "'");
}

struct EvalOptions {
  std::string corpus;
  std::string backend;
  std::string cache_dir;
  std::string technique = "icl";
  std::string level = "specific";
  std::size_t top_n = 3;
  std::string context = "full";
  std::string filter = "all";
  std::uint64_t seed = 7;
  double ratio = 0.75;
  bool stratified = false;
  std::string out;
  std::string confusion_csv;
  bool text = false;
};

void add_eval_options(CLI::App* cmd, EvalOptions& o) {
  cmd->add_option("--corpus", o.corpus, "Labeled corpus (JSONL)")->required();
  cmd->add_option("--backend", o.backend, "Backend config (JSON); oracle and dominant need none");
  cmd->add_option("--cache-dir", o.cache_dir, "Override the backend response cache directory");
  cmd->add_option("--technique", o.technique, "icl|finetuned|classifier|dominant|oracle");
  cmd->add_option("--level", o.level, "general|specific");
  cmd->add_option("--top-n", o.top_n, "Number of predictions");
  cmd->add_option("--context", o.context, "none|location|activity|full");
  cmd->add_option("--filter", o.filter, "all|visual_only|audio_only");
  cmd->add_option("--seed", o.seed, "Split seed");
  cmd->add_option("--ratio", o.ratio, "Training fraction");
  cmd->add_flag("--stratified", o.stratified, "Stratify the split by target modality");
  cmd->add_option("--out", o.out, "Report JSON path (default stdout)");
  cmd->add_option("--confusion-csv", o.confusion_csv, "Write the normalized confusion matrix as CSV");
  cmd->add_flag("--text", o.text, "Print the text table instead of JSON when --out is not given");
}

EvalConfig to_config(const EvalOptions& o) {
  EvalConfig c;
  c.technique = parse_technique(o.technique);
  c.level = parse_level(o.level);
  c.top_n = o.top_n;
  c.context_variant = parse_context_variant(o.context);
  c.modality_filter = parse_modality_filter(o.filter);
  c.split_seed = o.seed;
  c.split_ratio = o.ratio;
  c.stratified = o.stratified;
  c.validate();
  return c;
}

std::shared_ptr<Backend> backend_for(const EvalOptions& o, const EvalConfig& c, const Corpus& corpus) {
  std::shared_ptr<Backend> backend;
  if (!o.backend.empty()) {
    auto bc = BackendConfig::load(o.backend);
    if (!o.cache_dir.empty()) bc.cache_dir = o.cache_dir;
    backend = make_backend(bc);
  } else if (c.technique == Technique::Oracle) {
    backend = MockBackend::oracle(corpus);
    if (!o.cache_dir.empty()) backend = std::make_shared<CachingBackend>(backend, ResponseCache(o.cache_dir));
  } else if (c.technique != Technique::Dominant) {
    throw Error("--backend is required for technique " + o.technique);
  }
  return backend;
}

void emit(const EvalOptions& o, const nlohmann::ordered_json& j, const std::string& text) {
  if (!o.out.empty()) {
    write_text(o.out, j.dump(2) + "\n");
    std::cerr << text;
  } else if (o.text) {
    std::cout << text;
  } else {
    std::cout << j.dump(2) << '\n';
  }
}

ServiceServer* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Follow-up action prediction toolkit"};
  app.require_subcommand(1);

  // corpus
  auto* corpus_cmd = app.add_subcommand("corpus", "Validate, summarize or generate corpora");
  corpus_cmd->require_subcommand(1);
  std::string corpus_path;
  auto* validate = corpus_cmd->add_subcommand("validate", "Check a corpus file");
  validate->add_option("path", corpus_path, "Corpus (JSONL)")->required();
  bool stats_json = false;
  auto* stats = corpus_cmd->add_subcommand("stats", "Print corpus statistics");
  stats->add_option("path", corpus_path, "Corpus (JSONL)")->required();
  stats->add_flag("--json", stats_json, "Emit JSON");
  SynthConfig synth_config;
  std::string synth_out;
  bool paper_fixture = false;
  auto* synth = corpus_cmd->add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--seed", synth_config.seed, "Generator seed");
  synth->add_option("--n", synth_config.n, "Number of entries");
  synth->add_option("--out", synth_out, "Output path (default stdout)");
  synth->add_flag("--paper-fixture", paper_fixture, "Emit the 382-entry fixture with exact published marginals");

  // prompt
  auto* prompt_cmd = app.add_subcommand("prompt", "Inspect prompts");
  prompt_cmd->require_subcommand(1);
  std::string prompt_corpus, prompt_entry, prompt_level = "specific", prompt_context = "full", prompt_task = "action",
                                            prompt_mode = "icl", prompt_pool;
  std::size_t prompt_n = 3;
  bool prompt_json = false;
  auto* show = prompt_cmd->add_subcommand("show", "Render the prompt for one entry");
  show->add_option("--corpus", prompt_corpus, "Corpus holding the entry")->required();
  show->add_option("--entry", prompt_entry, "Entry id")->required();
  show->add_option("--pool", prompt_pool, "Few-shot pool (defaults to the corpus minus the entry)");
  show->add_option("--task", prompt_task, "action|target|cot");
  show->add_option("--level", prompt_level, "general|specific");
  show->add_option("--n", prompt_n, "Number of predictions");
  show->add_option("--context", prompt_context, "none|location|activity|full");
  show->add_option("--mode", prompt_mode, "icl|finetuned");
  show->add_flag("--json", prompt_json, "Emit the serialized bundle");
  std::string fewshot_task = "action";
  auto* fewshots = prompt_cmd->add_subcommand("fewshots", "Show the exemplars selected from a pool");
  fewshots->add_option("--pool", prompt_pool, "Pool corpus")->required();
  fewshots->add_option("--task", fewshot_task, "action|target");

  // export
  auto* export_cmd = app.add_subcommand("export", "Export training data");
  export_cmd->require_subcommand(1);
  std::string export_corpus, export_format = "chat", export_level = "specific", export_task = "action",
                             export_out, export_context = "full";
  std::size_t export_n = 3;
  auto* finetune = export_cmd->add_subcommand("finetune", "Fine-tuning JSONL");
  finetune->add_option("--corpus", export_corpus, "Labeled corpus")->required();
  finetune->add_option("--format", export_format, "chat|legacy");
  finetune->add_option("--level", export_level, "general|specific");
  finetune->add_option("--task", export_task, "action|target (legacy only)");
  finetune->add_option("--n", export_n, "Prediction count stated in the chat system prompt");
  finetune->add_option("--context", export_context, "none|location|activity|full");
  finetune->add_option("--out", export_out, "Output path (default stdout)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a predictor");
  eval_cmd->require_subcommand(1);
  EvalOptions actions_opts, target_opts, ablation_opts;
  auto* eval_actions_cmd = eval_cmd->add_subcommand("actions", "Follow-up action accuracy");
  add_eval_options(eval_actions_cmd, actions_opts);
  auto* eval_target_cmd = eval_cmd->add_subcommand("target", "Target information accuracy");
  add_eval_options(eval_target_cmd, target_opts);
  auto* eval_ablation_cmd = eval_cmd->add_subcommand("ablation", "Context ablation grid");
  add_eval_options(eval_ablation_cmd, ablation_opts);

  // serve
  std::string serve_config;
  int serve_port = -1;
  auto* serve = app.add_subcommand("serve", "Run the prediction service");
  serve->add_option("--config", serve_config, "Service config (JSON)")->required();
  serve->add_option("--port", serve_port, "Port (overrides the config)");

  // fewshots
  auto* fewshots_cmd = app.add_subcommand("fewshots", "Manage learned exemplars");
  fewshots_cmd->require_subcommand(1);
  std::string promote_log, promote_out;
  auto* promote = fewshots_cmd->add_subcommand("promote", "Turn feedback into exemplar entries");
  promote->add_option("--log", promote_log, "Feedback log (JSONL)")->required();
  promote->add_option("--out", promote_out, "Output corpus (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) {
      const auto corpus = load_corpus(corpus_path);
      std::cout << "ok: " << corpus.size() << " entries\n";
    } else if (stats->parsed()) {
      const auto s = compute_stats(load_corpus(corpus_path));
      std::cout << (stats_json ? s.to_json().dump(2) + "\n" : s.to_text());
    } else if (synth->parsed()) {
      const auto corpus = paper_fixture ? paper_distribution_corpus() : generate_synthetic(synth_config);
      write_text(synth_out, serialize_corpus(corpus));
    } else if (show->parsed()) {
      const auto corpus = load_corpus(prompt_corpus);
      const auto& entry = find_entry(corpus, prompt_entry);
      Corpus pool;
      if (!prompt_pool.empty()) {
        pool = load_corpus(prompt_pool);
      } else {
        for (const auto& e : corpus) {
          if (e.id != entry.id) pool.push_back(e);
        }
      }
      const auto variant = parse_context_variant(prompt_context);
      const auto mode = prompt_mode == "finetuned" ? PromptMode::FineTuned : PromptMode::InContext;
      PromptBundle bundle;
      if (prompt_task == "cot") {
        bundle = build_cot_generation_prompt(entry, variant);
      } else if (prompt_task == "target") {
        const auto family = entry.labels ? family_of(entry.labels->target)
                                         : (entry.capture.has_visual() ? Family::Visual : Family::Audio);
        FewShotStore store = mode == PromptMode::InContext ? select_fewshots_target(pool) : FewShotStore{};
        bundle = build_target_prompt(entry, family, store, variant, mode);
      } else {
        FewShotStore store = mode == PromptMode::InContext ? select_fewshots_actions(pool) : FewShotStore{};
        bundle = build_action_prompt(entry, parse_level(prompt_level), prompt_n, store, variant, mode);
      }
      if (prompt_json) {
        std::cout << bundle.to_json().dump(2) << '\n';
      } else {
        for (const auto& m : bundle.messages) std::cout << "--- " << to_string(m.role) << " ---\n" << m.content << "\n";
      }
    } else if (fewshots->parsed()) {
      const auto pool = load_corpus(prompt_pool);
      const auto store = fewshot_task == "target" ? select_fewshots_target(pool) : select_fewshots_actions(pool);
      for (const auto& x : store.exemplars) std::cout << x.entry.id << '\t' << to_string(x.provenance) << '\n';
      for (auto l : store.uncovered) std::cerr << "warning: no exemplar covers " << canonical_name(l) << '\n';
    } else if (finetune->parsed()) {
      const auto corpus = load_corpus(export_corpus);
      const auto level = parse_level(export_level);
      const auto variant = parse_context_variant(export_context);
      std::vector<nlohmann::ordered_json> records;
      if (export_format == "chat") {
        records = finetune_chat_records(corpus, level, export_n, variant);
      } else if (export_format == "legacy") {
        const auto task = export_task == "target" ? LegacyTask::Target : LegacyTask::Action;
        records = finetune_legacy_records(corpus, task, level, variant);
      } else {
        throw Error("unknown export format '" + export_format + "'");
      }
      write_text(export_out, to_jsonl(records));
    } else if (eval_actions_cmd->parsed()) {
      const auto config = to_config(actions_opts);
      const auto corpus = load_corpus(actions_opts.corpus);
      auto backend = backend_for(actions_opts, config, corpus);
      const auto report = eval_actions(config, corpus, backend.get());
      if (!actions_opts.confusion_csv.empty()) write_text(actions_opts.confusion_csv, report.confusion_matrix.to_csv());
      emit(actions_opts, report.to_json(), report.to_text());
      if (backend) std::cerr << "backend requests: " << backend->request_count() << '\n';
    } else if (eval_target_cmd->parsed()) {
      const auto config = to_config(target_opts);
      const auto corpus = load_corpus(target_opts.corpus);
      auto backend = backend_for(target_opts, config, corpus);
      const auto report = eval_target(config, corpus, backend.get());
      emit(target_opts, report.to_json(), report.to_text());
      if (backend) std::cerr << "backend requests: " << backend->request_count() << '\n';
    } else if (eval_ablation_cmd->parsed()) {
      const auto config = to_config(ablation_opts);
      const auto corpus = load_corpus(ablation_opts.corpus);
      auto backend = backend_for(ablation_opts, config, corpus);
      const auto grid = ablation_grid(config, corpus, backend.get());
      emit(ablation_opts, grid.to_json(), grid.to_text());
    } else if (serve->parsed()) {
      auto config = ServiceConfig::load(serve_config);
      if (serve_port >= 0) config.port = serve_port;
      auto service = PredictionService::from_config(config);
      ServiceServer server(*service);
      const int port = server.bind(config.host, config.port);
      g_server = &server;
      std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
      });
      std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
      });
      std::cerr << "listening on " << config.host << ':' << port << '\n';
      server.listen();
      g_server = nullptr;
    } else if (promote->parsed()) {
      write_text(promote_out, serialize_corpus(promote_feedback(promote_log)));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
