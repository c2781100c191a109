// aop: operator entry point for memory building, ad-hoc tool queries,
// single-question answering and benchmark sweeps.
//
// Exit codes: 0 ok, 1 systemic failure, 2 usage/input error, 3 refused
// clobber, 4 backend failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aop/agent.hpp"
#include "aop/backends.hpp"
#include "aop/errors.hpp"
#include "aop/harness.hpp"
#include "aop/http_backend.hpp"
#include "aop/memory_builder.hpp"
#include "aop/memory_store.hpp"
#include "aop/prompts.hpp"
#include "aop/retrieval.hpp"
#include "aop/run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSystemic = 1;
constexpr int kExitUsage = 2;
constexpr int kExitClobber = 3;
constexpr int kExitBackend = 4;

int exit_code_for(const aop::Error& e) {
  switch (e.kind()) {
    case aop::ErrorKind::Transport:
    case aop::ErrorKind::Protocol:
    case aop::ErrorKind::Annotation:
      return kExitBackend;
    case aop::ErrorKind::Config:
    case aop::ErrorKind::Precondition:
    case aop::ErrorKind::Parse:
    case aop::ErrorKind::Validation:
    case aop::ErrorKind::Version:
    case aop::ErrorKind::Ingestion:
    case aop::ErrorKind::Dispatch:
      return kExitUsage;
  }
  return kExitSystemic;
}

struct CommonFlags {
  std::string config_path;
  std::string prompts_dir;
  std::optional<std::string> base_url;
  std::optional<std::string> model_name;
  std::optional<std::string> chat_provider;
  std::optional<std::string> script_path;
  std::optional<std::string> embedding_provider;
  std::optional<int> embedding_dimension;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run-config file");
    cmd->add_option("--prompts", prompts_dir, "directory of prompt template overrides");
    cmd->add_option("--base-url", base_url, "chat/embeddings endpoint base URL");
    cmd->add_option("--model-name", model_name, "remote model name");
    cmd->add_option("--chat-provider", chat_provider, "openai or scripted");
    cmd->add_option("--script", script_path, "scripted chat backend rule file");
    cmd->add_option("--embedding-provider", embedding_provider,
                    "bag_of_words, hash or openai");
    cmd->add_option("--embedding-dim", embedding_dimension, "mock embedder dimension");
    cmd->add_option("--seed", seed, "seed for mock embedders");
  }

  aop::RunConfig resolve() const {
    aop::RunConfig config = config_path.empty() ? aop::RunConfig::defaults()
                                                : aop::RunConfig::from_file(config_path);
    if (base_url) config.backend.base_url = *base_url;
    if (model_name) config.backend.model_name = *model_name;
    if (chat_provider) config.provider.chat_provider = *chat_provider;
    if (script_path) config.provider.script_path = *script_path;
    if (embedding_provider) config.provider.embedding_provider = *embedding_provider;
    if (embedding_dimension) config.provider.embedding_dimension = *embedding_dimension;
    if (seed) config.provider.embedding_seed = *seed;
    config.validate();
    return config;
  }

  aop::PromptLibrary prompts() const {
    return prompts_dir.empty() ? aop::PromptLibrary::defaults()
                               : aop::PromptLibrary::from_directory(prompts_dir);
  }
};

std::unique_ptr<aop::ScriptedChatBackend> load_scripted_chat(const std::string& path) {
  auto backend = std::make_unique<aop::ScriptedChatBackend>();
  if (path.empty()) return backend;
  std::ifstream in(path);
  if (!in) aop::raise(aop::ErrorKind::Ingestion, "script file not readable: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    aop::raise(aop::ErrorKind::Parse,
               "script file is not valid JSON: " + std::string(e.what()));
  }
  for (const json& rule : j.value("rules", json::array())) {
    backend->add_rule(rule.at("contains").get<std::string>(),
                      rule.at("response").get<std::string>());
  }
  for (const json& response : j.value("responses", json::array())) {
    backend->push_response(response.get<std::string>());
  }
  if (j.contains("default_response")) {
    backend->set_default_response(j["default_response"].get<std::string>());
  }
  return backend;
}

std::unique_ptr<aop::ChatBackend> make_chat_backend(const aop::RunConfig& config) {
  if (config.provider.chat_provider == "scripted") {
    return load_scripted_chat(config.provider.script_path);
  }
  if (config.provider.chat_provider == "openai") {
    if (config.backend.base_url.empty()) {
      aop::raise(aop::ErrorKind::Config,
                 "backend.base_url is required for the openai chat provider");
    }
    return std::make_unique<aop::OpenAiChatBackend>(config.backend);
  }
  aop::raise(aop::ErrorKind::Config,
             "unknown chat provider \"" + config.provider.chat_provider + "\"");
}

std::shared_ptr<aop::EmbeddingBackend> make_embedder(const aop::RunConfig& config) {
  const aop::ProviderConfig& p = config.provider;
  if (p.embedding_provider == "bag_of_words") {
    return std::make_shared<aop::BagOfWordsEmbedder>(p.embedding_dimension);
  }
  if (p.embedding_provider == "hash") {
    return std::make_shared<aop::SeededHashEmbedder>(p.embedding_dimension,
                                                     p.embedding_seed);
  }
  if (p.embedding_provider == "openai") {
    aop::BackendConfig backend = config.backend;
    if (!p.embedding_model_name.empty()) backend.model_name = p.embedding_model_name;
    return std::make_shared<aop::OpenAiEmbeddingBackend>(backend, p.embedding_dimension);
  }
  aop::raise(aop::ErrorKind::Config,
             "unknown embedding provider \"" + p.embedding_provider + "\"");
}

std::string embedder_info_for(const aop::RunConfig& config,
                              const std::shared_ptr<aop::EmbeddingBackend>& embedder) {
  const aop::ProviderConfig& p = config.provider;
  json info;
  info["provider"] = p.embedding_provider;
  info["dimension"] = embedder->dimension();
  if (p.embedding_provider == "hash") {
    info["seed"] = p.embedding_seed;
  } else if (p.embedding_provider == "bag_of_words") {
    auto bow = std::dynamic_pointer_cast<aop::BagOfWordsEmbedder>(embedder);
    if (bow) info["vocabulary"] = bow->vocabulary();
  } else if (p.embedding_provider == "openai") {
    info["model_name"] =
        p.embedding_model_name.empty() ? config.backend.model_name : p.embedding_model_name;
  }
  return info.dump();
}

// Rebuilds the embedding backend a memory was built with, preferring the
// manifest's embedder_info over the run config.
std::shared_ptr<aop::EmbeddingBackend> resolve_embedder(const aop::HierarchicalMemory& memory,
                                                        const aop::RunConfig& config) {
  if (memory.embedder_info.empty()) return make_embedder(config);
  json info;
  try {
    info = json::parse(memory.embedder_info);
  } catch (const json::exception&) {
    return make_embedder(config);
  }
  const std::string provider = info.value("provider", std::string{});
  const int dimension = info.value("dimension", memory.embedding_dim);
  if (provider == "bag_of_words") {
    auto bow = std::make_shared<aop::BagOfWordsEmbedder>(dimension);
    if (info.contains("vocabulary")) {
      bow->preload_vocabulary(info["vocabulary"].get<std::vector<std::string>>());
    }
    return bow;
  }
  if (provider == "hash") {
    return std::make_shared<aop::SeededHashEmbedder>(dimension,
                                                     info.value("seed", std::uint64_t{0}));
  }
  if (provider == "openai") {
    aop::BackendConfig backend = config.backend;
    const std::string model = info.value("model_name", std::string{});
    if (!model.empty()) backend.model_name = model;
    return std::make_shared<aop::OpenAiEmbeddingBackend>(backend, dimension);
  }
  return make_embedder(config);
}

aop::OptionList parse_options(const std::vector<std::string>& raw) {
  aop::OptionList options;
  for (const std::string& item : raw) {
    const std::size_t colon = item.find(':');
    if (colon != 1 || item.size() < 3) {
      aop::raise(aop::ErrorKind::Config,
                 "options must look like \"A:text\", got \"" + item + "\"");
    }
    options.emplace_back(item[0], item.substr(2));
  }
  return options;
}

void print_scored_table(const std::vector<aop::ScoredSegment>& segments,
                        const aop::HierarchicalMemory& memory) {
  std::cout << "rank  segment  score      span                matched\n";
  int rank = 1;
  for (const aop::ScoredSegment& seg : segments) {
    const auto& mid = memory.mid_segments.at(static_cast<std::size_t>(seg.segment_index - 1));
    std::string matched;
    for (const std::string& m : seg.matched_evidence) {
      if (!matched.empty()) matched += " | ";
      matched += m;
    }
    if (matched.size() > 72) matched = matched.substr(0, 69) + "...";
    char line[96];
    std::snprintf(line, sizeof(line), "%-5d %-8d %-10.4f %.1fs-%.1fs", rank++,
                  seg.segment_index, seg.score, mid.start, mid.end);
    std::string prefix(line);
    if (prefix.size() < 46) prefix.append(46 - prefix.size(), ' ');
    std::cout << prefix << matched << (seg.already_observed ? "  [seen]" : "") << "\n";
  }
}

int cmd_build_memory(const CommonFlags& common, const std::string& video_id,
                     const std::string& transcript, double duration,
                     const std::string& out_dir, bool force, std::optional<int> workers) {
  const aop::RunConfig config = common.resolve();

  const fs::path manifest = fs::path(out_dir) / aop::kMemoryManifestName;
  if (fs::exists(manifest) && !force) {
    std::cerr << "refusing to overwrite existing memory at " << manifest
              << " (use --force)\n";
    return kExitClobber;
  }

  std::string stage = "ingest";
  try {
    std::vector<std::string> warnings;
    aop::FileTranscriber transcriber(&warnings);
    const std::vector<aop::Utterance> utterances = transcriber.transcribe(transcript);
    for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";

    stage = "build";
    std::unique_ptr<aop::ChatBackend> chat = make_chat_backend(config);
    std::shared_ptr<aop::EmbeddingBackend> embedder = make_embedder(config);
    aop::BuildOptions options;
    options.segmentation = config.segmentation;
    options.annotation_temperature = config.annotation_temperature;
    options.context_budget_tokens = config.backend.context_budget_tokens;
    options.annotation_workers = workers.value_or(config.build_workers);
    aop::HierarchicalMemory memory =
        aop::build_memory(video_id, duration, utterances, *chat, *embedder,
                          common.prompts(), options, &warnings);
    memory.embedder_info = embedder_info_for(config, embedder);

    stage = "store";
    const std::string path = aop::store_memory(memory, out_dir);
    std::cout << "built memory for " << video_id << ": N_mid=" << memory.mid_count()
              << " N_fine=" << memory.fine_count() << " -> " << path << "\n";
    return kExitOk;
  } catch (const aop::Error& e) {
    std::cerr << "error in stage " << stage << ": " << e.what() << "\n";
    return exit_code_for(e);
  }
}

int cmd_query(const CommonFlags& common, const std::string& memory_dir,
              const std::string& tool_name, const std::string& query, int k,
              double lambda, int anchor, int radius) {
  const aop::RunConfig config = common.resolve();
  const aop::HierarchicalMemory memory = aop::load_memory(memory_dir);
  std::shared_ptr<aop::EmbeddingBackend> embedder = resolve_embedder(memory, config);
  const aop::ToolEngine engine(memory, *embedder, config.bm25);

  aop::ToolCall call;
  call.tool = aop::tool_from_string(tool_name);
  call.query = query;
  call.k = k;
  call.lambda = lambda;
  call.anchor_index = anchor;
  call.radius = radius;

  const aop::Observation obs = engine.dispatch(call);
  if (call.tool == aop::ToolKind::Fine) {
    std::cout << "fine clips of segment " << anchor << ":\n";
    for (const aop::FineClip& clip : obs.clips) {
      std::cout << "  clip " << clip.index << "  " << clip.start << "s-" << clip.end
                << "s  " << (clip.is_gap ? "(non-speech span)" : clip.text) << "\n";
    }
    return kExitOk;
  }
  print_scored_table(obs.segments, memory);
  return kExitOk;
}

int cmd_answer(const CommonFlags& common, const std::string& memory_dir,
               const std::string& question, const std::vector<std::string>& raw_options,
               const std::string& trace_out, std::optional<int> max_rounds) {
  const aop::RunConfig config = common.resolve();
  const aop::OptionList options = parse_options(raw_options);

  const aop::HierarchicalMemory memory = aop::load_memory(memory_dir);
  std::shared_ptr<aop::EmbeddingBackend> embedder = resolve_embedder(memory, config);
  const aop::ToolEngine engine(memory, *embedder, config.bm25);
  std::unique_ptr<aop::ChatBackend> chat = make_chat_backend(config);

  aop::LoopConfig loop = config.loop;
  if (max_rounds) loop.max_rounds = *max_rounds;
  aop::AgentLoop agent(engine, *chat, common.prompts(), loop);
  const aop::AnswerResult result = agent.run(question, options);

  {
    std::ofstream out(trace_out);
    if (!out) {
      std::cerr << "cannot write trace to " << trace_out << "\n";
      return kExitUsage;
    }
    out << result.trace.dump(2) << '\n';
  }

  if (!result.ok) {
    std::cerr << "backend failure: " << result.error << " (trace written to " << trace_out
              << ")\n";
    return kExitBackend;
  }
  if (result.extracted_option) {
    std::cout << "ANSWER: " << *result.extracted_option
              << " (rounds used: " << result.rounds_used << ", trace: " << trace_out
              << ")\n";
  } else {
    std::cout << "UNANSWERED (rounds used: " << result.rounds_used
              << ", trace: " << trace_out << ")\n";
  }
  return kExitOk;
}

int cmd_eval(const CommonFlags& common, const std::string& dataset_path,
             const std::string& memory_root, const std::string& mode_name,
             std::optional<std::string> out_dir, std::optional<int> workers,
             bool store_traces) {
  const aop::RunConfig config = common.resolve();
  const std::vector<aop::QuestionRecord> dataset = aop::load_dataset(dataset_path);
  if (dataset.empty()) {
    std::cerr << "dataset is empty: " << dataset_path << "\n";
    return kExitUsage;
  }

  aop::EvalOptions options;
  if (mode_name == "agent") {
    options.mode = aop::EvalMode::Agent;
  } else if (mode_name == "direct") {
    options.mode = aop::EvalMode::Direct;
  } else {
    std::cerr << "mode must be \"agent\" or \"direct\"\n";
    return kExitUsage;
  }
  options.workers = workers.value_or(config.eval_workers);
  options.memory_root = memory_root;
  options.loop = config.loop;
  options.bm25 = config.bm25;
  options.prompts = common.prompts();

  const std::string out = out_dir.value_or(config.eval_output_dir);
  fs::create_directories(out);
  if (store_traces) options.trace_dir = (fs::path(out) / "traces").string();
  if (options.trace_dir) fs::create_directories(*options.trace_dir);

  std::unique_ptr<aop::ChatBackend> chat = make_chat_backend(config);
  const auto resolver = [&config](const aop::HierarchicalMemory& memory) {
    return resolve_embedder(memory, config);
  };
  const std::vector<aop::PredictionRecord> predictions =
      aop::run_eval(dataset, *chat, resolver, options);

  const std::string predictions_path = (fs::path(out) / "predictions.jsonl").string();
  aop::store_predictions(predictions, predictions_path);

  const aop::BreakdownReport report = aop::score(dataset, predictions);
  const std::string report_path = (fs::path(out) / "report.json").string();
  {
    std::ofstream rp(report_path);
    rp << report.to_json().dump(2) << '\n';
  }
  std::cout << report.to_table();

  std::vector<std::string> failures;
  for (const aop::PredictionRecord& p : predictions) {
    if (!p.predicted) failures.push_back(p.id);
  }
  if (!failures.empty()) {
    std::cout << "unanswered (" << failures.size() << "):";
    for (const std::string& id : failures) std::cout << " " << id;
    std::cout << "\n";
  }
  std::cout << "predictions: " << predictions_path << "\nreport: " << report_path << "\n";
  return kExitOk;
}

int cmd_score(const std::string& dataset_path, const std::string& predictions_path,
              const std::string& out_path) {
  const std::vector<aop::QuestionRecord> dataset = aop::load_dataset(dataset_path);
  const std::vector<aop::PredictionRecord> predictions =
      aop::load_predictions(predictions_path);
  const aop::BreakdownReport report = aop::score(dataset, predictions);
  std::cout << report.to_table();
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << report.to_json().dump(2) << '\n';
  }
  return kExitOk;
}

int cmd_stats(const std::string& dataset_path, bool as_json) {
  const std::vector<aop::QuestionRecord> dataset = aop::load_dataset(dataset_path);
  const aop::DatasetStats stats = aop::dataset_stats(dataset);
  if (as_json) {
    std::cout << stats.to_json().dump(2) << "\n";
  } else {
    std::cout << stats.to_table();
  }
  return kExitOk;
}

int cmd_inspect(const CommonFlags& common, const std::string& memory_dir) {
  const aop::RunConfig config = common.resolve();
  json out;
  out["effective_config"] = config.to_json();
  if (!memory_dir.empty()) {
    const aop::HierarchicalMemory memory = aop::load_memory(memory_dir);
    out["memory"] = {{"video_id", memory.video_id},
                     {"duration", memory.duration},
                     {"n_mid", memory.mid_count()},
                     {"n_fine", memory.fine_count()},
                     {"embedding_dim", memory.embedding_dim},
                     {"global_description_head", memory.global_description.substr(0, 160)}};
  }
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"active-perception video QA runtime"};
  app.require_subcommand(1);

  auto* build = app.add_subcommand("build-memory", "construct a memory from a transcript");
  CommonFlags build_common;
  build_common.attach(build);
  std::string video_id, transcript, out_dir;
  double duration = 0.0;
  bool force = false;
  std::optional<int> build_workers;
  build->add_option("--video-id", video_id, "video identifier")->required();
  build->add_option("--transcript", transcript, "transcript JSON path")->required();
  build->add_option("--duration", duration, "video duration in seconds")->required();
  build->add_option("--out", out_dir, "output memory directory")->required();
  build->add_flag("--force", force, "overwrite an existing memory directory");
  build->add_option("--workers", build_workers, "annotation worker count");

  auto* query = app.add_subcommand("query", "run one observation tool against a memory");
  CommonFlags query_common;
  query_common.attach(query);
  std::string q_memory, q_tool, q_text;
  int q_k = 4, q_anchor = 0, q_radius = 1;
  double q_lambda = 0.5;
  query->add_option("--memory", q_memory, "memory directory")->required();
  query->add_option("--tool", q_tool, "description|keyword|keypoint|neighbor|fine")
      ->required();
  query->add_option("--query", q_text, "query text (search tools)");
  query->add_option("-k,--k", q_k, "result count");
  query->add_option("--lambda", q_lambda, "dense/sparse mix (keypoint)");
  query->add_option("--anchor", q_anchor, "anchor segment (neighbor/fine)");
  query->add_option("--radius", q_radius, "neighbor radius (1-3)");

  auto* answer = app.add_subcommand("answer", "answer one question over a memory");
  CommonFlags answer_common;
  answer_common.attach(answer);
  std::string a_memory, a_question, a_trace = "trace.json";
  std::vector<std::string> a_options;
  std::optional<int> a_max_rounds;
  answer->add_option("--memory", a_memory, "memory directory")->required();
  answer->add_option("--question", a_question, "question text")->required();
  answer->add_option("--option", a_options, "answer option as \"A:text\" (repeat)")
      ->required();
  answer->add_option("--trace-out", a_trace, "trace output path");
  answer->add_option("--max-rounds", a_max_rounds, "observation round budget");

  auto* eval = app.add_subcommand("eval", "run a benchmark sweep");
  CommonFlags eval_common;
  eval_common.attach(eval);
  std::string e_dataset, e_root, e_mode = "agent";
  std::optional<std::string> e_out;
  std::optional<int> e_workers;
  bool e_traces = false;
  eval->add_option("--dataset", e_dataset, "dataset JSONL path")->required();
  eval->add_option("--memory-root", e_root, "directory of per-video memories")->required();
  eval->add_option("--mode", e_mode, "agent or direct");
  eval->add_option("--out", e_out, "output directory");
  eval->add_option("--workers", e_workers, "parallel question workers");
  eval->add_flag("--traces", e_traces, "store per-question traces");

  auto* score_cmd = app.add_subcommand("score", "score stored predictions");
  std::string s_dataset, s_predictions, s_out;
  score_cmd->add_option("--dataset", s_dataset, "dataset JSONL path")->required();
  score_cmd->add_option("--predictions", s_predictions, "predictions JSONL path")
      ->required();
  score_cmd->add_option("--out", s_out, "report JSON output path");

  auto* stats_cmd = app.add_subcommand("stats", "dataset statistics");
  std::string st_dataset;
  bool st_json = false;
  stats_cmd->add_option("--dataset", st_dataset, "dataset JSONL path")->required();
  stats_cmd->add_flag("--json", st_json, "emit JSON instead of a table");

  auto* inspect = app.add_subcommand("inspect", "print the effective configuration");
  CommonFlags inspect_common;
  inspect_common.attach(inspect);
  std::string i_memory;
  inspect->add_option("--memory", i_memory, "also summarize a memory directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (build->parsed()) {
      return cmd_build_memory(build_common, video_id, transcript, duration, out_dir, force,
                              build_workers);
    }
    if (query->parsed()) {
      return cmd_query(query_common, q_memory, q_tool, q_text, q_k, q_lambda, q_anchor,
                       q_radius);
    }
    if (answer->parsed()) {
      return cmd_answer(answer_common, a_memory, a_question, a_options, a_trace,
                        a_max_rounds);
    }
    if (eval->parsed()) {
      return cmd_eval(eval_common, e_dataset, e_root, e_mode, e_out, e_workers, e_traces);
    }
    if (score_cmd->parsed()) return cmd_score(s_dataset, s_predictions, s_out);
    if (stats_cmd->parsed()) return cmd_stats(st_dataset, st_json);
    if (inspect->parsed()) return cmd_inspect(inspect_common, i_memory);
  } catch (const aop::Error& e) {
    std::cerr << "error (" << aop::to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSystemic;
  }
  return kExitUsage;
}
