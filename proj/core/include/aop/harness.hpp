#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aop/agent.hpp"
#include "aop/backends.hpp"
#include "aop/types.hpp"

namespace aop {

enum class ReasoningType { Causal, Referential, Hypothetical, Relational, Intent };
enum class DurationBucket { Short, Medium, Long };
enum class EvalMode { Agent, Direct };

const char* to_string(ReasoningType type);
const char* to_string(DurationBucket bucket);
ReasoningType reasoning_type_from_string(const std::string& name);

// short < 150 s, 150 s <= medium <= 300 s, long > 300 s.
DurationBucket bucket_for_duration(Seconds duration);

struct QuestionRecord {
  std::string id;
  std::string video_id;
  std::string question;
  OptionList options;
  char answer = 'A';
  ReasoningType reasoning_type = ReasoningType::Causal;
  int hops = 2;  // in {2, 3, 4}
  Seconds video_duration_s = 0.0;
};

struct PredictionRecord {
  std::string id;
  std::optional<char> predicted;
  int rounds_used = 0;
  std::optional<std::string> trace_ref;
};

struct BreakdownCell {
  int total = 0;
  int correct = 0;
  double accuracy_pct() const;  // 100 * correct / total, 0 when empty
};

struct BreakdownReport {
  BreakdownCell overall;
  std::map<ReasoningType, BreakdownCell> by_type;
  std::map<DurationBucket, BreakdownCell> by_bucket;
  std::map<int, BreakdownCell> by_hops;

  std::string to_table() const;
  nlohmann::json to_json() const;
};

struct DatasetStats {
  int total = 0;
  std::map<ReasoningType, int> by_type;
  std::map<int, int> by_hops;
  std::map<DurationBucket, int> by_bucket;
  double mean_hops = 0.0;      // report at 2 decimals
  double mean_duration = 0.0;  // report at 2 decimals

  std::string to_table() const;
  nlohmann::json to_json() const;
};

// Formats a ratio as a percentage with two decimals, e.g. 274/519 -> "52.79".
std::string format_pct(int correct, int total);

// Line-delimited JSON records with the QuestionRecord fields. Rejects
// duplicate ids and schema violations, naming the line and field.
std::vector<QuestionRecord> load_dataset(const std::string& path);

std::vector<PredictionRecord> load_predictions(const std::string& path);
void store_predictions(const std::vector<PredictionRecord>& predictions,
                       const std::string& path);

// Resolves the embedding backend to use for querying a loaded memory
// (typically from memory.embedder_info).
using EmbedderResolver =
    std::function<std::shared_ptr<EmbeddingBackend>(const HierarchicalMemory&)>;

struct EvalOptions {
  EvalMode mode = EvalMode::Agent;
  int workers = 1;
  std::string memory_root;                // one directory per video_id
  std::optional<std::string> trace_dir;   // per-question trace files when set
  LoopConfig loop;
  Bm25Params bm25;
  PromptLibrary prompts = PromptLibrary::defaults();
};

// Runs the agent loop (or one direct-inference call) per question.
// Per-question failures yield predicted = absent and never abort the sweep;
// the result order matches the dataset order for any worker count.
std::vector<PredictionRecord> run_eval(const std::vector<QuestionRecord>& dataset,
                                       ChatBackend& chat, const EmbedderResolver& embedders,
                                       const EvalOptions& options);

// Accuracy breakdowns with absent predictions scored as incorrect.
BreakdownReport score(const std::vector<QuestionRecord>& dataset,
                      const std::vector<PredictionRecord>& predictions);

DatasetStats dataset_stats(const std::vector<QuestionRecord>& dataset);

}  // namespace aop
