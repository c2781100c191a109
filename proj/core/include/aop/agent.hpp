#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "aop/backends.hpp"
#include "aop/prompts.hpp"
#include "aop/retrieval.hpp"
#include "aop/types.hpp"

namespace aop {

enum class EvidenceMode { TextOnly, MediaAttach };
enum class LoopDecision { Continue, Answer };

struct PlanStep {
  int round = 0;
  ToolCall call;
  std::string rationale;
  std::string future_plan;  // what the planner intends to inspect next
  bool fallback = false;    // planner output unparseable; deterministic fallback used
};

// Reasoning state carried across observation rounds: past plans, the
// forward-looking plan and reflection feedback. Append-only.
struct WorkingMemory {
  std::vector<PlanStep> past_plans;
  std::string future_plan;
  std::vector<std::string> reflections;
};

struct ReflectorVerdict {
  std::vector<std::pair<int, int>> segment_scores;  // (segment index, 0-10)
  std::string reflection_text;
  LoopDecision decision = LoopDecision::Continue;
  bool fallback = false;  // unparseable after retry; default verdict applied
};

struct EvidenceEntry {
  int segment_index = 0;
  int best_reflector_score = 0;
  double best_tool_score = 0.0;
  int first_round_seen = 0;
  std::vector<std::string> matched_evidence;
  // Presentation snapshot taken when first observed.
  Seconds start = 0.0;
  Seconds end = 0.0;
  std::string transcript;
  std::string description;
  std::vector<std::string> keywords;
  std::vector<std::string> visual_keypoints;
  std::vector<std::string> audio_keypoints;
  std::optional<std::string> media_ref;
};

// Ranked, deduplicated store of observed segments. Entries are never
// removed; per-segment scores only increase (max-merge).
class EvidenceMemory {
 public:
  // Inserts or merges every segment of the observation, applying the
  // verdict's scores (entries absent from the verdict keep their scores).
  void apply(const Observation& observation, const ReflectorVerdict& verdict, int round,
             const HierarchicalMemory& memory);

  const std::map<int, EvidenceEntry>& entries() const { return entries_; }
  std::set<int> observed_indices() const;

  // Ranking key: reflector score desc, tool score desc, index asc.
  std::vector<const EvidenceEntry*> ranked() const;

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<int, EvidenceEntry> entries_;
};

struct LoopConfig {
  int max_rounds = 3;
  int evidence_top_m_for_reasoner = 8;
  double planner_temperature = 0.2;  // all loop calls default to this
  EvidenceMode evidence_mode = EvidenceMode::TextOnly;
  int parse_retries = 1;
  int default_k = 4;
  double default_lambda = 0.5;
  int max_output_tokens = 1024;

  void validate() const;  // max_rounds >= 1
};

struct AnswerResult {
  std::string answer_text;
  std::optional<char> extracted_option;
  int rounds_used = 0;
  nlohmann::json trace;  // replayable log of every exchange
  bool ok = true;
  std::string error;
};

using OptionList = std::vector<std::pair<char, std::string>>;

// Extracts the chosen option letter: the last "ANSWER: X" match wins; the
// fallback is the last standalone option letter in the text.
std::optional<char> extract_option_letter(const std::string& text,
                                          const OptionList& options);

// The observe-reflect-replan loop: a planner picks one tool call per round,
// the tool engine observes, a reflector scores the observation and decides
// continuation, and a reasoner answers from the accumulated evidence.
class AgentLoop {
 public:
  AgentLoop(const ToolEngine& tools, ChatBackend& chat, PromptLibrary prompts,
            LoopConfig config);

  AnswerResult run(const std::string& question, const OptionList& options);

  // Individual steps, exposed for tests. Each records its exchanges into
  // `trace` ("exchanges" array) when provided.
  PlanStep plan(const std::string& question, const WorkingMemory& working, int round,
                nlohmann::json* trace);
  ReflectorVerdict reflect(const std::string& question, const Observation& observation,
                           const EvidenceMemory& evidence, const PlanStep& current,
                           nlohmann::json* trace);
  // Consumes `trace` into the result on success; leaves it intact when the
  // backend call throws, so callers can still report the partial trace.
  AnswerResult reason(const std::string& question, const OptionList& options,
                      const EvidenceMemory& evidence, const WorkingMemory& working,
                      nlohmann::json& trace, int rounds_used);

  // Serialized prompt fragments, exposed so tests can pin their content.
  std::string render_working_memory(const WorkingMemory& working) const;
  std::string render_observation(const Observation& observation) const;
  std::string render_evidence(const EvidenceMemory& evidence, std::size_t limit) const;

  const LoopConfig& config() const { return config_; }

 private:
  std::string chat_logged(const std::string& stage, const ChatRequest& request,
                          nlohmann::json* trace);
  ChatRequest make_request(std::string prompt,
                           std::vector<MediaAttachment> attachments = {}) const;

  const ToolEngine* tools_;
  ChatBackend* chat_;
  PromptLibrary prompts_;
  LoopConfig config_;
};

}  // namespace aop
