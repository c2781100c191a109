#include "aop/agent.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "aop/errors.hpp"
#include "aop/structured.hpp"

namespace aop {

namespace {

using nlohmann::json;

std::string format_span(Seconds start, Seconds end) {
  std::ostringstream os;
  os << start << "s-" << end << "s";
  return os.str();
}

json tool_call_to_json(const ToolCall& call) {
  json j;
  j["tool"] = to_string(call.tool);
  switch (call.tool) {
    case ToolKind::Description:
    case ToolKind::Keyword:
      j["query"] = call.query;
      j["k"] = call.k;
      break;
    case ToolKind::Keypoint:
      j["query"] = call.query;
      j["k"] = call.k;
      j["lambda"] = call.lambda;
      break;
    case ToolKind::Neighbor:
      j["anchor_index"] = call.anchor_index;
      j["radius"] = call.radius;
      break;
    case ToolKind::Fine:
      j["anchor_index"] = call.anchor_index;
      break;
  }
  return j;
}

std::string tool_call_to_text(const ToolCall& call) {
  const json j = tool_call_to_json(call);
  std::string args;
  for (const auto& [key, value] : j.items()) {
    if (key == "tool") continue;
    if (!args.empty()) args += ", ";
    args += key + "=" + value.dump();
  }
  return std::string(to_string(call.tool)) + "(" + args + ")";
}

json observation_to_json(const Observation& obs) {
  json j;
  j["tool"] = to_string(obs.tool);
  if (!obs.query.empty()) j["query"] = obs.query;
  if (obs.tool == ToolKind::Neighbor || obs.tool == ToolKind::Fine) {
    j["anchor_index"] = obs.anchor_index;
  }
  if (obs.anchor_unobserved) j["anchor_unobserved"] = true;
  j["segments"] = json::array();
  for (const ScoredSegment& seg : obs.segments) {
    j["segments"].push_back({{"segment_index", seg.segment_index},
                             {"score", seg.score},
                             {"already_observed", seg.already_observed},
                             {"matched_evidence", seg.matched_evidence}});
  }
  if (!obs.clips.empty()) {
    j["clips"] = json::array();
    for (const FineClip& clip : obs.clips) {
      j["clips"].push_back({{"index", clip.index},
                            {"start", clip.start},
                            {"end", clip.end},
                            {"is_gap", clip.is_gap},
                            {"text", clip.text}});
    }
  }
  return j;
}

// Strict arg schema per tool: required fields must be present, fields from
// other tools are rejected, unknown keys are rejected.
ToolCall parse_tool_call(const json& j, const LoopConfig& config) {
  if (!j.contains("tool") || !j["tool"].is_string()) {
    raise(ErrorKind::Parse, "plan block needs a string \"tool\" field");
  }
  ToolCall call;
  try {
    call.tool = tool_from_string(j["tool"].get<std::string>());
  } catch (const Error& e) {
    raise(ErrorKind::Parse, e.what());
  }
  call.k = config.default_k;
  call.lambda = config.default_lambda;

  const json args = j.value("args", json::object());
  if (!args.is_object()) raise(ErrorKind::Parse, "plan \"args\" must be an object");

  const bool is_query_tool = call.tool == ToolKind::Description ||
                             call.tool == ToolKind::Keyword ||
                             call.tool == ToolKind::Keypoint;
  for (const auto& [key, value] : args.items()) {
    if (key == "query" && is_query_tool && value.is_string()) {
      call.query = value.get<std::string>();
    } else if (key == "k" && is_query_tool && value.is_number_integer()) {
      call.k = value.get<int>();
    } else if (key == "lambda" && call.tool == ToolKind::Keypoint && value.is_number()) {
      call.lambda = value.get<double>();
    } else if (key == "anchor_index" &&
               (call.tool == ToolKind::Neighbor || call.tool == ToolKind::Fine) &&
               value.is_number_integer()) {
      call.anchor_index = value.get<int>();
    } else if (key == "radius" && call.tool == ToolKind::Neighbor &&
               value.is_number_integer()) {
      call.radius = value.get<int>();
    } else {
      raise(ErrorKind::Parse, "plan arg \"" + key + "\" is not valid for tool " +
                                  to_string(call.tool));
    }
  }
  if (is_query_tool && call.query.empty()) {
    raise(ErrorKind::Parse, std::string("tool ") + to_string(call.tool) +
                                " requires a non-empty \"query\" arg");
  }
  if ((call.tool == ToolKind::Neighbor || call.tool == ToolKind::Fine) &&
      call.anchor_index <= 0) {
    raise(ErrorKind::Parse, std::string("tool ") + to_string(call.tool) +
                                " requires a positive \"anchor_index\" arg");
  }
  if (call.k <= 0) raise(ErrorKind::Parse, "plan arg \"k\" must be positive");
  if (call.lambda < 0.0 || call.lambda > 1.0) {
    raise(ErrorKind::Parse, "plan arg \"lambda\" must lie in [0, 1]");
  }
  return call;
}

ReflectorVerdict parse_verdict(const json& j, const Observation& observation) {
  ReflectorVerdict verdict;
  if (!j.contains("segment_scores") || !j["segment_scores"].is_array()) {
    raise(ErrorKind::Parse, "verdict needs a \"segment_scores\" array");
  }
  std::set<int> scored;
  for (const json& item : j["segment_scores"]) {
    int segment = 0;
    int score = 0;
    if (item.is_object() && item.contains("segment") && item.contains("score") &&
        item["segment"].is_number_integer() && item["score"].is_number_integer()) {
      segment = item["segment"].get<int>();
      score = item["score"].get<int>();
    } else if (item.is_array() && item.size() == 2 && item[0].is_number_integer() &&
               item[1].is_number_integer()) {
      segment = item[0].get<int>();
      score = item[1].get<int>();
    } else {
      raise(ErrorKind::Parse, "verdict segment_scores entries must be {segment, score}");
    }
    if (score < 0 || score > 10) {
      raise(ErrorKind::Parse, "verdict score outside [0, 10] for segment " +
                                  std::to_string(segment));
    }
    if (!scored.insert(segment).second) {
      raise(ErrorKind::Parse, "verdict scores segment " + std::to_string(segment) +
                                  " more than once");
    }
    verdict.segment_scores.emplace_back(segment, score);
  }
  for (const ScoredSegment& seg : observation.segments) {
    if (scored.count(seg.segment_index) == 0) {
      raise(ErrorKind::Parse, "verdict omits observed segment " +
                                  std::to_string(seg.segment_index));
    }
  }
  verdict.reflection_text = j.value("reflection", std::string{});
  if (!j.contains("decision") || !j["decision"].is_string()) {
    raise(ErrorKind::Parse, "verdict needs a string \"decision\" field");
  }
  const std::string decision = j["decision"].get<std::string>();
  if (decision == "continue") {
    verdict.decision = LoopDecision::Continue;
  } else if (decision == "answer") {
    verdict.decision = LoopDecision::Answer;
  } else {
    raise(ErrorKind::Parse, "verdict decision must be \"continue\" or \"answer\"");
  }
  return verdict;
}

}  // namespace

void LoopConfig::validate() const {
  if (max_rounds < 1) raise(ErrorKind::Config, "max_rounds must be >= 1");
  if (evidence_top_m_for_reasoner < 1) {
    raise(ErrorKind::Config, "evidence_top_m_for_reasoner must be >= 1");
  }
  if (parse_retries < 0) raise(ErrorKind::Config, "parse_retries must be >= 0");
  if (default_k < 1) raise(ErrorKind::Config, "default_k must be >= 1");
  if (default_lambda < 0.0 || default_lambda > 1.0) {
    raise(ErrorKind::Config, "default_lambda must lie in [0, 1]");
  }
  if (planner_temperature < 0.0 || planner_temperature > 2.0) {
    raise(ErrorKind::Config, "planner_temperature must lie in [0, 2]");
  }
}

void EvidenceMemory::apply(const Observation& observation, const ReflectorVerdict& verdict,
                           int round, const HierarchicalMemory& memory) {
  for (const ScoredSegment& seg : observation.segments) {
    auto [it, inserted] = entries_.try_emplace(seg.segment_index);
    EvidenceEntry& entry = it->second;
    if (inserted) {
      entry.segment_index = seg.segment_index;
      entry.first_round_seen = round;
      const std::size_t ordinal = static_cast<std::size_t>(seg.segment_index - 1);
      if (ordinal < memory.mid_segments.size()) {
        const MidSegment& mid = memory.mid_segments[ordinal];
        entry.start = mid.start;
        entry.end = mid.end;
        entry.transcript = mid.transcript;
        entry.media_ref = mid.media_ref;
      }
      if (ordinal < memory.annotations.size()) {
        const SegmentAnnotation& ann = memory.annotations[ordinal];
        entry.description = ann.description;
        entry.keywords = ann.keywords;
        entry.visual_keypoints = ann.visual_keypoints;
        entry.audio_keypoints = ann.audio_keypoints;
      }
    }
    entry.best_tool_score = std::max(entry.best_tool_score, seg.score);
    for (const std::string& evidence : seg.matched_evidence) {
      if (std::find(entry.matched_evidence.begin(), entry.matched_evidence.end(),
                    evidence) == entry.matched_evidence.end()) {
        entry.matched_evidence.push_back(evidence);
      }
    }
  }
  for (const auto& [segment, score] : verdict.segment_scores) {
    auto it = entries_.find(segment);
    if (it == entries_.end()) continue;  // never scored into existence unseen
    it->second.best_reflector_score = std::max(it->second.best_reflector_score, score);
  }
}

std::set<int> EvidenceMemory::observed_indices() const {
  std::set<int> out;
  for (const auto& [index, _] : entries_) out.insert(index);
  return out;
}

std::vector<const EvidenceEntry*> EvidenceMemory::ranked() const {
  std::vector<const EvidenceEntry*> out;
  out.reserve(entries_.size());
  for (const auto& [_, entry] : entries_) out.push_back(&entry);
  std::sort(out.begin(), out.end(), [](const EvidenceEntry* a, const EvidenceEntry* b) {
    if (a->best_reflector_score != b->best_reflector_score) {
      return a->best_reflector_score > b->best_reflector_score;
    }
    if (a->best_tool_score != b->best_tool_score) {
      return a->best_tool_score > b->best_tool_score;
    }
    return a->segment_index < b->segment_index;
  });
  return out;
}

std::optional<char> extract_option_letter(const std::string& text,
                                          const OptionList& options) {
  auto is_option = [&](char c) {
    const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return std::any_of(options.begin(), options.end(),
                       [&](const auto& o) { return o.first == upper; });
  };

  // Primary pattern: the last "ANSWER: X" (case-insensitive keyword,
  // optional parentheses around the letter).
  std::optional<char> primary;
  for (std::size_t pos = 0; pos + 6 <= text.size(); ++pos) {
    bool keyword = true;
    static const char kAnswer[] = "ANSWER";
    for (std::size_t i = 0; i < 6; ++i) {
      if (std::toupper(static_cast<unsigned char>(text[pos + i])) != kAnswer[i]) {
        keyword = false;
        break;
      }
    }
    if (!keyword) continue;
    std::size_t cursor = pos + 6;
    while (cursor < text.size() && text[cursor] == ' ') ++cursor;
    if (cursor >= text.size() || text[cursor] != ':') continue;
    ++cursor;
    while (cursor < text.size() && (text[cursor] == ' ' || text[cursor] == '(' ||
                                    text[cursor] == '*' || text[cursor] == '[')) {
      ++cursor;
    }
    if (cursor < text.size() && is_option(text[cursor])) {
      const char next = cursor + 1 < text.size() ? text[cursor + 1] : ' ';
      if (!std::isalnum(static_cast<unsigned char>(next))) {
        primary = static_cast<char>(std::toupper(static_cast<unsigned char>(text[cursor])));
      }
    }
  }
  if (primary) return primary;

  // Fallback: the last standalone uppercase option letter.
  std::optional<char> fallback;
  for (std::size_t pos = 0; pos < text.size(); ++pos) {
    const char c = text[pos];
    if (!std::isupper(static_cast<unsigned char>(c)) || !is_option(c)) continue;
    const bool left_ok =
        pos == 0 || !std::isalnum(static_cast<unsigned char>(text[pos - 1]));
    const bool right_ok = pos + 1 >= text.size() ||
                          !std::isalnum(static_cast<unsigned char>(text[pos + 1]));
    if (left_ok && right_ok) fallback = c;
  }
  return fallback;
}

AgentLoop::AgentLoop(const ToolEngine& tools, ChatBackend& chat, PromptLibrary prompts,
                     LoopConfig config)
    : tools_(&tools), chat_(&chat), prompts_(std::move(prompts)), config_(config) {
  config_.validate();
}

ChatRequest AgentLoop::make_request(std::string prompt,
                                    std::vector<MediaAttachment> attachments) const {
  ChatRequest request;
  request.temperature = config_.planner_temperature;
  request.max_output_tokens = config_.max_output_tokens;
  request.messages.push_back({"user", std::move(prompt), std::move(attachments)});
  return request;
}

std::string AgentLoop::chat_logged(const std::string& stage, const ChatRequest& request,
                                   nlohmann::json* trace) {
  const std::string response = chat_->chat(request);
  if (trace) {
    (*trace)["exchanges"].push_back({{"stage", stage},
                                     {"prompt", request.concatenated_text()},
                                     {"response", response}});
  }
  return response;
}

std::string AgentLoop::render_working_memory(const WorkingMemory& working) const {
  if (working.past_plans.empty() && working.reflections.empty() &&
      working.future_plan.empty()) {
    return "Working memory: no observations yet.";
  }
  std::ostringstream os;
  os << "Working memory:\n";
  if (!working.past_plans.empty()) {
    os << "Past observation rounds:\n";
    for (const PlanStep& step : working.past_plans) {
      os << "  Round " << step.round << ": " << tool_call_to_text(step.call);
      if (!step.rationale.empty()) os << " -- " << step.rationale;
      if (step.fallback) os << " [fallback]";
      os << "\n";
    }
  }
  if (!working.reflections.empty()) {
    os << "Reflections:\n";
    for (std::size_t i = 0; i < working.reflections.size(); ++i) {
      os << "  " << (i + 1) << ". " << working.reflections[i] << "\n";
    }
  }
  if (!working.future_plan.empty()) {
    os << "Future plan: " << working.future_plan << "\n";
  }
  return os.str();
}

std::string AgentLoop::render_observation(const Observation& observation) const {
  const HierarchicalMemory& memory = tools_->memory();
  std::ostringstream os;
  if (observation.segments.empty() && observation.clips.empty()) {
    os << "(no segments returned)\n";
  }
  for (const ScoredSegment& seg : observation.segments) {
    const std::size_t ordinal = static_cast<std::size_t>(seg.segment_index - 1);
    os << "[segment " << seg.segment_index;
    if (ordinal < memory.mid_segments.size()) {
      const MidSegment& mid = memory.mid_segments[ordinal];
      os << " | " << format_span(mid.start, mid.end);
    }
    os << " | " << to_string(seg.tool) << " score " << seg.score;
    if (seg.already_observed) os << " | seen before";
    os << "]\n";
    if (ordinal < memory.annotations.size()) {
      const SegmentAnnotation& ann = memory.annotations[ordinal];
      os << "  description: " << ann.description << "\n";
      if (!ann.keywords.empty()) {
        os << "  keywords:";
        for (const std::string& kw : ann.keywords) os << " " << kw << ";";
        os << "\n";
      }
      for (const std::string& kp : ann.visual_keypoints) {
        os << "  visual: " << kp << "\n";
      }
      for (const std::string& kp : ann.audio_keypoints) {
        os << "  audio: " << kp << "\n";
      }
    }
    if (ordinal < memory.mid_segments.size() &&
        !memory.mid_segments[ordinal].transcript.empty()) {
      os << "  transcript: " << memory.mid_segments[ordinal].transcript << "\n";
    }
  }
  for (const FineClip& clip : observation.clips) {
    os << "  [clip " << clip.index << " | " << format_span(clip.start, clip.end) << "] "
       << (clip.is_gap ? "(non-speech span)" : clip.text) << "\n";
  }
  return os.str();
}

std::string AgentLoop::render_evidence(const EvidenceMemory& evidence,
                                       std::size_t limit) const {
  if (evidence.empty()) return "(no evidence collected yet)\n";
  std::ostringstream os;
  std::vector<const EvidenceEntry*> ranked = evidence.ranked();
  if (ranked.size() > limit) ranked.resize(limit);
  for (const EvidenceEntry* entry : ranked) {
    os << "[segment " << entry->segment_index << " | "
       << format_span(entry->start, entry->end) << " | reflector "
       << entry->best_reflector_score << " | tool " << entry->best_tool_score << "]\n";
    if (!entry->description.empty()) os << "  description: " << entry->description << "\n";
    if (!entry->transcript.empty()) os << "  transcript: " << entry->transcript << "\n";
  }
  return os.str();
}

PlanStep AgentLoop::plan(const std::string& question, const WorkingMemory& working,
                         int round, nlohmann::json* trace) {
  const std::string prompt = PromptLibrary::render(
      prompts_.get("planner"),
      {{"question", question},
       {"global_description", tools_->memory().global_description},
       {"working_memory", render_working_memory(working)},
       {"tools", prompts_.get("tools")}});

  PlanStep step;
  step.round = round;

  ChatRequest request = make_request(prompt);
  std::string parse_error;
  for (int attempt = 0; attempt <= config_.parse_retries; ++attempt) {
    const std::string raw = chat_logged("plan", request, trace);
    try {
      const json block = extract_fenced_json(raw);
      step.call = parse_tool_call(block, config_);
      step.rationale = block.value("rationale", std::string{});
      step.future_plan = block.value("future_plan", std::string{});
      return step;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Parse) throw;
      parse_error = e.what();
      request.messages.push_back({"assistant", raw, {}});
      request.messages.push_back(
          {"user",
           "Your previous reply could not be parsed: " + parse_error +
               "\nReply again with exactly one fenced JSON block in the required format.",
           {}});
    }
  }

  // Deterministic fallback: a description search over the question itself.
  step.call = ToolCall{};
  step.call.tool = ToolKind::Description;
  step.call.query = question;
  step.call.k = config_.default_k;
  step.call.lambda = config_.default_lambda;
  step.rationale = "fallback after unparseable planner output: " + parse_error;
  step.future_plan.clear();
  step.fallback = true;
  return step;
}

ReflectorVerdict AgentLoop::reflect(const std::string& question,
                                    const Observation& observation,
                                    const EvidenceMemory& evidence, const PlanStep& current,
                                    nlohmann::json* trace) {
  std::vector<MediaAttachment> attachments;
  if (config_.evidence_mode == EvidenceMode::MediaAttach) {
    const HierarchicalMemory& memory = tools_->memory();
    for (const ScoredSegment& seg : observation.segments) {
      const std::size_t ordinal = static_cast<std::size_t>(seg.segment_index - 1);
      if (ordinal < memory.mid_segments.size() &&
          memory.mid_segments[ordinal].media_ref) {
        const MidSegment& mid = memory.mid_segments[ordinal];
        attachments.push_back({*mid.media_ref, mid.start, mid.end});
      }
    }
  }
  const std::string prompt = PromptLibrary::render(
      prompts_.get("reflector"),
      {{"question", question},
       {"current_plan", tool_call_to_text(current.call) +
                            (current.rationale.empty() ? "" : " -- " + current.rationale)},
       {"observation", render_observation(observation)},
       {"evidence",
        render_evidence(evidence,
                        static_cast<std::size_t>(config_.evidence_top_m_for_reasoner))}});

  ChatRequest request = make_request(prompt, std::move(attachments));
  for (int attempt = 0; attempt <= config_.parse_retries; ++attempt) {
    const std::string raw = chat_logged("reflect", request, trace);
    try {
      return parse_verdict(extract_fenced_json(raw), observation);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Parse) throw;
      request.messages.push_back({"assistant", raw, {}});
      request.messages.push_back(
          {"user",
           std::string("Your previous reply could not be parsed: ") + e.what() +
               "\nReply again with exactly one fenced JSON block in the required format.",
           {}});
    }
  }

  // Default verdict: every newly observed segment scores 5, keep observing.
  ReflectorVerdict verdict;
  for (const ScoredSegment& seg : observation.segments) {
    verdict.segment_scores.emplace_back(seg.segment_index, 5);
  }
  verdict.reflection_text = "reflector output unparseable; default applied";
  verdict.decision = LoopDecision::Continue;
  verdict.fallback = true;
  return verdict;
}

AnswerResult AgentLoop::reason(const std::string& question, const OptionList& options,
                               const EvidenceMemory& evidence, const WorkingMemory& working,
                               nlohmann::json& trace, int rounds_used) {
  // Top-m by rank, then presented in temporal order with timestamps.
  std::vector<const EvidenceEntry*> ranked = evidence.ranked();
  if (ranked.size() > static_cast<std::size_t>(config_.evidence_top_m_for_reasoner)) {
    ranked.resize(static_cast<std::size_t>(config_.evidence_top_m_for_reasoner));
  }
  std::sort(ranked.begin(), ranked.end(), [](const EvidenceEntry* a, const EvidenceEntry* b) {
    if (a->start != b->start) return a->start < b->start;
    return a->segment_index < b->segment_index;
  });

  std::ostringstream evidence_text;
  std::vector<MediaAttachment> attachments;
  if (ranked.empty()) {
    evidence_text << "(no evidence collected; answer from the overview)\n";
  }
  for (const EvidenceEntry* entry : ranked) {
    evidence_text << "[segment " << entry->segment_index << " | "
                  << format_span(entry->start, entry->end) << " | reflector "
                  << entry->best_reflector_score << "]\n";
    if (!entry->description.empty()) {
      evidence_text << "  description: " << entry->description << "\n";
    }
    if (!entry->keywords.empty()) {
      evidence_text << "  keywords:";
      for (const std::string& kw : entry->keywords) evidence_text << " " << kw << ";";
      evidence_text << "\n";
    }
    for (const std::string& kp : entry->visual_keypoints) {
      evidence_text << "  visual: " << kp << "\n";
    }
    for (const std::string& kp : entry->audio_keypoints) {
      evidence_text << "  audio: " << kp << "\n";
    }
    if (!entry->transcript.empty()) {
      evidence_text << "  transcript: " << entry->transcript << "\n";
    }
    if (config_.evidence_mode == EvidenceMode::MediaAttach && entry->media_ref) {
      attachments.push_back({*entry->media_ref, entry->start, entry->end});
    }
  }

  std::ostringstream options_text;
  for (const auto& [letter, text] : options) {
    options_text << letter << ". " << text << "\n";
  }

  const std::string prompt = PromptLibrary::render(
      prompts_.get("reasoner"),
      {{"question", question},
       {"options", options_text.str()},
       {"global_description", tools_->memory().global_description},
       {"working_memory", render_working_memory(working)},
       {"evidence", evidence_text.str()}});

  AnswerResult result;
  result.rounds_used = rounds_used;
  result.answer_text =
      chat_logged("reason", make_request(prompt, std::move(attachments)), &trace);
  result.extracted_option = extract_option_letter(result.answer_text, options);

  trace["answer_text"] = result.answer_text;
  trace["extracted_option"] =
      result.extracted_option ? json(std::string(1, *result.extracted_option)) : json(nullptr);
  trace["rounds_used"] = rounds_used;
  if (!result.extracted_option) {
    trace["flags"].push_back("no_answer_letter");
  }
  result.trace = std::move(trace);
  return result;
}

AnswerResult AgentLoop::run(const std::string& question, const OptionList& options) {
  json trace;
  trace["schema_version"] = "1";
  trace["question"] = question;
  trace["options"] = json::array();
  for (const auto& [letter, text] : options) {
    trace["options"].push_back({{"letter", std::string(1, letter)}, {"text", text}});
  }
  trace["config"] = {{"max_rounds", config_.max_rounds},
                     {"evidence_top_m_for_reasoner", config_.evidence_top_m_for_reasoner},
                     {"planner_temperature", config_.planner_temperature},
                     {"evidence_mode", config_.evidence_mode == EvidenceMode::TextOnly
                                           ? "text_only"
                                           : "media_attach"},
                     {"parse_retries", config_.parse_retries},
                     {"default_k", config_.default_k},
                     {"default_lambda", config_.default_lambda}};
  trace["exchanges"] = json::array();
  trace["rounds"] = json::array();
  trace["flags"] = json::array();

  WorkingMemory working;
  EvidenceMemory evidence;
  int rounds_used = 0;

  try {
    for (int round = 1; round <= config_.max_rounds; ++round) {
      rounds_used = round;
      json record;
      record["round"] = round;

      PlanStep step = plan(question, working, round, &trace);
      working.past_plans.push_back(step);
      working.future_plan = step.future_plan;
      record["plan"] = tool_call_to_json(step.call);
      record["rationale"] = step.rationale;
      record["future_plan"] = step.future_plan;
      if (step.fallback) {
        record["planner_fallback"] = true;
        trace["flags"].push_back("planner_fallback");
      }

      Observation observation;
      bool dispatched = false;
      try {
        observation = tools_->dispatch(step.call, evidence.observed_indices());
        dispatched = true;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Precondition && e.kind() != ErrorKind::Dispatch) throw;
        // Fed back to the planner through working memory.
        working.reflections.push_back(std::string("Observation failed: ") + e.what());
        record["dispatch_error"] = e.what();
        trace["flags"].push_back("dispatch_error");
      }

      if (dispatched) {
        record["observation"] = observation_to_json(observation);
        ReflectorVerdict verdict = reflect(question, observation, evidence, step, &trace);
        evidence.apply(observation, verdict, round, tools_->memory());
        working.reflections.push_back(verdict.reflection_text);
        json scores = json::array();
        for (const auto& [segment, score] : verdict.segment_scores) {
          scores.push_back({{"segment", segment}, {"score", score}});
        }
        record["verdict"] = {{"segment_scores", std::move(scores)},
                             {"reflection", verdict.reflection_text},
                             {"decision", verdict.decision == LoopDecision::Answer
                                              ? "answer"
                                              : "continue"}};
        if (verdict.fallback) {
          record["reflector_fallback"] = true;
          trace["flags"].push_back("reflector_fallback");
        }
        json snapshot = json::object();
        for (const auto& [index, entry] : evidence.entries()) {
          snapshot[std::to_string(index)] = {
              {"reflector", entry.best_reflector_score},
              {"tool", entry.best_tool_score}};
        }
        record["evidence_after"] = std::move(snapshot);
        trace["rounds"].push_back(std::move(record));
        if (verdict.decision == LoopDecision::Answer) break;
      } else {
        json snapshot = json::object();
        for (const auto& [index, entry] : evidence.entries()) {
          snapshot[std::to_string(index)] = {
              {"reflector", entry.best_reflector_score},
              {"tool", entry.best_tool_score}};
        }
        record["evidence_after"] = std::move(snapshot);
        trace["rounds"].push_back(std::move(record));
      }
    }
    return reason(question, options, evidence, working, trace, rounds_used);
  } catch (const Error& e) {
    AnswerResult result;
    result.ok = false;
    result.error = e.what();
    result.rounds_used = rounds_used;
    trace["error"] = e.what();
    trace["flags"].push_back("aborted");
    result.trace = std::move(trace);
    return result;
  }
}

}  // namespace aop
