#include "aop/prompts.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "aop/errors.hpp"

namespace aop {

namespace {

constexpr const char* kSegmentAnnotation =
    R"(You are annotating one segment of a long video from its audio, visuals and transcript.

Segment {segment_header}

Transcript:
{transcript}

Describe what happens in this segment. Reply with exactly one fenced JSON block:
```json
{
  "visual_keypoints": ["one sentence per distinct visual event"],
  "audio_keypoints": ["one sentence per distinct audio event"],
  "keywords": ["short retrieval terms"],
  "description": "one-sentence summary of the segment"
}
```
)";

constexpr const char* kGlobalSynthesis =
    R"(Combine the segment descriptions below, given in temporal order, into a single cohesive paragraph describing the whole video. Reply with the paragraph only.

{descriptions}
)";

constexpr const char* kGlobalChunk =
    R"(Summarize the following consecutive segment descriptions into one short paragraph that preserves temporal order and key events. Reply with the paragraph only.

{descriptions}
)";

constexpr const char* kPlanner =
    R"(You plan the next observation over an indexed video memory to help answer a question.

Question: {question}

Video overview:
{global_description}

{working_memory}

Available tools:
{tools}

Choose exactly one tool call for this round. Reply with one fenced JSON block:
```json
{
  "tool": "description|keyword|keypoint|neighbor|fine",
  "args": {"query": "...", "k": 4, "lambda": 0.5, "anchor_index": 1, "radius": 1},
  "rationale": "why this call helps",
  "future_plan": "what to inspect next if this is not enough"
}
```
Include only the args the chosen tool needs.
)";

constexpr const char* kReflector =
    R"(You judge whether the observations collected so far suffice to answer the question.

Question: {question}

Current plan: {current_plan}

Newly observed segments:
{observation}

Top-ranked evidence so far:
{evidence}

Score every newly observed segment from 0 (irrelevant) to 10 (decisive) and decide whether to continue observing or answer now. Reply with one fenced JSON block:
```json
{
  "segment_scores": [{"segment": 3, "score": 7}],
  "reflection": "what is still missing, or why the evidence suffices",
  "decision": "continue|answer"
}
```
)";

constexpr const char* kReasoner =
    R"(Answer the multiple-choice question using the evidence collected from the video.

Question: {question}
Options:
{options}

Video overview:
{global_description}

{working_memory}

Evidence segments (temporal order):
{evidence}

Reason briefly, then end your reply with a line of the form "ANSWER: X" where X is the option letter.
)";

constexpr const char* kDirectInference =
    R"(Answer the multiple-choice question about a video from its overview and transcript.

Question: {question}
Options:
{options}

Video overview:
{global_description}

Transcript:
{transcript}

End your reply with a line of the form "ANSWER: X" where X is the option letter.
)";

constexpr const char* kTools =
    R"(- description: semantic search over segment descriptions; best for high-level events, intentions and relations. args: {"query": string, "k": int}
- keyword: sparse lexical search over segment keywords; best for explicit entities, actions or spoken terms. args: {"query": string, "k": int}
- keypoint: hybrid dense+sparse search over visual and audio keypoints; lambda weights dense matching. args: {"query": string, "k": int, "lambda": number in [0,1]}
- neighbor: temporally adjacent segments of an already observed segment. args: {"anchor_index": int, "radius": int in [1,3]}
- fine: fine-grained clips contained in an observed segment, for local verification. args: {"anchor_index": int}
)";

}  // namespace

PromptLibrary PromptLibrary::defaults() {
  PromptLibrary lib;
  lib.templates_ = {
      {"segment_annotation", kSegmentAnnotation},
      {"global_synthesis", kGlobalSynthesis},
      {"global_chunk", kGlobalChunk},
      {"planner", kPlanner},
      {"reflector", kReflector},
      {"reasoner", kReasoner},
      {"direct_inference", kDirectInference},
      {"tools", kTools},
  };
  return lib;
}

PromptLibrary PromptLibrary::from_directory(const std::string& directory) {
  PromptLibrary lib = defaults();
  for (auto& [name, text] : lib.templates_) {
    const std::filesystem::path file = std::filesystem::path(directory) / (name + ".txt");
    std::ifstream in(file);
    if (!in) continue;
    std::ostringstream buffer;
    buffer << in.rdbuf();
    text = buffer.str();
  }
  return lib;
}

const std::string& PromptLibrary::get(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) {
    raise(ErrorKind::Config, "unknown prompt template: " + name);
  }
  return it->second;
}

void PromptLibrary::set(const std::string& name, std::string text) {
  templates_[name] = std::move(text);
}

std::vector<std::string> PromptLibrary::names() const {
  std::vector<std::string> out;
  out.reserve(templates_.size());
  for (const auto& [name, _] : templates_) out.push_back(name);
  return out;
}

std::string PromptLibrary::render(const std::string& tmpl,
                                  const std::map<std::string, std::string>& values) {
  std::string out = tmpl;
  for (const auto& [key, value] : values) {
    const std::string token = "{" + key + "}";
    std::size_t pos = 0;
    while ((pos = out.find(token, pos)) != std::string::npos) {
      out.replace(pos, token.size(), value);
      pos += value.size();
    }
  }
  return out;
}

}  // namespace aop
