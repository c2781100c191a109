#pragma once

#include <string>
#include <vector>

#include "aop/backends.hpp"
#include "aop/prompts.hpp"
#include "aop/types.hpp"

namespace aop {

struct BuildOptions {
  SegmentationConfig segmentation;
  double annotation_temperature = 1.0;  // diversity for descriptions
  int context_budget_tokens = 32768;
  int max_output_tokens = 1024;
  int annotation_workers = 1;  // bounded parallelism for annotate_segment
};

// One structured chat call (plus one corrective retry on malformed output)
// producing visual/audio keypoints, keywords and a description, then one
// embedding batch over the description and every keypoint.
SegmentAnnotation annotate_segment(const MidSegment& segment, ChatBackend& chat,
                                   EmbeddingBackend& embedder,
                                   const PromptLibrary& prompts,
                                   const BuildOptions& options);

// Single-paragraph global description from all segment descriptions in
// temporal order. When the concatenation exceeds 3/4 of the context budget,
// descriptions are summarized in chunks first, then synthesized.
std::string synthesize_global(const std::vector<std::string>& descriptions,
                              ChatBackend& chat, const PromptLibrary& prompts,
                              const BuildOptions& options);

// Full construction pipeline: sanitize -> segment (or uniform windows when
// there is no speech) -> gap-tile -> derive fine clips -> annotate each mid
// segment -> synthesize the global description. Any stage error aborts with
// a partial-progress report naming the segments annotated so far.
HierarchicalMemory build_memory(const std::string& video_id, Seconds duration,
                                std::vector<Utterance> utterances, ChatBackend& chat,
                                EmbeddingBackend& embedder, const PromptLibrary& prompts,
                                const BuildOptions& options,
                                std::vector<std::string>* warnings = nullptr);

}  // namespace aop
