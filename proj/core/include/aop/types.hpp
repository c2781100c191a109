#pragma once

#include <optional>
#include <string>
#include <vector>

namespace aop {

// All time values are seconds from video start.
using Seconds = double;

struct Utterance {
  Seconds start = 0.0;
  Seconds end = 0.0;
  std::string text;
  bool is_gap = false;  // synthetic filler for non-speech spans; text empty
};

// Finest observation granularity: one clip per utterance plus synthetic gap
// clips covering long non-speech spans.
struct FineClip {
  int index = 0;  // 1-based, contiguous
  Seconds start = 0.0;
  Seconds end = 0.0;
  std::string text;
  bool is_gap = false;
};

// Unit of retrieval and annotation. Boundaries are gap-tiled after
// construction so the union of segments covers [0, duration].
struct MidSegment {
  int index = 0;  // 1-based, contiguous
  Seconds start = 0.0;
  Seconds end = 0.0;
  std::string transcript;
  std::optional<std::string> media_ref;  // relative path under the memory dir
  std::vector<int> fine_clip_indices;    // clips owned by midpoint containment
};

struct SegmentAnnotation {
  int segment_index = 0;
  std::vector<std::string> visual_keypoints;
  std::vector<std::string> audio_keypoints;
  std::vector<std::string> keywords;
  std::string description;
  std::vector<double> embedding_desc;  // unit L2 norm
  // One vector per keypoint, visual keypoints first, then audio.
  std::vector<std::vector<double>> embedding_keypoints;
};

struct SegmentationConfig {
  Seconds merge_threshold_s = 30.0;  // merge while span stays within this
  Seconds max_duration_s = 120.0;    // segments longer than this are split
  Seconds overlap_s = 2.5;           // overlap between split windows
  Seconds gap_fill_threshold_s = 5.0;   // non-speech spans longer than this
                                        // become synthetic gap clips
  Seconds no_speech_window_s = 30.0;    // uniform window for silent videos

  // Requires 0 < overlap_s < merge_threshold_s <= max_duration_s and
  // positive gap thresholds; throws ErrorKind::Config otherwise.
  void validate() const;
};

struct HierarchicalMemory {
  std::string video_id;
  Seconds duration = 0.0;
  std::vector<FineClip> fine_clips;
  std::vector<MidSegment> mid_segments;
  std::vector<SegmentAnnotation> annotations;  // aligned with mid_segments
  std::string global_description;
  int embedding_dim = 0;
  SegmentationConfig build_config;
  // Opaque JSON blob describing the embedder used at build time, so query
  // embedding can be reconstructed consistently. Empty when unused.
  std::string embedder_info;

  int mid_count() const { return static_cast<int>(mid_segments.size()); }
  int fine_count() const { return static_cast<int>(fine_clips.size()); }

  // Checks the structural invariants: annotation alignment, index
  // contiguity, ordering, [0, duration] coverage, embedding dimensionality
  // and unit norms. Throws ErrorKind::Validation on the first violation.
  void validate() const;
};

}  // namespace aop
