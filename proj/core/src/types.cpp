#include "aop/types.hpp"

#include <cmath>
#include <sstream>

#include "aop/errors.hpp"

namespace aop {

namespace {

[[noreturn]] void fail_validation(const std::string& what) {
  raise(ErrorKind::Validation, "memory invariant violated: " + what);
}

}  // namespace

void SegmentationConfig::validate() const {
  if (!(overlap_s > 0.0) || !(overlap_s < merge_threshold_s) ||
      !(merge_threshold_s <= max_duration_s)) {
    std::ostringstream os;
    os << "segmentation config requires 0 < overlap_s < merge_threshold_s <= "
          "max_duration_s, got overlap_s="
       << overlap_s << " merge_threshold_s=" << merge_threshold_s
       << " max_duration_s=" << max_duration_s;
    raise(ErrorKind::Config, os.str());
  }
  if (!(gap_fill_threshold_s > 0.0) || !(no_speech_window_s > 0.0)) {
    raise(ErrorKind::Config, "segmentation gap thresholds must be positive");
  }
}

void HierarchicalMemory::validate() const {
  build_config.validate();
  if (video_id.empty()) fail_validation("video_id empty");
  if (!(duration > 0.0)) fail_validation("duration must be positive");
  if (annotations.size() != mid_segments.size()) {
    fail_validation("annotation count does not match mid segment count");
  }
  if (mid_segments.empty()) fail_validation("memory carries no mid segments");
  if (embedding_dim <= 0) fail_validation("embedding_dim must be positive");

  for (std::size_t i = 0; i < mid_segments.size(); ++i) {
    const MidSegment& seg = mid_segments[i];
    if (seg.index != static_cast<int>(i) + 1) {
      fail_validation("mid segment indices must be contiguous from 1");
    }
    if (!(seg.end > seg.start)) fail_validation("mid segment end <= start");
    if (i > 0 && seg.start < mid_segments[i - 1].start) {
      fail_validation("mid segments not sorted by start");
    }
  }
  if (!mid_segments.empty()) {
    if (mid_segments.front().start > 0.0) {
      fail_validation("mid segments do not cover time 0");
    }
    Seconds covered = mid_segments.front().end;
    for (std::size_t i = 1; i < mid_segments.size(); ++i) {
      if (mid_segments[i].start > covered) {
        fail_validation("gap between gap-tiled mid segments");
      }
      covered = std::max(covered, mid_segments[i].end);
    }
    if (covered < duration) {
      fail_validation("mid segments do not cover the full duration");
    }
  }

  for (std::size_t i = 0; i < fine_clips.size(); ++i) {
    const FineClip& clip = fine_clips[i];
    if (clip.index != static_cast<int>(i) + 1) {
      fail_validation("fine clip indices must be contiguous from 1");
    }
    if (!(clip.end > clip.start)) fail_validation("fine clip end <= start");
    if (i > 0 && clip.start < fine_clips[i - 1].start) {
      fail_validation("fine clips not sorted by start");
    }
    if (!clip.is_gap && clip.text.empty()) {
      fail_validation("non-gap fine clip with empty text");
    }
  }

  auto check_vector = [&](const std::vector<double>& v, const char* what) {
    if (static_cast<int>(v.size()) != embedding_dim) {
      fail_validation(std::string(what) + " dimensionality mismatch");
    }
    double norm_sq = 0.0;
    for (double x : v) {
      if (!std::isfinite(x)) fail_validation(std::string(what) + " not finite");
      norm_sq += x * x;
    }
    if (std::fabs(std::sqrt(norm_sq) - 1.0) > 1e-6) {
      fail_validation(std::string(what) + " is not unit-norm");
    }
  };

  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const SegmentAnnotation& ann = annotations[i];
    if (ann.segment_index != static_cast<int>(i) + 1) {
      fail_validation("annotation not aligned with its mid segment");
    }
    if (ann.description.empty()) fail_validation("annotation description empty");
    check_vector(ann.embedding_desc, "description embedding");
    const std::size_t keypoints =
        ann.visual_keypoints.size() + ann.audio_keypoints.size();
    if (ann.embedding_keypoints.size() != keypoints) {
      fail_validation("keypoint embedding count mismatch");
    }
    for (const auto& v : ann.embedding_keypoints) {
      check_vector(v, "keypoint embedding");
    }
  }
}

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Precondition: return "precondition";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Version: return "version";
    case ErrorKind::Transport: return "transport";
    case ErrorKind::Protocol: return "protocol";
    case ErrorKind::Annotation: return "annotation";
    case ErrorKind::Ingestion: return "ingestion";
    case ErrorKind::Dispatch: return "dispatch";
  }
  return "unknown";
}

}  // namespace aop
