#pragma once

#include <utility>
#include <vector>

#include "aop/types.hpp"

namespace aop {

// Drops entries with end <= start (recording a warning), clamps negative
// starts to 0, sorts by start and clips overlaps to the predecessor's end.
// Entries swallowed whole by a predecessor are dropped.
std::vector<Utterance> sanitize_utterances(std::vector<Utterance> utterances,
                                           std::vector<std::string>* warnings = nullptr);

// Fixed windows of length `window` starting every `window - overlap` seconds
// from `begin`; the last window is clipped to `end`, never dropped. Window
// starts are computed as begin + i * stride so callers can reproduce the
// boundaries exactly.
std::vector<std::pair<Seconds, Seconds>> split_windows(Seconds begin, Seconds end,
                                                       Seconds window, Seconds overlap);

// Temporal merging followed by duration refinement: consecutive utterances
// merge while the running span (t.end - current.start) stays within
// merge_threshold_s; merged segments longer than max_duration_s are split
// into merge_threshold_s windows with overlap_s overlap. A split window's
// transcript concatenates the texts of utterances overlapping that window.
// Utterances must be sanitized. Empty input yields an empty list (callers
// fall back to uniform windows).
std::vector<MidSegment> segment_utterances(const std::vector<Utterance>& utterances,
                                           const SegmentationConfig& config);

// Fallback segmentation for videos without speech: uniform
// no_speech_window_s windows with overlap_s overlap over [0, duration].
std::vector<MidSegment> uniform_windows(Seconds duration, const SegmentationConfig& config);

// Widens segment boundaries in place so their union covers [0, duration]:
// the first segment starts at 0, the last ends at duration (or later if the
// input already overshoots) and interior gaps are split at the gap midpoint.
void gap_tile(std::vector<MidSegment>& segments, Seconds duration);

// One fine clip per utterance plus one synthetic gap clip (is_gap = true,
// empty text) for every span uncovered by utterances, within the segments'
// extent, longer than gap_fill_threshold_s. Each clip is assigned to the
// first mid segment whose half-open interval [start, end) contains the
// clip's midpoint; segments must already be gap-tiled. Fills
// mid_segments[i].fine_clip_indices and returns the clips.
std::vector<FineClip> derive_fine_clips(const std::vector<Utterance>& utterances,
                                        std::vector<MidSegment>& mid_segments,
                                        const SegmentationConfig& config);

}  // namespace aop
