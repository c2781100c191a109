#include "aop/segmentation.hpp"

#include <algorithm>
#include <sstream>

#include "aop/errors.hpp"

namespace aop {

namespace {

void warn(std::vector<std::string>* warnings, const std::string& message) {
  if (warnings) warnings->push_back(message);
}

std::string join_texts(const std::vector<const Utterance*>& members) {
  std::string out;
  for (const Utterance* u : members) {
    if (u->text.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out += u->text;
  }
  return out;
}

void assign_indices(std::vector<MidSegment>& segments) {
  for (std::size_t i = 0; i < segments.size(); ++i) {
    segments[i].index = static_cast<int>(i) + 1;
  }
}

}  // namespace

std::vector<Utterance> sanitize_utterances(std::vector<Utterance> utterances,
                                           std::vector<std::string>* warnings) {
  std::vector<Utterance> kept;
  kept.reserve(utterances.size());
  for (Utterance& u : utterances) {
    if (u.start < 0.0) {
      warn(warnings, "utterance start clamped to 0");
      u.start = 0.0;
    }
    if (!(u.end > u.start)) {
      std::ostringstream os;
      os << "dropped utterance with end <= start (" << u.start << ", " << u.end << ")";
      warn(warnings, os.str());
      continue;
    }
    if (u.text.empty() && !u.is_gap) {
      warn(warnings, "dropped non-gap utterance with empty text");
      continue;
    }
    kept.push_back(std::move(u));
  }
  std::stable_sort(kept.begin(), kept.end(), [](const Utterance& a, const Utterance& b) {
    if (a.start != b.start) return a.start < b.start;
    return a.end < b.end;
  });

  std::vector<Utterance> out;
  out.reserve(kept.size());
  for (Utterance& u : kept) {
    if (!out.empty() && u.start < out.back().end) {
      if (u.end <= out.back().end) {
        warn(warnings, "dropped utterance fully covered by its predecessor");
        continue;
      }
      warn(warnings, "clipped overlapping utterance to predecessor end");
      u.start = out.back().end;
    }
    out.push_back(std::move(u));
  }
  return out;
}

std::vector<std::pair<Seconds, Seconds>> split_windows(Seconds begin, Seconds end,
                                                       Seconds window, Seconds overlap) {
  std::vector<std::pair<Seconds, Seconds>> out;
  const Seconds stride = window - overlap;
  for (std::size_t i = 0;; ++i) {
    const Seconds start = begin + static_cast<Seconds>(i) * stride;
    if (start >= end) break;
    const Seconds stop = std::min(start + window, end);
    out.emplace_back(start, stop);
    if (stop >= end) break;
  }
  return out;
}

std::vector<MidSegment> segment_utterances(const std::vector<Utterance>& utterances,
                                           const SegmentationConfig& config) {
  config.validate();
  if (utterances.empty()) return {};

  struct Merged {
    Seconds start;
    Seconds end;
    std::vector<const Utterance*> members;
  };

  // Phase 2: temporal merging.
  std::vector<Merged> merged;
  Merged current{utterances.front().start, utterances.front().end, {&utterances.front()}};
  for (std::size_t i = 1; i < utterances.size(); ++i) {
    const Utterance& u = utterances[i];
    if (u.end - current.start <= config.merge_threshold_s) {
      current.end = u.end;
      current.members.push_back(&u);
    } else {
      merged.push_back(std::move(current));
      current = Merged{u.start, u.end, {&u}};
    }
  }
  merged.push_back(std::move(current));

  // Phase 3: duration refinement.
  std::vector<MidSegment> segments;
  for (const Merged& m : merged) {
    if (m.end - m.start > config.max_duration_s) {
      for (const auto& [start, stop] :
           split_windows(m.start, m.end, config.merge_threshold_s, config.overlap_s)) {
        std::vector<const Utterance*> overlapping;
        for (const Utterance* u : m.members) {
          if (u->start < stop && u->end > start) overlapping.push_back(u);
        }
        MidSegment seg;
        seg.start = start;
        seg.end = stop;
        seg.transcript = join_texts(overlapping);
        segments.push_back(std::move(seg));
      }
    } else {
      MidSegment seg;
      seg.start = m.start;
      seg.end = m.end;
      seg.transcript = join_texts(m.members);
      segments.push_back(std::move(seg));
    }
  }
  assign_indices(segments);
  return segments;
}

std::vector<MidSegment> uniform_windows(Seconds duration, const SegmentationConfig& config) {
  config.validate();
  if (!(duration > 0.0)) {
    raise(ErrorKind::Precondition, "uniform_windows requires a positive duration");
  }
  std::vector<MidSegment> segments;
  for (const auto& [start, stop] :
       split_windows(0.0, duration, config.no_speech_window_s, config.overlap_s)) {
    MidSegment seg;
    seg.start = start;
    seg.end = stop;
    segments.push_back(std::move(seg));
  }
  assign_indices(segments);
  return segments;
}

void gap_tile(std::vector<MidSegment>& segments, Seconds duration) {
  if (segments.empty()) return;
  segments.front().start = 0.0;
  for (std::size_t i = 1; i < segments.size(); ++i) {
    const Seconds gap = segments[i].start - segments[i - 1].end;
    if (gap > 0.0) {
      const Seconds mid = segments[i - 1].end + gap / 2.0;
      segments[i - 1].end = mid;
      segments[i].start = mid;
    }
  }
  segments.back().end = std::max(segments.back().end, duration);
}

std::vector<FineClip> derive_fine_clips(const std::vector<Utterance>& utterances,
                                        std::vector<MidSegment>& mid_segments,
                                        const SegmentationConfig& config) {
  config.validate();

  std::vector<FineClip> clips;
  clips.reserve(utterances.size());
  for (const Utterance& u : utterances) {
    FineClip clip;
    clip.start = u.start;
    clip.end = u.end;
    clip.text = u.text;
    clip.is_gap = u.is_gap;
    clips.push_back(std::move(clip));
  }

  if (!mid_segments.empty()) {
    Seconds extent_end = 0.0;
    for (const MidSegment& seg : mid_segments) extent_end = std::max(extent_end, seg.end);

    // Spans of the segment extent not covered by any utterance.
    Seconds cursor = mid_segments.front().start;
    auto emit_gap = [&](Seconds from, Seconds to) {
      if (to - from > config.gap_fill_threshold_s) {
        FineClip gap;
        gap.start = from;
        gap.end = to;
        gap.is_gap = true;
        clips.push_back(std::move(gap));
      }
    };
    for (const Utterance& u : utterances) {
      if (u.start > cursor) emit_gap(cursor, u.start);
      cursor = std::max(cursor, u.end);
    }
    if (extent_end > cursor) emit_gap(cursor, extent_end);
  }

  std::sort(clips.begin(), clips.end(), [](const FineClip& a, const FineClip& b) {
    if (a.start != b.start) return a.start < b.start;
    return a.end < b.end;
  });
  for (std::size_t i = 0; i < clips.size(); ++i) clips[i].index = static_cast<int>(i) + 1;

  for (MidSegment& seg : mid_segments) seg.fine_clip_indices.clear();
  for (const FineClip& clip : clips) {
    const Seconds midpoint = (clip.start + clip.end) / 2.0;
    MidSegment* owner = nullptr;
    for (MidSegment& seg : mid_segments) {
      if (seg.start <= midpoint && midpoint < seg.end) {
        owner = &seg;
        break;
      }
    }
    if (!owner && !mid_segments.empty()) owner = &mid_segments.back();
    if (owner) owner->fine_clip_indices.push_back(clip.index);
  }
  return clips;
}

}  // namespace aop
