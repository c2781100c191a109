// Shared helpers for constructing test memories, scripted responses and
// randomized corpora.
#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "aop/backends.hpp"
#include "aop/types.hpp"

namespace testsupport {

struct SegmentSpec {
  std::string description;
  std::vector<std::string> keywords;
  std::vector<std::string> visual_keypoints;
  std::vector<std::string> audio_keypoints;
  std::string transcript;
};

// Builds a validated memory of contiguous fixed-length segments with one
// non-gap fine clip per segment, embedding annotations with `embedder`.
inline aop::HierarchicalMemory make_memory(const std::vector<SegmentSpec>& specs,
                                           aop::EmbeddingBackend& embedder,
                                           double segment_length = 10.0,
                                           const std::string& video_id = "test-video") {
  aop::HierarchicalMemory memory;
  memory.video_id = video_id;
  memory.duration = segment_length * static_cast<double>(specs.size());
  memory.embedding_dim = embedder.dimension();

  for (std::size_t i = 0; i < specs.size(); ++i) {
    const SegmentSpec& spec = specs[i];
    const double start = segment_length * static_cast<double>(i);
    const double end = start + segment_length;

    aop::MidSegment seg;
    seg.index = static_cast<int>(i) + 1;
    seg.start = start;
    seg.end = end;
    seg.transcript = spec.transcript.empty() ? spec.description : spec.transcript;
    seg.fine_clip_indices = {seg.index};
    memory.mid_segments.push_back(std::move(seg));

    aop::FineClip clip;
    clip.index = static_cast<int>(i) + 1;
    clip.start = start;
    clip.end = end;
    clip.text = spec.transcript.empty() ? spec.description : spec.transcript;
    memory.fine_clips.push_back(std::move(clip));

    aop::SegmentAnnotation ann;
    ann.segment_index = static_cast<int>(i) + 1;
    ann.description = spec.description;
    ann.keywords = spec.keywords;
    ann.visual_keypoints = spec.visual_keypoints;
    ann.audio_keypoints = spec.audio_keypoints;

    std::vector<std::string> texts;
    texts.push_back(spec.description);
    for (const std::string& kp : spec.visual_keypoints) texts.push_back(kp);
    for (const std::string& kp : spec.audio_keypoints) texts.push_back(kp);
    std::vector<std::vector<double>> vectors = embedder.embed_batch(texts);
    ann.embedding_desc = std::move(vectors.front());
    ann.embedding_keypoints.assign(vectors.begin() + 1, vectors.end());
    memory.annotations.push_back(std::move(ann));
  }
  memory.validate();
  return memory;
}

// One fenced-JSON annotation reply in the format annotate_segment expects.
inline std::string annotation_response(const std::string& description,
                                       const std::vector<std::string>& keywords,
                                       const std::vector<std::string>& visual,
                                       const std::vector<std::string>& audio) {
  nlohmann::json j;
  j["visual_keypoints"] = visual;
  j["audio_keypoints"] = audio;
  j["keywords"] = keywords;
  j["description"] = description;
  return "```json\n" + j.dump() + "\n```";
}

inline std::string plan_response(const std::string& tool, const nlohmann::json& args,
                                 const std::string& rationale = "scripted",
                                 const std::string& future = "") {
  nlohmann::json j;
  j["tool"] = tool;
  j["args"] = args;
  j["rationale"] = rationale;
  j["future_plan"] = future;
  return "```json\n" + j.dump() + "\n```";
}

inline std::string verdict_response(const std::vector<std::pair<int, int>>& scores,
                                    const std::string& decision,
                                    const std::string& reflection = "scripted reflection") {
  nlohmann::json j;
  j["segment_scores"] = nlohmann::json::array();
  for (const auto& [segment, score] : scores) {
    j["segment_scores"].push_back({{"segment", segment}, {"score", score}});
  }
  j["reflection"] = reflection;
  j["decision"] = decision;
  return "```json\n" + j.dump() + "\n```";
}

// Sorted, non-overlapping utterance lists for segmentation property tests.
inline std::vector<aop::Utterance> random_utterances(std::mt19937_64& rng, int max_count,
                                                     double max_duration) {
  std::uniform_int_distribution<int> count_dist(0, max_count);
  std::uniform_real_distribution<double> gap_dist(0.0, 8.0);
  std::uniform_real_distribution<double> len_dist(0.2, 40.0);
  std::bernoulli_distribution long_utterance(0.05);
  std::uniform_real_distribution<double> long_len_dist(100.0, 200.0);

  std::vector<aop::Utterance> utterances;
  const int count = count_dist(rng);
  double cursor = gap_dist(rng);
  for (int i = 0; i < count && cursor < max_duration; ++i) {
    const double length = long_utterance(rng) ? long_len_dist(rng) : len_dist(rng);
    aop::Utterance u;
    u.start = cursor;
    u.end = cursor + length;
    u.text = "utterance " + std::to_string(i);
    utterances.push_back(u);
    cursor = u.end + gap_dist(rng);
  }
  return utterances;
}

// Field-by-field structural equality with exact float comparison, used by
// persistence round-trip checks.
inline bool memories_equal(const aop::HierarchicalMemory& a,
                           const aop::HierarchicalMemory& b) {
  if (a.video_id != b.video_id || a.duration != b.duration ||
      a.embedding_dim != b.embedding_dim ||
      a.global_description != b.global_description ||
      a.embedder_info != b.embedder_info) {
    return false;
  }
  if (a.fine_clips.size() != b.fine_clips.size() ||
      a.mid_segments.size() != b.mid_segments.size() ||
      a.annotations.size() != b.annotations.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.fine_clips.size(); ++i) {
    const auto& x = a.fine_clips[i];
    const auto& y = b.fine_clips[i];
    if (x.index != y.index || x.start != y.start || x.end != y.end || x.text != y.text ||
        x.is_gap != y.is_gap) {
      return false;
    }
  }
  for (std::size_t i = 0; i < a.mid_segments.size(); ++i) {
    const auto& x = a.mid_segments[i];
    const auto& y = b.mid_segments[i];
    if (x.index != y.index || x.start != y.start || x.end != y.end ||
        x.transcript != y.transcript || x.media_ref != y.media_ref ||
        x.fine_clip_indices != y.fine_clip_indices) {
      return false;
    }
  }
  for (std::size_t i = 0; i < a.annotations.size(); ++i) {
    const auto& x = a.annotations[i];
    const auto& y = b.annotations[i];
    if (x.segment_index != y.segment_index || x.visual_keypoints != y.visual_keypoints ||
        x.audio_keypoints != y.audio_keypoints || x.keywords != y.keywords ||
        x.description != y.description || x.embedding_desc != y.embedding_desc ||
        x.embedding_keypoints != y.embedding_keypoints) {
      return false;
    }
  }
  const auto& c = a.build_config;
  const auto& d = b.build_config;
  return c.merge_threshold_s == d.merge_threshold_s &&
         c.max_duration_s == d.max_duration_s && c.overlap_s == d.overlap_s &&
         c.gap_fill_threshold_s == d.gap_fill_threshold_s &&
         c.no_speech_window_s == d.no_speech_window_s;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("aop_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

struct CommandResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr combined
};

inline CommandResult run_command(const std::string& command) {
  CommandResult result;
  FILE* pipe = ::popen((command + " 2>&1").c_str(), "r");
  if (!pipe) return result;
  char buffer[4096];
  while (std::size_t n = std::fread(buffer, 1, sizeof(buffer), pipe)) {
    result.output.append(buffer, n);
  }
  const int status = ::pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

}  // namespace testsupport
