#include "aop/memory_store.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "aop/errors.hpp"

namespace aop {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

const json& member(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) {
    raise(ErrorKind::Parse, "manifest missing field " + path);
  }
  return obj[key];
}

double number_at(const json& obj, const char* key, const std::string& path) {
  const json& v = member(obj, key, path);
  if (!v.is_number()) raise(ErrorKind::Parse, "manifest field " + path + " is not a number");
  return v.get<double>();
}

int int_at(const json& obj, const char* key, const std::string& path) {
  const json& v = member(obj, key, path);
  if (!v.is_number_integer()) {
    raise(ErrorKind::Parse, "manifest field " + path + " is not an integer");
  }
  return v.get<int>();
}

std::string string_at(const json& obj, const char* key, const std::string& path) {
  const json& v = member(obj, key, path);
  if (!v.is_string()) raise(ErrorKind::Parse, "manifest field " + path + " is not a string");
  return v.get<std::string>();
}

std::vector<std::string> string_list_at(const json& obj, const char* key,
                                        const std::string& path) {
  const json& v = member(obj, key, path);
  if (!v.is_array()) raise(ErrorKind::Parse, "manifest field " + path + " is not an array");
  std::vector<std::string> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string()) {
      raise(ErrorKind::Parse, "manifest field " + path + "[" + std::to_string(i) +
                                  "] is not a string");
    }
    out.push_back(v[i].get<std::string>());
  }
  return out;
}

std::vector<double> vector_at(const json& arr, const std::string& path) {
  if (!arr.is_array()) raise(ErrorKind::Parse, "manifest field " + path + " is not an array");
  std::vector<double> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) {
      raise(ErrorKind::Parse, "manifest field " + path + "[" + std::to_string(i) +
                                  "] is not a number");
    }
    out.push_back(arr[i].get<double>());
  }
  return out;
}

json config_to_json(const SegmentationConfig& c) {
  return json{{"merge_threshold_s", c.merge_threshold_s},
              {"max_duration_s", c.max_duration_s},
              {"overlap_s", c.overlap_s},
              {"gap_fill_threshold_s", c.gap_fill_threshold_s},
              {"no_speech_window_s", c.no_speech_window_s}};
}

SegmentationConfig config_from_json(const json& j, const std::string& path) {
  SegmentationConfig c;
  c.merge_threshold_s = number_at(j, "merge_threshold_s", path + ".merge_threshold_s");
  c.max_duration_s = number_at(j, "max_duration_s", path + ".max_duration_s");
  c.overlap_s = number_at(j, "overlap_s", path + ".overlap_s");
  c.gap_fill_threshold_s =
      number_at(j, "gap_fill_threshold_s", path + ".gap_fill_threshold_s");
  c.no_speech_window_s = number_at(j, "no_speech_window_s", path + ".no_speech_window_s");
  return c;
}

}  // namespace

std::string store_memory(const HierarchicalMemory& memory, const std::string& directory) {
  memory.validate();
  fs::create_directories(directory);

  json doc;
  doc["schema_version"] = kMemorySchemaVersion;
  doc["video_id"] = memory.video_id;
  doc["duration"] = memory.duration;
  doc["embedding_dim"] = memory.embedding_dim;
  doc["global_description"] = memory.global_description;
  doc["build_config"] = config_to_json(memory.build_config);

  json clips = json::array();
  for (const FineClip& clip : memory.fine_clips) {
    clips.push_back({{"index", clip.index},
                     {"start", clip.start},
                     {"end", clip.end},
                     {"text", clip.text},
                     {"is_gap", clip.is_gap}});
  }
  doc["fine_clips"] = std::move(clips);

  json segments = json::array();
  for (const MidSegment& seg : memory.mid_segments) {
    json s{{"index", seg.index},
           {"start", seg.start},
           {"end", seg.end},
           {"transcript", seg.transcript},
           {"fine_clip_indices", seg.fine_clip_indices}};
    s["media_ref"] = seg.media_ref ? json(*seg.media_ref) : json(nullptr);
    segments.push_back(std::move(s));
  }
  doc["mid_segments"] = std::move(segments);

  json annotations = json::array();
  for (const SegmentAnnotation& ann : memory.annotations) {
    annotations.push_back({{"segment_index", ann.segment_index},
                           {"visual_keypoints", ann.visual_keypoints},
                           {"audio_keypoints", ann.audio_keypoints},
                           {"keywords", ann.keywords},
                           {"description", ann.description},
                           {"embedding_desc", ann.embedding_desc},
                           {"embedding_keypoints", ann.embedding_keypoints}});
  }
  doc["annotations"] = std::move(annotations);

  if (!memory.embedder_info.empty()) {
    // Opaque string; the round-trip must stay byte-exact.
    doc["embedder_info"] = memory.embedder_info;
  }

  const fs::path manifest = fs::path(directory) / kMemoryManifestName;
  std::ofstream out(manifest);
  if (!out) raise(ErrorKind::Ingestion, "cannot write manifest: " + manifest.string());
  out << doc.dump(2) << '\n';
  out.close();
  if (!out) raise(ErrorKind::Ingestion, "failed writing manifest: " + manifest.string());
  return manifest.string();
}

HierarchicalMemory load_memory(const std::string& directory) {
  const fs::path manifest = fs::path(directory) / kMemoryManifestName;
  std::ifstream in(manifest);
  if (!in) {
    raise(ErrorKind::Ingestion, "missing manifest " + manifest.string());
  }
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    raise(ErrorKind::Parse, "manifest is not valid JSON: " + std::string(e.what()));
  }

  const std::string version = string_at(doc, "schema_version", "schema_version");
  if (version != kMemorySchemaVersion) {
    raise(ErrorKind::Version, "unsupported memory schema_version \"" + version +
                                  "\" (expected \"" + kMemorySchemaVersion + "\")");
  }

  HierarchicalMemory memory;
  memory.video_id = string_at(doc, "video_id", "video_id");
  memory.duration = number_at(doc, "duration", "duration");
  memory.embedding_dim = int_at(doc, "embedding_dim", "embedding_dim");
  memory.global_description = string_at(doc, "global_description", "global_description");
  memory.build_config =
      config_from_json(member(doc, "build_config", "build_config"), "build_config");

  const json& clips = member(doc, "fine_clips", "fine_clips");
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const std::string path = "fine_clips[" + std::to_string(i) + "]";
    FineClip clip;
    clip.index = int_at(clips[i], "index", path + ".index");
    clip.start = number_at(clips[i], "start", path + ".start");
    clip.end = number_at(clips[i], "end", path + ".end");
    clip.text = string_at(clips[i], "text", path + ".text");
    const json& gap = member(clips[i], "is_gap", path + ".is_gap");
    if (!gap.is_boolean()) raise(ErrorKind::Parse, path + ".is_gap is not a boolean");
    clip.is_gap = gap.get<bool>();
    memory.fine_clips.push_back(std::move(clip));
  }

  const json& segments = member(doc, "mid_segments", "mid_segments");
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const std::string path = "mid_segments[" + std::to_string(i) + "]";
    MidSegment seg;
    seg.index = int_at(segments[i], "index", path + ".index");
    seg.start = number_at(segments[i], "start", path + ".start");
    seg.end = number_at(segments[i], "end", path + ".end");
    seg.transcript = string_at(segments[i], "transcript", path + ".transcript");
    const json& media = member(segments[i], "media_ref", path + ".media_ref");
    if (media.is_string()) {
      seg.media_ref = media.get<std::string>();
    } else if (!media.is_null()) {
      raise(ErrorKind::Parse, path + ".media_ref must be a string or null");
    }
    const json& fci = member(segments[i], "fine_clip_indices", path + ".fine_clip_indices");
    if (!fci.is_array()) raise(ErrorKind::Parse, path + ".fine_clip_indices is not an array");
    for (std::size_t k = 0; k < fci.size(); ++k) {
      if (!fci[k].is_number_integer()) {
        raise(ErrorKind::Parse,
              path + ".fine_clip_indices[" + std::to_string(k) + "] is not an integer");
      }
      seg.fine_clip_indices.push_back(fci[k].get<int>());
    }
    memory.mid_segments.push_back(std::move(seg));
  }

  const json& annotations = member(doc, "annotations", "annotations");
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const std::string path = "annotations[" + std::to_string(i) + "]";
    SegmentAnnotation ann;
    ann.segment_index = int_at(annotations[i], "segment_index", path + ".segment_index");
    ann.visual_keypoints =
        string_list_at(annotations[i], "visual_keypoints", path + ".visual_keypoints");
    ann.audio_keypoints =
        string_list_at(annotations[i], "audio_keypoints", path + ".audio_keypoints");
    ann.keywords = string_list_at(annotations[i], "keywords", path + ".keywords");
    ann.description = string_at(annotations[i], "description", path + ".description");
    ann.embedding_desc = vector_at(member(annotations[i], "embedding_desc",
                                          path + ".embedding_desc"),
                                   path + ".embedding_desc");
    const json& kp =
        member(annotations[i], "embedding_keypoints", path + ".embedding_keypoints");
    if (!kp.is_array()) {
      raise(ErrorKind::Parse, path + ".embedding_keypoints is not an array");
    }
    for (std::size_t k = 0; k < kp.size(); ++k) {
      ann.embedding_keypoints.push_back(
          vector_at(kp[k], path + ".embedding_keypoints[" + std::to_string(k) + "]"));
    }
    memory.annotations.push_back(std::move(ann));
  }

  if (doc.contains("embedder_info")) {
    if (!doc["embedder_info"].is_string()) {
      raise(ErrorKind::Parse, "manifest field embedder_info is not a string");
    }
    memory.embedder_info = doc["embedder_info"].get<std::string>();
  }

  memory.validate();
  return memory;
}

}  // namespace aop
