#include "aop/memory_builder.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

#include "aop/errors.hpp"
#include "aop/segmentation.hpp"
#include "aop/structured.hpp"

namespace aop {

namespace {

std::string format_seconds(Seconds s) {
  std::ostringstream os;
  os << s;
  return os.str();
}

std::vector<std::string> parse_string_list(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) {
    raise(ErrorKind::Parse, std::string("annotation field missing or not a list: ") + key);
  }
  std::vector<std::string> out;
  for (const auto& item : j[key]) {
    if (!item.is_string()) {
      raise(ErrorKind::Parse, std::string("annotation field has a non-string entry: ") + key);
    }
    if (!item.get<std::string>().empty()) out.push_back(item.get<std::string>());
  }
  return out;
}

SegmentAnnotation parse_annotation(const std::string& raw, const MidSegment& segment) {
  const nlohmann::json j = extract_fenced_json(raw);
  SegmentAnnotation ann;
  ann.segment_index = segment.index;
  ann.visual_keypoints = parse_string_list(j, "visual_keypoints");
  ann.audio_keypoints = parse_string_list(j, "audio_keypoints");
  ann.keywords = parse_string_list(j, "keywords");
  if (!j.contains("description") || !j["description"].is_string() ||
      j["description"].get<std::string>().empty()) {
    raise(ErrorKind::Parse, "annotation field missing or empty: description");
  }
  ann.description = j["description"].get<std::string>();
  return ann;
}

ChatRequest annotation_request(const MidSegment& segment, const PromptLibrary& prompts,
                               const BuildOptions& options) {
  std::ostringstream header;
  header << segment.index << " [" << format_seconds(segment.start) << "s - "
         << format_seconds(segment.end) << "s]";
  const std::string prompt = PromptLibrary::render(
      prompts.get("segment_annotation"),
      {{"segment_header", header.str()},
       {"transcript", segment.transcript.empty() ? "(no speech)" : segment.transcript}});

  ChatRequest request;
  request.temperature = options.annotation_temperature;
  request.max_output_tokens = options.max_output_tokens;
  ChatMessage user{"user", prompt, {}};
  if (segment.media_ref) {
    user.attachments.push_back({*segment.media_ref, segment.start, segment.end});
  }
  request.messages.push_back(std::move(user));
  return request;
}

}  // namespace

SegmentAnnotation annotate_segment(const MidSegment& segment, ChatBackend& chat,
                                   EmbeddingBackend& embedder,
                                   const PromptLibrary& prompts,
                                   const BuildOptions& options) {
  ChatRequest request = annotation_request(segment, prompts, options);
  std::string raw = chat.chat(request);
  SegmentAnnotation ann;
  try {
    ann = parse_annotation(raw, segment);
  } catch (const Error& first_error) {
    if (first_error.kind() != ErrorKind::Parse) throw;
    ChatRequest retry = request;
    retry.messages.push_back({"assistant", raw, {}});
    retry.messages.push_back(
        {"user",
         std::string("Your previous reply could not be parsed: ") + first_error.what() +
             "\nReply again with exactly one fenced JSON block in the required format.",
         {}});
    raw = chat.chat(retry);
    try {
      ann = parse_annotation(raw, segment);
    } catch (const Error& second_error) {
      if (second_error.kind() != ErrorKind::Parse) throw;
      raise(ErrorKind::Annotation,
            "segment " + std::to_string(segment.index) +
                " annotation unparseable after retry: " + second_error.what() +
                "; raw output: " + raw);
    }
  }

  std::vector<std::string> texts;
  texts.push_back(ann.description);
  texts.insert(texts.end(), ann.visual_keypoints.begin(), ann.visual_keypoints.end());
  texts.insert(texts.end(), ann.audio_keypoints.begin(), ann.audio_keypoints.end());
  std::vector<std::vector<double>> vectors = embedder.embed_batch(texts);
  ann.embedding_desc = std::move(vectors.front());
  ann.embedding_keypoints.assign(std::make_move_iterator(vectors.begin() + 1),
                                 std::make_move_iterator(vectors.end()));
  return ann;
}

std::string synthesize_global(const std::vector<std::string>& descriptions,
                              ChatBackend& chat, const PromptLibrary& prompts,
                              const BuildOptions& options) {
  if (descriptions.empty()) {
    raise(ErrorKind::Precondition, "synthesize_global requires at least one description");
  }

  const int budget = options.context_budget_tokens * 3 / 4;
  auto join = [](const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
      out += std::to_string(i + 1) + ". " + items[i] + "\n";
    }
    return out;
  };
  auto call = [&](const char* tmpl, const std::string& body) {
    ChatRequest request;
    request.temperature = options.annotation_temperature;
    request.max_output_tokens = options.max_output_tokens;
    request.messages.push_back(
        {"user", PromptLibrary::render(prompts.get(tmpl), {{"descriptions", body}}), {}});
    return chat.chat(request);
  };

  const std::string joined = join(descriptions);
  if (estimate_tokens(joined) <= budget) {
    return call("global_synthesis", joined);
  }

  // Two-pass: summarize chunks that fit the budget, then synthesize.
  std::vector<std::string> summaries;
  std::vector<std::string> chunk;
  int chunk_tokens = 0;
  auto flush = [&]() {
    if (chunk.empty()) return;
    summaries.push_back(call("global_chunk", join(chunk)));
    chunk.clear();
    chunk_tokens = 0;
  };
  for (const std::string& d : descriptions) {
    const int cost = estimate_tokens(d) + 8;
    if (!chunk.empty() && chunk_tokens + cost > budget) flush();
    chunk.push_back(d);
    chunk_tokens += cost;
  }
  flush();
  return call("global_synthesis", join(summaries));
}

HierarchicalMemory build_memory(const std::string& video_id, Seconds duration,
                                std::vector<Utterance> utterances, ChatBackend& chat,
                                EmbeddingBackend& embedder, const PromptLibrary& prompts,
                                const BuildOptions& options,
                                std::vector<std::string>* warnings) {
  if (!(duration > 0.0)) {
    raise(ErrorKind::Precondition, "build_memory requires a positive duration");
  }
  options.segmentation.validate();

  HierarchicalMemory memory;
  memory.video_id = video_id;
  memory.duration = duration;
  memory.build_config = options.segmentation;

  std::vector<Utterance> clean = sanitize_utterances(std::move(utterances), warnings);
  memory.mid_segments = clean.empty()
                            ? uniform_windows(duration, options.segmentation)
                            : segment_utterances(clean, options.segmentation);
  gap_tile(memory.mid_segments, duration);
  memory.fine_clips = derive_fine_clips(clean, memory.mid_segments, options.segmentation);

  const std::size_t n = memory.mid_segments.size();
  memory.annotations.resize(n);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};

  auto annotate_range = [&]() {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        memory.annotations[i] =
            annotate_segment(memory.mid_segments[i], chat, embedder, prompts, options);
        done.fetch_add(1);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };

  const int workers =
      std::max(1, std::min(options.annotation_workers, static_cast<int>(n ? n : 1)));
  if (workers == 1) {
    annotate_range();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(annotate_range);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) {
    const std::string progress = "memory build aborted after annotating " +
                                 std::to_string(done.load()) + "/" + std::to_string(n) +
                                 " segments: ";
    try {
      std::rethrow_exception(first_error);
    } catch (const Error& e) {
      raise(e.kind(), progress + e.what());
    } catch (const std::exception& e) {
      raise(ErrorKind::Annotation, progress + e.what());
    }
  }

  std::vector<std::string> descriptions;
  descriptions.reserve(n);
  for (const SegmentAnnotation& ann : memory.annotations) {
    descriptions.push_back(ann.description);
  }
  memory.global_description = synthesize_global(descriptions, chat, prompts, options);
  memory.embedding_dim = embedder.dimension();
  memory.validate();
  return memory;
}

}  // namespace aop
