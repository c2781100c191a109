#include "aop/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "aop/errors.hpp"
#include "aop/tokenize.hpp"

namespace aop {

const char* to_string(ToolKind tool) {
  switch (tool) {
    case ToolKind::Description: return "description";
    case ToolKind::Keyword: return "keyword";
    case ToolKind::Keypoint: return "keypoint";
    case ToolKind::Neighbor: return "neighbor";
    case ToolKind::Fine: return "fine";
  }
  return "unknown";
}

ToolKind tool_from_string(const std::string& name) {
  if (name == "description") return ToolKind::Description;
  if (name == "keyword") return ToolKind::Keyword;
  if (name == "keypoint") return ToolKind::Keypoint;
  if (name == "neighbor") return ToolKind::Neighbor;
  if (name == "fine") return ToolKind::Fine;
  raise(ErrorKind::Dispatch, "unknown tool name: \"" + name + "\"");
}

SparseIndex SparseIndex::build(std::vector<std::vector<std::string>> documents,
                               Bm25Params params) {
  SparseIndex index;
  index.params_ = params;
  index.docs_.reserve(documents.size());
  long total_length = 0;
  for (std::vector<std::string>& tokens : documents) {
    DocEntry entry;
    entry.length = static_cast<int>(tokens.size());
    total_length += entry.length;
    for (std::string& token : tokens) {
      entry.term_freq[std::move(token)] += 1;
    }
    for (const auto& [term, _] : entry.term_freq) {
      index.doc_freq_[term] += 1;
    }
    index.docs_.push_back(std::move(entry));
  }
  index.avgdl_ = index.docs_.empty()
                     ? 0.0
                     : static_cast<double>(total_length) /
                           static_cast<double>(index.docs_.size());
  return index;
}

double SparseIndex::score(const std::vector<std::string>& query_tokens,
                          std::size_t doc) const {
  if (doc >= docs_.size() || avgdl_ <= 0.0) return 0.0;
  const DocEntry& entry = docs_[doc];
  const double n = static_cast<double>(docs_.size());
  const double norm =
      params_.k1 * (1.0 - params_.b +
                    params_.b * static_cast<double>(entry.length) / avgdl_);

  double total = 0.0;
  std::vector<std::string> seen;
  for (const std::string& term : query_tokens) {
    if (std::find(seen.begin(), seen.end(), term) != seen.end()) continue;
    seen.push_back(term);
    const auto tf_it = entry.term_freq.find(term);
    if (tf_it == entry.term_freq.end()) continue;
    const auto df_it = doc_freq_.find(term);
    const double df = df_it == doc_freq_.end() ? 0.0 : df_it->second;
    const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    const double tf = static_cast<double>(tf_it->second);
    total += idf * tf * (params_.k1 + 1.0) / (tf + norm);
  }
  return total;
}

ToolEngine::ToolEngine(const HierarchicalMemory& memory, EmbeddingBackend& embedder,
                       Bm25Params params)
    : memory_(&memory), embedder_(&embedder) {
  std::vector<std::vector<std::string>> keyword_docs;
  keyword_docs.reserve(memory.annotations.size());
  std::vector<std::vector<std::string>> keypoint_docs;
  segment_keypoint_rows_.resize(memory.annotations.size());

  for (std::size_t s = 0; s < memory.annotations.size(); ++s) {
    const SegmentAnnotation& ann = memory.annotations[s];
    std::vector<std::string> keyword_tokens;
    for (const std::string& keyword : ann.keywords) {
      for (std::string& token : tokenize(keyword)) {
        keyword_tokens.push_back(std::move(token));
      }
    }
    keyword_docs.push_back(std::move(keyword_tokens));

    const std::size_t n_visual = ann.visual_keypoints.size();
    for (std::size_t k = 0; k < ann.embedding_keypoints.size(); ++k) {
      const std::string& text = k < n_visual
                                    ? ann.visual_keypoints[k]
                                    : ann.audio_keypoints[k - n_visual];
      keypoint_rows_.push_back({s, &text, &ann.embedding_keypoints[k]});
      segment_keypoint_rows_[s].push_back(keypoint_rows_.size() - 1);
      keypoint_docs.push_back(tokenize(text));
    }
  }
  keyword_index_ = SparseIndex::build(std::move(keyword_docs), params);
  keypoint_index_ = SparseIndex::build(std::move(keypoint_docs), params);
}

std::vector<double> ToolEngine::embed_query(const std::string& query) const {
  return embedder_->embed_batch({query}).front();
}

std::vector<ScoredSegment> ToolEngine::top_k(std::vector<ScoredSegment> scored,
                                             int k) const {
  std::sort(scored.begin(), scored.end(),
            [](const ScoredSegment& a, const ScoredSegment& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.segment_index < b.segment_index;
            });
  if (k < static_cast<int>(scored.size())) {
    scored.resize(static_cast<std::size_t>(k));
  }
  return scored;
}

std::vector<ScoredSegment> ToolEngine::desc_search(const std::string& query,
                                                   int k) const {
  if (query.empty()) {
    raise(ErrorKind::Precondition, "description search requires a non-empty query");
  }
  if (k <= 0) raise(ErrorKind::Precondition, "k must be positive");
  const std::vector<double> q = embed_query(query);

  std::vector<ScoredSegment> scored;
  scored.reserve(memory_->annotations.size());
  for (std::size_t s = 0; s < memory_->annotations.size(); ++s) {
    ScoredSegment item;
    item.segment_index = static_cast<int>(s) + 1;
    item.score = dot(q, memory_->annotations[s].embedding_desc);
    item.tool = ToolKind::Description;
    item.matched_evidence.push_back(memory_->annotations[s].description);
    scored.push_back(std::move(item));
  }
  return top_k(std::move(scored), k);
}

std::vector<ScoredSegment> ToolEngine::keyword_search(const std::string& query,
                                                      int k) const {
  const std::vector<std::string> query_tokens = tokenize(query);
  if (query_tokens.empty()) {
    raise(ErrorKind::Precondition, "keyword search query tokenizes to nothing");
  }
  if (k <= 0) raise(ErrorKind::Precondition, "k must be positive");

  std::vector<ScoredSegment> scored;
  scored.reserve(memory_->annotations.size());
  for (std::size_t s = 0; s < memory_->annotations.size(); ++s) {
    ScoredSegment item;
    item.segment_index = static_cast<int>(s) + 1;
    item.score = keyword_index_.score(query_tokens, s);
    item.tool = ToolKind::Keyword;
    for (const std::string& keyword : memory_->annotations[s].keywords) {
      for (const std::string& token : tokenize(keyword)) {
        if (std::find(query_tokens.begin(), query_tokens.end(), token) !=
            query_tokens.end()) {
          item.matched_evidence.push_back(keyword);
          break;
        }
      }
    }
    scored.push_back(std::move(item));
  }
  return top_k(std::move(scored), k);
}

std::vector<ScoredSegment> ToolEngine::keypoint_search(const std::string& query,
                                                       double lambda, int k) const {
  const std::vector<std::string> query_tokens = tokenize(query);
  if (query.empty() || query_tokens.empty()) {
    raise(ErrorKind::Precondition, "keypoint search query tokenizes to nothing");
  }
  if (lambda < 0.0 || lambda > 1.0) {
    raise(ErrorKind::Precondition, "lambda must lie in [0, 1]");
  }
  if (k <= 0) raise(ErrorKind::Precondition, "k must be positive");
  const std::vector<double> q = embed_query(query);

  const std::size_t n = memory_->annotations.size();
  std::vector<double> dense_raw(n, 0.0);
  std::vector<double> sparse_raw(n, 0.0);
  std::vector<bool> has_keypoints(n, false);
  std::vector<const std::string*> dense_argmax(n, nullptr);
  std::vector<const std::string*> sparse_argmax(n, nullptr);

  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t row : segment_keypoint_rows_[s]) {
      const KeypointRow& kp = keypoint_rows_[row];
      const double d = dot(q, *kp.embedding);
      const double b = keypoint_index_.score(query_tokens, row);
      if (!has_keypoints[s] || d > dense_raw[s]) {
        dense_raw[s] = d;
        dense_argmax[s] = kp.text;
      }
      if (!has_keypoints[s] || b > sparse_raw[s]) {
        sparse_raw[s] = b;
        sparse_argmax[s] = kp.text;
      }
      has_keypoints[s] = true;
    }
  }

  // Per-query min-max over the segments that have keypoints; a constant
  // column normalizes to 0.
  auto normalize = [&](std::vector<double>& values) {
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (std::size_t s = 0; s < n; ++s) {
      if (!has_keypoints[s]) continue;
      if (!any || values[s] < lo) lo = values[s];
      if (!any || values[s] > hi) hi = values[s];
      any = true;
    }
    for (std::size_t s = 0; s < n; ++s) {
      if (!has_keypoints[s] || hi <= lo) {
        values[s] = 0.0;
      } else {
        values[s] = (values[s] - lo) / (hi - lo);
      }
    }
  };
  normalize(dense_raw);
  normalize(sparse_raw);

  std::vector<ScoredSegment> scored;
  scored.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    ScoredSegment item;
    item.segment_index = static_cast<int>(s) + 1;
    item.score = lambda * dense_raw[s] + (1.0 - lambda) * sparse_raw[s];
    item.tool = ToolKind::Keypoint;
    if (dense_argmax[s]) item.matched_evidence.push_back(*dense_argmax[s]);
    if (sparse_argmax[s] && sparse_argmax[s] != dense_argmax[s]) {
      item.matched_evidence.push_back(*sparse_argmax[s]);
    }
    scored.push_back(std::move(item));
  }
  return top_k(std::move(scored), k);
}

std::vector<ScoredSegment> ToolEngine::neighbor(int anchor_index, int radius) const {
  const int n = memory_->mid_count();
  if (anchor_index < 1 || anchor_index > n) {
    raise(ErrorKind::Precondition, "neighbor anchor index " +
                                       std::to_string(anchor_index) +
                                       " outside [1, " + std::to_string(n) + "]");
  }
  if (radius < 1 || radius > 3) {
    raise(ErrorKind::Precondition, "neighbor radius must lie in [1, 3]");
  }
  std::vector<ScoredSegment> out;
  for (int i = std::max(1, anchor_index - radius);
       i <= std::min(n, anchor_index + radius); ++i) {
    if (i == anchor_index) continue;
    ScoredSegment item;
    item.segment_index = i;
    item.score = 0.0;  // the temporal tool carries no relevance score
    item.tool = ToolKind::Neighbor;
    out.push_back(std::move(item));
  }
  return out;
}

std::vector<FineClip> ToolEngine::fine_grained(int anchor_index) const {
  const int n = memory_->mid_count();
  if (anchor_index < 1 || anchor_index > n) {
    raise(ErrorKind::Precondition, "fine-grained anchor index " +
                                       std::to_string(anchor_index) +
                                       " outside [1, " + std::to_string(n) + "]");
  }
  const MidSegment& seg = memory_->mid_segments[static_cast<std::size_t>(anchor_index - 1)];
  std::vector<FineClip> out;
  for (const FineClip& clip : memory_->fine_clips) {
    if (seg.start <= clip.start && clip.end <= seg.end) out.push_back(clip);
  }
  return out;
}

Observation ToolEngine::dispatch(const ToolCall& call, const std::set<int>& observed) const {
  Observation obs;
  obs.tool = call.tool;
  switch (call.tool) {
    case ToolKind::Description:
      obs.query = call.query;
      obs.segments = desc_search(call.query, call.k);
      break;
    case ToolKind::Keyword:
      obs.query = call.query;
      obs.segments = keyword_search(call.query, call.k);
      break;
    case ToolKind::Keypoint:
      obs.query = call.query;
      obs.segments = keypoint_search(call.query, call.lambda, call.k);
      break;
    case ToolKind::Neighbor:
      obs.anchor_index = call.anchor_index;
      obs.segments = neighbor(call.anchor_index, call.radius);
      obs.anchor_unobserved = observed.count(call.anchor_index) == 0;
      break;
    case ToolKind::Fine: {
      obs.anchor_index = call.anchor_index;
      obs.clips = fine_grained(call.anchor_index);
      ScoredSegment anchor;
      anchor.segment_index = call.anchor_index;
      anchor.score = 0.0;
      anchor.tool = ToolKind::Fine;
      for (const FineClip& clip : obs.clips) {
        anchor.matched_evidence.push_back(clip.is_gap ? "(non-speech span)" : clip.text);
      }
      obs.segments.push_back(std::move(anchor));
      break;
    }
  }
  for (ScoredSegment& seg : obs.segments) {
    seg.already_observed = observed.count(seg.segment_index) > 0;
  }
  return obs;
}

}  // namespace aop
