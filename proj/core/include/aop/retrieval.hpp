#pragma once

#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "aop/backends.hpp"
#include "aop/types.hpp"

namespace aop {

enum class ToolKind { Description, Keyword, Keypoint, Neighbor, Fine };

const char* to_string(ToolKind tool);
ToolKind tool_from_string(const std::string& name);  // ErrorKind::Dispatch on unknown

struct ToolCall {
  ToolKind tool = ToolKind::Description;
  std::string query;        // description / keyword / keypoint
  int k = 4;                // description / keyword / keypoint
  double lambda = 0.5;      // keypoint only, in [0, 1]
  int anchor_index = 0;     // neighbor / fine
  int radius = 1;           // neighbor only, in [1, 3]
};

struct ScoredSegment {
  int segment_index = 0;
  double score = 0.0;
  ToolKind tool = ToolKind::Description;
  std::vector<std::string> matched_evidence;
  bool already_observed = false;  // present in evidence memory before this call
};

struct Observation {
  ToolKind tool = ToolKind::Description;
  std::string query;
  std::vector<ScoredSegment> segments;
  std::vector<FineClip> clips;     // fine tool only
  int anchor_index = 0;            // neighbor / fine
  bool anchor_unobserved = false;  // neighbor anchored outside evidence memory
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

// Okapi BM25 over pre-tokenized documents with the +1-smoothed idf:
// idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1). Query terms are counted
// once each (duplicates in the query do not double-score).
class SparseIndex {
 public:
  SparseIndex() = default;
  static SparseIndex build(std::vector<std::vector<std::string>> documents,
                           Bm25Params params = {});

  double score(const std::vector<std::string>& query_tokens, std::size_t doc) const;
  std::size_t size() const { return docs_.size(); }
  double average_doc_length() const { return avgdl_; }

 private:
  struct DocEntry {
    std::unordered_map<std::string, int> term_freq;
    int length = 0;
  };
  std::vector<DocEntry> docs_;
  std::unordered_map<std::string, int> doc_freq_;
  double avgdl_ = 0.0;
  Bm25Params params_;
};

// Executes the five observation tools over an immutable memory. Queries are
// embedded with the same backend used at build time; all scoring is
// exhaustive over segments with deterministic (score desc, index asc)
// ordering.
class ToolEngine {
 public:
  ToolEngine(const HierarchicalMemory& memory, EmbeddingBackend& embedder,
             Bm25Params params = {});

  // Top-k segments by cosine between the query embedding and description
  // embeddings; scores in [-1, 1].
  std::vector<ScoredSegment> desc_search(const std::string& query, int k) const;

  // Top-k segments by BM25 of the tokenized query over keyword fields.
  std::vector<ScoredSegment> keyword_search(const std::string& query, int k) const;

  // Hybrid keypoint scoring: per segment the max cosine and max BM25 over
  // its visual+audio keypoints, each min-max normalized to [0, 1] across
  // segments for this query (constant columns normalize to 0; segments
  // without keypoints score 0), mixed as lambda * dense + (1-lambda) * sparse.
  std::vector<ScoredSegment> keypoint_search(const std::string& query, double lambda,
                                             int k) const;

  // Segments i with 0 < |i - j| <= r, temporal order, score 0.
  std::vector<ScoredSegment> neighbor(int anchor_index, int radius) const;

  // Fine clips contained in segment j: b_mid <= b_fine and e_fine <= e_mid.
  std::vector<FineClip> fine_grained(int anchor_index) const;

  // Validates and routes a tool call, marking segments already present in
  // the evidence memory. Duplicates are never removed here.
  Observation dispatch(const ToolCall& call, const std::set<int>& observed = {}) const;

  const HierarchicalMemory& memory() const { return *memory_; }

 private:
  std::vector<ScoredSegment> top_k(std::vector<ScoredSegment> scored, int k) const;
  std::vector<double> embed_query(const std::string& query) const;

  const HierarchicalMemory* memory_;
  EmbeddingBackend* embedder_;
  SparseIndex keyword_index_;   // one document per segment
  SparseIndex keypoint_index_;  // one document per keypoint
  // Keypoint row -> (segment ordinal, keypoint text, embedding).
  struct KeypointRow {
    std::size_t segment = 0;
    const std::string* text = nullptr;
    const std::vector<double>* embedding = nullptr;
  };
  std::vector<KeypointRow> keypoint_rows_;
  std::vector<std::vector<std::size_t>> segment_keypoint_rows_;
};

}  // namespace aop
