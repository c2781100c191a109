// Independent reference implementations used as test oracles. These stay
// deliberately separate from the library code paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "aop/types.hpp"

namespace oracle {

struct RefSegment {
  double start = 0.0;
  double end = 0.0;
};

// Straight-line transcription of the two-phase merge/split segmentation:
// merge consecutive utterances while (t.end - current.start) <= g_max, then
// split any merged segment longer than l_max into g_max windows placed every
// (g_max - overlap) seconds, clipping the last window to the segment end.
inline std::vector<RefSegment> reference_segmentation(
    const std::vector<aop::Utterance>& utterances, double g_max, double l_max,
    double overlap) {
  std::vector<RefSegment> merged;
  bool open = false;
  double cur_start = 0.0;
  double cur_end = 0.0;
  for (const aop::Utterance& t : utterances) {
    if (open && t.end - cur_start <= g_max) {
      cur_end = t.end;
    } else {
      if (open) merged.push_back({cur_start, cur_end});
      cur_start = t.start;
      cur_end = t.end;
      open = true;
    }
  }
  if (open) merged.push_back({cur_start, cur_end});

  std::vector<RefSegment> result;
  const double stride = g_max - overlap;
  for (const RefSegment& m : merged) {
    if (m.end - m.start > l_max) {
      std::size_t i = 0;
      while (true) {
        const double s = m.start + static_cast<double>(i) * stride;
        if (s >= m.end) break;
        const double e = std::min(s + g_max, m.end);
        result.push_back({s, e});
        if (e >= m.end) break;
        ++i;
      }
    } else {
      result.push_back(m);
    }
  }
  return result;
}

// Direct evaluation of Okapi BM25 with the +1-smoothed idf over raw token
// documents; query terms count once each.
inline double reference_bm25(const std::vector<std::string>& query_tokens,
                             const std::vector<std::vector<std::string>>& documents,
                             std::size_t target, double k1 = 1.2, double b = 0.75) {
  if (documents.empty() || target >= documents.size()) return 0.0;
  const double n = static_cast<double>(documents.size());
  double total_len = 0.0;
  for (const auto& doc : documents) total_len += static_cast<double>(doc.size());
  const double avgdl = total_len / n;
  if (avgdl <= 0.0) return 0.0;

  std::vector<std::string> unique_terms;
  for (const std::string& term : query_tokens) {
    if (std::find(unique_terms.begin(), unique_terms.end(), term) == unique_terms.end()) {
      unique_terms.push_back(term);
    }
  }

  const std::vector<std::string>& doc = documents[target];
  double score = 0.0;
  for (const std::string& term : unique_terms) {
    const double tf =
        static_cast<double>(std::count(doc.begin(), doc.end(), term));
    if (tf == 0.0) continue;
    double df = 0.0;
    for (const auto& d : documents) {
      if (std::find(d.begin(), d.end(), term) != d.end()) df += 1.0;
    }
    const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    const double denom =
        tf + k1 * (1.0 - b + b * static_cast<double>(doc.size()) / avgdl);
    score += idf * tf * (k1 + 1.0) / denom;
  }
  return score;
}

// Brute-force ranking: all (score, index) pairs sorted by score descending
// with ascending index tie-break, truncated to k. Indices are 1-based.
inline std::vector<int> reference_top_k(const std::vector<double>& scores, int k) {
  std::vector<std::pair<double, int>> ranked;
  ranked.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    ranked.emplace_back(scores[i], static_cast<int>(i) + 1);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  if (static_cast<int>(ranked.size()) > k) ranked.resize(static_cast<std::size_t>(k));
  std::vector<int> indices;
  indices.reserve(ranked.size());
  for (const auto& [_, index] : ranked) indices.push_back(index);
  return indices;
}

inline double reference_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace oracle
