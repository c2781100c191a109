#include "aop/backends.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "aop/errors.hpp"
#include "aop/segmentation.hpp"
#include "aop/tokenize.hpp"

namespace aop {

namespace {

// splitmix64: tiny deterministic generator, identical on every platform.
std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string ChatRequest::concatenated_text() const {
  std::string out;
  for (const ChatMessage& m : messages) {
    if (!out.empty()) out.push_back('\n');
    out += m.text;
  }
  return out;
}

void BackendConfig::validate() const {
  if (max_retries < 0) raise(ErrorKind::Config, "max_retries must be >= 0");
  if (!(timeout_s > 0.0)) raise(ErrorKind::Config, "timeout_s must be positive");
  if (context_budget_tokens <= 0) {
    raise(ErrorKind::Config, "context_budget_tokens must be positive");
  }
}

int estimate_tokens(std::string_view text) {
  return static_cast<int>((text.size() + 3) / 4);
}

std::string ChatBackend::chat(const ChatRequest& request) {
  if (request.messages.empty()) {
    raise(ErrorKind::Precondition, "chat request must contain at least one message");
  }
  if (request.temperature < 0.0 || request.temperature > 2.0) {
    raise(ErrorKind::Precondition, "chat temperature must be within [0, 2]");
  }
  return do_chat(request);
}

std::vector<std::vector<double>> EmbeddingBackend::embed_batch(
    const std::vector<std::string>& texts) {
  if (texts.empty()) {
    raise(ErrorKind::Precondition, "embed_batch requires a non-empty input list");
  }
  std::vector<std::vector<double>> out = embed_raw(texts);
  if (out.size() != texts.size()) {
    raise(ErrorKind::Protocol, "embedding backend returned a mismatched batch size");
  }
  for (std::vector<double>& v : out) {
    if (v.size() != out.front().size()) {
      raise(ErrorKind::Protocol, "embedding dimension mismatch within a batch");
    }
    normalize_vector(v);
  }
  return out;
}

void normalize_vector(std::vector<double>& v) {
  double norm_sq = 0.0;
  for (double x : v) norm_sq += x * x;
  if (norm_sq <= 0.0) return;
  const double inv = 1.0 / std::sqrt(norm_sq);
  for (double& x : v) x *= inv;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = std::min(a.size(), b.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void ScriptedChatBackend::add_rule(std::string contains, std::string response) {
  std::lock_guard lock(mutex_);
  rules_.push_back({std::move(contains), std::move(response)});
}

void ScriptedChatBackend::push_response(std::string response) {
  std::lock_guard lock(mutex_);
  fifo_.push_back(std::move(response));
}

void ScriptedChatBackend::set_default_response(std::string response) {
  std::lock_guard lock(mutex_);
  default_response_ = std::move(response);
}

int ScriptedChatBackend::calls() const {
  std::lock_guard lock(mutex_);
  return static_cast<int>(requests_.size());
}

std::vector<ChatRequest> ScriptedChatBackend::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

std::string ScriptedChatBackend::do_chat(const ChatRequest& request) {
  std::lock_guard lock(mutex_);
  requests_.push_back(request);
  const std::string text = request.concatenated_text();
  for (const Rule& rule : rules_) {
    if (text.find(rule.contains) != std::string::npos) return rule.response;
  }
  if (fifo_next_ < fifo_.size()) return fifo_[fifo_next_++];
  if (default_response_) return *default_response_;
  raise(ErrorKind::Protocol, "scripted chat backend has no response for this request");
}

BagOfWordsEmbedder::BagOfWordsEmbedder(int dimension) : dimension_(dimension) {
  if (dimension <= 0) raise(ErrorKind::Config, "embedder dimension must be positive");
}

int BagOfWordsEmbedder::axis_for(const std::string& token) {
  auto it = vocab_.find(token);
  if (it != vocab_.end()) return it->second;
  const int axis = static_cast<int>(axis_tokens_.size());
  if (axis >= dimension_) {
    raise(ErrorKind::Protocol,
          "bag-of-words vocabulary exceeds the configured dimension (" +
              std::to_string(dimension_) + ")");
  }
  vocab_.emplace(token, axis);
  axis_tokens_.push_back(token);
  return axis;
}

std::vector<std::string> BagOfWordsEmbedder::vocabulary() const {
  std::lock_guard lock(mutex_);
  return axis_tokens_;
}

void BagOfWordsEmbedder::preload_vocabulary(const std::vector<std::string>& tokens) {
  std::lock_guard lock(mutex_);
  for (const std::string& token : tokens) axis_for(token);
}

std::vector<std::vector<double>> BagOfWordsEmbedder::embed_raw(
    const std::vector<std::string>& texts) {
  std::lock_guard lock(mutex_);
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const std::string& text : texts) {
    std::vector<double> v(static_cast<std::size_t>(dimension_), 0.0);
    for (const std::string& token : tokenize(text)) {
      v[static_cast<std::size_t>(axis_for(token))] += 1.0;
    }
    out.push_back(std::move(v));
  }
  return out;
}

SeededHashEmbedder::SeededHashEmbedder(int dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
  if (dimension <= 0) raise(ErrorKind::Config, "embedder dimension must be positive");
}

std::vector<std::vector<double>> SeededHashEmbedder::embed_raw(
    const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const std::string& text : texts) {
    std::uint64_t state = seed_ ^ fnv1a(text);
    std::vector<double> v(static_cast<std::size_t>(dimension_));
    for (double& x : v) {
      // Uniform in [-1, 1) from the top 53 bits.
      const std::uint64_t bits = splitmix64(state) >> 11;
      x = static_cast<double>(bits) / 4503599627370496.0 * 2.0 - 1.0;
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<Utterance> FileTranscriber::transcribe(const std::string& media_ref) {
  std::ifstream in(media_ref);
  if (!in) {
    raise(ErrorKind::Ingestion, "transcript not readable: " + media_ref);
  }
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::Ingestion, "invalid transcript JSON in " + media_ref + ": " + e.what());
  }
  if (!doc.is_array()) {
    raise(ErrorKind::Ingestion, "transcript must be a JSON array: " + media_ref);
  }
  std::vector<Utterance> utterances;
  utterances.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const nlohmann::json& entry = doc[i];
    if (!entry.is_object() || !entry.contains("start") || !entry.contains("end") ||
        !entry["start"].is_number() || !entry["end"].is_number()) {
      std::ostringstream os;
      os << "transcript entry " << i << " must carry numeric start/end: " << media_ref;
      raise(ErrorKind::Ingestion, os.str());
    }
    Utterance u;
    u.start = entry["start"].get<double>();
    u.end = entry["end"].get<double>();
    u.text = entry.value("text", std::string{});
    utterances.push_back(std::move(u));
  }
  return sanitize_utterances(std::move(utterances), warnings_);
}

}  // namespace aop
