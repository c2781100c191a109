#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "aop/types.hpp"

namespace aop {

struct MediaAttachment {
  std::string path;  // file path or URL; the serving endpoint decodes it
  Seconds start = 0.0;
  Seconds end = 0.0;
};

struct ChatMessage {
  std::string role;  // "system", "user", "assistant"
  std::string text;
  std::vector<MediaAttachment> attachments;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.2;
  int max_output_tokens = 1024;

  // All message texts concatenated; what scripted rules match against.
  std::string concatenated_text() const;
};

struct BackendConfig {
  std::string base_url;  // e.g. "http://localhost:8080/v1"
  std::string model_name;
  std::string api_key_env_var = "AOP_API_KEY";
  double timeout_s = 120.0;
  int max_retries = 3;
  int context_budget_tokens = 32768;

  void validate() const;  // max_retries >= 0, timeout_s > 0
};

// Rough token estimate used for pre-transmission budgeting: ceil(chars / 4).
int estimate_tokens(std::string_view text);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  // Returns the assistant text. Validates the request first: at least one
  // message, temperature in [0, 2].
  std::string chat(const ChatRequest& request);

 private:
  virtual std::string do_chat(const ChatRequest& request) = 0;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;

  // One vector per input, L2-normalized on ingestion (all-zero vectors pass
  // through unchanged). Rejects empty batches and mixed dimensionalities.
  std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts);

  virtual int dimension() const = 0;

 private:
  virtual std::vector<std::vector<double>> embed_raw(
      const std::vector<std::string>& texts) = 0;
};

class Transcriber {
 public:
  virtual ~Transcriber() = default;
  virtual std::vector<Utterance> transcribe(const std::string& media_ref) = 0;
};

// Deterministic chat backend for offline tests. Responses resolve in order:
// first matching substring rule, then the FIFO of queued responses, then the
// default response; anything else is a protocol error. With rules only it is
// a pure function of (rule table, request). Thread-safe.
class ScriptedChatBackend : public ChatBackend {
 public:
  void add_rule(std::string contains, std::string response);
  void push_response(std::string response);
  void set_default_response(std::string response);

  int calls() const;
  std::vector<ChatRequest> requests() const;  // recorded exchanges

 private:
  std::string do_chat(const ChatRequest& request) override;

  struct Rule {
    std::string contains;
    std::string response;
  };
  mutable std::mutex mutex_;
  std::vector<Rule> rules_;
  std::vector<std::string> fifo_;
  std::size_t fifo_next_ = 0;
  std::optional<std::string> default_response_;
  std::vector<ChatRequest> requests_;
};

// Test embedder whose cosine tracks token overlap exactly: every distinct
// token gets its own axis from a shared growing vocabulary. Texts with
// disjoint vocabularies are exactly orthogonal. Thread-safe.
class BagOfWordsEmbedder : public EmbeddingBackend {
 public:
  explicit BagOfWordsEmbedder(int dimension = 512);

  int dimension() const override { return dimension_; }

  std::vector<std::string> vocabulary() const;  // tokens in axis order
  void preload_vocabulary(const std::vector<std::string>& tokens);

 private:
  std::vector<std::vector<double>> embed_raw(
      const std::vector<std::string>& texts) override;
  int axis_for(const std::string& token);

  int dimension_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, int> vocab_;
  std::vector<std::string> axis_tokens_;
};

// Adversarially uninformative embedder: each text maps to a pseudo-random
// unit vector derived from (seed, text hash). Byte-identical across runs for
// the same seed and dimension.
class SeededHashEmbedder : public EmbeddingBackend {
 public:
  explicit SeededHashEmbedder(int dimension = 64, std::uint64_t seed = 0);

  int dimension() const override { return dimension_; }

 private:
  std::vector<std::vector<double>> embed_raw(
      const std::vector<std::string>& texts) override;

  int dimension_;
  std::uint64_t seed_;
};

// Reads a transcript document: a JSON array of {start, end, text}. Entries
// with end <= start are dropped with a warning; output is sorted by start.
class FileTranscriber : public Transcriber {
 public:
  explicit FileTranscriber(std::vector<std::string>* warnings = nullptr)
      : warnings_(warnings) {}

  std::vector<Utterance> transcribe(const std::string& media_ref) override;

 private:
  std::vector<std::string>* warnings_;
};

// L2-normalizes in place; all-zero vectors are left unchanged.
void normalize_vector(std::vector<double>& v);

double dot(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace aop
