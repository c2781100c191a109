#pragma once

#include "aop/backends.hpp"

namespace aop {

// OpenAI-compatible chat-completions client with bearer auth. Transient
// failures (connection errors, timeouts, 429, 5xx) retry with exponential
// backoff (base 1s, factor 2) up to max_retries; other HTTP errors are
// protocol errors. Requests whose estimated token count exceeds
// context_budget_tokens are rejected before transmission.
class OpenAiChatBackend : public ChatBackend {
 public:
  explicit OpenAiChatBackend(BackendConfig config, double backoff_base_s = 1.0);

 private:
  std::string do_chat(const ChatRequest& request) override;

  BackendConfig config_;
  double backoff_base_s_;
};

// OpenAI-compatible embeddings client sharing the retry policy above.
class OpenAiEmbeddingBackend : public EmbeddingBackend {
 public:
  // dimension_hint is used until the first response pins the true value.
  explicit OpenAiEmbeddingBackend(BackendConfig config, int dimension_hint = 0,
                                  double backoff_base_s = 1.0);

  int dimension() const override { return dimension_; }

 private:
  std::vector<std::vector<double>> embed_raw(
      const std::vector<std::string>& texts) override;

  BackendConfig config_;
  double backoff_base_s_;
  int dimension_;
};

}  // namespace aop
