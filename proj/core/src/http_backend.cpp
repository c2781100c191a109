#include "aop/http_backend.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "aop/errors.hpp"

namespace aop {

namespace {

using nlohmann::json;

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix, e.g. "/v1"
};

ParsedUrl parse_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    raise(ErrorKind::Config, "base_url must include a scheme: " + base_url);
  }
  const auto path_start = base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {base_url, ""};
  std::string prefix = base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {base_url.substr(0, path_start), prefix};
}

httplib::Headers auth_headers(const BackendConfig& config) {
  httplib::Headers headers;
  if (const char* key = std::getenv(config.api_key_env_var.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  return headers;
}

bool retryable_status(int status) {
  return status == 429 || (status >= 500 && status < 600);
}

// POSTs JSON with the shared retry policy; returns the parsed response body.
json post_json(const BackendConfig& config, double backoff_base_s,
               const std::string& path, const json& payload) {
  const ParsedUrl url = parse_base_url(config.base_url);
  const std::string body = payload.dump();
  std::string last_failure;

  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    if (attempt > 0) {
      const double delay_s = backoff_base_s * static_cast<double>(1 << (attempt - 1));
      std::this_thread::sleep_for(std::chrono::duration<double>(delay_s));
    }
    httplib::Client client(url.origin);
    client.set_connection_timeout(std::chrono::duration<double>(config.timeout_s));
    client.set_read_timeout(std::chrono::duration<double>(config.timeout_s));
    client.set_write_timeout(std::chrono::duration<double>(config.timeout_s));

    auto result = client.Post(url.prefix + path, auth_headers(config), body,
                              "application/json");
    if (!result) {
      last_failure = "connection failure: " + httplib::to_string(result.error());
      continue;
    }
    if (retryable_status(result->status)) {
      last_failure = "HTTP " + std::to_string(result->status);
      continue;
    }
    if (result->status != 200) {
      raise(ErrorKind::Protocol, "HTTP " + std::to_string(result->status) + " from " +
                                     path + ": " + result->body.substr(0, 512));
    }
    try {
      return json::parse(result->body);
    } catch (const json::exception& e) {
      raise(ErrorKind::Protocol, std::string("non-JSON response body: ") + e.what());
    }
  }
  raise(ErrorKind::Transport, "retries exhausted for " + path + " (" + last_failure + ")");
}

json message_to_json(const ChatMessage& message) {
  json m;
  m["role"] = message.role;
  if (message.attachments.empty()) {
    m["content"] = message.text;
    return m;
  }
  json parts = json::array();
  parts.push_back({{"type", "text"}, {"text", message.text}});
  for (const MediaAttachment& a : message.attachments) {
    parts.push_back({{"type", "video_url"},
                     {"video_url", {{"url", a.path}}},
                     {"start_s", a.start},
                     {"end_s", a.end}});
  }
  m["content"] = std::move(parts);
  return m;
}

void check_budget(const BackendConfig& config, const ChatRequest& request) {
  int total = 0;
  for (const ChatMessage& m : request.messages) total += estimate_tokens(m.text);
  if (total > config.context_budget_tokens) {
    raise(ErrorKind::Protocol,
          "request estimated at " + std::to_string(total) +
              " tokens exceeds the context budget of " +
              std::to_string(config.context_budget_tokens));
  }
}

}  // namespace

OpenAiChatBackend::OpenAiChatBackend(BackendConfig config, double backoff_base_s)
    : config_(std::move(config)), backoff_base_s_(backoff_base_s) {
  config_.validate();
}

std::string OpenAiChatBackend::do_chat(const ChatRequest& request) {
  check_budget(config_, request);
  json payload;
  payload["model"] = config_.model_name;
  payload["temperature"] = request.temperature;
  payload["max_tokens"] = request.max_output_tokens;
  payload["messages"] = json::array();
  for (const ChatMessage& m : request.messages) {
    payload["messages"].push_back(message_to_json(m));
  }

  const json response = post_json(config_, backoff_base_s_, "/chat/completions", payload);
  if (!response.contains("choices") || !response["choices"].is_array() ||
      response["choices"].empty()) {
    raise(ErrorKind::Protocol, "chat response carries no choices");
  }
  const json& message = response["choices"][0].value("message", json::object());
  if (!message.contains("content") || !message["content"].is_string()) {
    raise(ErrorKind::Protocol, "chat response message has no text content");
  }
  return message["content"].get<std::string>();
}

OpenAiEmbeddingBackend::OpenAiEmbeddingBackend(BackendConfig config, int dimension_hint,
                                               double backoff_base_s)
    : config_(std::move(config)),
      backoff_base_s_(backoff_base_s),
      dimension_(dimension_hint) {
  config_.validate();
}

std::vector<std::vector<double>> OpenAiEmbeddingBackend::embed_raw(
    const std::vector<std::string>& texts) {
  json payload;
  payload["model"] = config_.model_name;
  payload["input"] = texts;

  const json response = post_json(config_, backoff_base_s_, "/embeddings", payload);
  if (!response.contains("data") || !response["data"].is_array() ||
      response["data"].size() != texts.size()) {
    raise(ErrorKind::Protocol, "embeddings response size does not match the batch");
  }
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const json& item : response["data"]) {
    if (!item.contains("embedding") || !item["embedding"].is_array()) {
      raise(ErrorKind::Protocol, "embeddings response item lacks an embedding array");
    }
    out.push_back(item["embedding"].get<std::vector<double>>());
  }
  if (!out.empty()) dimension_ = static_cast<int>(out.front().size());
  return out;
}

}  // namespace aop
