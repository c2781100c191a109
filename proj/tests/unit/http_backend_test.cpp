#include "aop/http_backend.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <thread>

#include "aop/errors.hpp"

using nlohmann::json;

namespace {

aop::ChatRequest simple_request(const std::string& text) {
  aop::ChatRequest request;
  request.messages.push_back({"user", text, {}});
  return request;
}

// A local OpenAI-style endpoint that can fail a configurable number of
// times before succeeding.
class FakeServer {
 public:
  FakeServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                httplib::Response& res) {
      last_body_ = req.body;
      if (fail_first_ > 0) {
        --fail_first_;
        res.status = fail_status_;
        res.set_content("overloaded", "text/plain");
        return;
      }
      const json body = json::parse(req.body);
      const std::string prompt = body["messages"][0]["content"].is_string()
                                     ? body["messages"][0]["content"].get<std::string>()
                                     : "";
      json reply = {{"choices",
                     {{{"message", {{"role", "assistant"},
                                    {"content", "echo: " + prompt}}}}}}};
      res.set_content(reply.dump(), "application/json");
    });
    server_.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body);
      json data = json::array();
      int index = 0;
      for (const auto& input : body["input"]) {
        const double v = static_cast<double>(input.get<std::string>().size());
        data.push_back({{"index", index++}, {"embedding", {v, 1.0}}});
      }
      res.set_content(json{{"data", data}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~FakeServer() {
    server_.stop();
    thread_.join();
  }

  aop::BackendConfig config() const {
    aop::BackendConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    c.model_name = "fake-model";
    c.timeout_s = 5.0;
    c.max_retries = 3;
    return c;
  }

  void fail_first(int n, int status) {
    fail_first_ = n;
    fail_status_ = status;
  }

  std::string last_body() const { return last_body_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> fail_first_{0};
  int fail_status_ = 503;
  std::string last_body_;
};

}  // namespace

TEST_CASE("chat round-trips against an OpenAI-style endpoint") {
  FakeServer server;
  aop::OpenAiChatBackend backend(server.config(), /*backoff_base_s=*/0.01);
  CHECK(backend.chat(simple_request("hello")) == "echo: hello");

  const json body = json::parse(server.last_body());
  CHECK(body["model"] == "fake-model");
  CHECK(body["temperature"].get<double>() == doctest::Approx(0.2));
}

TEST_CASE("transient server errors are retried until success") {
  FakeServer server;
  server.fail_first(2, 503);
  aop::OpenAiChatBackend backend(server.config(), 0.01);
  CHECK(backend.chat(simple_request("retry me")) == "echo: retry me");

  server.fail_first(2, 429);
  CHECK(backend.chat(simple_request("throttled")) == "echo: throttled");
}

TEST_CASE("retries exhaust into a transport error") {
  FakeServer server;
  server.fail_first(100, 503);
  aop::BackendConfig config = server.config();
  config.max_retries = 1;
  aop::OpenAiChatBackend backend(config, 0.01);
  try {
    backend.chat(simple_request("never"));
    FAIL("expected a transport error");
  } catch (const aop::Error& e) {
    CHECK(e.kind() == aop::ErrorKind::Transport);
  }
}

TEST_CASE("a down server with max_retries=0 fails after one attempt") {
  aop::BackendConfig config;
  config.base_url = "http://127.0.0.1:1/v1";  // nothing listens here
  config.model_name = "m";
  config.timeout_s = 1.0;
  config.max_retries = 0;
  aop::OpenAiChatBackend backend(config, 0.01);
  try {
    backend.chat(simple_request("x"));
    FAIL("expected a transport error");
  } catch (const aop::Error& e) {
    CHECK(e.kind() == aop::ErrorKind::Transport);
  }
}

TEST_CASE("non-retryable HTTP statuses raise protocol errors") {
  FakeServer server;
  server.fail_first(1, 400);
  aop::OpenAiChatBackend backend(server.config(), 0.01);
  try {
    backend.chat(simple_request("bad"));
    FAIL("expected a protocol error");
  } catch (const aop::Error& e) {
    CHECK(e.kind() == aop::ErrorKind::Protocol);
  }
}

TEST_CASE("requests over the context budget are rejected before transmission") {
  aop::BackendConfig config;
  config.base_url = "http://127.0.0.1:1/v1";  // must never be contacted
  config.model_name = "m";
  config.context_budget_tokens = 10;
  aop::OpenAiChatBackend backend(config, 0.01);
  try {
    backend.chat(simple_request(std::string(1000, 'x')));
    FAIL("expected a protocol error");
  } catch (const aop::Error& e) {
    CHECK(e.kind() == aop::ErrorKind::Protocol);
    CHECK(std::string(e.what()).find("context budget") != std::string::npos);
  }
}

TEST_CASE("embeddings batch maps one vector per input") {
  FakeServer server;
  aop::OpenAiEmbeddingBackend backend(server.config(), 0, 0.01);
  const auto vectors = backend.embed_batch({"ab", "abcd"});
  REQUIRE(vectors.size() == 2);
  CHECK(vectors[0].size() == 2);
  CHECK(backend.dimension() == 2);
  double norm = 0.0;
  for (double x : vectors[0]) norm += x * x;
  CHECK(norm == doctest::Approx(1.0));  // normalized on ingestion
}
