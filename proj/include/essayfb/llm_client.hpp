#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

namespace essayfb::llm {

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string model_name = "mistralai/Mistral-7B-Instruct-v0.2";
  std::string api_key_env = "OPENAI_API_KEY";
  double timeout_s = 120.0;
  int max_new_tokens = 1024;

  void validate() const;
};

EndpointConfig endpoint_from_json(const nlohmann::json& doc);
nlohmann::json endpoint_to_json(const EndpointConfig& cfg);

struct GenerationRequest {
  std::string prompt;
  double temperature = 0.0;  // greedy decoding; anything else is rejected
  std::optional<std::int64_t> seed;
};

struct GenerationResponse {
  std::string text;
  std::string finish_reason;
  std::int64_t latency_ms = 0;
  bool cached = false;
  int attempts = 0;  // network attempts made; 0 when served from cache
};

struct HttpResult {
  int status = 0;  // 0 means the request never got an HTTP response
  std::string body;
  std::string transport_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResult post_json(const std::string& base_url, const std::string& path,
                               const std::string& body,
                               const std::vector<std::pair<std::string, std::string>>& headers,
                               double timeout_s) = 0;
};

/// cpp-httplib backed transport; handles http:// and https:// URLs.
class HttpTransport : public Transport {
 public:
  HttpResult post_json(const std::string& base_url, const std::string& path, const std::string& body,
                       const std::vector<std::pair<std::string, std::string>>& headers,
                       double timeout_s) override;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };

  /// Same attempts, no waiting. For tests.
  static RetryPolicy immediate(int max_attempts = 3);
};

/// Splits a base URL into scheme://host[:port] and the chat-completions path.
/// A base URL that already ends in /v1 is not given a second one.
std::pair<std::string, std::string> chat_completions_target(const std::string& base_url);

nlohmann::json build_wire_request(const EndpointConfig& cfg, const GenerationRequest& req);
GenerationResponse parse_wire_response(const std::string& body);

/// Persistent store with one JSON file per request key.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  /// Digest of (model, prompt, temperature, max_new_tokens, seed).
  static std::string key(const EndpointConfig& cfg, const GenerationRequest& req);

  std::optional<GenerationResponse> load(const EndpointConfig& cfg, const GenerationRequest& req) const;
  void store(const EndpointConfig& cfg, const GenerationRequest& req, const GenerationResponse& resp);
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path entry_path(const std::string& key) const;
  std::filesystem::path dir_;
};

class ChatClient {
 public:
  explicit ChatClient(EndpointConfig cfg, std::shared_ptr<Transport> transport = nullptr,
                      RetryPolicy retry = {});

  /// One chat-completion round trip with retries on transport errors, 5xx
  /// and 429. Throws ConfigurationError on other 4xx, ContentError when the
  /// prompt overflows the context, EndpointError when retries run out.
  GenerationResponse complete(const GenerationRequest& req) const;
  GenerationResponse complete_cached(const GenerationRequest& req, ResponseCache& cache) const;

  const EndpointConfig& config() const { return cfg_; }

 private:
  EndpointConfig cfg_;
  std::shared_ptr<Transport> transport_;
  RetryPolicy retry_;
};

GenerationResponse complete(const EndpointConfig& cfg, const GenerationRequest& req);
GenerationResponse complete_cached(const EndpointConfig& cfg, const GenerationRequest& req,
                                   ResponseCache& cache);

/// What the experiment and judge layers talk to.
class Generator {
 public:
  virtual ~Generator() = default;
  virtual GenerationResponse generate(const GenerationRequest& req) = 0;
  virtual std::string model_name() const = 0;

  /// Greedy generation with no seed.
  GenerationResponse generate_text(std::string prompt) {
    GenerationRequest req;
    req.prompt = std::move(prompt);
    return generate(req);
  }
};

class ClientGenerator : public Generator {
 public:
  ClientGenerator(ChatClient client, std::shared_ptr<ResponseCache> cache = nullptr)
      : client_(std::move(client)), cache_(std::move(cache)) {}
  GenerationResponse generate(const GenerationRequest& req) override;
  std::string model_name() const override { return client_.config().model_name; }

 private:
  ChatClient client_;
  std::shared_ptr<ResponseCache> cache_;
};

struct MockReply {
  int status = 200;
  std::string content;
  std::string finish_reason = "stop";
};

/// Scripted OpenAI-compatible endpoint on 127.0.0.1 for tests and offline
/// demos. Every request is captured.
class MockEndpoint {
 public:
  using Responder = std::function<MockReply(const std::string& prompt, const nlohmann::json& request)>;

  explicit MockEndpoint(Responder responder, int port = 0);
  ~MockEndpoint();
  MockEndpoint(const MockEndpoint&) = delete;
  MockEndpoint& operator=(const MockEndpoint&) = delete;

  int port() const { return port_; }
  std::string base_url() const;
  std::size_t calls() const { return calls_.load(); }
  std::vector<nlohmann::json> captured() const;
  void reset_counters();
  /// Blocks until stop() is called from another thread.
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
  std::atomic<std::size_t> calls_{0};
  mutable std::mutex mutex_;
  std::vector<nlohmann::json> captured_;
};

}  // namespace essayfb::llm
