#include "essayfb/llm_client.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "essayfb/errors.hpp"
#include "essayfb/text.hpp"

namespace essayfb::llm {

using nlohmann::json;

void EndpointConfig::validate() const {
  if (base_url.empty()) throw ValidationError("endpoint base_url is empty");
  if (model_name.empty()) throw ValidationError("endpoint model_name is empty");
  if (!(timeout_s > 0)) throw ValidationError("endpoint timeout must be positive");
  if (max_new_tokens <= 0) throw ValidationError("endpoint max_new_tokens must be positive");
}

EndpointConfig endpoint_from_json(const json& doc) {
  EndpointConfig cfg;
  cfg.base_url = doc.value("base_url", cfg.base_url);
  cfg.model_name = doc.value("model_name", cfg.model_name);
  cfg.api_key_env = doc.value("api_key_env", cfg.api_key_env);
  cfg.timeout_s = doc.value("timeout_s", cfg.timeout_s);
  cfg.max_new_tokens = doc.value("max_new_tokens", cfg.max_new_tokens);
  cfg.validate();
  return cfg;
}

json endpoint_to_json(const EndpointConfig& cfg) {
  return {{"base_url", cfg.base_url},   {"model_name", cfg.model_name},
          {"api_key_env", cfg.api_key_env}, {"timeout_s", cfg.timeout_s},
          {"max_new_tokens", cfg.max_new_tokens}};
}

RetryPolicy RetryPolicy::immediate(int max_attempts) {
  RetryPolicy p;
  p.max_attempts = max_attempts;
  p.initial_backoff = std::chrono::milliseconds{0};
  p.sleep = [](std::chrono::milliseconds) {};
  return p;
}

std::pair<std::string, std::string> chat_completions_target(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("endpoint base_url needs a scheme: " + base_url);
  }
  const auto path_start = base_url.find('/', scheme_end + 3);
  std::string origin = base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  if (prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0) {
    return {origin, prefix + "/chat/completions"};
  }
  return {origin, prefix + "/v1/chat/completions"};
}

HttpResult HttpTransport::post_json(const std::string& base_url, const std::string& path,
                                    const std::string& body,
                                    const std::vector<std::pair<std::string, std::string>>& headers,
                                    double timeout_s) {
  httplib::Client client(base_url);
  const auto whole = static_cast<time_t>(timeout_s);
  const auto usec = static_cast<time_t>((timeout_s - static_cast<double>(whole)) * 1e6);
  client.set_connection_timeout(whole, usec);
  client.set_read_timeout(whole, usec);
  client.set_write_timeout(whole, usec);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = client.Post(path, h, body, "application/json");
  if (!res) return {0, {}, httplib::to_string(res.error())};
  return {res->status, res->body, {}};
}

json build_wire_request(const EndpointConfig& cfg, const GenerationRequest& req) {
  json body{
      {"model", cfg.model_name},
      {"messages", json::array({{{"role", "user"}, {"content", req.prompt}}})},
      {"temperature", req.temperature},
      {"max_tokens", cfg.max_new_tokens},
      {"stream", false},
  };
  if (req.seed) body["seed"] = *req.seed;
  return body;
}

GenerationResponse parse_wire_response(const std::string& body) {
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded()) throw EndpointError("endpoint returned a non-JSON body");
  try {
    const auto& choice = doc.at("choices").at(0);
    GenerationResponse out;
    const auto& content = choice.at("message").at("content");
    out.text = content.is_null() ? std::string{} : content.get<std::string>();
    if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
      out.finish_reason = choice["finish_reason"].get<std::string>();
    }
    return out;
  } catch (const json::exception& e) {
    throw EndpointError(std::string("malformed chat-completion response: ") + e.what());
  }
}

namespace {

bool looks_like_context_overflow(const std::string& body) {
  const auto lower = text::to_lower(body);
  for (const char* needle : {"context length", "context_length_exceeded", "maximum context",
                             "context window"}) {
    if (lower.find(needle) != std::string::npos) return true;
  }
  return false;
}

bool retryable(const HttpResult& r) { return r.status == 0 || r.status == 429 || r.status >= 500; }

std::string describe(const HttpResult& r) {
  if (r.status == 0) return "transport error: " + r.transport_error;
  return "HTTP " + std::to_string(r.status) + ": " + r.body.substr(0, 300);
}

}  // namespace

ChatClient::ChatClient(EndpointConfig cfg, std::shared_ptr<Transport> transport, RetryPolicy retry)
    : cfg_(std::move(cfg)),
      transport_(transport ? std::move(transport) : std::make_shared<HttpTransport>()),
      retry_(std::move(retry)) {
  cfg_.validate();
  if (retry_.max_attempts < 1) throw ValidationError("retry policy needs at least one attempt");
}

GenerationResponse ChatClient::complete(const GenerationRequest& req) const {
  if (req.temperature != 0.0) {
    throw ValidationError("generation requests must use temperature 0 (greedy decoding)");
  }
  const auto [origin, path] = chat_completions_target(cfg_.base_url);
  const auto body = build_wire_request(cfg_, req).dump();
  std::vector<std::pair<std::string, std::string>> headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
    headers.emplace_back("Authorization", std::string("Bearer ") + key);
  }

  auto backoff = retry_.initial_backoff;
  const auto started = std::chrono::steady_clock::now();
  for (int attempt = 1;; ++attempt) {
    const auto result = transport_->post_json(origin, path, body, headers, cfg_.timeout_s);
    if (result.status >= 200 && result.status < 300) {
      auto out = parse_wire_response(result.body);
      out.attempts = attempt;
      out.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - started)
                           .count();
      if (attempt > 1) spdlog::info("request succeeded after {} retries", attempt - 1);
      return out;
    }
    if (!retryable(result)) {
      if (result.status == 400 && looks_like_context_overflow(result.body)) {
        throw ContentError("prompt exceeds the model context (" +
                               std::to_string(text::utf8_length(req.prompt)) + " characters)",
                           text::utf8_length(req.prompt));
      }
      throw ConfigurationError("endpoint rejected the request, " + describe(result), result.status);
    }
    if (attempt >= retry_.max_attempts) {
      throw EndpointError("endpoint failed after " + std::to_string(attempt) + " attempts, last " +
                          describe(result));
    }
    spdlog::warn("attempt {} failed ({}), retry {} in {} ms", attempt, describe(result), attempt,
                 backoff.count());
    retry_.sleep(backoff);
    backoff = std::chrono::milliseconds{
        static_cast<std::int64_t>(static_cast<double>(backoff.count()) * retry_.multiplier)};
  }
}

GenerationResponse ChatClient::complete_cached(const GenerationRequest& req, ResponseCache& cache) const {
  if (auto hit = cache.load(cfg_, req)) return *hit;
  auto fresh = complete(req);
  cache.store(cfg_, req, fresh);
  return fresh;
}

GenerationResponse complete(const EndpointConfig& cfg, const GenerationRequest& req) {
  return ChatClient(cfg).complete(req);
}

GenerationResponse complete_cached(const EndpointConfig& cfg, const GenerationRequest& req,
                                   ResponseCache& cache) {
  return ChatClient(cfg).complete_cached(req, cache);
}

GenerationResponse ClientGenerator::generate(const GenerationRequest& req) {
  return cache_ ? client_.complete_cached(req, *cache_) : client_.complete(req);
}

// ---------------------------------------------------------------------------
// ResponseCache

namespace {

json request_echo(const EndpointConfig& cfg, const GenerationRequest& req) {
  return {{"model", cfg.model_name},
          {"prompt", req.prompt},
          {"temperature", req.temperature},
          {"max_new_tokens", cfg.max_new_tokens},
          {"seed", req.seed ? json(*req.seed) : json(nullptr)}};
}

std::atomic<std::uint64_t> g_tmp_counter{0};

}  // namespace

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string ResponseCache::key(const EndpointConfig& cfg, const GenerationRequest& req) {
  // nlohmann::json objects keep keys sorted, so dump() is canonical.
  return text::sha256_hex(request_echo(cfg, req).dump());
}

std::filesystem::path ResponseCache::entry_path(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<GenerationResponse> ResponseCache::load(const EndpointConfig& cfg,
                                                      const GenerationRequest& req) const {
  const auto k = key(cfg, req);
  const auto path = entry_path(k);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream buf;
  buf << in.rdbuf();
  in.close();

  json doc = json::parse(buf.str(), nullptr, false);
  bool valid = !doc.is_discarded() && doc.is_object() && doc.contains("request") &&
               doc["request"] == request_echo(cfg, req) && doc.contains("response") &&
               doc["response"].contains("text") && doc["response"]["text"].is_string();
  if (!valid) {
    spdlog::warn("discarding corrupt cache entry {}", path.string());
    std::error_code ec;
    std::filesystem::remove(path, ec);
    return std::nullopt;
  }
  GenerationResponse out;
  out.text = doc["response"]["text"].get<std::string>();
  out.finish_reason = doc["response"].value("finish_reason", std::string{});
  out.latency_ms = doc["response"].value("latency_ms", std::int64_t{0});
  out.cached = true;
  out.attempts = 0;
  return out;
}

void ResponseCache::store(const EndpointConfig& cfg, const GenerationRequest& req,
                          const GenerationResponse& resp) {
  const auto k = key(cfg, req);
  const auto path = entry_path(k);
  std::filesystem::create_directories(path.parent_path());

  if (auto existing = load(cfg, req); existing && existing->text != resp.text) {
    spdlog::warn("cache key {} received a different payload; keeping the newest", k);
  }

  json doc{{"key", k},
           {"request", request_echo(cfg, req)},
           {"response",
            {{"text", resp.text}, {"finish_reason", resp.finish_reason}, {"latency_ms", resp.latency_ms}}}};
  std::ostringstream tmp_name;
  tmp_name << k << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << "."
           << g_tmp_counter.fetch_add(1);
  const auto tmp = path.parent_path() / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write cache entry " + tmp.string());
    out << doc.dump();
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// MockEndpoint

struct MockEndpoint::Impl {
  httplib::Server server;
  std::thread thread;
  Responder responder;
};

MockEndpoint::MockEndpoint(Responder responder, int port) : impl_(std::make_unique<Impl>()) {
  impl_->responder = std::move(responder);
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    calls_.fetch_add(1);
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) {
      res.status = 400;
      res.set_content(R"({"error":{"message":"invalid JSON"}})", "application/json");
      return;
    }
    {
      std::lock_guard lock(mutex_);
      captured_.push_back(body);
    }
    std::string prompt;
    try {
      prompt = body.at("messages").back().at("content").get<std::string>();
    } catch (const json::exception&) {
      res.status = 400;
      res.set_content(R"({"error":{"message":"missing messages"}})", "application/json");
      return;
    }
    const auto reply = impl_->responder(prompt, body);
    res.status = reply.status;
    if (reply.status >= 200 && reply.status < 300) {
      json out{{"id", "mock"},
               {"object", "chat.completion"},
               {"model", body.value("model", std::string{})},
               {"choices",
                json::array({{{"index", 0},
                              {"message", {{"role", "assistant"}, {"content", reply.content}}},
                              {"finish_reason", reply.finish_reason}}})}};
      res.set_content(out.dump(), "application/json");
    } else {
      res.set_content(json{{"error", {{"message", reply.content}}}}.dump(), "application/json");
    }
  };
  impl_->server.Post("/v1/chat/completions", handler);
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port("127.0.0.1");
  } else {
    port_ = impl_->server.bind_to_port("127.0.0.1", port) ? port : -1;
  }
  if (port_ <= 0) throw Error("mock endpoint could not bind a port");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

MockEndpoint::~MockEndpoint() { stop(); }

void MockEndpoint::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void MockEndpoint::wait() {
  while (impl_ && impl_->server.is_running()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
}

std::string MockEndpoint::base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

std::vector<json> MockEndpoint::captured() const {
  std::lock_guard lock(mutex_);
  return captured_;
}

void MockEndpoint::reset_counters() {
  calls_.store(0);
  std::lock_guard lock(mutex_);
  captured_.clear();
}

}  // namespace essayfb::llm
