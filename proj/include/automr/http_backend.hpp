#ifndef AUTOMR_HTTP_BACKEND_HPP
#define AUTOMR_HTTP_BACKEND_HPP

#include "automr/backend.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>

namespace automr {

inline constexpr const char* kApiKeyEnv = "AUTOMR_API_KEY";

struct HttpBackendConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string model = "default";
  std::string embedding_model;  ///< empty: digest embeddings instead of /v1/embeddings
  double temperature = 0.7;
  std::string system_prompt = "Solve the problem step by step. Follow the guidance for each step.";
  std::string api_key;  ///< empty: read from AUTOMR_API_KEY
  std::size_t d_c = 64;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{120};
  std::size_t max_in_flight = 4;
};

/// Client for OpenAI-compatible chat-completions services.
///
/// Step requests send the query and the guidance text as the user message.
/// Transport errors, 429 and 5xx responses are retried with exponential
/// backoff; other statuses fail at once. Content embeddings come from
/// /v1/embeddings when an embedding model is configured; hidden states are
/// not exposed by hosted services, so this is a substitute for the model's
/// own pooled representation.
class HttpBackend final : public ReasoningBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    if (config_.api_key.empty()) {
      if (const char* env = std::getenv(kApiKeyEnv)) config_.api_key = env;
    }
    if (config_.d_c == 0) throw std::invalid_argument("http backend: d_c must be positive");
    if (config_.max_attempts < 1) throw std::invalid_argument("http backend: max_attempts must be at least 1");
    if (config_.max_in_flight == 0) throw std::invalid_argument("http backend: max_in_flight must be positive");
    split_base_url();
  }

  const HttpBackendConfig& config() const noexcept { return config_; }

  BackendCapabilities capabilities() const override { return {config_.d_c, 1u << 20, false}; }

  GenerationResult generate_step(std::span<const std::string_view> context, std::string_view guidance,
                                 std::size_t max_tokens, std::uint64_t) const override {
    if (max_tokens == 0) throw std::invalid_argument("generate_step: max_tokens must be at least 1");
    if (context.empty()) throw std::invalid_argument("generate_step: empty context");
    std::string user = std::string(context.front()) + "\n\n" + std::string(guidance);
    return chat(user, max_tokens);
  }

  GenerationResult generate_answer(std::span<const std::string_view> context, std::string_view answer_prompt,
                                   std::size_t max_tokens) const override {
    if (context.empty()) throw std::invalid_argument("generate_answer: empty context");
    if (max_tokens == 0) throw std::invalid_argument("generate_answer: max_tokens must be at least 1");
    std::string user;
    for (std::size_t k = 0; k < context.size(); ++k) {
      user += "[Step " + std::to_string(k) + "]\n";
      user += context[k];
      user += "\n\n";
    }
    user += answer_prompt;
    return chat(user, max_tokens);
  }

  std::vector<double> embed_only(std::string_view text) const override {
    if (config_.embedding_model.empty()) return digest_embedding(text, config_.d_c);
    nlohmann::json body = {{"model", config_.embedding_model}, {"input", std::string(text)}};
    const auto doc = post("/v1/embeddings", body);
    std::vector<double> v;
    try {
      v = doc.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& ex) {
      throw BackendError(std::string("embeddings response missing data[0].embedding: ") + ex.what());
    }
    if (v.size() != config_.d_c)
      throw BackendError("embeddings endpoint returned width " + std::to_string(v.size()) + ", configured d_c is " +
                         std::to_string(config_.d_c));
    for (double x : v)
      if (!std::isfinite(x)) throw BackendError("embeddings endpoint returned a non-finite value");
    return v;
  }

  /// Request body for a chat completion; exposed for wire-format tests.
  nlohmann::json chat_request(std::string_view user, std::size_t max_tokens) const {
    return {{"model", config_.model},
            {"messages",
             nlohmann::json::array({{{"role", "system"}, {"content", config_.system_prompt}},
                                    {{"role", "user"}, {"content", std::string(user)}}})},
            {"max_tokens", max_tokens},
            {"temperature", config_.temperature}};
  }

 private:
  class InFlightGuard {
   public:
    explicit InFlightGuard(const HttpBackend& owner) : owner_(owner) {
      std::unique_lock lock(owner_.gate_mutex_);
      owner_.gate_cv_.wait(lock, [&] { return owner_.in_flight_ < owner_.config_.max_in_flight; });
      ++owner_.in_flight_;
    }
    ~InFlightGuard() {
      {
        std::lock_guard lock(owner_.gate_mutex_);
        --owner_.in_flight_;
      }
      owner_.gate_cv_.notify_one();
    }
    InFlightGuard(const InFlightGuard&) = delete;
    InFlightGuard& operator=(const InFlightGuard&) = delete;

   private:
    const HttpBackend& owner_;
  };

  void split_base_url() {
    const auto scheme_end = config_.base_url.find("://");
    if (scheme_end == std::string::npos) throw std::invalid_argument("http backend: base_url needs a scheme: " + config_.base_url);
    const auto path_start = config_.base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      host_ = config_.base_url;
    } else {
      host_ = config_.base_url.substr(0, path_start);
      prefix_ = config_.base_url.substr(path_start);
      while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }
  }

  GenerationResult chat(const std::string& user, std::size_t max_tokens) const {
    const auto doc = post("/v1/chat/completions", chat_request(user, max_tokens));
    GenerationResult out;
    try {
      out.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
      throw BackendError(std::string("chat response missing choices[0].message.content: ") + ex.what());
    }
    if (doc.contains("usage") && doc["usage"].contains("completion_tokens")) {
      out.token_count = doc["usage"]["completion_tokens"].get<std::size_t>();
    } else {
      out.token_count = out.text.empty() ? 0 : count_tokens(out.text);
    }
    if (out.token_count == 0) throw BackendError("service reported zero completion tokens");
    if (out.token_count > max_tokens)
      throw BackendError("service reported " + std::to_string(out.token_count) + " completion tokens, cap was " +
                         std::to_string(max_tokens));
    out.embedding = embed_only(out.text);
    return out;
  }

  nlohmann::json post(const std::string& endpoint, const nlohmann::json& body) const {
    InFlightGuard guard(*this);
    const std::string path = prefix_ + endpoint;
    const std::string payload = body.dump();
    std::string last_error;
    auto backoff = config_.initial_backoff;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
      httplib::Client client(host_);
      client.set_connection_timeout(config_.timeout);
      client.set_read_timeout(config_.timeout);
      client.set_write_timeout(config_.timeout);
      if (!config_.api_key.empty()) client.set_bearer_token_auth(config_.api_key);
      auto res = client.Post(path, payload, "application/json");
      bool retryable = true;
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
      } else if (res->status >= 200 && res->status < 300) {
        try {
          return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error& ex) {
          throw BackendError("POST " + path + ": response is not JSON: " + ex.what());
        }
      } else {
        last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
        retryable = res->status == 429 || res->status >= 500;
      }
      if (!retryable) throw BackendError("POST " + path + " failed: " + last_error);
      if (attempt < config_.max_attempts) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
    }
    throw BackendError("POST " + path + " failed after " + std::to_string(config_.max_attempts) +
                       " attempts (retries exhausted): " + last_error);
  }

  HttpBackendConfig config_;
  std::string host_;
  std::string prefix_;
  mutable std::mutex gate_mutex_;
  mutable std::condition_variable gate_cv_;
  mutable std::size_t in_flight_ = 0;
};

}  // namespace automr

#endif  // AUTOMR_HTTP_BACKEND_HPP
