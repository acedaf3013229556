#pragma once

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "forge/gateway.hpp"

namespace forge {

// Chat-completion client for OpenAI-compatible servers
// (POST <base_url>/v1/chat/completions). The API key comes from the
// LLM_API_KEY environment variable.
class HttpProvider : public Provider {
public:
  struct Options {
    std::string base_url;  // e.g. "https://api.openai.com" or "http://host:8000"
    std::string path = "/v1/chat/completions";
    int timeout_s = 60;
    bool require_api_key = true;
  };

  explicit HttpProvider(Options opts) : opts_(std::move(opts)) {
    if (opts_.base_url.empty())
      throw ConfigError("http provider: base_url is required");
    const char* key = std::getenv("LLM_API_KEY");
    if (key) api_key_ = key;
    if (api_key_.empty() && opts_.require_api_key)
      throw ConfigError("http provider: LLM_API_KEY is not set");
  }

  std::string id() const override { return "openai:" + opts_.base_url; }

  ChatResponse send(const ChatRequest& request) override {
    json body;
    body["model"] = request.model_id;
    json msgs = json::array();
    for (const auto& m : request.messages)
      msgs.push_back(json{{"role", role_name(m.role)}, {"content", m.text}});
    body["messages"] = std::move(msgs);
    body["max_tokens"] = request.sampling.max_tokens;
    if (request.sampling.mode == SamplingMode::greedy) {
      body["temperature"] = 0.0;
    } else {
      body["temperature"] = request.sampling.temperature;
      if (request.sampling.seed) body["seed"] = *request.sampling.seed;
    }
    // Accepted by vLLM-style servers; OpenAI ignores unknown fields.
    body["repetition_penalty"] = request.sampling.repetition_penalty;

    httplib::Client client(opts_.base_url);
    client.set_connection_timeout(opts_.timeout_s, 0);
    client.set_read_timeout(opts_.timeout_s, 0);
    httplib::Headers headers;
    if (!api_key_.empty())
      headers.emplace("Authorization", "Bearer " + api_key_);

    auto t0 = std::chrono::steady_clock::now();
    auto res = client.Post(opts_.path, headers, body.dump(), "application/json");
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                  std::chrono::steady_clock::now() - t0)
                  .count();

    if (!res) {
      auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout ||
          err == httplib::Error::Read || err == httplib::Error::Write)
        throw GatewayError(GatewayError::Kind::timeout, 0,
                           "http provider: " + httplib::to_string(err));
      throw GatewayError(GatewayError::Kind::provider, 0,
                         "http provider: " + httplib::to_string(err));
    }
    if (res->status == 401 || res->status == 403)
      throw GatewayError(GatewayError::Kind::auth, res->status,
                         "authentication rejected (" + std::to_string(res->status) + ")");
    if (res->status == 429)
      throw GatewayError(GatewayError::Kind::rate_limited, res->status,
                         "rate limited");
    if (res->status == 408)
      throw GatewayError(GatewayError::Kind::timeout, res->status,
                         "request timeout");
    if (res->status != 200)
      throw GatewayError(GatewayError::Kind::provider, res->status,
                         "provider returned status " + std::to_string(res->status) +
                             ": " + res->body.substr(0, 512));

    json j = json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.contains("choices") || j["choices"].empty())
      throw GatewayError(GatewayError::Kind::parse, res->status,
                         "unparseable completion body");
    const json& choice = j["choices"][0];
    ChatResponse out;
    out.text = choice.at("message").value("content", "");
    std::string fr = choice.value("finish_reason", "stop");
    out.finish_reason = fr == "length" ? FinishReason::length
                        : fr == "stop" ? FinishReason::stop
                                       : FinishReason::error;
    if (j.contains("usage")) {
      out.prompt_tokens = j["usage"].value("prompt_tokens", int64_t{0});
      out.completion_tokens = j["usage"].value("completion_tokens", int64_t{0});
    }
    out.latency_ms = ms;
    return out;
  }

private:
  Options opts_;
  std::string api_key_;
};

}  // namespace forge
