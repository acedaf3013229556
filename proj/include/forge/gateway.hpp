#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "forge/digest.hpp"
#include "forge/jsonl.hpp"
#include "forge/util.hpp"

namespace forge {

enum class SamplingMode { greedy, sampled };

struct SamplingParams {
  SamplingMode mode = SamplingMode::greedy;
  double temperature = 0.0;  // ignored in greedy mode
  double repetition_penalty = 1.0;
  int max_tokens = 1024;
  std::optional<int64_t> seed;  // mock-provider determinism only

  void validate() const {
    if (temperature < 0.0 || temperature > 2.0)
      throw ConfigError("sampling: temperature must be in [0, 2]");
    if (repetition_penalty <= 0.0)
      throw ConfigError("sampling: repetition_penalty must be positive");
    if (max_tokens <= 0) throw ConfigError("sampling: max_tokens must be positive");
  }

  static SamplingParams greedy_params(int max_tokens = 1024) {
    SamplingParams p;
    p.mode = SamplingMode::greedy;
    p.max_tokens = max_tokens;
    return p;
  }

  // The ensemble setting: temperature 0.7, repetition penalty 1.0.
  static SamplingParams ensemble_params(int max_tokens = 1024) {
    SamplingParams p;
    p.mode = SamplingMode::sampled;
    p.temperature = 0.7;
    p.repetition_penalty = 1.0;
    p.max_tokens = max_tokens;
    return p;
  }
};

enum class Role { system, user, assistant };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

struct ChatMessage {
  Role role = Role::user;
  std::string text;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  SamplingParams sampling;

  void validate() const {
    if (messages.empty()) throw ContractError("chat request: no messages");
    if (messages.back().role != Role::user)
      throw ContractError("chat request: last message must be from the user");
    sampling.validate();
  }

  static ChatRequest single_user(std::string model_id, std::string prompt,
                                 SamplingParams sampling) {
    ChatRequest r;
    r.model_id = std::move(model_id);
    r.messages.push_back({Role::user, std::move(prompt)});
    r.sampling = sampling;
    return r;
  }

  std::string concatenated_text() const {
    std::string all;
    for (const auto& m : messages) {
      all += m.text;
      all.push_back('\n');
    }
    return all;
  }
};

enum class FinishReason { stop, length, error };

inline const char* finish_reason_name(FinishReason f) {
  switch (f) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

struct ChatResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  int64_t prompt_tokens = 0;
  int64_t completion_tokens = 0;
  int64_t latency_ms = 0;
  bool cached = false;

  json to_json() const {
    return json{{"text", text},
                {"finish_reason", finish_reason_name(finish_reason)},
                {"prompt_tokens", prompt_tokens},
                {"completion_tokens", completion_tokens},
                {"latency_ms", latency_ms}};
  }

  static ChatResponse from_json(const json& j) {
    ChatResponse r;
    r.text = j.at("text").get<std::string>();
    std::string f = j.at("finish_reason").get<std::string>();
    r.finish_reason = f == "stop"     ? FinishReason::stop
                      : f == "length" ? FinishReason::length
                                      : FinishReason::error;
    r.prompt_tokens = j.at("prompt_tokens").get<int64_t>();
    r.completion_tokens = j.at("completion_tokens").get<int64_t>();
    r.latency_ms = j.at("latency_ms").get<int64_t>();
    return r;
  }
};

// Content-addressed key over everything that can change the completion.
// Greedy mode drops temperature and seed (both ignored there); sampled
// responses are keyed per sample_index so ensemble runs get independent
// cache slots.
inline std::string cache_key(const std::string& provider_id,
                             const ChatRequest& req, int sample_index = 0) {
  json msgs = json::array();
  for (const auto& m : req.messages)
    msgs.push_back(json{{"role", role_name(m.role)}, {"text", m.text}});
  json canon{{"provider", provider_id},
             {"model_id", req.model_id},
             {"messages", std::move(msgs)},
             {"mode", req.sampling.mode == SamplingMode::greedy ? "greedy" : "sampled"},
             {"repetition_penalty", req.sampling.repetition_penalty},
             {"max_tokens", req.sampling.max_tokens}};
  if (req.sampling.mode == SamplingMode::sampled) {
    canon["temperature"] = req.sampling.temperature;
    if (req.sampling.seed) canon["seed"] = *req.sampling.seed;
    canon["sample_index"] = sample_index;
  }
  return sha256_hex(canon.dump());
}

class Provider {
public:
  virtual ~Provider() = default;
  virtual std::string id() const = 0;
  // Throws GatewayError on failure.
  virtual ChatResponse send(const ChatRequest& request) = 0;
};

// Scripted provider for hermetic runs. Script records (JSONL):
//   {"match": {"substring": "..."} | {"digest": "..."} | "default",
//    "response": "...", "failures_before_success": 0,
//    "failure_kind": "rate_limited", "finish_reason": "stop"}
// First matching rule wins; digest rules are checked against the
// prompt digest, substring rules against the concatenated messages.
// "{{PROMPT_SHA8}}" in a response is replaced by the first 8 hex chars
// of the prompt digest, which keeps scripted outputs distinct per prompt.
class MockProvider : public Provider {
public:
  struct Rule {
    enum class Match { substring, digest, any } match = Match::any;
    std::string pattern;
    std::string response;
    FinishReason finish = FinishReason::stop;
    int failures_before_success = 0;
    GatewayError::Kind failure_kind = GatewayError::Kind::rate_limited;
    int failure_status = 429;
  };

  MockProvider() = default;

  static std::shared_ptr<MockProvider> from_script(const fs::path& path) {
    auto p = std::make_shared<MockProvider>();
    for_each_jsonl(path, [&](json&& j, size_t line) {
      Rule r;
      const json& m = j.at("match");
      if (m.is_string() && m.get<std::string>() == "default") {
        r.match = Rule::Match::any;
      } else if (m.is_object() && m.contains("substring")) {
        r.match = Rule::Match::substring;
        r.pattern = m["substring"].get<std::string>();
      } else if (m.is_object() && m.contains("digest")) {
        r.match = Rule::Match::digest;
        r.pattern = m["digest"].get<std::string>();
      } else {
        throw ConfigError("mock script line " + std::to_string(line) +
                          ": match must be {substring}, {digest} or \"default\"");
      }
      r.response = j.at("response").get<std::string>();
      r.failures_before_success = j.value("failures_before_success", 0);
      if (j.contains("finish_reason")) {
        std::string f = j["finish_reason"].get<std::string>();
        r.finish = f == "length" ? FinishReason::length
                   : f == "error" ? FinishReason::error
                                  : FinishReason::stop;
      }
      if (j.contains("failure_kind")) {
        std::string k = j["failure_kind"].get<std::string>();
        if (k == "rate_limited") {
          r.failure_kind = GatewayError::Kind::rate_limited;
          r.failure_status = 429;
        } else if (k == "timeout") {
          r.failure_kind = GatewayError::Kind::timeout;
          r.failure_status = 408;
        } else if (k == "auth") {
          r.failure_kind = GatewayError::Kind::auth;
          r.failure_status = 401;
        } else {
          r.failure_kind = GatewayError::Kind::provider;
          r.failure_status = 500;
        }
      }
      if (r.finish == FinishReason::stop && r.response.empty())
        throw ConfigError("mock script line " + std::to_string(line) +
                          ": stop response must be non-empty");
      p->add_rule(r);
    });
    return p;
  }

  void add_rule(Rule r) {
    rules_.push_back(std::make_unique<RuleState>(std::move(r)));
  }

  std::string id() const override { return "mock"; }

  ChatResponse send(const ChatRequest& request) override {
    InFlightGuard guard(*this);
    calls_.fetch_add(1);
    std::string all = request.concatenated_text();
    std::string digest = sha256_hex(all);

    for (auto& rs : rules_) {
      const Rule& r = rs->rule;
      bool hit = false;
      switch (r.match) {
        case Rule::Match::substring:
          hit = all.find(r.pattern) != std::string::npos;
          break;
        case Rule::Match::digest:
          hit = digest == r.pattern;
          break;
        case Rule::Match::any:
          hit = true;
          break;
      }
      if (!hit) continue;
      if (r.failures_before_success > 0) {
        int seen = rs->failures_served.fetch_add(1);
        if (seen < r.failures_before_success)
          throw GatewayError(r.failure_kind, r.failure_status,
                             "mock scripted failure");
      }
      ChatResponse resp;
      resp.text = substitute(r.response, digest);
      resp.finish_reason = r.finish;
      resp.prompt_tokens = static_cast<int64_t>(all.size() / 4) + 1;
      resp.completion_tokens = static_cast<int64_t>(resp.text.size() / 4) + 1;
      resp.latency_ms = 0;
      return resp;
    }
    throw GatewayError(GatewayError::Kind::provider, 500,
                       "mock script has no rule for prompt digest " + digest);
  }

  int64_t calls() const { return calls_.load(); }
  int peak_in_flight() const { return peak_in_flight_.load(); }

private:
  struct RuleState {
    explicit RuleState(Rule r) : rule(std::move(r)) {}
    Rule rule;
    std::atomic<int> failures_served{0};
  };

  struct InFlightGuard {
    explicit InFlightGuard(MockProvider& p) : provider(p) {
      int now = provider.in_flight_.fetch_add(1) + 1;
      int peak = provider.peak_in_flight_.load();
      while (now > peak &&
             !provider.peak_in_flight_.compare_exchange_weak(peak, now)) {
      }
    }
    ~InFlightGuard() { provider.in_flight_.fetch_sub(1); }
    MockProvider& provider;
  };

  static std::string substitute(std::string text, const std::string& digest) {
    const std::string token = "{{PROMPT_SHA8}}";
    const std::string sha8 = digest.substr(0, 8);
    size_t pos = 0;
    while ((pos = text.find(token, pos)) != std::string::npos) {
      text.replace(pos, token.size(), sha8);
      pos += sha8.size();
    }
    return text;
  }

  std::vector<std::unique_ptr<RuleState>> rules_;
  std::atomic<int64_t> calls_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_in_flight_{0};
};

struct RetryPolicy {
  int max_attempts = 5;
  int base_delay_ms = 1000;  // attempt k sleeps base * 2^k, +/- jitter
  double jitter_frac = 0.2;
};

struct UsageTotals {
  int64_t requests = 0;
  int64_t cache_hits = 0;
  int64_t prompt_tokens = 0;      // non-cached only
  int64_t completion_tokens = 0;  // non-cached only
};

// Front door for all completions: per-request file cache with atomic
// commit, bounded retries on transient failures, and a JSONL usage ledger.
class Gateway {
public:
  Gateway(std::shared_ptr<Provider> provider, fs::path cache_dir,
          RetryPolicy retry = {}, std::optional<fs::path> ledger_path = {})
      : provider_(std::move(provider)),
        cache_dir_(std::move(cache_dir)),
        retry_(retry),
        ledger_path_(std::move(ledger_path)),
        jitter_rng_(0x5EEDED) {
    fs::create_directories(cache_dir_);
  }

  ChatResponse complete(const ChatRequest& request, int sample_index = 0) {
    request.validate();
    std::string key = cache_key(provider_->id(), request, sample_index);
    fs::path entry = cache_dir_ / (key + ".json");

    if (fs::exists(entry)) {
      ChatResponse r = ChatResponse::from_json(
          parse_json(read_file(entry), entry.string()));
      r.cached = true;
      log_usage(request, r, key);
      return r;
    }

    ChatResponse r = send_with_retries(request);
    write_json_file(entry, r.to_json());  // temp-then-rename commit
    log_usage(request, r, key);
    return r;
  }

  struct BatchResult {
    std::optional<ChatResponse> response;
    std::string error;  // empty on success
    GatewayError::Kind error_kind = GatewayError::Kind::provider;

    bool ok() const { return response.has_value(); }
  };

  // Responses come back in request order; at most max_in_flight requests
  // are outstanding at once. Element failures are carried positionally.
  std::vector<BatchResult> complete_batch(const std::vector<ChatRequest>& requests,
                                          int max_in_flight,
                                          int sample_index = 0) {
    if (max_in_flight < 1)
      throw ContractError("complete_batch: max_in_flight must be >= 1");
    std::vector<BatchResult> results(requests.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= requests.size()) return;
        try {
          results[i].response = complete(requests[i], sample_index);
        } catch (const GatewayError& e) {
          results[i].error = e.what();
          results[i].error_kind = e.kind();
        } catch (const std::exception& e) {
          results[i].error = e.what();
        }
      }
    };
    size_t n_threads = std::min<size_t>(requests.size(),
                                        static_cast<size_t>(max_in_flight));
    std::vector<std::thread> pool;
    for (size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return results;
  }

  UsageTotals usage() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return totals_;
  }

  const fs::path& cache_dir() const { return cache_dir_; }
  Provider& provider() { return *provider_; }

private:
  ChatResponse send_with_retries(const ChatRequest& request) {
    for (int attempt = 0;; ++attempt) {
      try {
        auto t0 = std::chrono::steady_clock::now();
        ChatResponse r = provider_->send(request);
        auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
        if (r.latency_ms == 0) r.latency_ms = ms;
        return r;
      } catch (const GatewayError& e) {
        if (!e.retryable() || attempt + 1 >= retry_.max_attempts) throw;
        sleep_backoff(attempt);
      }
    }
  }

  void sleep_backoff(int attempt) {
    double delay = retry_.base_delay_ms * std::pow(2.0, attempt);
    double jitter;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      jitter = 1.0 + retry_.jitter_frac *
                         (2.0 * (jitter_rng_() / double(UINT64_MAX)) - 1.0);
    }
    auto ms = static_cast<int64_t>(delay * jitter);
    if (ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
  }

  void log_usage(const ChatRequest& request, const ChatResponse& r,
                 const std::string& key) {
    std::lock_guard<std::mutex> lock(mutex_);
    totals_.requests += 1;
    if (r.cached) {
      totals_.cache_hits += 1;
    } else {
      totals_.prompt_tokens += r.prompt_tokens;
      totals_.completion_tokens += r.completion_tokens;
    }
    if (!ledger_path_) return;
    if (!ledger_) {
      fs::create_directories(ledger_path_->parent_path().empty()
                                 ? fs::path(".")
                                 : ledger_path_->parent_path());
      ledger_.emplace(*ledger_path_, std::ios::binary | std::ios::app);
    }
    json line{{"ts", unix_millis()},
              {"model_id", request.model_id},
              {"digest", key},
              {"prompt_tokens", r.prompt_tokens},
              {"completion_tokens", r.completion_tokens},
              {"cached", r.cached},
              {"latency_ms", r.latency_ms}};
    *ledger_ << line.dump() << '\n';
    ledger_->flush();
  }

  std::shared_ptr<Provider> provider_;
  fs::path cache_dir_;
  RetryPolicy retry_;
  std::optional<fs::path> ledger_path_;
  std::optional<std::ofstream> ledger_;
  mutable std::mutex mutex_;
  UsageTotals totals_;
  std::mt19937_64 jitter_rng_;
};

// Sums a usage ledger written by one or more gateway instances.
inline UsageTotals read_usage_ledger(const fs::path& path) {
  UsageTotals t;
  if (!fs::exists(path)) return t;
  for_each_jsonl(path, [&](json&& j, size_t) {
    t.requests += 1;
    if (j.value("cached", false)) {
      t.cache_hits += 1;
    } else {
      t.prompt_tokens += j.value("prompt_tokens", int64_t{0});
      t.completion_tokens += j.value("completion_tokens", int64_t{0});
    }
  });
  return t;
}

}  // namespace forge
