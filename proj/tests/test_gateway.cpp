#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "forge/gateway.hpp"

using namespace forge;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("forge_gw_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ChatRequest greedy_req(const std::string& prompt, const std::string& model = "m") {
  return ChatRequest::single_user(model, prompt, SamplingParams::greedy_params());
}

RetryPolicy fast_retries(int attempts = 5) {
  return RetryPolicy{attempts, 0, 0.0};
}

std::shared_ptr<MockProvider> echo_provider() {
  auto p = std::make_shared<MockProvider>();
  MockProvider::Rule r;
  r.match = MockProvider::Rule::Match::any;
  r.response = "echo:{{PROMPT_SHA8}}";
  p->add_rule(r);
  return p;
}

}  // namespace

TEST_CASE("scripted responses and finish reason") {
  TempDir tmp("script");
  fs::path script = tmp.path / "script.jsonl";
  {
    std::ofstream out(script);
    out << R"({"match": {"substring": "ping"}, "response": "pong"})" << "\n";
    out << R"({"match": "default", "response": "fallthrough"})" << "\n";
  }
  auto provider = MockProvider::from_script(script);
  Gateway gw(provider, tmp.path / "cache", fast_retries());

  ChatResponse r = gw.complete(greedy_req("send ping now"));
  REQUIRE(r.text == "pong");
  REQUIRE(r.finish_reason == FinishReason::stop);
  REQUIRE_FALSE(r.cached);
  REQUIRE(gw.complete(greedy_req("anything else")).text == "fallthrough");
}

TEST_CASE("cache identity: second call returns the stored response") {
  TempDir tmp("cache");
  auto provider = echo_provider();
  Gateway gw(provider, tmp.path / "cache", fast_retries());

  ChatResponse first = gw.complete(greedy_req("hello"));
  ChatResponse second = gw.complete(greedy_req("hello"));
  REQUIRE_FALSE(first.cached);
  REQUIRE(second.cached);
  REQUIRE(second.text == first.text);
  REQUIRE(provider->calls() == 1);
}

TEST_CASE("fail once then succeed costs exactly one retry") {
  TempDir tmp("retry");
  auto provider = std::make_shared<MockProvider>();
  MockProvider::Rule r;
  r.match = MockProvider::Rule::Match::any;
  r.response = "ok";
  r.failures_before_success = 1;
  provider->add_rule(r);
  Gateway gw(provider, tmp.path / "cache", fast_retries());

  ChatResponse resp = gw.complete(greedy_req("x"));
  REQUIRE(resp.text == "ok");
  REQUIRE(provider->calls() == 2);
}

TEST_CASE("retry exhaustion surfaces the last error") {
  TempDir tmp("exhaust");
  auto provider = std::make_shared<MockProvider>();
  MockProvider::Rule r;
  r.match = MockProvider::Rule::Match::any;
  r.response = "never";
  r.failures_before_success = 100;
  provider->add_rule(r);
  Gateway gw(provider, tmp.path / "cache", fast_retries(3));

  REQUIRE_THROWS_AS(gw.complete(greedy_req("x")), GatewayError);
  REQUIRE(provider->calls() == 3);
}

TEST_CASE("auth errors are not retried") {
  TempDir tmp("auth");
  auto provider = std::make_shared<MockProvider>();
  MockProvider::Rule r;
  r.match = MockProvider::Rule::Match::any;
  r.response = "never";
  r.failures_before_success = 100;
  r.failure_kind = GatewayError::Kind::auth;
  r.failure_status = 401;
  provider->add_rule(r);
  Gateway gw(provider, tmp.path / "cache", fast_retries());

  try {
    gw.complete(greedy_req("x"));
    FAIL("expected GatewayError");
  } catch (const GatewayError& e) {
    REQUIRE(e.kind() == GatewayError::Kind::auth);
  }
  REQUIRE(provider->calls() == 1);
}

TEST_CASE("batch preserves order and isolates element failures") {
  TempDir tmp("batch");
  auto provider = std::make_shared<MockProvider>();
  {
    MockProvider::Rule r;
    r.match = MockProvider::Rule::Match::substring;
    r.pattern = "request-2";
    r.response = "never";
    r.failures_before_success = 100;
    r.failure_kind = GatewayError::Kind::auth;  // non-retryable, fails fast
    provider->add_rule(r);
  }
  {
    MockProvider::Rule r;
    r.match = MockProvider::Rule::Match::any;
    r.response = "ok:{{PROMPT_SHA8}}";
    provider->add_rule(r);
  }
  Gateway gw(provider, tmp.path / "cache", fast_retries());

  std::vector<ChatRequest> reqs = {greedy_req("request-1"), greedy_req("request-2"),
                                   greedy_req("request-3")};
  auto results = gw.complete_batch(reqs, 2);
  REQUIRE(results.size() == 3);
  REQUIRE(results[0].ok());
  REQUIRE_FALSE(results[1].ok());
  REQUIRE(results[1].error_kind == GatewayError::Kind::auth);
  REQUIRE(results[2].ok());
  REQUIRE(results[0].response->text != results[2].response->text);
}

TEST_CASE("batch concurrency stays within max_in_flight") {
  TempDir tmp("conc");
  auto provider = echo_provider();
  Gateway gw(provider, tmp.path / "cache", fast_retries());

  std::vector<ChatRequest> reqs;
  reqs.reserve(1000);
  for (int i = 0; i < 1000; ++i)
    reqs.push_back(greedy_req("probe " + std::to_string(i)));
  auto results = gw.complete_batch(reqs, 16);
  for (const auto& r : results) REQUIRE(r.ok());
  REQUIRE(provider->peak_in_flight() <= 16);
  REQUIRE(provider->calls() == 1000);
}

TEST_CASE("cache key changes with every canonical field") {
  ChatRequest base = greedy_req("prompt");
  std::string k0 = cache_key("mock", base);
  REQUIRE(k0 == cache_key("mock", base));  // stable

  ChatRequest model = base;
  model.model_id = "other";
  REQUIRE(cache_key("mock", model) != k0);

  ChatRequest text = base;
  text.messages[0].text = "prompt!";
  REQUIRE(cache_key("mock", text) != k0);

  ChatRequest more = base;
  more.messages.insert(more.messages.begin(), {Role::system, "sys"});
  REQUIRE(cache_key("mock", more) != k0);

  ChatRequest tokens = base;
  tokens.sampling.max_tokens = 7;
  REQUIRE(cache_key("mock", tokens) != k0);

  ChatRequest penalty = base;
  penalty.sampling.repetition_penalty = 1.3;
  REQUIRE(cache_key("mock", penalty) != k0);

  ChatRequest sampled = base;
  sampled.sampling.mode = SamplingMode::sampled;
  sampled.sampling.temperature = 0.7;
  REQUIRE(cache_key("mock", sampled) != k0);

  REQUIRE(cache_key("other-provider", base) != k0);
}

TEST_CASE("greedy keys ignore temperature and seed; sampled keys do not") {
  ChatRequest a = greedy_req("p");
  ChatRequest b = a;
  b.sampling.temperature = 1.5;
  b.sampling.seed = 42;
  REQUIRE(cache_key("mock", a) == cache_key("mock", b));

  ChatRequest s1 = a;
  s1.sampling.mode = SamplingMode::sampled;
  s1.sampling.temperature = 0.7;
  ChatRequest s2 = s1;
  s2.sampling.temperature = 0.9;
  REQUIRE(cache_key("mock", s1) != cache_key("mock", s2));
  ChatRequest s3 = s1;
  s3.sampling.seed = 1;
  REQUIRE(cache_key("mock", s1) != cache_key("mock", s3));
  REQUIRE(cache_key("mock", s1, 0) != cache_key("mock", s1, 1));
}

TEST_CASE("sampled completions cache per sample index") {
  TempDir tmp("sampled");
  auto provider = echo_provider();
  Gateway gw(provider, tmp.path / "cache", fast_retries());
  ChatRequest req = ChatRequest::single_user(
      "m", "p", SamplingParams::ensemble_params());

  ChatResponse r0 = gw.complete(req, 0);
  ChatResponse r1 = gw.complete(req, 1);
  REQUIRE_FALSE(r0.cached);
  REQUIRE_FALSE(r1.cached);       // distinct cache slots
  REQUIRE(provider->calls() == 2);
  REQUIRE(gw.complete(req, 0).cached);
  REQUIRE(gw.complete(req, 1).cached);
  REQUIRE(provider->calls() == 2);
}

TEST_CASE("usage ledger sums tokens over non-cached responses only") {
  TempDir tmp("ledger");
  fs::path ledger = tmp.path / "ledger.jsonl";
  auto provider = echo_provider();
  Gateway gw(provider, tmp.path / "cache", fast_retries(), ledger);

  int64_t want_prompt = 0, want_completion = 0;
  for (int i = 0; i < 5; ++i) {
    ChatResponse r = gw.complete(greedy_req("prompt " + std::to_string(i)));
    want_prompt += r.prompt_tokens;
    want_completion += r.completion_tokens;
  }
  for (int i = 0; i < 5; ++i)
    REQUIRE(gw.complete(greedy_req("prompt " + std::to_string(i))).cached);

  UsageTotals live = gw.usage();
  REQUIRE(live.requests == 10);
  REQUIRE(live.cache_hits == 5);
  REQUIRE(live.prompt_tokens == want_prompt);
  REQUIRE(live.completion_tokens == want_completion);

  UsageTotals from_file = read_usage_ledger(ledger);
  REQUIRE(from_file.requests == live.requests);
  REQUIRE(from_file.cache_hits == live.cache_hits);
  REQUIRE(from_file.prompt_tokens == live.prompt_tokens);
  REQUIRE(from_file.completion_tokens == live.completion_tokens);
}

TEST_CASE("request validation") {
  ChatRequest empty;
  empty.model_id = "m";
  REQUIRE_THROWS_AS(empty.validate(), ContractError);

  ChatRequest wrong_last = greedy_req("p");
  wrong_last.messages.push_back({Role::assistant, "a"});
  REQUIRE_THROWS_AS(wrong_last.validate(), ContractError);

  SamplingParams bad;
  bad.temperature = 3.0;
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);
}
