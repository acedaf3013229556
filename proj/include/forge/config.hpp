#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "forge/chunker.hpp"
#include "forge/gateway.hpp"
#include "forge/jsonl.hpp"

namespace forge {

constexpr int kConfigVersion = 1;

struct ProviderConfig {
  std::string kind = "mock";  // "mock" | "openai"
  std::string base_url;
  std::string generator_model;
  std::string judge_model;
  fs::path mock_script;
  int timeout_s = 60;
  RetryPolicy retry;
};

struct AssembleSourceConfig {
  std::string name;           // one of the nine source names
  fs::path path;              // native-record JSONL
  fs::path cot_path;          // mcqa+cot sources: the cot_records file
};

struct EvalConfig {
  std::string benchmark = "medqa";
  std::string mode = "greedy";  // "greedy" | "ensemble"
  int k = 20;
};

struct RunConfig {
  ProviderConfig provider;
  ChunkPolicy chunk_policy;
  std::map<std::string, SamplingParams> sampling;  // per stage
  uint64_t run_seed = 0;
  int max_in_flight = 4;
  bool strict_sizes = true;
  EvalConfig eval;
  double holdout = 0.0;

  fs::path output_dir;
  fs::path cache_dir;
  std::optional<fs::path> templates_dir;
  std::optional<fs::path> corpus_dir;
  std::optional<fs::path> corpus_manifest;
  std::optional<fs::path> medqa_items;
  std::optional<fs::path> chatdoctor;
  std::optional<fs::path> kqa;
  std::optional<fs::path> responses;
  std::map<std::string, fs::path> benchmarks;
  std::vector<fs::path> cot_inputs;
  std::vector<AssembleSourceConfig> assemble_sources;

  std::optional<size_t> limit;  // --limit: cap records processed this run

  SamplingParams sampling_for(const std::string& stage) const {
    auto it = sampling.find(stage);
    if (it != sampling.end()) return it->second;
    return SamplingParams::greedy_params();
  }

  fs::path out(const std::string& filename) const { return output_dir / filename; }
};

namespace detail {

inline SamplingParams sampling_from_json(const json& j) {
  SamplingParams p;
  std::string mode = j.value("mode", "greedy");
  if (mode == "sampled")
    p.mode = SamplingMode::sampled;
  else if (mode == "greedy")
    p.mode = SamplingMode::greedy;
  else
    throw ConfigError("sampling.mode must be \"greedy\" or \"sampled\"");
  p.temperature = j.value("temperature", 0.0);
  p.repetition_penalty = j.value("repetition_penalty", 1.0);
  p.max_tokens = j.value("max_tokens", 1024);
  if (j.contains("seed")) p.seed = j["seed"].get<int64_t>();
  p.validate();
  return p;
}

inline std::optional<fs::path> opt_path(const json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  return fs::path(j[key].get<std::string>());
}

}  // namespace detail

inline RunConfig parse_run_config(const json& j) {
  try {
    if (j.value("config_version", 0) != kConfigVersion)
      throw ConfigError("config_version must be " + std::to_string(kConfigVersion));
    RunConfig c;

    const json& p = j.at("provider");
    c.provider.kind = p.value("kind", "mock");
    if (c.provider.kind != "mock" && c.provider.kind != "openai")
      throw ConfigError("provider.kind must be \"mock\" or \"openai\"");
    c.provider.base_url = p.value("base_url", "");
    c.provider.generator_model = p.value("generator_model", "");
    c.provider.judge_model = p.value("judge_model", "");
    if (p.contains("mock_script"))
      c.provider.mock_script = p["mock_script"].get<std::string>();
    c.provider.timeout_s = p.value("timeout_s", 60);
    if (p.contains("retry")) {
      const json& r = p["retry"];
      c.provider.retry.max_attempts = r.value("max_attempts", 5);
      c.provider.retry.base_delay_ms = r.value("base_delay_ms", 1000);
      c.provider.retry.jitter_frac = r.value("jitter_frac", 0.2);
      if (c.provider.retry.max_attempts < 1)
        throw ConfigError("retry.max_attempts must be >= 1");
    }

    const json& paths = j.at("paths");
    c.output_dir = paths.at("output_dir").get<std::string>();
    c.cache_dir = paths.contains("cache_dir")
                      ? fs::path(paths["cache_dir"].get<std::string>())
                      : c.output_dir / "cache";
    c.templates_dir = detail::opt_path(paths, "templates_dir");
    c.corpus_dir = detail::opt_path(paths, "corpus_dir");
    c.corpus_manifest = detail::opt_path(paths, "corpus_manifest");
    c.medqa_items = detail::opt_path(paths, "medqa_items");
    c.chatdoctor = detail::opt_path(paths, "chatdoctor");
    c.kqa = detail::opt_path(paths, "kqa");
    c.responses = detail::opt_path(paths, "responses");
    if (paths.contains("benchmarks"))
      for (auto& [name, path] : paths["benchmarks"].items())
        c.benchmarks[name] = fs::path(path.get<std::string>());

    if (j.contains("chunk_policy")) {
      const json& cp = j["chunk_policy"];
      c.chunk_policy.target_length = cp.value("target_length", size_t{4000});
      c.chunk_policy.overlap_length =
          cp.contains("overlap_length")
              ? cp["overlap_length"].get<size_t>()
              : c.chunk_policy.target_length / 10;
      c.chunk_policy.snap_to_paragraph = cp.value("snap_to_paragraph", true);
      c.chunk_policy.validate();
    } else {
      c.chunk_policy = ChunkPolicy::with_default_overlap(4000);
    }

    if (j.contains("sampling"))
      for (auto& [stage, params] : j["sampling"].items())
        c.sampling[stage] = detail::sampling_from_json(params);

    if (j.contains("seeds")) {
      if (!j["seeds"].contains("run"))
        throw ConfigError("seeds.run is required when seeds is present");
      c.run_seed = j["seeds"]["run"].get<uint64_t>();
    }
    c.max_in_flight = j.value("max_in_flight", 4);
    if (c.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
    c.strict_sizes = j.value("strict_sizes", true);

    if (j.contains("eval")) {
      const json& e = j["eval"];
      c.eval.benchmark = e.value("benchmark", "medqa");
      c.eval.mode = e.value("mode", "greedy");
      if (c.eval.mode != "greedy" && c.eval.mode != "ensemble")
        throw ConfigError("eval.mode must be \"greedy\" or \"ensemble\"");
      c.eval.k = e.value("k", 20);
      if (c.eval.k < 1) throw ConfigError("eval.k must be >= 1");
    }

    if (j.contains("cot_inputs"))
      for (const auto& p2 : j["cot_inputs"])
        c.cot_inputs.emplace_back(p2.get<std::string>());

    if (j.contains("assemble")) {
      const json& a = j["assemble"];
      c.holdout = a.value("holdout", 0.0);
      if (c.holdout < 0.0 || c.holdout >= 1.0)
        throw ConfigError("assemble.holdout must be in [0, 1)");
      for (const auto& s : a.value("sources", json::array())) {
        AssembleSourceConfig src;
        src.name = s.at("name").get<std::string>();
        src.path = fs::path(s.at("path").get<std::string>());
        if (s.contains("cot_path"))
          src.cot_path = fs::path(s["cot_path"].get<std::string>());
        c.assemble_sources.push_back(std::move(src));
      }
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline RunConfig load_run_config(const fs::path& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path.string());
  return parse_run_config(j);
}

}  // namespace forge
