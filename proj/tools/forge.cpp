// forge: pipeline driver. Every subcommand reads one JSON run config,
// executes a single stage, and writes its artifacts under the configured
// output directory. Exit codes: 0 success, 2 bad config, 3 stage failure.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "forge/config.hpp"
#include "forge/http_provider.hpp"
#include "forge/pipeline.hpp"

namespace {

void print_table(const forge::json& report) {
  std::printf("%-24s %s\n", "section", "summary");
  std::printf("%-24s %s\n", "-------", "-------");
  for (auto& [key, value] : report.items()) {
    std::string summary = value.is_primitive() ? value.dump() : value.dump();
    if (summary.size() > 100) summary = summary.substr(0, 97) + "...";
    std::printf("%-24s %s\n", key.c_str(), summary.c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forge: textbook-grounded CoT data synthesis and evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<uint64_t> seed_override;
  std::optional<size_t> limit;
  std::optional<std::string> mode_override;
  std::optional<int> k_override;
  std::optional<std::string> benchmark_override;
  std::optional<bool> strict_override;

  const std::vector<std::string> commands = {
      "ingest",  "chunk",    "synth-qa",  "synth-cot",     "synth-dialogue",
      "clean",   "assemble", "eval-mcqa", "eval-longform", "report"};
  for (const auto& name : commands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "run config JSON")->required();
    sub->add_option("--seed", seed_override, "override seeds.run");
    sub->add_option("--limit", limit, "process at most K pending records");
    if (name == "eval-mcqa") {
      sub->add_option("--mode", mode_override, "greedy|ensemble");
      sub->add_option("--k", k_override, "ensemble runs per item");
      sub->add_option("--benchmark", benchmark_override, "benchmark name");
      sub->add_flag("--strict-sizes,!--no-strict-sizes", strict_override,
                    "enforce registry sizes");
    }
    if (name == "eval-longform")
      sub->add_flag("--strict-sizes,!--no-strict-sizes", strict_override,
                    "enforce registry sizes");
  }

  CLI11_PARSE(app, argc, argv);
  std::string command = app.get_subcommands().front()->get_name();

  try {
    forge::RunConfig cfg = forge::load_run_config(config_path);
    if (seed_override) cfg.run_seed = *seed_override;
    if (limit) cfg.limit = *limit;
    if (mode_override) {
      if (*mode_override != "greedy" && *mode_override != "ensemble")
        throw forge::ConfigError("--mode must be greedy or ensemble");
      cfg.eval.mode = *mode_override;
    }
    if (k_override) cfg.eval.k = *k_override;
    if (benchmark_override) cfg.eval.benchmark = *benchmark_override;
    if (strict_override) cfg.strict_sizes = *strict_override;

    forge::PipelineContext::http_provider_factory() =
        [](const forge::ProviderConfig& pc) -> std::shared_ptr<forge::Provider> {
      forge::HttpProvider::Options opts;
      opts.base_url = pc.base_url;
      opts.timeout_s = pc.timeout_s;
      return std::make_shared<forge::HttpProvider>(opts);
    };

    forge::PipelineContext ctx = forge::PipelineContext::make(std::move(cfg));
    forge::json stats = forge::run_stage(ctx, command);
    if (command == "report") {
      print_table(stats);
    } else {
      std::cout << stats.dump(2) << "\n";
    }
    return 0;
  } catch (const forge::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const forge::Error& e) {
    std::cerr << "stage failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "stage failure: " << e.what() << "\n";
    return 3;
  }
}
