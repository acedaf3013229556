#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "forge/assemble.hpp"
#include "forge/aux_synthesis.hpp"
#include "forge/chunker.hpp"
#include "forge/config.hpp"
#include "forge/cot.hpp"
#include "forge/gateway.hpp"
#include "forge/longform_eval.hpp"
#include "forge/mcqa_eval.hpp"
#include "forge/prompts.hpp"

namespace forge {

// JSONL progress events, one object per line.
class EventLog {
public:
  explicit EventLog(const fs::path& path) {
    fs::create_directories(path.parent_path().empty() ? fs::path(".")
                                                      : path.parent_path());
    out_.open(path, std::ios::binary | std::ios::app);
  }

  void log(const std::string& stage, const std::string& event,
           json fields = json::object()) {
    fields["ts"] = unix_millis();
    fields["stage"] = stage;
    fields["event"] = event;
    if (out_) {
      out_ << fields.dump() << '\n';
      out_.flush();
    }
  }

private:
  std::ofstream out_;
};

struct PipelineContext {
  RunConfig cfg;
  PromptLibrary prompts;
  std::shared_ptr<Gateway> gateway;
  std::unique_ptr<EventLog> events;

  static PipelineContext make(RunConfig cfg) {
    PipelineContext ctx;
    ctx.prompts = cfg.templates_dir ? PromptLibrary::load_dir(*cfg.templates_dir)
                                    : PromptLibrary::builtin();
    std::shared_ptr<Provider> provider;
    if (cfg.provider.kind == "mock") {
      if (cfg.provider.mock_script.empty())
        throw ConfigError("mock provider requires provider.mock_script");
      provider = MockProvider::from_script(cfg.provider.mock_script);
    } else {
      provider = make_http_provider(cfg.provider);
    }
    fs::create_directories(cfg.output_dir);
    ctx.gateway = std::make_shared<Gateway>(provider, cfg.cache_dir,
                                            cfg.provider.retry,
                                            cfg.output_dir / "usage_ledger.jsonl");
    ctx.events = std::make_unique<EventLog>(cfg.output_dir / "events.jsonl");
    ctx.cfg = std::move(cfg);
    return ctx;
  }

  // Defined in http_provider.hpp consumers; kept as a hook so that pure
  // library users (tests) do not pull the HTTP stack in.
  static std::function<std::shared_ptr<Provider>(const ProviderConfig&)>&
  http_provider_factory() {
    static std::function<std::shared_ptr<Provider>(const ProviderConfig&)> f;
    return f;
  }

  static std::shared_ptr<Provider> make_http_provider(const ProviderConfig& pc) {
    auto& factory = http_provider_factory();
    if (!factory)
      throw ConfigError(
          "provider.kind \"openai\" is not available in this build");
    return factory(pc);
  }

  std::string generator_model(const std::string& stage) const {
    if (cfg.provider.generator_model.empty())
      throw ConfigError(stage + ": provider.generator_model is required");
    return cfg.provider.generator_model;
  }

  std::string judge_model(const std::string& stage) const {
    if (cfg.provider.judge_model.empty())
      throw ConfigError(stage + ": provider.judge_model is required");
    return cfg.provider.judge_model;
  }
};

namespace detail {

// Record-level fan-out with a bounded worker pool and a single writer.
// Work is committed in input order after each wave, so a killed run
// loses at most one wave and never writes out of order.
template <typename Item>
void process_in_waves(const std::vector<Item>& todo, int max_in_flight,
                      const std::function<json(const Item&)>& work,
                      JsonlStageWriter& writer) {
  const size_t wave = static_cast<size_t>(max_in_flight) * 4;
  for (size_t offset = 0; offset < todo.size(); offset += wave) {
    size_t end = std::min(todo.size(), offset + wave);
    std::vector<json> results(end - offset);
    std::vector<std::string> errors(end - offset);
    std::atomic<size_t> next{offset};
    auto worker = [&]() {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= end) return;
        try {
          results[i - offset] = work(todo[i]);
        } catch (const std::exception& e) {
          errors[i - offset] = e.what();
        }
      }
    };
    size_t n_threads =
        std::min<size_t>(end - offset, static_cast<size_t>(max_in_flight));
    std::vector<std::thread> pool;
    for (size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (size_t i = offset; i < end; ++i) {
      if (!errors[i - offset].empty()) throw StageError(errors[i - offset]);
      writer.write(results[i - offset]);
    }
  }
}

inline size_t apply_limit(size_t n, const std::optional<size_t>& limit) {
  return limit ? std::min(n, *limit) : n;
}

}  // namespace detail

// --- ingest ------------------------------------------------------------------

inline json run_ingest(PipelineContext& ctx) {
  if (!ctx.cfg.corpus_dir) throw ConfigError("ingest: paths.corpus_dir is required");
  Corpus corpus = load_corpus(*ctx.cfg.corpus_dir, ctx.cfg.corpus_manifest);
  std::vector<json> records;
  for (const auto& d : corpus.documents)
    records.push_back(json{{"id", d.id},
                           {"title", d.title},
                           {"discipline", d.discipline},
                           {"text", d.text},
                           {"source_path", d.source_path}});
  write_jsonl(ctx.cfg.out("documents.jsonl"), records);
  for (const auto& w : corpus.warnings)
    ctx.events->log("ingest", "skipped_file", {{"path", w.path}, {"reason", w.reason}});
  json stats{{"documents", corpus.documents.size()},
             {"skipped", corpus.warnings.size()}};
  ctx.events->log("ingest", "done", stats);
  return stats;
}

// --- chunk -------------------------------------------------------------------

inline json run_chunk(PipelineContext& ctx) {
  fs::path docs_path = ctx.cfg.out("documents.jsonl");
  if (!fs::exists(docs_path))
    throw ConfigError("chunk: missing documents.jsonl (run ingest first)");
  std::vector<json> out;
  size_t n_docs = 0;
  for_each_jsonl(docs_path, [&](json&& j, size_t) {
    Document doc;
    doc.id = j.at("id").get<std::string>();
    doc.title = j.value("title", "");
    doc.discipline = j.value("discipline", "");
    doc.text = j.at("text").get<std::string>();
    doc.source_path = j.value("source_path", "");
    ++n_docs;
    for (const auto& c : chunk_document(doc, ctx.cfg.chunk_policy))
      out.push_back(c.to_json());
  });
  write_jsonl(ctx.cfg.out("chunks.jsonl"), out);
  json stats{{"documents", n_docs},
             {"chunks", out.size()},
             {"target_length", ctx.cfg.chunk_policy.target_length},
             {"overlap_length", ctx.cfg.chunk_policy.overlap_length}};
  ctx.events->log("chunk", "done", stats);
  return stats;
}

// --- synth-qa ------------------------------------------------------------------

inline json run_synth_qa(PipelineContext& ctx) {
  fs::path chunks_path = ctx.cfg.out("chunks.jsonl");
  if (!fs::exists(chunks_path))
    throw ConfigError("synth-qa: missing chunks.jsonl (run chunk first)");
  if (!ctx.cfg.medqa_items)
    throw ConfigError("synth-qa: paths.medqa_items is required (few-shot pool)");
  std::string model = ctx.generator_model("synth-qa");
  SamplingParams sampling = ctx.cfg.sampling_for("qa");

  McqaLoadResult pool = load_mcqa_jsonl(*ctx.cfg.medqa_items, ItemSource::medqa);
  if (pool.items.size() < 3)
    throw ConfigError("synth-qa: few-shot pool needs at least 3 items");

  std::vector<Chunk> chunks = read_chunks_jsonl(chunks_path);
  JsonlStageWriter audit(ctx.cfg.out("qa_audit.jsonl"));
  auto done = audit.open();
  std::vector<Chunk> todo;
  for (auto& c : chunks)
    if (!done.count(c.key())) todo.push_back(std::move(c));
  todo.resize(detail::apply_limit(todo.size(), ctx.cfg.limit));

  detail::process_in_waves<Chunk>(
      todo, ctx.cfg.max_in_flight,
      [&](const Chunk& chunk) -> json {
        auto fewshot = sample_fewshot(pool.items, 3,
                                      mix_seed(ctx.cfg.run_seed, chunk.key()));
        QaGenOutcome o = generate_qa_from_chunk(chunk, fewshot, *ctx.gateway,
                                                ctx.prompts, model, sampling);
        json rec{{"id", chunk.key()},
                 {"kind", o.kind == QaGenKind::item      ? "item"
                          : o.kind == QaGenKind::abstain ? "abstain"
                                                         : "parse_error"},
                 {"raw_text", o.raw_text}};
        if (!o.error_detail.empty()) rec["error_detail"] = o.error_detail;
        if (o.item) rec["item"] = o.item->to_json();
        return rec;
      },
      audit);

  // qa_items.jsonl is a deterministic projection of the audit file.
  std::map<std::string, json> items;
  size_t n_item = 0, n_abstain = 0, n_parse_error = 0;
  for_each_jsonl(audit.path(), [&](json&& j, size_t) {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "item") {
      ++n_item;
      items[j.at("id").get<std::string>()] = j.at("item");
    } else if (kind == "abstain") {
      ++n_abstain;
    } else {
      ++n_parse_error;
    }
  });
  std::vector<json> item_records;
  for (auto& [_, item] : items) item_records.push_back(std::move(item));
  write_jsonl(ctx.cfg.out("qa_items.jsonl"), item_records);

  json stats{{"processed", todo.size()},
             {"items", n_item},
             {"abstain", n_abstain},
             {"parse_error", n_parse_error}};
  ctx.events->log("synth-qa", "done", stats);
  return stats;
}

// --- synth-cot ------------------------------------------------------------------

inline std::vector<McqaItem> load_cot_input_items(const RunConfig& cfg) {
  if (cfg.cot_inputs.empty())
    throw ConfigError("synth-cot: cot_inputs is required");
  std::vector<McqaItem> items;
  std::unordered_set<std::string> seen;
  for (const auto& path : cfg.cot_inputs) {
    if (!fs::exists(path))
      throw ConfigError("synth-cot: missing input " + path.string());
    McqaLoadResult r = load_mcqa_jsonl(path);
    for (auto& item : r.items) {
      if (!seen.insert(item.id).second)
        throw ConfigError("synth-cot: duplicate item id across inputs: " + item.id);
      items.push_back(std::move(item));
    }
  }
  return items;
}

inline json run_synth_cot(PipelineContext& ctx) {
  std::string model = ctx.generator_model("synth-cot");
  SamplingParams sampling = ctx.cfg.sampling_for("cot");
  std::vector<McqaItem> items = load_cot_input_items(ctx.cfg);

  JsonlStageWriter writer(ctx.cfg.out("cot_records.jsonl"), "item_id");
  auto done = writer.open();
  std::vector<McqaItem> todo;
  for (auto& item : items)
    if (!done.count(item.id)) todo.push_back(std::move(item));
  todo.resize(detail::apply_limit(todo.size(), ctx.cfg.limit));

  detail::process_in_waves<McqaItem>(
      todo, ctx.cfg.max_in_flight,
      [&](const McqaItem& item) -> json {
        std::string raw;
        try {
          raw = generate_cot(item, *ctx.gateway, ctx.prompts, model, sampling);
        } catch (const GatewayError& e) {
          throw StageError("synth-cot: item " + item.id + ": " + e.what());
        }
        return roundtrip_filter(item, raw).to_json();
      },
      writer);

  size_t kept = 0, wrong = 0, extraction = 0, format = 0;
  for_each_jsonl(writer.path(), [&](json&& j, size_t) {
    if (j.at("kept").get<bool>()) {
      ++kept;
      return;
    }
    std::string r = j.value("reject_reason", "");
    if (r == "wrong_answer") ++wrong;
    else if (r == "extraction_failed") ++extraction;
    else ++format;
  });

  // audit.jsonl mirrors every raw model text produced by the synthesis passes.
  std::vector<json> audit;
  if (fs::exists(ctx.cfg.out("qa_audit.jsonl")))
    for_each_jsonl(ctx.cfg.out("qa_audit.jsonl"), [&](json&& j, size_t) {
      audit.push_back(json{{"id", j.at("id")},
                           {"stage", "synth-qa"},
                           {"raw_text", j.at("raw_text")}});
    });
  for_each_jsonl(writer.path(), [&](json&& j, size_t) {
    audit.push_back(json{{"id", j.at("item_id")},
                         {"stage", "synth-cot"},
                         {"raw_text", j.at("explanation")}});
  });
  write_jsonl(ctx.cfg.out("audit.jsonl"), audit);

  json stats{{"processed", todo.size()},
             {"kept", kept},
             {"rejected_wrong_answer", wrong},
             {"rejected_extraction_failed", extraction},
             {"rejected_format", format}};
  ctx.events->log("synth-cot", "done", stats);
  return stats;
}

// --- synth-dialogue ---------------------------------------------------------------

inline json run_synth_dialogue(PipelineContext& ctx) {
  if (!ctx.cfg.medqa_items)
    throw ConfigError("synth-dialogue: paths.medqa_items is required");
  fs::path cot_path = ctx.cfg.out("cot_records.jsonl");
  if (!fs::exists(cot_path))
    throw ConfigError("synth-dialogue: missing cot_records.jsonl (run synth-cot first)");
  std::string model = ctx.judge_model("synth-dialogue");
  SamplingParams sampling = ctx.cfg.sampling_for("dialogue");

  McqaLoadResult loaded = load_mcqa_jsonl(*ctx.cfg.medqa_items, ItemSource::medqa);
  std::unordered_map<std::string, const McqaItem*> by_id;
  for (const auto& item : loaded.items) by_id[item.id] = &item;

  std::vector<std::pair<McqaItem, CotRecord>> pairs;
  for_each_jsonl(cot_path, [&](json&& j, size_t) {
    CotRecord rec = CotRecord::from_json(j);
    if (!rec.kept) return;
    auto it = by_id.find(rec.item_id);
    if (it == by_id.end()) return;  // synthetic items have no dialogue pass
    pairs.emplace_back(*it->second, std::move(rec));
  });

  JsonlStageWriter accepted(ctx.cfg.out("medqa_dialogue.jsonl"), "item_id");
  JsonlStageWriter rejected(ctx.cfg.out("dialogue_rejects.jsonl"), "item_id");
  auto done = accepted.open();
  for (const auto& id : rejected.open()) done.insert(id);

  std::vector<std::pair<McqaItem, CotRecord>> todo;
  for (auto& p : pairs)
    if (!done.count(p.second.item_id)) todo.push_back(std::move(p));
  todo.resize(detail::apply_limit(todo.size(), ctx.cfg.limit));

  std::atomic<size_t> n_accepted{0};
  // Outcomes go to one of two files, so the wave helper's single writer
  // does not fit; parallelism here is at the gateway batch level instead.
  for (const auto& [item, cot] : todo) {
    DialogueOutcome o;
    try {
      o = generate_dialogue(item, cot, *ctx.gateway, ctx.prompts, model, sampling);
    } catch (const GatewayError& e) {
      throw StageError("synth-dialogue: item " + item.id + ": " + e.what());
    }
    if (o.accepted()) {
      accepted.write(o.dialogue->to_json());
      n_accepted.fetch_add(1);
    } else {
      rejected.write(json{{"item_id", item.id},
                          {"reject_reason", o.reject_reason},
                          {"raw_text", o.raw_text}});
    }
  }

  size_t total_accepted = 0, total_rejected = 0;
  for_each_jsonl(accepted.path(), [&](json&&, size_t) { ++total_accepted; });
  for_each_jsonl(rejected.path(), [&](json&&, size_t) { ++total_rejected; });
  double rate = total_accepted + total_rejected == 0
                    ? 0.0
                    : double(total_accepted) / double(total_accepted + total_rejected);
  json stats{{"processed", todo.size()},
             {"accepted", total_accepted},
             {"rejected", total_rejected},
             {"acceptance_rate", rate}};
  ctx.events->log("synth-dialogue", "done", stats);
  return stats;
}

// --- clean -----------------------------------------------------------------------

inline json run_clean(PipelineContext& ctx) {
  if (!ctx.cfg.chatdoctor)
    throw ConfigError("clean: paths.chatdoctor is required");
  std::string model = ctx.judge_model("clean");
  SamplingParams sampling = ctx.cfg.sampling_for("cleaning");

  struct Record {
    std::string id, query, response;
  };
  std::vector<Record> records;
  for_each_jsonl(*ctx.cfg.chatdoctor, [&](json&& j, size_t line) {
    Record r;
    r.id = j.contains("id")
               ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump())
               : std::to_string(line);
    r.query = j.at("patient_query").get<std::string>();
    r.response = j.at("doctor_response").get<std::string>();
    records.push_back(std::move(r));
  });

  JsonlStageWriter writer(ctx.cfg.out("chatdoctor_cleaned.jsonl"));
  auto done = writer.open();
  std::vector<Record> todo;
  for (auto& r : records)
    if (!done.count(r.id)) todo.push_back(std::move(r));
  todo.resize(detail::apply_limit(todo.size(), ctx.cfg.limit));

  detail::process_in_waves<Record>(
      todo, ctx.cfg.max_in_flight,
      [&](const Record& r) -> json {
        CleanedResponse cleaned;
        try {
          cleaned = clean_response(r.response, *ctx.gateway, ctx.prompts, model,
                                   sampling);
        } catch (const GatewayError& e) {
          throw StageError("clean: record " + r.id + ": " + e.what());
        } catch (const CleaningError& e) {
          throw StageError("clean: record " + r.id + ": " + e.what());
        }
        json j = cleaned.to_json();
        j["id"] = r.id;
        j["patient_query"] = r.query;
        return j;
      },
      writer);

  size_t passed = 0, failed = 0;
  for_each_jsonl(writer.path(), [&](json&& j, size_t) {
    (j.at("passed_checks").get<bool>() ? passed : failed) += 1;
  });
  json stats{{"processed", todo.size()}, {"passed", passed}, {"failed", failed}};
  ctx.events->log("clean", "done", stats);
  return stats;
}

// --- assemble ---------------------------------------------------------------------

inline ExampleStream mcqa_cot_stream(const fs::path& items_path,
                                     const fs::path& cot_path) {
  return [items_path, cot_path](const std::function<void(TrainingExample)>& emit) {
    McqaLoadResult loaded = load_mcqa_jsonl(items_path);
    std::unordered_map<std::string, const McqaItem*> by_id;
    for (const auto& item : loaded.items) by_id[item.id] = &item;
    for_each_jsonl(cot_path, [&](json&& j, size_t) {
      CotRecord rec = CotRecord::from_json(j);
      if (!rec.kept) return;
      auto it = by_id.find(rec.item_id);
      if (it == by_id.end()) return;
      emit(mcqa_to_example(*it->second, rec));
    });
  };
}

inline json run_assemble(PipelineContext& ctx) {
  if (ctx.cfg.assemble_sources.empty())
    throw ConfigError("assemble: assemble.sources is required");
  std::vector<std::pair<std::string, ExampleStream>> sources;
  for (const auto& src : ctx.cfg.assemble_sources) {
    if (!is_assembly_source(src.name))
      throw ConfigError("assemble: unknown source name '" + src.name + "'");
    if (!fs::exists(src.path))
      throw ConfigError("assemble: missing input " + src.path.string());
    if (!src.cot_path.empty()) {
      sources.emplace_back(src.name, mcqa_cot_stream(src.path, src.cot_path));
    } else {
      sources.emplace_back(src.name, jsonl_source_stream(src.name, src.path));
    }
  }

  AssemblyOutput out = assemble(sources, ctx.cfg.run_seed, ctx.cfg.holdout);

  std::vector<json> train;
  train.reserve(out.train.size());
  for (const auto& e : out.train) train.push_back(e.to_json());
  write_jsonl(ctx.cfg.out("train.jsonl"), train);
  if (!out.validation.empty()) {
    std::vector<json> val;
    for (const auto& e : out.validation) val.push_back(e.to_json());
    write_jsonl(ctx.cfg.out("validation.jsonl"), val);
  }
  write_json_file(ctx.cfg.out("manifest.json"), out.manifest.to_json());

  json stats = out.manifest.to_json();
  stats["train"] = out.train.size();
  stats["validation"] = out.validation.size();
  ctx.events->log("assemble", "done", stats);
  return stats;
}

// --- eval-mcqa ---------------------------------------------------------------------

inline json run_eval_mcqa(PipelineContext& ctx) {
  const std::string& bench_name = ctx.cfg.eval.benchmark;
  auto it = ctx.cfg.benchmarks.find(bench_name);
  if (it == ctx.cfg.benchmarks.end())
    throw ConfigError("eval-mcqa: no path configured for benchmark " + bench_name);
  std::string model = ctx.generator_model("eval-mcqa");
  int max_tokens = ctx.cfg.sampling_for("eval").max_tokens;

  Benchmark bench = load_benchmark(bench_name, it->second, ctx.cfg.strict_sizes);
  size_t n = detail::apply_limit(bench.items.size(), ctx.cfg.limit);
  bench.items.resize(n);

  std::vector<Prediction> predictions(n);
  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        if (ctx.cfg.eval.mode == "ensemble") {
          predictions[i] =
              ensemble_predict(bench.items[i], *ctx.gateway, ctx.prompts, model,
                               ctx.cfg.eval.k, ctx.cfg.run_seed, max_tokens);
        } else {
          predictions[i] = predict_greedy(bench.items[i], *ctx.gateway,
                                          ctx.prompts, model, max_tokens);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  size_t n_threads = std::min<size_t>(n, static_cast<size_t>(ctx.cfg.max_in_flight));
  std::vector<std::thread> pool;
  for (size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  EvalReport report = accuracy(predictions, bench.items, bench_name,
                               ctx.cfg.eval.mode);
  fs::path out_path =
      ctx.cfg.out("eval_" + bench_name + "_" + ctx.cfg.eval.mode + ".json");
  write_json_file(out_path, report.to_json());

  json stats{{"benchmark", bench_name},
             {"mode", ctx.cfg.eval.mode},
             {"total", report.total},
             {"correct", report.correct},
             {"accuracy", report.accuracy}};
  if (report.subject_average) stats["subject_average"] = *report.subject_average;
  ctx.events->log("eval-mcqa", "done", stats);
  return stats;
}

// --- eval-longform -----------------------------------------------------------------

inline json run_eval_longform(PipelineContext& ctx) {
  if (!ctx.cfg.kqa) throw ConfigError("eval-longform: paths.kqa is required");
  if (!ctx.cfg.responses)
    throw ConfigError("eval-longform: paths.responses is required");
  std::string model = ctx.judge_model("eval-longform");
  SamplingParams sampling = ctx.cfg.sampling_for("judge");

  std::vector<QuestionRecord> questions =
      load_kqa_jsonl(*ctx.cfg.kqa, ctx.cfg.strict_sizes);
  std::unordered_map<std::string, std::string> responses;
  for_each_jsonl(*ctx.cfg.responses, [&](json&& j, size_t) {
    responses[j.at("id").is_string() ? j["id"].get<std::string>()
                                     : j["id"].dump()] =
        j.at("response").get<std::string>();
  });

  JsonlStageWriter writer(ctx.cfg.out("scores.jsonl"), "question_id");
  auto done = writer.open();
  std::vector<const QuestionRecord*> todo;
  for (const auto& q : questions) {
    if (done.count(q.id)) continue;
    if (!responses.count(q.id))
      throw ConfigError("eval-longform: no response for question " + q.id);
    todo.push_back(&q);
  }
  todo.resize(detail::apply_limit(todo.size(), ctx.cfg.limit));

  detail::process_in_waves<const QuestionRecord*>(
      todo, ctx.cfg.max_in_flight,
      [&](const QuestionRecord* const& q) -> json {
        const std::string& response = responses.at(q->id);
        std::vector<Verdict> verdicts;
        verdicts.reserve(q->statements.size());
        for (const auto& stmt : q->statements) {
          bool warned = false;
          Verdict v;
          try {
            v = judge(response, stmt, *ctx.gateway, ctx.prompts, model, sampling,
                      &warned);
          } catch (const GatewayError& e) {
            throw StageError("eval-longform: question " + q->id + ": " + e.what());
          }
          if (warned)
            ctx.events->log("eval-longform", "unparseable_verdict",
                            {{"question_id", q->id}});
          verdicts.push_back(v);
        }
        return score_response(*q, response, verdicts).to_json();
      },
      writer);

  std::vector<JudgedResponse> judged;
  for_each_jsonl(writer.path(), [&](json&& j, size_t) {
    JudgedResponse r;
    r.question_id = j.at("question_id").get<std::string>();
    for (const auto& v : j.at("verdicts")) {
      std::string s = v.get<std::string>();
      r.verdicts.push_back(s == "entails"       ? Verdict::entails
                           : s == "contradicts" ? Verdict::contradicts
                                                : Verdict::neutral);
    }
    if (j.contains("s_comp")) r.s_comp = j["s_comp"].get<double>();
    r.s_fact = j.at("s_fact").get<int>();
    judged.push_back(std::move(r));
  });
  LongformSummary summary = aggregate(judged);
  write_json_file(ctx.cfg.out("longform_summary.json"), summary.to_json());

  json stats = summary.to_json();
  ctx.events->log("eval-longform", "done", stats);
  return stats;
}

// --- report ------------------------------------------------------------------------

inline json run_report(PipelineContext& ctx) {
  json report = json::object();
  bool any = false;
  auto count_lines = [](const fs::path& p) {
    size_t n = 0;
    for_each_jsonl(p, [&](json&&, size_t) { ++n; });
    return n;
  };

  if (fs::exists(ctx.cfg.out("documents.jsonl"))) {
    any = true;
    report["documents"] = count_lines(ctx.cfg.out("documents.jsonl"));
  }
  if (fs::exists(ctx.cfg.out("chunks.jsonl"))) {
    any = true;
    report["chunks"] = count_lines(ctx.cfg.out("chunks.jsonl"));
  }
  if (fs::exists(ctx.cfg.out("qa_audit.jsonl"))) {
    any = true;
    size_t items = 0, abstain = 0, parse_error = 0;
    for_each_jsonl(ctx.cfg.out("qa_audit.jsonl"), [&](json&& j, size_t) {
      std::string kind = j.at("kind").get<std::string>();
      if (kind == "item") ++items;
      else if (kind == "abstain") ++abstain;
      else ++parse_error;
    });
    report["synth_qa"] = json{{"generated", items + abstain + parse_error},
                              {"items", items},
                              {"abstain", abstain},
                              {"parse_error", parse_error}};
  }
  if (fs::exists(ctx.cfg.out("cot_records.jsonl"))) {
    any = true;
    size_t kept = 0;
    std::map<std::string, size_t> rejected;
    for_each_jsonl(ctx.cfg.out("cot_records.jsonl"), [&](json&& j, size_t) {
      if (j.at("kept").get<bool>()) ++kept;
      else rejected[j.value("reject_reason", "unknown")] += 1;
    });
    size_t n_rej = 0;
    for (const auto& [_, n] : rejected) n_rej += n;
    report["synth_cot"] = json{{"generated", kept + n_rej},
                               {"kept", kept},
                               {"rejected", n_rej},
                               {"rejected_by_reason", rejected}};
  }
  if (fs::exists(ctx.cfg.out("medqa_dialogue.jsonl")) ||
      fs::exists(ctx.cfg.out("dialogue_rejects.jsonl"))) {
    any = true;
    size_t acc = fs::exists(ctx.cfg.out("medqa_dialogue.jsonl"))
                     ? count_lines(ctx.cfg.out("medqa_dialogue.jsonl"))
                     : 0;
    size_t rej = fs::exists(ctx.cfg.out("dialogue_rejects.jsonl"))
                     ? count_lines(ctx.cfg.out("dialogue_rejects.jsonl"))
                     : 0;
    report["synth_dialogue"] =
        json{{"generated", acc + rej},
             {"accepted", acc},
             {"rejected", rej},
             {"acceptance_rate",
              acc + rej == 0 ? 0.0 : double(acc) / double(acc + rej)}};
  }
  if (fs::exists(ctx.cfg.out("chatdoctor_cleaned.jsonl"))) {
    any = true;
    size_t passed = 0, failed = 0;
    for_each_jsonl(ctx.cfg.out("chatdoctor_cleaned.jsonl"), [&](json&& j, size_t) {
      (j.at("passed_checks").get<bool>() ? passed : failed) += 1;
    });
    report["clean"] = json{{"generated", passed + failed},
                           {"passed", passed},
                           {"failed", failed}};
  }
  if (fs::exists(ctx.cfg.out("manifest.json"))) {
    any = true;
    report["assembly"] =
        parse_json(read_file(ctx.cfg.out("manifest.json")), "manifest.json");
  }
  for (const auto& entry : fs::directory_iterator(ctx.cfg.output_dir)) {
    std::string name = entry.path().filename().string();
    if (name.rfind("eval_", 0) == 0 && entry.path().extension() == ".json") {
      any = true;
      json e = parse_json(read_file(entry.path()), name);
      e.erase("traces");
      report["eval"][name] = std::move(e);
    }
  }
  if (fs::exists(ctx.cfg.out("longform_summary.json"))) {
    any = true;
    report["longform"] = parse_json(
        read_file(ctx.cfg.out("longform_summary.json")), "longform_summary.json");
  }
  if (fs::exists(ctx.cfg.out("usage_ledger.jsonl"))) {
    any = true;
    UsageTotals u = read_usage_ledger(ctx.cfg.out("usage_ledger.jsonl"));
    report["usage"] = json{{"requests", u.requests},
                           {"cache_hits", u.cache_hits},
                           {"prompt_tokens", u.prompt_tokens},
                           {"completion_tokens", u.completion_tokens},
                           {"total_tokens", u.prompt_tokens + u.completion_tokens}};
  }
  if (!any) throw ConfigError("report: no artifacts found in " +
                              ctx.cfg.output_dir.string());
  write_json_file(ctx.cfg.out("report.json"), report);
  ctx.events->log("report", "done");
  return report;
}

// --- command dispatch -----------------------------------------------------------

inline json run_stage(PipelineContext& ctx, const std::string& command) {
  if (command == "ingest") return run_ingest(ctx);
  if (command == "chunk") return run_chunk(ctx);
  if (command == "synth-qa") return run_synth_qa(ctx);
  if (command == "synth-cot") return run_synth_cot(ctx);
  if (command == "synth-dialogue") return run_synth_dialogue(ctx);
  if (command == "clean") return run_clean(ctx);
  if (command == "assemble") return run_assemble(ctx);
  if (command == "eval-mcqa") return run_eval_mcqa(ctx);
  if (command == "eval-longform") return run_eval_longform(ctx);
  if (command == "report") return run_report(ctx);
  throw ConfigError("unknown command: " + command);
}

}  // namespace forge
