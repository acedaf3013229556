#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "forge/cot.hpp"
#include "forge/gateway.hpp"
#include "forge/mcqa.hpp"
#include "forge/prompts.hpp"

namespace forge {

// --- benchmark registry --------------------------------------------------

struct BenchmarkInfo {
  std::string name;
  size_t expected_size;
  ItemSource item_source;
};

inline const std::vector<BenchmarkInfo>& benchmark_registry() {
  static const std::vector<BenchmarkInfo> regs = {
      {"medqa", 1273, ItemSource::medqa},
      {"usmle_sample", 325, ItemSource::usmle_sample},
      {"medbullets4", 308, ItemSource::medbullets},
      {"medbullets5", 308, ItemSource::medbullets},
      {"medmcqa", 4182, ItemSource::medmcqa},
      {"mmlu_medical", 1089, ItemSource::mmlu_medical},
  };
  return regs;
}

inline const BenchmarkInfo& benchmark_info(const std::string& name) {
  for (const auto& b : benchmark_registry())
    if (b.name == name) return b;
  throw ConfigError("unknown benchmark: " + name);
}

inline const std::vector<std::string>& mmlu_subjects() {
  static const std::vector<std::string> subjects = {
      "clinical_knowledge",    "medical_genetics", "anatomy",
      "professional_medicine", "college_biology",  "college_medicine"};
  return subjects;
}

struct Benchmark {
  std::string name;
  std::vector<McqaItem> items;
  size_t expected_size = 0;
};

// In strict mode a loaded benchmark must match the registry size exactly;
// any skipped (malformed) record therefore also fails the check.
inline Benchmark load_benchmark(const std::string& name, const fs::path& path,
                                bool strict_sizes) {
  const BenchmarkInfo& info = benchmark_info(name);
  McqaLoadResult loaded = load_mcqa_jsonl(path, info.item_source);
  Benchmark b;
  b.name = name;
  b.items = std::move(loaded.items);
  b.expected_size = info.expected_size;
  if (strict_sizes && b.items.size() != info.expected_size)
    throw EvalError("benchmark " + name + ": expected " +
                    std::to_string(info.expected_size) + " items, loaded " +
                    std::to_string(b.items.size()) +
                    (loaded.skipped.empty()
                         ? ""
                         : " (" + std::to_string(loaded.skipped.size()) +
                               " records skipped)"));
  if (name == "mmlu_medical") {
    for (const auto& item : b.items)
      if (item.subject.empty())
        throw EvalError("benchmark mmlu_medical: item " + item.id +
                        " has no subject tag");
  }
  return b;
}

// --- choice shuffling ------------------------------------------------------

struct ShuffledItem {
  McqaItem item;
  // letter_to_original[j] = original option index shown at letter 'A'+j.
  std::vector<size_t> letter_to_original;
};

inline ShuffledItem shuffle_options(const McqaItem& item,
                                    const std::vector<size_t>& permutation) {
  item.validate();
  if (permutation.size() != item.options.size())
    throw ContractError("shuffle_options: permutation size mismatch");
  std::vector<bool> seen(permutation.size(), false);
  for (size_t p : permutation) {
    if (p >= permutation.size() || seen[p])
      throw ContractError("shuffle_options: permutation is not a bijection");
    seen[p] = true;
  }
  ShuffledItem out;
  out.item = item;
  out.letter_to_original = permutation;
  for (size_t j = 0; j < permutation.size(); ++j) {
    out.item.options[j] = item.options[permutation[j]];
    if (permutation[j] == item.answer_index) out.item.answer_index = j;
  }
  return out;
}

// --- prediction --------------------------------------------------------------

constexpr int kAbstain = -1;

struct Prediction {
  std::string item_id;
  int chosen_option_index = kAbstain;  // index into the ORIGINAL option order
  std::string raw_text;
  int run_index = 0;

  bool abstained() const { return chosen_option_index == kAbstain; }
};

// The eval prompt is the CoT prompt: same "(A) text" option lines the
// training examples use, same answer-format instruction.
inline Prediction predict_once(const McqaItem& original,
                               const ShuffledItem& shown, Gateway& gateway,
                               const PromptLibrary& prompts,
                               const std::string& model_id,
                               const SamplingParams& sampling, int run_index = 0) {
  Prediction pred;
  pred.item_id = original.id;
  pred.run_index = run_index;
  ChatResponse resp = gateway.complete(
      ChatRequest::single_user(model_id, render_cot_prompt(shown.item, prompts),
                               sampling),
      /*sample_index=*/run_index);
  pred.raw_text = resp.text;
  try {
    char letter = extract_answer(resp.text, shown.item.options.size());
    pred.chosen_option_index =
        static_cast<int>(shown.letter_to_original[letter - 'A']);
  } catch (const ExtractionError&) {
    pred.chosen_option_index = kAbstain;  // scored as incorrect
  }
  return pred;
}

inline ShuffledItem identity_shuffle(const McqaItem& item) {
  std::vector<size_t> identity(item.options.size());
  std::iota(identity.begin(), identity.end(), size_t{0});
  return shuffle_options(item, identity);
}

inline Prediction predict_greedy(const McqaItem& item, Gateway& gateway,
                                 const PromptLibrary& prompts,
                                 const std::string& model_id,
                                 int max_tokens = 1024) {
  return predict_once(item, identity_shuffle(item), gateway, prompts, model_id,
                      SamplingParams::greedy_params(max_tokens));
}

// Plurality over original option indices; ties break to the smallest
// index, so the outcome does not depend on tally order. kAbstain on an
// empty vote set.
inline int majority_vote(const std::vector<int>& votes, size_t n_options) {
  if (votes.empty()) return kAbstain;
  std::vector<int> tally(n_options, 0);
  for (int v : votes) {
    if (v < 0 || static_cast<size_t>(v) >= n_options)
      throw ContractError("majority_vote: vote index out of range");
    tally[static_cast<size_t>(v)] += 1;
  }
  int best = 0;
  for (size_t i = 1; i < tally.size(); ++i)
    if (tally[i] > tally[best]) best = static_cast<int>(i);
  return best;
}

// k runs over independently shuffled options at temperature 0.7, majority
// vote over ORIGINAL option indices. Abstentions stay out of the vote;
// ties break to the smallest original index so the result is seed-stable.
inline Prediction ensemble_predict(const McqaItem& item, Gateway& gateway,
                                   const PromptLibrary& prompts,
                                   const std::string& model_id, int k,
                                   uint64_t seed, int max_tokens = 1024) {
  if (k < 1) throw ContractError("ensemble_predict: k must be >= 1");
  item.validate();
  std::vector<int> votes;
  std::string last_raw;
  for (int run = 0; run < k; ++run) {
    std::mt19937_64 rng(mix_seed(mix_seed(seed, item.id), run));
    std::vector<size_t> perm = random_permutation(item.options.size(), rng);
    ShuffledItem shown = shuffle_options(item, perm);
    Prediction p = predict_once(item, shown, gateway, prompts, model_id,
                                SamplingParams::ensemble_params(max_tokens), run);
    last_raw = p.raw_text;
    if (!p.abstained()) votes.push_back(p.chosen_option_index);
  }

  Prediction final;
  final.item_id = item.id;
  final.run_index = k;
  final.raw_text = last_raw;
  final.chosen_option_index = majority_vote(votes, item.options.size());
  return final;
}

// --- scoring -----------------------------------------------------------------

struct ItemTrace {
  std::string item_id;
  int chosen = kAbstain;
  int gold = 0;
  bool correct = false;
  std::string subject;
};

struct EvalReport {
  std::string benchmark;
  std::string mode;  // "greedy" or "ensemble"
  size_t total = 0;
  size_t correct = 0;
  double accuracy = 0.0;
  std::map<std::string, double> per_subject;
  std::optional<double> subject_average;  // unweighted; mmlu_medical only
  std::vector<ItemTrace> traces;

  json to_json() const {
    json j{{"benchmark", benchmark}, {"mode", mode},       {"total", total},
           {"correct", correct},     {"accuracy", accuracy}};
    if (!per_subject.empty()) {
      j["per_subject"] = per_subject;
      j["subject_average"] = *subject_average;
    }
    json traces_j = json::array();
    for (const auto& t : traces)
      traces_j.push_back(json{{"item_id", t.item_id},
                              {"chosen", t.chosen},
                              {"gold", t.gold},
                              {"correct", t.correct}});
    j["traces"] = std::move(traces_j);
    return j;
  }
};

inline double unweighted_mean(const std::map<std::string, double>& values) {
  if (values.empty()) throw EvalError("no per-subject accuracies to average");
  double sum = 0.0;
  for (const auto& [_, v] : values) sum += v;
  return sum / static_cast<double>(values.size());
}

inline EvalReport accuracy(const std::vector<Prediction>& predictions,
                           const std::vector<McqaItem>& items,
                           const std::string& benchmark_name,
                           const std::string& mode) {
  if (predictions.size() != items.size())
    throw EvalError("need one prediction per item: " +
                    std::to_string(predictions.size()) + " vs " +
                    std::to_string(items.size()));
  std::map<std::string, std::pair<size_t, size_t>> by_subject;  // correct, total
  EvalReport report;
  report.benchmark = benchmark_name;
  report.mode = mode;
  report.total = items.size();
  for (size_t i = 0; i < items.size(); ++i) {
    if (predictions[i].item_id != items[i].id)
      throw EvalError("prediction/item order mismatch at " + items[i].id);
    ItemTrace t;
    t.item_id = items[i].id;
    t.chosen = predictions[i].chosen_option_index;
    t.gold = static_cast<int>(items[i].answer_index);
    t.correct = t.chosen == t.gold;
    t.subject = items[i].subject;
    if (t.correct) report.correct += 1;
    if (!t.subject.empty()) {
      auto& [c, n] = by_subject[t.subject];
      if (t.correct) c += 1;
      n += 1;
    }
    report.traces.push_back(std::move(t));
  }
  report.accuracy =
      report.total == 0 ? 0.0
                        : static_cast<double>(report.correct) / report.total;
  if (benchmark_name == "mmlu_medical") {
    for (const auto& [subject, cn] : by_subject)
      report.per_subject[subject] =
          static_cast<double>(cn.first) / static_cast<double>(cn.second);
    report.subject_average = unweighted_mean(report.per_subject);
  }
  return report;
}

}  // namespace forge
