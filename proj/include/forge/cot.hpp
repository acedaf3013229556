#pragma once

#include <optional>
#include <string>
#include <vector>

#include "forge/chunker.hpp"
#include "forge/gateway.hpp"
#include "forge/mcqa.hpp"
#include "forge/prompts.hpp"

namespace forge {

// --- few-shot sampling ----------------------------------------------------

// n distinct items, uniform without replacement, reproducible under seed.
inline std::vector<McqaItem> sample_fewshot(const std::vector<McqaItem>& pool,
                                            size_t n, uint64_t seed) {
  if (pool.size() < n)
    throw ConfigError("few-shot pool has " + std::to_string(pool.size()) +
                      " items, need " + std::to_string(n));
  std::mt19937_64 rng(seed);
  std::vector<size_t> indices(pool.size());
  std::iota(indices.begin(), indices.end(), size_t{0});
  // Partial Fisher-Yates: the first n slots end up uniformly chosen.
  for (size_t i = 0; i < n; ++i) {
    size_t j = i + static_cast<size_t>(bounded_uniform(rng, indices.size() - i));
    std::swap(indices[i], indices[j]);
  }
  std::vector<McqaItem> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) out.push_back(pool[indices[i]]);
  return out;
}

// --- QA generation from textbook chunks ------------------------------------

enum class QaGenKind { item, abstain, parse_error };

struct QaGenOutcome {
  QaGenKind kind = QaGenKind::parse_error;
  std::optional<McqaItem> item;
  std::string raw_text;
  std::string error_detail;

  static QaGenOutcome abstain(std::string raw) {
    QaGenOutcome o;
    o.kind = QaGenKind::abstain;
    o.raw_text = std::move(raw);
    return o;
  }
  static QaGenOutcome failure(std::string raw, std::string detail) {
    QaGenOutcome o;
    o.kind = QaGenKind::parse_error;
    o.raw_text = std::move(raw);
    o.error_detail = std::move(detail);
    return o;
  }
  static QaGenOutcome success(McqaItem it, std::string raw) {
    QaGenOutcome o;
    o.kind = QaGenKind::item;
    o.item = std::move(it);
    o.raw_text = std::move(raw);
    return o;
  }
};

namespace detail {

// Strips markdown code fences and an optional leading "json" tag.
inline std::string strip_code_fences(std::string_view text) {
  std::string s = trim(text);
  if (s.rfind("```", 0) == 0) {
    size_t nl = s.find('\n');
    size_t close = s.rfind("```");
    if (nl != std::string::npos && close != std::string::npos && close > nl)
      s = trim(s.substr(nl + 1, close - nl - 1));
  }
  if (s.rfind("json", 0) == 0 || s.rfind("JSON", 0) == 0) {
    std::string rest = trim(s.substr(4));
    if (!rest.empty() && rest[0] == '{') s = rest;
  }
  return s;
}

}  // namespace detail

// Total: every input maps to exactly one of item / abstain / parse_error.
inline QaGenOutcome parse_qa_response(const std::string& text) {
  std::string s = detail::strip_code_fences(text);

  std::string bare = trim(s);
  if (!bare.empty() && (bare.back() == '.' || bare.back() == '"')) {
    bare = trim(bare.substr(0, bare.size() - 1));
  }
  if (to_upper(bare) == "N/A") return QaGenOutcome::abstain(text);

  size_t open = s.find('{');
  size_t close = s.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open)
    return QaGenOutcome::failure(text, "no JSON object found");

  json j = json::parse(s.substr(open, close - open + 1), nullptr, false);
  if (j.is_discarded() || !j.is_object())
    return QaGenOutcome::failure(text, "malformed JSON object");
  for (const char* key : {"question", "options", "answer"})
    if (!j.contains(key))
      return QaGenOutcome::failure(text, std::string("missing key: ") + key);

  McqaItem item;
  item.stem = j["question"].is_string() ? j["question"].get<std::string>()
                                        : j["question"].dump();
  if (!j["options"].is_object())
    return QaGenOutcome::failure(text, "options is not an object");
  size_t n = j["options"].size();
  if (n < kMinOptions || n > kMaxOptions)
    return QaGenOutcome::failure(text, "needs 4..9 options, got " + std::to_string(n));
  item.options.assign(n, "");
  for (auto& [k, v] : j["options"].items()) {
    std::string ku = to_upper(trim(k));
    if (ku.size() != 1 || ku[0] < 'A' || static_cast<size_t>(ku[0] - 'A') >= n)
      return QaGenOutcome::failure(text, "option letters must be contiguous from A");
    item.options[ku[0] - 'A'] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  for (size_t i = 0; i < n; ++i) {
    if (trim(item.options[i]).empty())
      return QaGenOutcome::failure(text, "empty option text");
    for (size_t k = i + 1; k < n; ++k)
      if (item.options[i] == item.options[k])
        return QaGenOutcome::failure(text, "duplicate option texts");
  }

  // The answer may come back as a letter or as the option's full text.
  std::string ans = trim(j["answer"].is_string() ? j["answer"].get<std::string>()
                                                 : j["answer"].dump());
  std::optional<size_t> idx;
  if (ans.size() == 1) {
    idx = letter_index(ans[0], n);
  } else if (ans.size() >= 3 && ans[0] == '(' && ans[2] == ')') {
    idx = letter_index(ans[1], n);
  } else {
    for (size_t i = 0; i < n; ++i)
      if (to_lower(trim(item.options[i])) == to_lower(ans)) idx = i;
  }
  if (!idx)
    return QaGenOutcome::failure(text,
                                 "referential integrity: answer '" + ans +
                                     "' does not resolve to an option");
  item.answer_index = *idx;
  item.source = ItemSource::textbook_synthetic;
  if (trim(item.stem).empty())
    return QaGenOutcome::failure(text, "empty question");
  return QaGenOutcome::success(std::move(item), text);
}

// One gateway call per chunk; the outcome keeps the raw model text so a
// run can always be audited after the fact.
inline QaGenOutcome generate_qa_from_chunk(const Chunk& chunk,
                                           const std::vector<McqaItem>& fewshot,
                                           Gateway& gateway,
                                           const PromptLibrary& prompts,
                                           const std::string& model_id,
                                           const SamplingParams& sampling) {
  if (fewshot.size() != 3)
    throw ContractError("generate_qa_from_chunk: exactly 3 few-shot items required");
  std::map<std::string, std::string> bindings;
  for (size_t i = 0; i < 3; ++i) {
    std::string k = std::to_string(i + 1);
    bindings["MEDQA_QUESTION_" + k] = question_block(fewshot[i]);
    bindings["ANSWER_" + k] = answer_string(fewshot[i]);
  }
  bindings["TEXTBOOK_CHUNK"] = chunk.text;
  std::string prompt = render(prompts.get("qa_generation"), bindings);

  std::string raw;
  try {
    ChatResponse resp = gateway.complete(
        ChatRequest::single_user(model_id, prompt, sampling));
    raw = resp.text;
  } catch (const GatewayError& e) {
    return QaGenOutcome::failure("", std::string("gateway: ") + e.what());
  }

  QaGenOutcome outcome = parse_qa_response(raw);
  if (outcome.kind == QaGenKind::item) {
    outcome.item->id = chunk.key();
    outcome.item->provenance = Provenance{chunk.key(), chunk.doc_id};
  }
  return outcome;
}

// --- CoT generation and the round-trip filter -------------------------------

inline std::string render_cot_prompt(const McqaItem& item,
                                     const PromptLibrary& prompts) {
  return render(prompts.get("cot_generation"),
                {{"INPUT_QUESTION", question_block(item)}});
}

inline std::string generate_cot(const McqaItem& item, Gateway& gateway,
                                const PromptLibrary& prompts,
                                const std::string& model_id,
                                const SamplingParams& sampling) {
  item.validate();
  ChatResponse resp = gateway.complete(ChatRequest::single_user(
      model_id, render_cot_prompt(item, prompts), sampling));
  return resp.text;
}

// Case-insensitive scan for the FINAL "the answer is", then a letter in
// "(D)" or bare "D" form. Mid-reasoning restatements lose to the last
// occurrence by design.
inline char extract_answer(const std::string& text, size_t n_options) {
  static const std::string anchor = "the answer is";
  size_t pos = find_last_ci(text, anchor);
  if (pos == std::string::npos)
    throw ExtractionError("anchor phrase \"the answer is\" not found");
  size_t p = pos + anchor.size();
  auto skippable = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) || c == ':' || c == '*' ||
           c == '"' || c == '\'';
  };
  while (p < text.size() && skippable(text[p])) ++p;
  if (p >= text.size())
    throw ExtractionError("no letter after the anchor phrase");

  char candidate = 0;
  if (text[p] == '(') {
    if (p + 2 < text.size() && std::isalpha(static_cast<unsigned char>(text[p + 1])) &&
        text[p + 2] == ')')
      candidate = text[p + 1];
  } else if (std::isalpha(static_cast<unsigned char>(text[p]))) {
    // A bare letter only counts when it stands alone ("...is B."), so a
    // word like "Benign" is never misread as option B.
    if (p + 1 >= text.size() ||
        !std::isalnum(static_cast<unsigned char>(text[p + 1])))
      candidate = text[p];
  }
  if (candidate == 0)
    throw ExtractionError("no letter after the anchor phrase");
  auto idx = letter_index(candidate, n_options);
  if (!idx)
    throw ExtractionError(std::string("letter '") + candidate +
                          "' is not a valid option");
  return option_letter(*idx);
}

enum class RejectReason { none, format, wrong_answer, extraction_failed };

inline const char* reject_reason_name(RejectReason r) {
  switch (r) {
    case RejectReason::none: return "none";
    case RejectReason::format: return "format";
    case RejectReason::wrong_answer: return "wrong_answer";
    case RejectReason::extraction_failed: return "extraction_failed";
  }
  return "none";
}

struct CotRecord {
  std::string item_id;
  std::string explanation;
  std::optional<char> predicted_letter;
  bool kept = false;
  RejectReason reject_reason = RejectReason::none;

  json to_json() const {
    json j{{"item_id", item_id},
           {"explanation", explanation},
           {"kept", kept}};
    if (predicted_letter) j["predicted_letter"] = std::string(1, *predicted_letter);
    if (!kept) j["reject_reason"] = reject_reason_name(reject_reason);
    return j;
  }

  static CotRecord from_json(const json& j) {
    CotRecord r;
    r.item_id = j.at("item_id").get<std::string>();
    r.explanation = j.at("explanation").get<std::string>();
    r.kept = j.at("kept").get<bool>();
    if (j.contains("predicted_letter"))
      r.predicted_letter = j["predicted_letter"].get<std::string>().at(0);
    if (j.contains("reject_reason")) {
      std::string s = j["reject_reason"].get<std::string>();
      r.reject_reason = s == "format"            ? RejectReason::format
                        : s == "wrong_answer"    ? RejectReason::wrong_answer
                        : s == "extraction_failed" ? RejectReason::extraction_failed
                                                   : RejectReason::none;
    }
    return r;
  }
};

// Keep iff the predicted answer round-trips to the gold letter. For
// synthetic items the "gold" is whatever the QA-generation pass emitted.
// Rejection is data, not an error: the record stores the explanation and
// the reason either way.
inline CotRecord roundtrip_filter(const McqaItem& item, const std::string& raw_cot) {
  item.validate();
  CotRecord rec;
  rec.item_id = item.id;
  rec.explanation = raw_cot;
  if (trim(raw_cot).empty()) {
    rec.kept = false;
    rec.reject_reason = RejectReason::format;
    return rec;
  }
  try {
    char predicted = extract_answer(raw_cot, item.options.size());
    rec.predicted_letter = predicted;
    if (predicted == item.answer_letter()) {
      rec.kept = true;
    } else {
      rec.kept = false;
      rec.reject_reason = RejectReason::wrong_answer;
    }
  } catch (const ExtractionError&) {
    rec.kept = false;
    rec.reject_reason = RejectReason::extraction_failed;
  }
  return rec;
}

}  // namespace forge
