#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "forge/gateway.hpp"
#include "forge/prompts.hpp"

namespace forge {

// --- K-QA statements ---------------------------------------------------------

enum class StatementKind { must_have, nice_to_have };

struct Statement {
  std::string text;
  StatementKind kind = StatementKind::must_have;
};

struct QuestionRecord {
  std::string id;
  std::string question;
  std::vector<Statement> statements;  // must-have first, then nice-to-have

  size_t must_have_count() const {
    size_t n = 0;
    for (const auto& s : statements)
      if (s.kind == StatementKind::must_have) ++n;
    return n;
  }
};

constexpr size_t kKqaExpectedSize = 201;

// K-QA-format JSONL: {id, question, must_have: [..], nice_to_have: [..]}.
inline std::vector<QuestionRecord> load_kqa_jsonl(const fs::path& path,
                                                  bool strict_sizes) {
  std::vector<QuestionRecord> records;
  for_each_jsonl(path, [&](json&& j, size_t line) {
    QuestionRecord r;
    r.id = j.contains("id")
               ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump())
               : std::to_string(line);
    r.question = j.at("question").get<std::string>();
    for (const auto& s : j.value("must_have", json::array()))
      r.statements.push_back({s.get<std::string>(), StatementKind::must_have});
    for (const auto& s : j.value("nice_to_have", json::array()))
      r.statements.push_back({s.get<std::string>(), StatementKind::nice_to_have});
    records.push_back(std::move(r));
  });
  if (strict_sizes && records.size() != kKqaExpectedSize)
    throw EvalError("kqa: expected " + std::to_string(kKqaExpectedSize) +
                    " questions, loaded " + std::to_string(records.size()));
  return records;
}

// --- NLI judging ---------------------------------------------------------------

enum class Verdict { entails, contradicts, neutral };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::entails: return "entails";
    case Verdict::contradicts: return "contradicts";
    case Verdict::neutral: return "neutral";
  }
  return "neutral";
}

// Exactly one verdict token must appear in the judge output; anything
// else falls back to neutral (with warned=true so the caller can log it).
inline Verdict parse_verdict(const std::string& text, bool* warned = nullptr) {
  std::string upper = to_upper(text);
  bool contradicts = upper.find("CONTRADICTS") != std::string::npos;
  // Count ENTAILS hits that are not inside CONTRADICTS-like words; the two
  // tokens share no substring, NEUTRAL neither.
  bool entails = upper.find("ENTAILS") != std::string::npos;
  bool neutral = upper.find("NEUTRAL") != std::string::npos;
  int found = int(contradicts) + int(entails) + int(neutral);
  if (found != 1) {
    if (warned) *warned = true;
    return Verdict::neutral;
  }
  if (warned) *warned = false;
  if (contradicts) return Verdict::contradicts;
  if (entails) return Verdict::entails;
  return Verdict::neutral;
}

// premise = model response, hypothesis = annotated statement.
inline Verdict judge(const std::string& response, const Statement& statement,
                     Gateway& gateway, const PromptLibrary& prompts,
                     const std::string& model_id, const SamplingParams& sampling,
                     bool* warned = nullptr) {
  if (trim(response).empty() || trim(statement.text).empty())
    throw ContractError("judge: premise and hypothesis must be non-empty");
  std::string prompt = render(prompts.get("nli_judge"),
                              {{"PREMISE", response}, {"HYPOTHESIS", statement.text}});
  ChatResponse resp =
      gateway.complete(ChatRequest::single_user(model_id, prompt, sampling));
  return parse_verdict(resp.text, warned);
}

// --- the completeness / factuality scores ---------------------------------------

// Fraction of must-have statements the response entails. No must-have
// statements -> nullopt; the question is skipped in the completeness mean.
inline std::optional<double> score_completeness(
    const std::vector<Verdict>& verdicts, const std::vector<Statement>& statements) {
  if (verdicts.size() != statements.size())
    throw ContractError("score_completeness: verdict/statement count mismatch");
  size_t must = 0, entailed = 0;
  for (size_t i = 0; i < statements.size(); ++i) {
    if (statements[i].kind != StatementKind::must_have) continue;
    ++must;
    if (verdicts[i] == Verdict::entails) ++entailed;
  }
  if (must == 0) return std::nullopt;
  return static_cast<double>(entailed) / static_cast<double>(must);
}

// 0 iff any statement — must-have or nice-to-have — is contradicted.
inline int score_factuality(const std::vector<Verdict>& verdicts) {
  for (Verdict v : verdicts)
    if (v == Verdict::contradicts) return 0;
  return 1;
}

struct JudgedResponse {
  std::string question_id;
  std::string response_text;
  std::vector<Verdict> verdicts;  // aligned with QuestionRecord.statements
  std::optional<double> s_comp;   // nullopt when the question has no must-haves
  int s_fact = 1;

  json to_json() const {
    json vs = json::array();
    for (Verdict v : verdicts) vs.push_back(verdict_name(v));
    json j{{"question_id", question_id},
           {"verdicts", std::move(vs)},
           {"s_fact", s_fact}};
    if (s_comp) j["s_comp"] = *s_comp;
    return j;
  }
};

inline JudgedResponse score_response(const QuestionRecord& question,
                                     const std::string& response_text,
                                     const std::vector<Verdict>& verdicts) {
  JudgedResponse out;
  out.question_id = question.id;
  out.response_text = response_text;
  out.verdicts = verdicts;
  out.s_comp = score_completeness(verdicts, question.statements);
  out.s_fact = score_factuality(verdicts);
  return out;
}

struct LongformSummary {
  double mean_s_comp = 0.0;
  double mean_s_fact = 0.0;
  size_t n = 0;       // all judged questions (factuality denominator)
  size_t n_comp = 0;  // questions with at least one must-have statement

  json to_json() const {
    return json{{"mean_s_comp", mean_s_comp},
                {"mean_s_fact", mean_s_fact},
                {"n", n},
                {"n_comp", n_comp}};
  }
};

// Arithmetic means across questions. Skipped records (no must-have
// statements) drop out of the completeness mean only.
inline LongformSummary aggregate(const std::vector<JudgedResponse>& judged) {
  if (judged.empty()) throw EvalError("aggregate: empty dataset");
  LongformSummary s;
  double comp_sum = 0.0, fact_sum = 0.0;
  for (const auto& j : judged) {
    s.n += 1;
    fact_sum += j.s_fact;
    if (j.s_comp) {
      s.n_comp += 1;
      comp_sum += *j.s_comp;
    }
  }
  if (s.n_comp == 0) throw EvalError("aggregate: no scorable questions");
  s.mean_s_comp = comp_sum / static_cast<double>(s.n_comp);
  s.mean_s_fact = fact_sum / static_cast<double>(s.n);
  return s;
}

// --- ROUGE-L ---------------------------------------------------------------------

// Lowercase, delete ASCII punctuation, split on whitespace.
inline std::vector<std::string> rouge_tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
    } else if (!std::ispunct(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline size_t lcs_length(const std::vector<std::string>& a,
                         const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline RougeScore rouge_l(const std::vector<std::string>& candidate,
                          const std::vector<std::string>& reference) {
  if (reference.empty()) throw ScoreError("rouge_l: empty reference");
  RougeScore s;
  size_t lcs = lcs_length(candidate, reference);
  s.precision = candidate.empty()
                    ? 0.0
                    : static_cast<double>(lcs) / static_cast<double>(candidate.size());
  s.recall = static_cast<double>(lcs) / static_cast<double>(reference.size());
  s.f1 = (s.precision + s.recall) == 0.0
             ? 0.0
             : 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

inline RougeScore rouge_l_text(const std::string& candidate,
                               const std::string& reference) {
  auto ref = rouge_tokenize(reference);
  if (ref.empty()) throw ScoreError("rouge_l: empty reference");
  return rouge_l(rouge_tokenize(candidate), ref);
}

// --- rubric scoring ----------------------------------------------------------------

inline std::optional<int> parse_rubric_score(const std::string& text) {
  std::string t = trim(text);
  // First standalone digit token; judges are told to answer with one integer.
  for (size_t i = 0; i < t.size(); ++i) {
    if (std::isdigit(static_cast<unsigned char>(t[i]))) {
      bool left_ok = i == 0 || !std::isalnum(static_cast<unsigned char>(t[i - 1]));
      bool right_ok = i + 1 >= t.size() ||
                      !std::isalnum(static_cast<unsigned char>(t[i + 1]));
      if (!left_ok || !right_ok) continue;
      int v = t[i] - '0';
      if (v >= 1 && v <= 5) return v;
      return std::nullopt;  // an out-of-range integer is a judge error
    }
  }
  return std::nullopt;
}

// 1-5 grade against a reference explanation; one retry on unusable judge
// output, then ScoreError.
inline int score_explanation(const std::string& candidate,
                             const std::string& reference,
                             const std::string& question, Gateway& gateway,
                             const PromptLibrary& prompts,
                             const std::string& model_id,
                             const SamplingParams& sampling) {
  if (trim(candidate).empty() || trim(reference).empty() || trim(question).empty())
    throw ContractError("score_explanation: all texts must be non-empty");
  std::string prompt = render(prompts.get("explanation_rubric"),
                              {{"QUESTION", question},
                               {"REFERENCE_EXPLANATION", reference},
                               {"CANDIDATE_EXPLANATION", candidate}});
  for (int attempt = 0; attempt < 2; ++attempt) {
    ChatResponse resp = gateway.complete(
        ChatRequest::single_user(model_id, prompt, sampling), attempt);
    if (auto score = parse_rubric_score(resp.text)) return *score;
  }
  throw ScoreError("judge did not produce an integer in 1..5");
}

}  // namespace forge
