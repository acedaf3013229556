#pragma once

#include <optional>
#include <string>
#include <vector>

#include "forge/cot.hpp"
#include "forge/gateway.hpp"
#include "forge/mcqa.hpp"
#include "forge/prompts.hpp"

namespace forge {

// --- banned-phrase scanning -------------------------------------------------

namespace banned {

inline const std::vector<std::string>& phrase_list() {
  static const std::vector<std::string> phrases = {
      "chat doctor",
      "chatdoctor",
      "best wishes",
      "stay healthy",
      "thank you for your query",
      "thank you for consulting",
      "thanks for using",
  };
  return phrases;
}

inline size_t count_occurrences_ci(const std::string& lower_text,
                                   const std::string& lower_pat) {
  size_t n = 0, pos = 0;
  while ((pos = lower_text.find(lower_pat, pos)) != std::string::npos) {
    ++n;
    pos += lower_pat.size();
  }
  return n;
}

// "Dear <Name>" salutations: "dear" at a word boundary followed by a
// capitalized-or-not name word.
inline size_t count_salutations(const std::string& lower_text) {
  size_t n = 0, pos = 0;
  while ((pos = lower_text.find("dear ", pos)) != std::string::npos) {
    bool boundary = pos == 0 || !std::isalnum(static_cast<unsigned char>(
                                     lower_text[pos - 1]));
    size_t after = pos + 5;
    bool has_name = after < lower_text.size() &&
                    std::isalpha(static_cast<unsigned char>(lower_text[after]));
    if (boundary && has_name) ++n;
    pos += 5;
  }
  return n;
}

}  // namespace banned

// Distinct banned patterns present in text, in registry order.
inline std::vector<std::string> scan_banned_phrases(const std::string& text) {
  std::string lower = to_lower(text);
  std::vector<std::string> found;
  for (const auto& p : banned::phrase_list())
    if (banned::count_occurrences_ci(lower, p) > 0) found.push_back(p);
  if (banned::count_salutations(lower) > 0) found.push_back("dear <name>");
  return found;
}

inline size_t count_banned_occurrences(const std::string& text) {
  std::string lower = to_lower(text);
  size_t n = 0;
  for (const auto& p : banned::phrase_list())
    n += banned::count_occurrences_ci(lower, p);
  n += banned::count_salutations(lower);
  return n;
}

// --- ChatDoctor response cleaning --------------------------------------------

struct CleanedResponse {
  std::string original;
  std::string cleaned;
  bool passed_checks = false;
  std::vector<std::string> violations;

  json to_json() const {
    return json{{"original", original},
                {"cleaned", cleaned},
                {"passed_checks", passed_checks},
                {"violations", violations}};
  }
};

// One model pass, and a single retry that names the leftover violations.
// Whatever happens, the returned text never carries more banned-phrase
// occurrences than the input did; if the model manages that, the original
// text is returned unchanged.
inline CleanedResponse clean_response(const std::string& noisy, Gateway& gateway,
                                      const PromptLibrary& prompts,
                                      const std::string& model_id,
                                      const SamplingParams& sampling) {
  if (trim(noisy).empty())
    throw ContractError("clean_response: input text is empty");
  std::string prompt =
      render(prompts.get("chatdoctor_cleaning"), {{"ORIGINAL_RESPONSE", noisy}});

  auto ask = [&](const std::string& p) {
    ChatResponse resp =
        gateway.complete(ChatRequest::single_user(model_id, p, sampling));
    if (trim(resp.text).empty())
      throw CleaningError("cleaning model returned empty output");
    return resp.text;
  };

  std::string candidate = ask(prompt);
  std::vector<std::string> violations = scan_banned_phrases(candidate);
  if (!violations.empty()) {
    std::string note = prompt + "\n\nYour previous attempt still contained:";
    for (const auto& v : violations) note += " \"" + v + "\";";
    note += " remove every occurrence. Your response:";
    candidate = ask(note);
    violations = scan_banned_phrases(candidate);
  }

  CleanedResponse out;
  out.original = noisy;
  if (count_banned_occurrences(candidate) > count_banned_occurrences(noisy)) {
    out.cleaned = noisy;
    out.violations = scan_banned_phrases(noisy);
  } else {
    out.cleaned = candidate;
    out.violations = violations;
  }
  out.passed_checks = out.violations.empty();
  return out;
}

// --- MedQA dialogue generation ----------------------------------------------

enum class Speaker { person_a, person_b };

struct DialogueTurn {
  Speaker speaker = Speaker::person_a;
  std::string text;
};

struct Dialogue {
  std::string item_id;
  std::vector<DialogueTurn> turns;

  json to_json() const {
    json ts = json::array();
    for (const auto& t : turns)
      ts.push_back(json{
          {"speaker", t.speaker == Speaker::person_a ? "person_a" : "person_b"},
          {"text", t.text}});
    return json{{"item_id", item_id}, {"turns", std::move(ts)}};
  }

  static Dialogue from_json(const json& j) {
    Dialogue d;
    d.item_id = j.at("item_id").get<std::string>();
    for (const auto& t : j.at("turns")) {
      DialogueTurn turn;
      turn.speaker = t.at("speaker").get<std::string>() == "person_b"
                         ? Speaker::person_b
                         : Speaker::person_a;
      turn.text = t.at("text").get<std::string>();
      d.turns.push_back(std::move(turn));
    }
    return d;
  }
};

// Empty string means the dialogue satisfies every turn invariant.
inline std::string dialogue_violation(const std::vector<DialogueTurn>& turns) {
  if (turns.empty()) return "no turns";
  if (turns.size() < 2) return "turn count";
  if (turns.front().speaker != Speaker::person_a) return "first speaker";
  if (turns.back().speaker != Speaker::person_b) return "last speaker";
  for (size_t i = 1; i < turns.size(); ++i)
    if (turns[i].speaker == turns[i - 1].speaker) return "alternation";
  for (const auto& t : turns)
    if (trim(t.text).empty()) return "empty turn";
  return "";
}

namespace detail {

// Accepts "Person A:", "A:", "**Person A**:", "**Person B:** ..." and the
// same with lowercase "person". Returns the byte position where the turn
// text starts, or npos when the line is not a speaker label.
inline size_t match_speaker_label(const std::string& line, Speaker* speaker) {
  size_t i = 0;
  auto skip_ws = [&]() {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  };
  skip_ws();
  if (line.compare(i, 2, "**") == 0) i += 2;
  skip_ws();
  if (line.size() - i >= 6) {
    std::string word = to_lower(line.substr(i, 6));
    if (word == "person") {
      i += 6;
      skip_ws();
    }
  }
  if (i >= line.size()) return std::string::npos;
  char c = static_cast<char>(std::toupper(static_cast<unsigned char>(line[i])));
  if (c != 'A' && c != 'B') return std::string::npos;
  size_t letter_pos = i;
  ++i;
  skip_ws();
  if (line.compare(i, 2, "**") == 0) i += 2;
  skip_ws();
  if (i >= line.size() || line[i] != ':') return std::string::npos;
  // Reject ordinary words that start with A/B ("Answer:") — the letter
  // must stand alone before the colon/bold marker.
  if (letter_pos + 1 < line.size() &&
      std::isalnum(static_cast<unsigned char>(line[letter_pos + 1])))
    return std::string::npos;
  ++i;
  if (line.compare(i, 2, "**") == 0) i += 2;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  *speaker = c == 'A' ? Speaker::person_a : Speaker::person_b;
  return i;
}

}  // namespace detail

inline std::vector<DialogueTurn> parse_dialogue_turns(const std::string& text) {
  std::vector<DialogueTurn> turns;
  size_t start = 0;
  bool seen_label = false;
  while (start <= text.size()) {
    size_t end = text.find('\n', start);
    std::string line = text.substr(
        start, end == std::string::npos ? std::string::npos : end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    Speaker speaker;
    size_t text_start = detail::match_speaker_label(line, &speaker);
    if (text_start != std::string::npos) {
      seen_label = true;
      turns.push_back({speaker, line.substr(text_start)});
    } else if (seen_label && !turns.empty() && !trim(line).empty()) {
      turns.back().text += "\n" + line;
    }
    if (end == std::string::npos) break;
    start = end + 1;
  }
  for (auto& t : turns) t.text = trim(t.text);
  return turns;
}

struct DialogueOutcome {
  std::optional<Dialogue> dialogue;
  std::string reject_reason;  // failed invariant name when rejected
  std::string raw_text;

  bool accepted() const { return dialogue.has_value(); }
};

inline DialogueOutcome generate_dialogue(const McqaItem& item,
                                         const CotRecord& cot, Gateway& gateway,
                                         const PromptLibrary& prompts,
                                         const std::string& model_id,
                                         const SamplingParams& sampling) {
  if (!cot.kept)
    throw ContractError("generate_dialogue: CoT record was not kept");
  std::string prompt = render(prompts.get("dialogue_generation"),
                              {{"MEDQA_QUESTION", question_block(item)},
                               {"ANSWER_WITH_COT", cot.explanation}});
  ChatResponse resp =
      gateway.complete(ChatRequest::single_user(model_id, prompt, sampling));

  DialogueOutcome out;
  out.raw_text = resp.text;
  std::vector<DialogueTurn> turns = parse_dialogue_turns(resp.text);
  std::string violation = dialogue_violation(turns);
  if (!violation.empty()) {
    out.reject_reason = violation;
    return out;
  }
  Dialogue d;
  d.item_id = item.id;
  d.turns = std::move(turns);
  out.dialogue = std::move(d);
  return out;
}

}  // namespace forge
