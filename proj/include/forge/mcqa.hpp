#pragma once

#include <optional>
#include <string>
#include <vector>

#include "forge/jsonl.hpp"
#include "forge/util.hpp"

namespace forge {

// Option letters run A..I; an item carries 4 to 9 options.
constexpr size_t kMinOptions = 4;
constexpr size_t kMaxOptions = 9;

inline char option_letter(size_t index) {
  return static_cast<char>('A' + index);
}

inline std::optional<size_t> letter_index(char letter, size_t n_options) {
  char u = static_cast<char>(std::toupper(static_cast<unsigned char>(letter)));
  if (u < 'A' || static_cast<size_t>(u - 'A') >= n_options) return std::nullopt;
  return static_cast<size_t>(u - 'A');
}

enum class ItemSource {
  medqa,
  medmcqa,
  textbook_synthetic,
  usmle_sample,
  medbullets,
  mmlu_medical,
};

inline const char* item_source_name(ItemSource s) {
  switch (s) {
    case ItemSource::medqa: return "medqa";
    case ItemSource::medmcqa: return "medmcqa";
    case ItemSource::textbook_synthetic: return "textbook_synthetic";
    case ItemSource::usmle_sample: return "usmle_sample";
    case ItemSource::medbullets: return "medbullets";
    case ItemSource::mmlu_medical: return "mmlu_medical";
  }
  return "medqa";
}

struct Provenance {
  std::string chunk_id;
  std::string doc_id;
};

struct McqaItem {
  std::string id;
  std::string stem;
  std::vector<std::string> options;  // index i holds the text for letter 'A'+i
  size_t answer_index = 0;
  ItemSource source = ItemSource::medqa;
  std::optional<Provenance> provenance;
  std::string subject;  // MMLU-Medical subject tag; empty elsewhere

  char answer_letter() const { return option_letter(answer_index); }
  const std::string& answer_text() const { return options[answer_index]; }

  void validate() const {
    if (trim(stem).empty()) throw ContractError("mcqa item " + id + ": empty stem");
    if (options.size() < kMinOptions || options.size() > kMaxOptions)
      throw ContractError("mcqa item " + id + ": needs 4..9 options, has " +
                          std::to_string(options.size()));
    if (answer_index >= options.size())
      throw ContractError("mcqa item " + id + ": answer letter out of range");
    for (size_t i = 0; i < options.size(); ++i) {
      if (trim(options[i]).empty())
        throw ContractError("mcqa item " + id + ": empty option text");
      for (size_t j = i + 1; j < options.size(); ++j)
        if (options[i] == options[j])
          throw ContractError("mcqa item " + id + ": duplicate option text");
    }
  }

  json to_json() const {
    json opts = json::object();
    for (size_t i = 0; i < options.size(); ++i)
      opts[std::string(1, option_letter(i))] = options[i];
    json j{{"id", id},
           {"question", stem},
           {"options", std::move(opts)},
           {"answer", std::string(1, answer_letter())},
           {"source", item_source_name(source)}};
    if (provenance)
      j["provenance"] = json{{"chunk_id", provenance->chunk_id},
                             {"doc_id", provenance->doc_id}};
    if (!subject.empty()) j["subject"] = subject;
    return j;
  }
};

// Lettered option block used everywhere a question is shown to a model:
//
//   <stem>
//
//   (A) first option
//   (B) second option
inline std::string question_block(const McqaItem& item) {
  std::string out = item.stem;
  out += "\n\n";
  for (size_t i = 0; i < item.options.size(); ++i) {
    out += "(";
    out += option_letter(i);
    out += ") ";
    out += item.options[i];
    if (i + 1 < item.options.size()) out += "\n";
  }
  return out;
}

inline std::string answer_string(const McqaItem& item) {
  std::string out = "(";
  out += item.answer_letter();
  out += ") ";
  out += item.answer_text();
  return out;
}

struct McqaLoadResult {
  std::vector<McqaItem> items;
  std::vector<std::string> skipped;  // "<line or id>: reason"
};

namespace detail {

// Shared field mapping for MedQA-format records:
//   {"id": ..., "question": ..., "options": {"A": ...}, "answer": "B"}
inline std::optional<McqaItem> item_from_record(const json& j, ItemSource source,
                                                std::string* why) {
  McqaItem item;
  if (!j.contains("question") || !j.contains("options") || !j.contains("answer")) {
    *why = "missing question/options/answer";
    return std::nullopt;
  }
  item.id = j.contains("id") ? (j["id"].is_string()
                                    ? j["id"].get<std::string>()
                                    : j["id"].dump())
                             : "";
  item.stem = j["question"].get<std::string>();
  const json& opts = j["options"];
  if (!opts.is_object() || opts.size() < kMinOptions || opts.size() > kMaxOptions) {
    *why = "options must be an object with 4..9 entries";
    return std::nullopt;
  }
  item.options.assign(opts.size(), "");
  for (auto& [k, v] : opts.items()) {
    std::string ku = to_upper(trim(k));
    if (ku.size() != 1 || ku[0] < 'A' ||
        static_cast<size_t>(ku[0] - 'A') >= opts.size()) {
      *why = "option letters must be contiguous from A";
      return std::nullopt;
    }
    item.options[ku[0] - 'A'] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  std::string ans = to_upper(trim(j["answer"].get<std::string>()));
  if (ans.size() != 1) {
    *why = "answer must be a single letter";
    return std::nullopt;
  }
  auto idx = letter_index(ans[0], item.options.size());
  if (!idx) {
    *why = "gold letter not among the options";
    return std::nullopt;
  }
  item.answer_index = *idx;
  item.source = source;
  item.subject = j.value("subject", "");
  try {
    item.validate();
  } catch (const std::exception& e) {
    *why = e.what();
    return std::nullopt;
  }
  return item;
}

}  // namespace detail

// Items whose gold letter is missing or malformed are rejected at load
// time and reported in `skipped`.
inline McqaLoadResult load_mcqa_jsonl(const fs::path& path,
                                      ItemSource source = ItemSource::medqa) {
  McqaLoadResult result;
  for_each_jsonl(path, [&](json&& j, size_t line) {
    std::string why;
    auto item = detail::item_from_record(j, source, &why);
    if (item) {
      if (item->id.empty()) item->id = path.filename().string() + ":" + std::to_string(line);
      result.items.push_back(std::move(*item));
    } else {
      result.skipped.push_back(path.filename().string() + ":" +
                               std::to_string(line) + ": " + why);
    }
  });
  return result;
}

}  // namespace forge
