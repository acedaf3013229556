#pragma once

#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "forge/aux_synthesis.hpp"
#include "forge/cot.hpp"
#include "forge/digest.hpp"
#include "forge/mcqa.hpp"

namespace forge {

// The nine instruction-tuning sources, in canonical merge order.
inline const std::vector<std::string>& assembly_source_names() {
  static const std::vector<std::string> names = {
      "medqa_cot",   "medbooks_cot_18", "medmcqa",
      "liveqa",      "medicationqa",    "chatdoctor_cleaned",
      "medqa_dialog", "mts_dialog",     "alpacare"};
  return names;
}

inline bool is_assembly_source(const std::string& name) {
  for (const auto& n : assembly_source_names())
    if (n == name) return true;
  return false;
}

struct TrainingExample {
  std::string id;
  std::string source_dataset;
  std::vector<ChatMessage> messages;  // roles restricted to user/assistant

  void validate() const {
    if (messages.size() < 2)
      throw AssemblyError("example " + id + ": needs at least 2 messages");
    for (size_t i = 0; i < messages.size(); ++i) {
      Role expected = (i % 2 == 0) ? Role::user : Role::assistant;
      if (messages[i].role != expected)
        throw AssemblyError("example " + id +
                            ": messages must alternate user/assistant");
      if (trim(messages[i].text).empty())
        throw AssemblyError("example " + id + ": empty message text");
    }
    if (messages.back().role != Role::assistant)
      throw AssemblyError("example " + id + ": must end with an assistant message");
  }

  json to_json() const {
    json msgs = json::array();
    for (const auto& m : messages)
      msgs.push_back(json{{"role", role_name(m.role)}, {"text", m.text}});
    return json{{"id", id}, {"source", source_dataset}, {"messages", std::move(msgs)}};
  }

  static TrainingExample from_json(const json& j) {
    TrainingExample e;
    e.id = j.at("id").get<std::string>();
    e.source_dataset = j.value("source", "");
    for (const auto& m : j.at("messages")) {
      ChatMessage msg;
      msg.role = m.at("role").get<std::string>() == "assistant" ? Role::assistant
                                                                : Role::user;
      msg.text = m.at("text").get<std::string>();
      e.messages.push_back(std::move(msg));
    }
    return e;
  }
};

// --- record converters -------------------------------------------------------

// (question + options) -> user turn; the kept CoT explanation -> assistant
// turn. The explanation already ends with the "the answer is (L) ..."
// sentence — that is what the round-trip filter checked.
inline TrainingExample mcqa_to_example(const McqaItem& item, const CotRecord& cot) {
  if (!cot.kept)
    throw ContractError("mcqa_to_example: CoT record " + cot.item_id +
                        " was rejected");
  item.validate();
  TrainingExample e;
  e.id = item.id;
  e.messages.push_back({Role::user, question_block(item)});
  e.messages.push_back({Role::assistant, cot.explanation});
  e.validate();
  return e;
}

inline TrainingExample dialogue_to_example(const Dialogue& d) {
  std::string violation = dialogue_violation(d.turns);
  if (!violation.empty())
    throw ContractError("dialogue_to_example: invalid dialogue (" + violation +
                        ")");
  TrainingExample e;
  e.id = d.item_id;
  for (const auto& t : d.turns)
    e.messages.push_back(
        {t.speaker == Speaker::person_a ? Role::user : Role::assistant, t.text});
  e.validate();
  return e;
}

// --- assembly ----------------------------------------------------------------

struct AssemblyManifest {
  std::map<std::string, size_t> per_source_counts;  // post-dedup
  size_t total = 0;
  size_t duplicates_removed = 0;

  json to_json() const {
    return json{{"per_source", per_source_counts},
                {"total", total},
                {"duplicates_removed", duplicates_removed}};
  }
};

// Dedup key: roles and whitespace-collapsed texts, nothing else.
inline std::string dedup_key(const TrainingExample& e) {
  std::string joined;
  for (const auto& m : e.messages) {
    joined += role_name(m.role);
    joined += '\x1f';
    joined += collapse_whitespace(m.text);
    joined += '\x1e';
  }
  return sha256_hex(joined);
}

using ExampleStream = std::function<void(const std::function<void(TrainingExample)>&)>;

struct AssemblyOutput {
  std::vector<TrainingExample> train;
  std::vector<TrainingExample> validation;
  AssemblyManifest manifest;
};

// Merges sources in the given order, drops exact duplicates keeping the
// first occurrence, then applies one deterministic global shuffle. Ids
// must be unique within a source; across sources they are disambiguated
// with a "<source>/" prefix.
inline AssemblyOutput assemble(
    const std::vector<std::pair<std::string, ExampleStream>>& sources,
    uint64_t seed, double holdout_fraction = 0.0) {
  if (sources.empty()) throw ConfigError("assemble: no sources given");
  if (holdout_fraction < 0.0 || holdout_fraction >= 1.0)
    throw ConfigError("assemble: holdout fraction must be in [0, 1)");
  for (const auto& [name, _] : sources)
    if (!is_assembly_source(name))
      throw ConfigError("assemble: unknown source name '" + name + "'");

  AssemblyOutput out;
  std::unordered_set<std::string> seen_text;
  for (const auto& [name, stream] : sources) {
    std::unordered_set<std::string> ids_in_source;
    size_t kept = 0;
    stream([&](TrainingExample e) {
      e.validate();
      if (!ids_in_source.insert(e.id).second)
        throw AssemblyError("source " + name + ": duplicate id '" + e.id + "'");
      if (!seen_text.insert(dedup_key(e)).second) {
        out.manifest.duplicates_removed += 1;
        return;
      }
      e.source_dataset = name;
      e.id = name + "/" + e.id;
      out.train.push_back(std::move(e));
      ++kept;
    });
    out.manifest.per_source_counts[name] = kept;
  }
  for (const auto& [_, n] : out.manifest.per_source_counts)
    out.manifest.total += n;

  std::mt19937_64 rng(seed);
  fisher_yates(out.train, rng);

  size_t n_val = static_cast<size_t>(out.train.size() * holdout_fraction);
  if (n_val > 0) {
    out.validation.assign(out.train.end() - n_val, out.train.end());
    out.train.resize(out.train.size() - n_val);
  }
  return out;
}

// --- pass-through source adapters ---------------------------------------------
//
// Each adapter maps one native record to a TrainingExample. Required fields
// per source are documented in the README; records in the generic
// {"id", "messages": [...]} conversation schema are accepted everywhere.

namespace adapters {

inline std::optional<TrainingExample> generic_conversation(const json& j) {
  if (!j.contains("messages")) return std::nullopt;
  return TrainingExample::from_json(j);
}

inline TrainingExample qa_pair(const json& j, const std::string& q_field,
                               const std::string& a_field) {
  TrainingExample e;
  e.id = j.at("id").is_string() ? j["id"].get<std::string>() : j["id"].dump();
  e.messages.push_back({Role::user, j.at(q_field).get<std::string>()});
  e.messages.push_back({Role::assistant, j.at(a_field).get<std::string>()});
  return e;
}

// MedMCQA native record: {id, question, opa..opd, cop}. cop is the
// 0-based correct-option index (a letter is accepted too). The dataset's
// human explanations are intentionally not used.
inline TrainingExample medmcqa(const json& j) {
  McqaItem item;
  item.id = j.at("id").is_string() ? j["id"].get<std::string>() : j["id"].dump();
  item.stem = j.at("question").get<std::string>();
  for (const char* f : {"opa", "opb", "opc", "opd"})
    item.options.push_back(j.at(f).get<std::string>());
  const json& cop = j.at("cop");
  if (cop.is_number_integer()) {
    int64_t v = cop.get<int64_t>();
    if (v < 0 || v > 3)
      throw AssemblyError("medmcqa " + item.id + ": cop out of range");
    item.answer_index = static_cast<size_t>(v);
  } else {
    auto idx = letter_index(trim(cop.get<std::string>()).at(0), 4);
    if (!idx) throw AssemblyError("medmcqa " + item.id + ": bad cop letter");
    item.answer_index = *idx;
  }
  item.source = ItemSource::medmcqa;
  item.validate();
  TrainingExample e;
  e.id = item.id;
  e.messages.push_back({Role::user, question_block(item)});
  e.messages.push_back(
      {Role::assistant, "The answer is " + answer_string(item) + "."});
  return e;
}

// ChatDoctor-cleaned record as written by the clean stage.
inline std::optional<TrainingExample> chatdoctor(const json& j) {
  if (!j.value("passed_checks", true)) return std::nullopt;
  TrainingExample e;
  e.id = j.at("id").is_string() ? j["id"].get<std::string>() : j["id"].dump();
  e.messages.push_back({Role::user, j.at("patient_query").get<std::string>()});
  e.messages.push_back({Role::assistant, j.contains("cleaned")
                                              ? j["cleaned"].get<std::string>()
                                              : j.at("response").get<std::string>()});
  return e;
}

// MTS-dialog: conversation transcript in, clinical note out.
inline TrainingExample mts_dialog(const json& j) {
  return qa_pair(j, "dialogue", "note");
}

inline TrainingExample alpacare(const json& j) {
  TrainingExample e;
  e.id = j.at("id").is_string() ? j["id"].get<std::string>() : j["id"].dump();
  std::string user = j.at("instruction").get<std::string>();
  std::string input = j.value("input", "");
  if (!trim(input).empty()) user += "\n\n" + input;
  e.messages.push_back({Role::user, user});
  e.messages.push_back({Role::assistant, j.at("output").get<std::string>()});
  return e;
}

}  // namespace adapters

// Streams a JSONL file of native records through the adapter registered
// for the source name.
inline ExampleStream jsonl_source_stream(const std::string& source_name,
                                         const fs::path& path) {
  return [source_name, path](const std::function<void(TrainingExample)>& emit) {
    for_each_jsonl(path, [&](json&& j, size_t line) {
      if (auto generic = adapters::generic_conversation(j)) {
        emit(std::move(*generic));
        return;
      }
      try {
        if (source_name == "medmcqa") {
          emit(adapters::medmcqa(j));
        } else if (source_name == "liveqa" || source_name == "medicationqa") {
          emit(adapters::qa_pair(j, "question", "answer"));
        } else if (source_name == "chatdoctor_cleaned") {
          if (auto e = adapters::chatdoctor(j)) emit(std::move(*e));
        } else if (source_name == "medqa_dialog") {
          emit(dialogue_to_example(Dialogue::from_json(j)));
        } else if (source_name == "mts_dialog") {
          emit(adapters::mts_dialog(j));
        } else if (source_name == "alpacare") {
          emit(adapters::alpacare(j));
        } else {
          throw AssemblyError("source " + source_name +
                              ": records must use the conversation schema");
        }
      } catch (const json::exception& e) {
        throw AssemblyError("source " + source_name + " line " +
                            std::to_string(line) + ": " + e.what());
      }
    });
  };
}

}  // namespace forge
