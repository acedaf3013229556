#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "forge/jsonl.hpp"
#include "forge/util.hpp"

namespace forge {

struct Document {
  std::string id;
  std::string title;
  std::string discipline;
  std::string text;  // UTF-8, newline-normalized at load
  std::string source_path;
};

struct ChunkPolicy {
  size_t target_length = 4000;  // characters (Unicode scalar values)
  size_t overlap_length = 400;
  bool snap_to_paragraph = true;

  void validate() const {
    if (target_length == 0)
      throw ConfigError("chunk policy: target_length must be positive");
    if (overlap_length >= target_length)
      throw ConfigError("chunk policy: overlap_length must be < target_length");
  }

  static ChunkPolicy with_default_overlap(size_t target, bool snap = true) {
    return ChunkPolicy{target, target / 10, snap};
  }
};

struct Chunk {
  std::string doc_id;
  size_t index = 0;
  size_t start = 0;  // character offsets into Document.text
  size_t end = 0;
  std::string text;
  size_t policy_target = 0;

  std::string key() const { return doc_id + "#" + std::to_string(index); }

  json to_json() const {
    return json{{"doc_id", doc_id}, {"index", index},   {"start", start},
                {"end", end},       {"text", text},     {"policy_target", policy_target}};
  }

  static Chunk from_json(const json& j) {
    Chunk c;
    c.doc_id = j.at("doc_id").get<std::string>();
    c.index = j.at("index").get<size_t>();
    c.start = j.at("start").get<size_t>();
    c.end = j.at("end").get<size_t>();
    c.text = j.at("text").get<std::string>();
    c.policy_target = j.at("policy_target").get<size_t>();
    return c;
  }
};

struct IngestWarning {
  std::string path;
  std::string reason;
};

struct Corpus {
  std::vector<Document> documents;
  std::vector<IngestWarning> warnings;
};

// One Document per regular file under root, ordered by relative path.
// The manifest (optional JSON file mapping filename -> discipline tag)
// overrides the default discipline, which is the parent directory name
// (or the filename stem for files directly under root).
inline Corpus load_corpus(const fs::path& root,
                          const std::optional<fs::path>& manifest = {}) {
  if (!fs::exists(root) || !fs::is_directory(root))
    throw IngestError("corpus directory does not exist: " + root.string());

  std::map<std::string, std::string> discipline_map;
  if (manifest) {
    json m = parse_json(read_file(*manifest), manifest->string());
    if (!m.is_object())
      throw IngestError("corpus manifest must be a JSON object: " +
                        manifest->string());
    for (auto& [k, v] : m.items()) discipline_map[k] = v.get<std::string>();
  }

  std::vector<fs::path> files;
  for (auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  Corpus corpus;
  for (const auto& path : files) {
    std::string rel = fs::relative(path, root).generic_string();
    std::string raw = read_file(path);
    utf8_index(raw, rel);  // decode check; throws IngestError on bad bytes
    std::string text = normalize_newlines(raw);
    if (collapse_whitespace(text).empty()) {
      corpus.warnings.push_back({rel, "empty file"});
      continue;
    }
    Document doc;
    doc.id = rel;
    doc.title = path.stem().string();
    doc.source_path = path.string();
    if (auto it = discipline_map.find(path.filename().string());
        it != discipline_map.end()) {
      doc.discipline = it->second;
    } else if (auto it2 = discipline_map.find(rel); it2 != discipline_map.end()) {
      doc.discipline = it2->second;
    } else if (path.parent_path() != root) {
      doc.discipline = path.parent_path().filename().string();
    } else {
      doc.discipline = path.stem().string();
    }
    doc.text = std::move(text);
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

namespace detail {

// Character positions that start a paragraph (the position just after a
// blank line). Paragraph break = two consecutive newlines.
inline std::vector<size_t> paragraph_starts(const std::vector<size_t>& idx,
                                            std::string_view text) {
  std::vector<size_t> starts;
  size_t n_chars = idx.size() - 1;
  for (size_t c = 0; c + 1 < n_chars; ++c) {
    if (text[idx[c]] == '\n' && text[idx[c + 1]] == '\n') {
      size_t p = c + 2;
      while (p < n_chars && text[idx[p]] == '\n') ++p;
      if (p < n_chars) starts.push_back(p);
    }
  }
  return starts;
}

}  // namespace detail

// Sliding-window segmentation. Starts advance on the fixed grid
// start_{k+1} = start_k + target - overlap; each non-final end may snap
// backward to the nearest paragraph start. The snap window is capped at
// min(target/10, overlap) so chunks always jointly cover [0, len).
inline std::vector<Chunk> chunk_document(const Document& doc,
                                         const ChunkPolicy& policy) {
  policy.validate();
  if (doc.text.empty() || collapse_whitespace(doc.text).empty())
    throw InvalidDocument("document has no text: " + doc.id);

  const std::vector<size_t> idx = utf8_index(doc.text, doc.id);
  const size_t len = idx.size() - 1;  // length in scalar values
  const size_t target = policy.target_length;
  const size_t step = target - policy.overlap_length;

  std::vector<size_t> para;
  size_t snap_window = 0;
  if (policy.snap_to_paragraph) {
    snap_window = std::min(target / 10, policy.overlap_length);
    if (snap_window > 0) para = detail::paragraph_starts(idx, doc.text);
  }

  std::vector<Chunk> chunks;
  for (size_t start = 0;; start += step) {
    size_t end = start + target;
    if (end >= len) {
      end = len;  // final chunk always reaches the end of the document
    } else if (snap_window > 0) {
      // nearest paragraph start in (end - snap_window, end]
      auto it = std::upper_bound(para.begin(), para.end(), end);
      if (it != para.begin()) {
        size_t cand = *(it - 1);
        if (cand > start && end - cand <= snap_window) end = cand;
      }
    }
    Chunk c;
    c.doc_id = doc.id;
    c.index = chunks.size();
    c.start = start;
    c.end = end;
    c.text = doc.text.substr(idx[start], idx[end] - idx[start]);
    c.policy_target = target;
    chunks.push_back(std::move(c));
    if (end == len) break;
  }
  return chunks;
}

inline void write_chunks_jsonl(const fs::path& path,
                               const std::vector<Chunk>& chunks) {
  std::vector<json> records;
  records.reserve(chunks.size());
  for (const auto& c : chunks) records.push_back(c.to_json());
  write_jsonl(path, records);
}

inline std::vector<Chunk> read_chunks_jsonl(const fs::path& path) {
  std::vector<Chunk> chunks;
  for_each_jsonl(path, [&](json&& j, size_t) {
    chunks.push_back(Chunk::from_json(j));
  });
  return chunks;
}

}  // namespace forge
