#pragma once

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "forge/errors.hpp"

namespace forge {

using json = nlohmann::json;

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open file: " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IngestError("read failure: " + path.string());
  return data;
}

// Write-temp-then-rename. Readers never observe a half-written file.
inline void atomic_write_file(const fs::path& path, std::string_view data) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".")
                                                    : path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open temp file: " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw Error("write failure: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void write_json_file(const fs::path& path, const json& j) {
  atomic_write_file(path, j.dump(2) + "\n");
}

inline json parse_json(std::string_view text, const std::string& origin) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error("malformed JSON in " + origin);
  return j;
}

// Calls fn(record, line_number) per line. Blank lines are skipped; a
// malformed line throws unless lenient, in which case it is passed over
// (used when resuming from a file whose tail was cut mid-write).
inline size_t for_each_jsonl(const fs::path& path,
                             const std::function<void(json&&, size_t)>& fn,
                             bool lenient = false) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open file: " + path.string());
  std::string line;
  size_t line_no = 0, n = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      if (lenient) continue;
      throw Error("malformed JSON at " + path.string() + ":" +
                  std::to_string(line_no));
    }
    fn(std::move(j), line_no);
    ++n;
  }
  return n;
}

inline std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> out;
  for_each_jsonl(path, [&](json&& j, size_t) { out.push_back(std::move(j)); });
  return out;
}

inline void write_jsonl(const fs::path& path, const std::vector<json>& records) {
  std::string buf;
  for (const auto& r : records) {
    buf += r.dump();
    buf += '\n';
  }
  atomic_write_file(path, buf);
}

// Append-mode JSONL writer for resumable stages. One record per line,
// flushed per record so a killed run loses at most the line in flight.
// open() first repairs any truncated tail from a previous run, then
// reports which ids are already committed so the caller can skip them.
class JsonlStageWriter {
public:
  explicit JsonlStageWriter(fs::path path, std::string id_field = "id")
      : path_(std::move(path)), id_field_(std::move(id_field)) {}

  std::unordered_set<std::string> open() {
    std::unordered_set<std::string> done;
    if (fs::exists(path_)) {
      std::string repaired;
      for_each_jsonl(
          path_,
          [&](json&& j, size_t) {
            if (j.contains(id_field_) && j[id_field_].is_string())
              done.insert(j[id_field_].get<std::string>());
            repaired += j.dump();
            repaired += '\n';
          },
          /*lenient=*/true);
      atomic_write_file(path_, repaired);
    } else if (!path_.parent_path().empty()) {
      fs::create_directories(path_.parent_path());
    }
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw Error("cannot open output: " + path_.string());
    return done;
  }

  void write(const json& record) {
    out_ << record.dump() << '\n';
    out_.flush();
    if (!out_) throw Error("write failure: " + path_.string());
  }

  const fs::path& path() const { return path_; }

private:
  fs::path path_;
  std::string id_field_;
  std::ofstream out_;
};

}  // namespace forge
