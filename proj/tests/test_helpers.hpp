#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "forge/gateway.hpp"
#include "forge/mcqa.hpp"

namespace forge::testing {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("forge_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Provider backed by a plain function; records every prompt it sees.
class FnProvider : public Provider {
public:
  using Fn = std::function<std::string(const ChatRequest&)>;

  explicit FnProvider(Fn fn) : fn_(std::move(fn)) {}

  std::string id() const override { return "fn"; }

  ChatResponse send(const ChatRequest& request) override {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      prompts_.push_back(request.concatenated_text());
      samplings_.push_back(request.sampling);
    }
    ChatResponse r;
    r.text = fn_(request);
    r.finish_reason = FinishReason::stop;
    r.prompt_tokens = 10;
    r.completion_tokens = 10;
    return r;
  }

  std::vector<std::string> prompts() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return prompts_;
  }

  std::vector<SamplingParams> samplings() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return samplings_;
  }

private:
  Fn fn_;
  mutable std::mutex mutex_;
  mutable std::vector<std::string> prompts_;
  mutable std::vector<SamplingParams> samplings_;
};

inline McqaItem make_item(std::string id, std::string stem,
                          std::vector<std::string> options, size_t gold) {
  McqaItem item;
  item.id = std::move(id);
  item.stem = std::move(stem);
  item.options = std::move(options);
  item.answer_index = gold;
  item.validate();
  return item;
}

inline McqaItem toy_item(const std::string& id = "q1") {
  return make_item(id, "A 40-year-old presents with fatigue. Most likely cause?",
                   {"Anemia", "Hypothyroidism", "Depression", "Sleep apnea"}, 1);
}

}  // namespace forge::testing
