#include <catch2/catch_amalgamated.hpp>

#include "forge/prompts.hpp"

using namespace forge;

TEST_CASE("placeholder substitution") {
  Template t = Template::make("toy", "a{X}b");
  REQUIRE(t.required_placeholders == std::set<std::string>{"X"});
  REQUIRE(render(t, {{"X", "y"}}) == "ayb");
}

TEST_CASE("bindings must cover the required set exactly") {
  Template t = Template::make("toy", "{A} and {B}");
  REQUIRE_THROWS_AS(render(t, {{"A", "1"}}), TemplateError);
  REQUIRE_THROWS_AS(render(t, {{"A", "1"}, {"B", "2"}, {"C", "3"}}), TemplateError);
  REQUIRE(render(t, {{"A", "1"}, {"B", "2"}}) == "1 and 2");
}

TEST_CASE("lowercase and free-form braces are literal text") {
  Template t = Template::make("toy", "{{keep this}} {x} {X1_Y} end");
  REQUIRE(t.required_placeholders == std::set<std::string>{"X1_Y"});
  REQUIRE(render(t, {{"X1_Y", "v"}}) == "{{keep this}} {x} v end");
}

TEST_CASE("render round trip with sentinel bindings") {
  PromptLibrary lib = PromptLibrary::builtin();
  for (const auto& name : PromptLibrary::template_names()) {
    const Template& t = lib.get(name);
    std::map<std::string, std::string> bindings;
    for (const auto& ph : t.required_placeholders)
      bindings[ph] = "\x01" + ph + "\x02";
    std::string rendered = render(t, bindings);
    REQUIRE(rendered == render(t, bindings));  // pure
    for (const auto& ph : t.required_placeholders) {
      std::string sentinel = "\x01" + ph + "\x02";
      size_t pos;
      while ((pos = rendered.find(sentinel)) != std::string::npos)
        rendered.replace(pos, sentinel.size(), "{" + ph + "}");
    }
    REQUIRE(rendered == t.body);
  }
}

TEST_CASE("cot prompt carries the required anchor phrase") {
  PromptLibrary lib = PromptLibrary::builtin();
  const Template& t = lib.get("cot_generation");
  REQUIRE(t.required_placeholders == std::set<std::string>{"INPUT_QUESTION"});
  std::string rendered = render(t, {{"INPUT_QUESTION", "What causes scurvy?"}});
  REQUIRE(rendered.find("the answer is") != std::string::npos);
  REQUIRE(rendered.find("What causes scurvy?") != std::string::npos);
  REQUIRE(rendered.find("step-by-step") != std::string::npos);
}

TEST_CASE("qa prompt needs three few-shot slots plus the chunk") {
  PromptLibrary lib = PromptLibrary::builtin();
  const Template& t = lib.get("qa_generation");
  REQUIRE(t.required_placeholders ==
          std::set<std::string>{"MEDQA_QUESTION_1", "ANSWER_1", "MEDQA_QUESTION_2",
                                "ANSWER_2", "MEDQA_QUESTION_3", "ANSWER_3",
                                "TEXTBOOK_CHUNK"});
  // two few-shot examples bound, one missing
  REQUIRE_THROWS_AS(render(t, {{"MEDQA_QUESTION_1", "q"},
                               {"ANSWER_1", "a"},
                               {"MEDQA_QUESTION_2", "q"},
                               {"ANSWER_2", "a"},
                               {"TEXTBOOK_CHUNK", "c"}}),
                    TemplateError);
  REQUIRE(t.body.find("N/A") != std::string::npos);
  REQUIRE(t.body.find("JSON format") != std::string::npos);
}

TEST_CASE("judge and rubric prompts state their output contracts") {
  PromptLibrary lib = PromptLibrary::builtin();
  const Template& judge = lib.get("nli_judge");
  for (const char* tok : {"ENTAILS", "CONTRADICTS", "NEUTRAL"})
    REQUIRE(judge.body.find(tok) != std::string::npos);
  const Template& rubric = lib.get("explanation_rubric");
  for (const char* dim : {"completeness", "accuracy", "clarity", "relevance",
                          "logical coherence"})
    REQUIRE(rubric.body.find(dim) != std::string::npos);
  REQUIRE(rubric.body.find("1 to 5") != std::string::npos);
}

TEST_CASE("cleaning prompt bakes in three correction pairs") {
  PromptLibrary lib = PromptLibrary::builtin();
  const Template& t = lib.get("chatdoctor_cleaning");
  size_t n = 0, pos = 0;
  while ((pos = t.body.find("Original text:", pos)) != std::string::npos) {
    ++n;
    pos += 1;
  }
  REQUIRE(n == 3);
  REQUIRE(t.required_placeholders == std::set<std::string>{"ORIGINAL_RESPONSE"});
}

TEST_CASE("template files on disk match the builtin bodies") {
  fs::path dir = fs::path(FORGE_SOURCE_DIR) / "templates";
  PromptLibrary from_disk = PromptLibrary::load_dir(dir);
  PromptLibrary builtin = PromptLibrary::builtin();
  for (const auto& name : PromptLibrary::template_names()) {
    INFO(name);
    REQUIRE(from_disk.get(name).body == builtin.get(name).body);
    REQUIRE(from_disk.get(name).required_placeholders ==
            builtin.get(name).required_placeholders);
  }
}

TEST_CASE("missing template file") {
  REQUIRE_THROWS_AS(PromptLibrary::load_dir(fs::temp_directory_path() / "nope_tpl"),
                    TemplateError);
}
