#include <catch2/catch_amalgamated.hpp>

#include <map>

#include "forge/cot.hpp"
#include "test_helpers.hpp"

using namespace forge;
using forge::testing::FnProvider;
using forge::testing::make_item;
using forge::testing::TempDir;
using forge::testing::toy_item;

namespace {

std::vector<McqaItem> make_pool(size_t n) {
  std::vector<McqaItem> pool;
  for (size_t i = 0; i < n; ++i)
    pool.push_back(make_item("pool-" + std::to_string(i),
                             "Question " + std::to_string(i) + "?",
                             {"w" + std::to_string(i), "x" + std::to_string(i),
                              "y" + std::to_string(i), "z" + std::to_string(i)},
                             i % 4));
  return pool;
}

}  // namespace

TEST_CASE("sample_fewshot draws uniformly without replacement") {
  auto pool = make_pool(3);

  SECTION("exhaustive draw returns the whole pool") {
    auto picked = sample_fewshot(pool, 3, 123);
    REQUIRE(picked.size() == 3);
    std::set<std::string> ids;
    for (const auto& it : picked) ids.insert(it.id);
    REQUIRE(ids == std::set<std::string>{"pool-0", "pool-1", "pool-2"});
  }

  SECTION("deterministic under the seed") {
    auto big = make_pool(50);
    auto a = sample_fewshot(big, 3, 999);
    auto b = sample_fewshot(big, 3, 999);
    for (size_t i = 0; i < 3; ++i) REQUIRE(a[i].id == b[i].id);
  }

  SECTION("pool too small") {
    REQUIRE_THROWS_AS(sample_fewshot(pool, 4, 1), ConfigError);
  }

  SECTION("Monte-Carlo uniformity over 10,000 draws") {
    auto big = make_pool(100);
    std::map<std::string, int> freq;
    for (int seed = 0; seed < 10000; ++seed)
      for (const auto& it : sample_fewshot(big, 3, seed)) freq[it.id] += 1;
    // each item expected 10000 * 3/100 = 300 times, tolerance +/-15%
    for (const auto& it : big) {
      int f = freq[it.id];
      REQUIRE(f >= 255);
      REQUIRE(f <= 345);
    }
  }
}

TEST_CASE("parse_qa_response: direct mapping") {
  auto out = parse_qa_response(
      R"({"question":"Which vitamin deficiency causes scurvy?",)"
      R"("options":{"A":"Vitamin A","B":"Vitamin C","C":"Vitamin D","D":"Vitamin K"},)"
      R"("answer":"B"})");
  REQUIRE(out.kind == QaGenKind::item);
  REQUIRE(out.item->answer_letter() == 'B');
  REQUIRE(out.item->options.size() == 4);
  REQUIRE(out.item->options[1] == "Vitamin C");
  REQUIRE(out.item->source == ItemSource::textbook_synthetic);
}

TEST_CASE("parse_qa_response: abstentions") {
  REQUIRE(parse_qa_response("N/A").kind == QaGenKind::abstain);
  REQUIRE(parse_qa_response("  N/A  ").kind == QaGenKind::abstain);
  REQUIRE(parse_qa_response("N/A.").kind == QaGenKind::abstain);
  REQUIRE(parse_qa_response("n/a").kind == QaGenKind::abstain);
  REQUIRE(parse_qa_response("\"N/A\"").kind != QaGenKind::item);
}

TEST_CASE("parse_qa_response: failures") {
  SECTION("answer letter outside the options") {
    auto out = parse_qa_response(
        R"({"question":"q","options":{"A":"1","B":"2","C":"3","D":"4"},"answer":"E"})");
    REQUIRE(out.kind == QaGenKind::parse_error);
    REQUIRE(out.error_detail.find("referential integrity") != std::string::npos);
  }
  SECTION("duplicate option texts") {
    auto out = parse_qa_response(
        R"({"question":"q","options":{"A":"same","B":"same","C":"3","D":"4"},"answer":"A"})");
    REQUIRE(out.kind == QaGenKind::parse_error);
  }
  SECTION("prose with no JSON") {
    auto out = parse_qa_response("I could not find a suitable concept here.");
    REQUIRE(out.kind == QaGenKind::parse_error);
  }
  SECTION("non-contiguous letters") {
    auto out = parse_qa_response(
        R"({"question":"q","options":{"A":"1","B":"2","D":"4","E":"5"},"answer":"A"})");
    REQUIRE(out.kind == QaGenKind::parse_error);
  }
  SECTION("too few options") {
    auto out = parse_qa_response(
        R"({"question":"q","options":{"A":"1","B":"2"},"answer":"A"})");
    REQUIRE(out.kind == QaGenKind::parse_error);
  }
}

TEST_CASE("parse_qa_response: tolerated format drift") {
  SECTION("code fences") {
    auto out = parse_qa_response(
        "```json\n"
        R"({"question":"q","options":{"A":"1","B":"2","C":"3","D":"4"},"answer":"C"})"
        "\n```");
    REQUIRE(out.kind == QaGenKind::item);
    REQUIRE(out.item->answer_letter() == 'C');
  }
  SECTION("leading json tag as printed in the prompt") {
    auto out = parse_qa_response(
        R"(json{"question":"q","options":{"A":"1","B":"2","C":"3","D":"4"},"answer":"A"})");
    REQUIRE(out.kind == QaGenKind::item);
  }
  SECTION("answer as option text") {
    auto out = parse_qa_response(
        R"({"question":"q","options":{"A":"alpha","B":"beta","C":"gamma","D":"delta"},"answer":"gamma"})");
    REQUIRE(out.kind == QaGenKind::item);
    REQUIRE(out.item->answer_letter() == 'C');
  }
  SECTION("explanation key is optional and ignored") {
    auto out = parse_qa_response(
        R"({"question":"q","options":{"A":"1","B":"2","C":"3","D":"4"},"explanation":"because","answer":"D"})");
    REQUIRE(out.kind == QaGenKind::item);
  }
}

TEST_CASE("parse_qa_response is total on garbage") {
  std::mt19937_64 rng(5);
  static const std::string chars = "{}[]\":,abcN/A \n\\";
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    size_t len = bounded_uniform(rng, 60);
    for (size_t i = 0; i < len; ++i)
      s.push_back(chars[bounded_uniform(rng, chars.size())]);
    auto out = parse_qa_response(s);  // must not throw
    bool one_of = out.kind == QaGenKind::item || out.kind == QaGenKind::abstain ||
                  out.kind == QaGenKind::parse_error;
    REQUIRE(one_of);
  }
}

TEST_CASE("extract_answer") {
  SECTION("parenthesized letter with answer string") {
    REQUIRE(extract_answer("...Therefore, the answer is (D) Nitrofurantoin.", 4) == 'D');
  }
  SECTION("anchor phrase absent") {
    REQUIRE_THROWS_AS(extract_answer("The correct option is (B).", 4),
                      ExtractionError);
  }
  SECTION("last occurrence wins") {
    REQUIRE(extract_answer(
                "the answer is (A) at first glance... but reconsidering, "
                "the answer is (C) X.",
                4) == 'C');
  }
  SECTION("bare letter") {
    REQUIRE(extract_answer("So the answer is B.", 4) == 'B');
    REQUIRE(extract_answer("the answer is b", 4) == 'B');
  }
  SECTION("case-insensitive anchor") {
    REQUIRE(extract_answer("The Answer Is (a) something", 4) == 'A');
  }
  SECTION("a word is not a bare letter") {
    REQUIRE_THROWS_AS(extract_answer("the answer is Benign tumor", 4),
                      ExtractionError);
  }
  SECTION("letter outside the valid set") {
    REQUIRE_THROWS_AS(extract_answer("the answer is (F) nope", 4), ExtractionError);
  }
  SECTION("colon and markdown noise after the anchor") {
    REQUIRE(extract_answer("the answer is: **(C)** option", 4) == 'C');
  }
}

TEST_CASE("roundtrip_filter") {
  McqaItem item = toy_item();  // gold B

  SECTION("kept when prediction matches gold") {
    CotRecord rec = roundtrip_filter(item, "Step 1 ... the answer is (B) Hypothyroidism.");
    REQUIRE(rec.kept);
    REQUIRE(rec.predicted_letter == 'B');
    REQUIRE(rec.reject_reason == RejectReason::none);
  }
  SECTION("wrong answer") {
    CotRecord rec = roundtrip_filter(item, "... the answer is (C) Depression.");
    REQUIRE_FALSE(rec.kept);
    REQUIRE(rec.predicted_letter == 'C');
    REQUIRE(rec.reject_reason == RejectReason::wrong_answer);
  }
  SECTION("no anchor phrase") {
    CotRecord rec = roundtrip_filter(item, "It is clearly hypothyroidism.");
    REQUIRE_FALSE(rec.kept);
    REQUIRE_FALSE(rec.predicted_letter.has_value());
    REQUIRE(rec.reject_reason == RejectReason::extraction_failed);
  }
  SECTION("blank output is a format reject") {
    CotRecord rec = roundtrip_filter(item, "   \n ");
    REQUIRE_FALSE(rec.kept);
    REQUIRE(rec.reject_reason == RejectReason::format);
  }
  SECTION("explanation is stored either way") {
    CotRecord rec = roundtrip_filter(item, "no anchor here");
    REQUIRE(rec.explanation == "no anchor here");
  }
}

TEST_CASE("filter soundness: kept implies extraction equals gold") {
  std::mt19937_64 rng(17);
  McqaItem item = toy_item();
  static const std::vector<std::string> endings = {
      "the answer is (A) x.", "the answer is (B) y.", "the answer is B",
      "the answer is (C).",  "no anchor at all",     "the answer is Bogus",
      "",                     "the answer is (E) out of range"};
  for (int trial = 0; trial < 300; ++trial) {
    std::string text = "reasoning step " + std::to_string(rng() % 100) + ". " +
                       endings[bounded_uniform(rng, endings.size())];
    CotRecord rec = roundtrip_filter(item, text);
    if (rec.kept) {
      REQUIRE(extract_answer(rec.explanation, item.options.size()) ==
              item.answer_letter());
      REQUIRE(rec.predicted_letter == item.answer_letter());
    }
  }
}

TEST_CASE("generate_qa_from_chunk maps outcomes and provenance") {
  TempDir tmp("qa_gen");
  Chunk chunk;
  chunk.doc_id = "book.txt";
  chunk.index = 2;
  chunk.start = 100;
  chunk.end = 400;
  chunk.text = "The femur is the longest bone in the human body.";
  chunk.policy_target = 4000;
  auto pool = make_pool(3);
  PromptLibrary prompts = PromptLibrary::builtin();

  SECTION("N/A response becomes an abstain outcome") {
    auto provider = std::make_shared<FnProvider>([](const ChatRequest&) {
      return "N/A";
    });
    Gateway gw(provider, tmp.path / "c1");
    auto out = generate_qa_from_chunk(chunk, pool, gw, prompts, "gen",
                                      SamplingParams::greedy_params());
    REQUIRE(out.kind == QaGenKind::abstain);
    REQUIRE(out.raw_text == "N/A");
  }

  SECTION("well-formed JSON becomes an item with chunk provenance") {
    auto provider = std::make_shared<FnProvider>([](const ChatRequest&) {
      return R"({"question":"Which bone is longest?",)"
             R"("options":{"A":"Femur","B":"Tibia","C":"Humerus","D":"Radius"},)"
             R"("explanation":"see text","answer":"A"})";
    });
    Gateway gw(provider, tmp.path / "c2");
    auto out = generate_qa_from_chunk(chunk, pool, gw, prompts, "gen",
                                      SamplingParams::greedy_params());
    REQUIRE(out.kind == QaGenKind::item);
    REQUIRE(out.item->id == "book.txt#2");
    REQUIRE(out.item->provenance->chunk_id == "book.txt#2");
    REQUIRE(out.item->provenance->doc_id == "book.txt");
    REQUIRE(out.item->answer_letter() == 'A');

    // the rendered prompt embeds the chunk and all three few-shot answers
    auto sent = provider->prompts();
    REQUIRE(sent.size() == 1);
    REQUIRE(sent[0].find(chunk.text) != std::string::npos);
    for (const auto& fs_item : pool)
      REQUIRE(sent[0].find(fs_item.stem) != std::string::npos);
  }

  SECTION("prose becomes a parse_error outcome") {
    auto provider = std::make_shared<FnProvider>([](const ChatRequest&) {
      return "This chunk was interesting but I decline.";
    });
    Gateway gw(provider, tmp.path / "c3");
    auto out = generate_qa_from_chunk(chunk, pool, gw, prompts, "gen",
                                      SamplingParams::greedy_params());
    REQUIRE(out.kind == QaGenKind::parse_error);
  }

  SECTION("gateway errors surface as parse_error outcomes with detail") {
    auto provider = std::make_shared<MockProvider>();
    MockProvider::Rule r;
    r.match = MockProvider::Rule::Match::any;
    r.response = "x";
    r.failures_before_success = 100;
    r.failure_kind = GatewayError::Kind::auth;
    provider->add_rule(r);
    Gateway gw(provider, tmp.path / "c4", RetryPolicy{2, 0, 0.0});
    auto out = generate_qa_from_chunk(chunk, pool, gw, prompts, "gen",
                                      SamplingParams::greedy_params());
    REQUIRE(out.kind == QaGenKind::parse_error);
    REQUIRE(out.error_detail.find("gateway") != std::string::npos);
  }

  SECTION("exactly three few-shot items are required") {
    auto provider = std::make_shared<FnProvider>([](const ChatRequest&) {
      return "N/A";
    });
    Gateway gw(provider, tmp.path / "c5");
    auto two = make_pool(2);
    REQUIRE_THROWS_AS(generate_qa_from_chunk(chunk, two, gw, prompts, "gen",
                                             SamplingParams::greedy_params()),
                      ContractError);
  }
}

TEST_CASE("generate_cot returns model text verbatim and audits the prompt") {
  TempDir tmp("cot_gen");
  McqaItem item = toy_item();
  PromptLibrary prompts = PromptLibrary::builtin();
  auto provider = std::make_shared<FnProvider>([](const ChatRequest&) {
    return "Summarizing: fatigue. Therefore, the answer is (B) Hypothyroidism.";
  });
  Gateway gw(provider, tmp.path / "cache");

  std::string text = generate_cot(item, gw, prompts, "gen",
                                  SamplingParams::greedy_params());
  REQUIRE(text ==
          "Summarizing: fatigue. Therefore, the answer is (B) Hypothyroidism.");

  auto sent = provider->prompts();
  REQUIRE(sent.size() == 1);
  const std::string& prompt = sent[0];
  REQUIRE(prompt.find(item.stem) != std::string::npos);
  size_t last = 0;
  for (size_t i = 0; i < item.options.size(); ++i) {
    std::string line = "(" + std::string(1, option_letter(i)) + ") " + item.options[i];
    size_t pos = prompt.find(line);
    REQUIRE(pos != std::string::npos);
    REQUIRE(pos > last);  // options appear in letter order
    last = pos;
  }

  // greedy repeat: cache hit, byte-identical
  std::string again = generate_cot(item, gw, prompts, "gen",
                                   SamplingParams::greedy_params());
  REQUIRE(again == text);
  REQUIRE(provider->prompts().size() == 1);
}
