#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "mmvu/datagen.hpp"

using namespace mmvu;

namespace {

const std::filesystem::path kGen = std::filesystem::path(MMVU_FIXTURE_DIR) / "gen";
const std::filesystem::path kPrompts = MMVU_PROMPT_DIR;

Conversation turns(std::initializer_list<std::pair<const char*, const char*>> rounds) {
  Conversation c;
  for (auto [q, a] : rounds) {
    c.push_back({Speaker::Human, q});
    c.push_back({Speaker::Gpt, a});
  }
  return c;
}

GeneratedSample paired(const std::string& id, std::size_t pos_rounds, std::size_t neg_rounds) {
  GeneratedSample s{id, id + ".jpg", {}, Conversation{}};
  for (std::size_t i = 0; i < pos_rounds; ++i) {
    s.pos.push_back({Speaker::Human, "pq" + std::to_string(i)});
    s.pos.push_back({Speaker::Gpt, "pa" + std::to_string(i)});
  }
  for (std::size_t i = 0; i < neg_rounds; ++i) {
    s.neg->push_back({Speaker::Human, "nq" + std::to_string(i)});
    s.neg->push_back({Speaker::Gpt, "na" + std::to_string(i)});
  }
  return s;
}

GeneratedSample single(const std::string& id) { return {id, id + ".jpg", turns({{"q", "a"}}), std::nullopt}; }

}  // namespace

TEST(GenPrompt, VersionsRender) {
  for (auto v : {PromptVersion::V0, PromptVersion::V1, PromptVersion::V2, PromptVersion::V3}) {
    const auto p = render_generation_prompt(v, kPrompts);
    EXPECT_FALSE(p.empty());
  }
  EXPECT_NE(render_generation_prompt(PromptVersion::V2, kPrompts), render_generation_prompt(PromptVersion::V3, kPrompts));
  EXPECT_EQ(parse_prompt_version("v2"), PromptVersion::V2);
  EXPECT_EQ(parse_prompt_version("3"), PromptVersion::V3);
  EXPECT_FALSE(parse_prompt_version("v4"));
}

TEST(GenReply, UnpairedVersions) {
  const auto reply = R"({"id":"x","image":"x.jpg","conversations":[{"from":"human","value":"Q?"},{"from":"gpt","value":"A."}]})";
  auto s = parse_generation_reply(reply, PromptVersion::V1, "img", "img.png");
  EXPECT_FALSE(s.paired());
  EXPECT_EQ(s.id, "img");
  EXPECT_EQ(s.pos, turns({{"Q?", "A."}}));
}

TEST(GenReply, PairedVersionsAndFence) {
  const auto body = R"({"conversations-pos":[{"from":"human","value":"Q"},{"from":"gpt","value":"A"}],
                        "conversations-neg":[{"from":"human","value":"N"},{"from":"gpt","value":"M"}]})";
  auto s = parse_generation_reply(std::string("```json\n") + body + "\n```", PromptVersion::V2, "i", "i.png");
  ASSERT_TRUE(s.paired());
  EXPECT_EQ(s.rounds(), 2u);
}

TEST(GenReply, McqRounds) {
  const auto body = R"({"conversations-pos":[{"question":"Color?","options":["Red","Blue","Green","Gray"],"answer":"Blue"}],
                        "conversations-neg":[{"question":"Isn't it red?","options":["No","Yes","Maybe","Never"],"answer":"No"}]})";
  auto s = parse_generation_reply(body, PromptVersion::V3, "i", "i.png");
  EXPECT_EQ(s.pos[0].value, "Color?\nA. Red\nB. Blue\nC. Green\nD. Gray");
  EXPECT_EQ(s.pos[1].value, "Blue");
}

TEST(GenReply, StrictRejections) {
  EXPECT_THROW(parse_generation_reply("prose", PromptVersion::V0, "i", "i"), ValidationError);
  EXPECT_THROW(parse_generation_reply(R"({"conversations":[{"from":"gpt","value":"A"},{"from":"human","value":"Q"}]})",
                                      PromptVersion::V0, "i", "i"),
               ValidationError);
  EXPECT_THROW(parse_generation_reply(R"({"conversations":[],"extra":1})", PromptVersion::V0, "i", "i"), ValidationError);
  EXPECT_THROW(parse_generation_reply(
                   R"({"conversations-pos":[{"question":"Q","options":["a","b","c","d"],"answer":"e"}],"conversations-neg":[]})",
                   PromptVersion::V3, "i", "i"),
               ValidationError);
  EXPECT_THROW(parse_generation_reply(
                   R"({"conversations-pos":[{"question":"Q","options":["a","b","c"],"answer":"a"}],"conversations-neg":[]})",
                   PromptVersion::V3, "i", "i"),
               ValidationError);
}

TEST(Generate, ReplayFixtureSkipsUnparseable) {
  auto llm = ReplayTransport::from_file(kGen / "replay.jsonl");
  GenerationConfig cfg;
  cfg.prompt_dir = kPrompts;
  std::vector<std::filesystem::path> images;
  for (auto n : {"kitchen", "street", "park", "garage"}) images.push_back(kGen / "images" / (std::string(n) + ".png"));
  auto r = generate_samples(images, cfg, llm);
  ASSERT_EQ(r.samples.size(), 3u);
  EXPECT_EQ(r.samples[0].id, "kitchen");
  EXPECT_EQ(r.samples[0].image, "kitchen.png");
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(std::filesystem::path(r.skipped[0].first).filename(), "garage.png");

  images.resize(1);
  images.push_back(kGen / "images" / "garage.png");
  images.push_back(kGen / "images" / "garage.png");
  EXPECT_THROW(generate_samples(images, cfg, llm), GenerationFailed);
}

TEST(Filter, DropsUncertainRoundsOnWordBoundary) {
  std::vector<GeneratedSample> in{{"a", "a.jpg",
                                   turns({{"Q1", "It is uncertain."},
                                          {"Q2", "UNCERTAIN"},
                                          {"Q3", "The uncertainty is high."},
                                          {"Is it uncertain?", "No."}}),
                                   std::nullopt}};
  auto r = filter_samples(in);
  EXPECT_EQ(r.rounds_removed, 2u);
  ASSERT_EQ(r.kept.size(), 1u);
  EXPECT_EQ(r.kept[0].pos, turns({{"Q3", "The uncertainty is high."}, {"Is it uncertain?", "No."}}));
}

TEST(Filter, StripsPhraseEverywhere) {
  std::vector<GeneratedSample> in{{"a", "a.jpg",
                                   turns({{"What is in the image?", "In the image, a dog in  the image sits."},
                                          {"Where?\nA. in the image\nB. Outside", "Outside"}}),
                                   std::nullopt}};
  auto r = filter_samples(in);
  ASSERT_EQ(r.kept.size(), 1u);
  EXPECT_EQ(r.kept[0].pos[0].value, "What is?");
  EXPECT_EQ(r.kept[0].pos[1].value, "a dog sits.");
  EXPECT_EQ(r.kept[0].pos[2].value, "Where?\nA.\nB. Outside");
  EXPECT_EQ(r.phrases_stripped(), 4u);
  EXPECT_EQ(r.phrases_stripped_gpt, 2u);
  for (const auto& t : r.kept[0].pos) EXPECT_FALSE(contains_phrase(t.value));
}

TEST(Filter, EmptiedRoundsAndSamplesAreRemoved) {
  std::vector<GeneratedSample> in{{"a", "a.jpg", turns({{"Q", "in the image"}}), std::nullopt},
                                  {"b", "b.jpg", turns({{"Q", "uncertain"}}), turns({{"Q", "fine"}})}};
  auto r = filter_samples(in);
  ASSERT_EQ(r.removed.size(), 1u);
  EXPECT_EQ(r.removed[0].id, "a");
  ASSERT_EQ(r.kept.size(), 1u);
  EXPECT_TRUE(r.kept[0].pos.empty());
  EXPECT_EQ(r.kept[0].neg->size(), 2u);
}

TEST(Filter, DropOnPhraseOption) {
  std::vector<GeneratedSample> in{{"a", "a.jpg", turns({{"Q in the image", "A"}, {"Q", "A"}}), std::nullopt}};
  auto r = filter_samples(in, {true});
  EXPECT_EQ(r.rounds_removed, 1u);
  EXPECT_EQ(r.phrases_stripped(), 0u);
  EXPECT_EQ(r.kept[0].pos, turns({{"Q", "A"}}));
}

TEST(Filter, FixtureIsIdempotent) {
  const auto data = read_training_json(kGen / "dataset.json");
  const auto once = filter_samples(data);
  const auto twice = filter_samples(once.kept);
  EXPECT_EQ(twice.kept, once.kept);
  EXPECT_EQ(twice.rounds_removed, 0u);
  EXPECT_EQ(twice.phrases_stripped(), 0u);
}

TEST(Rng, ReferenceSequence) {
  Xoshiro256 rng(42);
  EXPECT_EQ(rng.next(), 0x15780b2e0c2ec716ULL);
  EXPECT_EQ(rng.next(), 0x6104d9866d113a7eULL);
  EXPECT_EQ(rng.next(), 0xae17533239e499a1ULL);
}

TEST(Rng, SampleIndicesDistinctAndInRange) {
  Xoshiro256 rng(1);
  for (std::size_t n : {1u, 5u, 50u}) {
    auto idx = sample_indices(n, n / 2 + 1, rng);
    std::set<std::size_t> uniq(idx.begin(), idx.end());
    EXPECT_EQ(uniq.size(), idx.size());
    EXPECT_LT(*uniq.rbegin(), n);
  }
}

TEST(Compose, ConcatRoundCounts) {
  std::vector<GeneratedSample> base{paired("a", 5, 5), paired("b", 2, 1), paired("c", 3, 4), single("u")};
  for (std::optional<std::size_t> r : {std::optional<std::size_t>(1), std::optional<std::size_t>(2),
                                       std::optional<std::size_t>(4), std::optional<std::size_t>()}) {
    auto out = compose(base, {}, CompositionStrategy::concat(r), 0);
    ASSERT_EQ(out.size(), base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      const auto& b = base[i];
      const auto neg = b.neg ? round_count(*b.neg) : 0;
      EXPECT_EQ(round_count(out[i].pos), round_count(b.pos) + std::min(r.value_or(neg), neg));
      EXPECT_FALSE(out[i].paired());
    }
  }
  auto out = compose(base, {}, CompositionStrategy::concat(2), 0);
  EXPECT_EQ(out[0].pos[10].value, "nq0");
  EXPECT_EQ(out[0].pos[13].value, "na1");
}

TEST(Compose, CombineDoublesPairedSamples) {
  std::vector<GeneratedSample> base{paired("a", 1, 1), paired("b", 2, 3)};
  auto out = compose(base, {paired("c", 1, 1)}, CompositionStrategy::combine(), 0);
  ASSERT_EQ(out.size(), 6u);
  EXPECT_EQ(out[2].id, "b-pos");
  EXPECT_EQ(round_count(out[3].pos), 3u);
  EXPECT_EQ(out[3].image, "b.jpg");
}

TEST(Compose, ReplacePreservesSizeAndIsReproducible) {
  std::vector<GeneratedSample> base, extra;
  for (int i = 0; i < 20; ++i) base.push_back(single("b" + std::to_string(i)));
  for (int i = 0; i < 10; ++i) extra.push_back(single("x" + std::to_string(i)));
  const auto s = CompositionStrategy::replace(6);
  const auto a = compose(base, extra, s, 7), b = compose(base, extra, s, 7), c = compose(base, extra, s, 8);
  EXPECT_EQ(a.size(), base.size());
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(std::count_if(a.begin(), a.end(), [](const auto& x) { return x.id[0] == 'x'; }), 6);
  EXPECT_THROW(compose(base, extra, CompositionStrategy::replace(11), 1), ValidationError);
}

TEST(Compose, StrategyParsing) {
  EXPECT_EQ(CompositionStrategy::parse("concat:4").rounds, 4u);
  EXPECT_FALSE(CompositionStrategy::parse("concat:all").rounds);
  EXPECT_EQ(CompositionStrategy::parse("replace:12").n, 12u);
  EXPECT_THROW(CompositionStrategy::parse("concat:3"), UsageError);
  EXPECT_THROW(CompositionStrategy::parse("replace:"), UsageError);
}

TEST(TrainingJson, RoundTrip) {
  std::vector<GeneratedSample> data{paired("a", 1, 2), single("b")};
  std::stringstream buf;
  write_training_json(data, buf);
  EXPECT_EQ(read_training_json(buf), data);
  std::istringstream mixed(R"([{"id":"a","image":"a","conversations":[],"conversations-pos":[]}])");
  EXPECT_THROW(read_training_json(mixed), ValidationError);
}
