// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 on any
// failure. Reference values come from the oracles in tests/support.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "mmvu/mmvu.hpp"
#include "oracles.hpp"

using namespace mmvu;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = MMVU_FIXTURE_DIR;
const fs::path kGolden = MMVU_GOLDEN_DIR;
const fs::path kPrompts = MMVU_PROMPT_DIR;
const fs::path kCli = MMVU_CLI_PATH;

// Thrown by check(); carries the first violated expectation.
struct Failed {
  std::string why;
};

void check(bool ok, const std::string& why) {
  if (!ok) throw Failed{why};
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Failed{"cannot read " + p.string()};
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<ItemPair> fixture_pairs() {
  std::ifstream in(kFixtures / "bench.jsonl");
  return pair_items(parse_benchmark(in));
}

// ---------------------------------------------------------------------------

void metric_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> len(0, 200), kind(0, 3), cat(0, 11);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::pair<Category, PairOutcome>> pairs;
    std::vector<int> all;
    std::array<std::vector<int>, kCategoryCount> by_cat;
    for (int i = len(rng); i > 0; --i) {
      const int k = kind(rng), c = cat(rng);
      pairs.emplace_back(static_cast<Category>(c), kPairOutcomes[k]);
      all.push_back(k);
      by_cat[c].push_back(k);
    }
    const auto report = build_report(pairs);
    auto same = [&](const MetricValue& got, const std::optional<double>& want, const char* what) {
      check(got.defined() == want.has_value(), std::string(what) + " definedness differs");
      if (want) check(std::fabs(*got.value - *want) <= 1e-12, std::string(what) + " differs by > 1e-12");
    };
    const auto micro = oracle::brute_rates(all);
    same(report.micro.ra, micro.ra, "micro RA");
    same(report.micro.mr, micro.mr, "micro MR");
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
      const auto w = oracle::brute_rates(by_cat[c]);
      same(report.per_category[c].ra, w.ra, "category RA");
      same(report.per_category[c].mr, w.mr, "category MR");
    }
  }
  const double s = seconds_since(t0);
  check(s < 1.0, "took " + std::to_string(s) + " s");
}

void outcome_taxonomy() {
  check(classify_pair(true, true) == PairOutcome::UR, "pos right, neg right is not UR");
  check(classify_pair(true, false) == PairOutcome::UF, "pos right, neg wrong is not UF");
  check(classify_pair(false, true) == PairOutcome::NR, "pos wrong, neg right is not NR");
  check(classify_pair(false, false) == PairOutcome::NF, "pos wrong, neg wrong is not NF");
}

void softmax_props() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-30, 30), shift(-500, 500);
  for (int i = 0; i < 1000; ++i) {
    OptionLogits x{u(rng), u(rng), u(rng), u(rng)};
    const auto p = softmax(x);
    check(std::fabs(p.probs[0] + p.probs[1] + p.probs[2] + p.probs[3] - 1.0) <= 1e-9, "sum != 1");
    const double c = shift(rng);
    const auto q = softmax({x[0] + c, x[1] + c, x[2] + c, x[3] + c});
    const auto ref = oracle::softmax_ld(x);
    for (int k = 0; k < 4; ++k) {
      check(std::fabs(p.probs[k] - q.probs[k]) <= 1e-9, "not shift invariant");
      check(std::fabs(p.probs[k] - static_cast<double>(ref[k])) <= 1e-9, "differs from long double reference");
    }
  }
  const double e = std::exp(1.0L);
  const double p1 = softmax({1, 0, 0, 0}).probs[0];
  check(std::fabs(p1 - e / (e + 3)) <= 1e-12, "[1,0,0,0] differs from e/(e+3)");
  check(std::fabs(p1 - 0.475367) <= 1e-6, "[1,0,0,0] gives " + std::to_string(p1));
}

void attention_statistics() {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 200; ++i) {
    const auto d = oracle::random_dump(rng);
    const auto a = average_heads(d);
    const auto s = answer_attention_scores(a, d.segments);
    const auto ws = oracle::answer_scores(d);
    check(std::fabs(s.to_system - ws[0]) <= 1e-6 && std::fabs(s.to_visual - ws[1]) <= 1e-6 &&
              std::fabs(s.to_question - ws[2]) <= 1e-6,
          "answer scores differ on dump " + std::to_string(i));
    const auto b = question_attention_bound(a, d.segments);
    const auto wb = oracle::question_bound(d);
    check(std::fabs(b.to_system - wb[0]) <= 1e-6 && std::fabs(b.to_visual - wb[1]) <= 1e-6,
          "question bound differs on dump " + std::to_string(i));
  }
  // One hot entry per block; all values exact in binary.
  const SegmentLengths seg{2, 4, 3, 2, 2, 2, 2};
  auto d = AttentionDump::zeros(seg);
  for (std::uint32_t h = 0; h < 2; ++h) {
    d.at(h, 9, 0) = 0.5f;    // answer -> system
    d.at(h, 10, 3) = 0.25f;  // answer -> visual
    d.at(h, 9, 7) = 0.75f;   // answer -> question
    for (std::size_t r = 6; r < 9; ++r) {
      d.at(h, r, 1) = 0.125f * static_cast<float>(r - 5);
      d.at(h, r, 2 + (r - 6)) = 0.5f;
    }
  }
  const auto a = average_heads(d);
  const auto s = answer_attention_scores(a, seg);
  check(s.to_system == 0.25 && s.to_visual == 0.125 && s.to_question == 0.375, "single-hot answer scores");
  const auto b = question_attention_bound(a, seg);
  check(b.to_system == 0.125 && b.to_visual == 0.5, "single-hot question bound");
}

void visual_refinement() {
  for (std::uint8_t level : {0, 1, 100, 128, 254, 255}) {
    RgbImage img(31, 17, level);
    PixelMask m{31, 17, std::vector<double>(31 * 17, level / 255.0)};
    check(blend(img, m).pixels == img.pixels, "constant blend changed level " + std::to_string(level));
  }
  check(blend_channel(0.5, 1.0) == 147, "gray 0.5 with mask 1.0 is not 147");

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto [rows, cols, w, h] : std::vector<std::array<int, 4>>{{2, 2, 8, 8}, {3, 5, 37, 19}, {24, 24, 64, 48}}) {
    HeatMask m{std::uint32_t(rows), std::uint32_t(cols), {}};
    for (int i = 0; i < rows * cols; ++i) m.values.push_back(u(rng));
    const auto got = spatialize_and_filter(m, w, h, 1.0, 5);
    const auto want = oracle::spatialize(m.values, rows, cols, w, h, 1.0, 5);
    for (std::size_t i = 0; i < want.size(); ++i)
      check(std::fabs(got.values[i] - want[i]) <= 1e-6, "spatialize differs from reference");
  }

  const SegmentLengths seg{4, 576, 12, 3, 2, 24, 24};
  auto dump = AttentionDump::zeros(seg);
  std::uniform_real_distribution<float> uf(0, 1);
  for (auto& v : dump.tensor) v = uf(rng);
  RgbImage img(512, 512);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xFF);
  const auto t0 = Clock::now();
  const auto first = encode_png(refine_image(img, dump));
  const double s = seconds_since(t0);
  check(first == encode_png(refine_image(img, dump)), "two runs produced different PNG bytes");
  check(s < 5.0, "512x512 took " + std::to_string(s) + " s");
}

void wire_formats() {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 100; ++i) {
    const auto d = oracle::random_dump(rng);
    const auto back = decode_attention_dump(encode_attention_dump(d));
    check(back.segments == d.segments, "segments differ after round trip");
    check(std::memcmp(back.tensor.data(), d.tensor.data(), d.tensor.size() * 4) == 0, "payload not bit-exact");
  }

  const auto text = slurp(kFixtures / "bench.jsonl");
  std::istringstream in(text);
  const auto items = parse_benchmark(in);
  std::stringstream out;
  serialize_benchmark(items, out);
  check(out.str() == text, "benchmark JSONL not byte-identical after round trip");
  check(parse_benchmark(out) == items, "benchmark items differ after round trip");

  auto bytes = encode_attention_dump(oracle::random_dump(rng));
  bytes[3] = 'X';
  try {
    decode_attention_dump(bytes);
    throw Failed{"corrupted magic accepted"};
  } catch (const DumpError& e) {
    check(e.kind() == DumpErrorKind::BadMagic, std::string("wrong error: ") + e.what());
  }
}

void end_to_end_replay() {
  const auto t0 = Clock::now();
  const auto pairs = fixture_pairs();
  auto replay = ReplayTransport::from_file(kFixtures / "responses.jsonl");
  EvalConfig cfg;
  cfg.assets = PromptAssets::load(kPrompts);
  cfg.image_root = kFixtures;
  const auto run = run_eval(pairs, cfg, replay);
  auto report = build_report(run.outcomes());
  ParseTally tally{0, pairs.size() * 2};
  for (const auto& r : outcome_records(run)) tally.unparseable += !r.pos_choice + !r.neg_choice;
  report.parse_tally = tally;
  check(format_percent(report.micro.ra) == "50.00", "micro RA " + format_percent(report.micro.ra));
  check(format_percent(report.micro.mr) == "33.33", "micro MR " + format_percent(report.micro.mr));
  const auto diff = compare_golden(render(report).markdown, slurp(kGolden / "report.md"));
  check(diff.equal, "report.md differs from golden: " + diff.describe());
  const double s = seconds_since(t0);
  check(s < 2.0, "took " + std::to_string(s) + " s");
}

// 20 synthetic conversations. Gpt turns mix the marker word, look-alikes
// and the redundant phrase in varied case.
std::vector<GeneratedSample> synthetic_corpus() {
  const std::vector<std::string> answers{
      "Yes, a red bus.",           "It is uncertain.",          "Uncertain, the view is blocked.",
      "The uncertainty is low.",    "Certainly blue.",           "There are UNCERTAIN shapes.",
      "A dog in the image sleeps.", "In The Image, two cars.",   "uncertainly placed, but three",
      "No, it is a cat.",           "(uncertain) maybe",         "Shown in the image: a tree.",
      "in the  image a man runs.",  "Within the images, none.",  "It is un-certain."};
  const std::vector<std::string> questions{"What is in the image?", "How many cars?", "Is it uncertain?",
                                           "What color in the image is the bus?", "Where is the dog?"};
  std::mt19937_64 rng(17);
  std::vector<GeneratedSample> out;
  auto conv = [&](std::size_t rounds) {
    Conversation c;
    for (std::size_t r = 0; r < rounds; ++r) {
      c.push_back({Speaker::Human, questions[rng() % questions.size()]});
      c.push_back({Speaker::Gpt, answers[rng() % answers.size()]});
    }
    return c;
  };
  for (int i = 0; i < 20; ++i) {
    GeneratedSample s{"c" + std::to_string(i), "c.jpg", conv(2 + rng() % 5), std::nullopt};
    if (i % 2) s.neg = conv(1 + rng() % 4);
    out.push_back(std::move(s));
  }
  return out;
}

// Word-boundary test written without regex: the token must not touch a
// letter, digit or underscore on either side.
bool has_word(const std::string& text, const std::string& word) {
  std::string low;
  for (char c : text) low += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  auto wordy = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  for (auto at = low.find(word); at != std::string::npos; at = low.find(word, at + 1)) {
    const bool left = at == 0 || !wordy(low[at - 1]);
    const bool right = at + word.size() == low.size() || !wordy(low[at + word.size()]);
    if (left && right) return true;
  }
  return false;
}

bool has_phrase(const std::string& text) {
  std::string collapsed;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (collapsed.empty() || collapsed.back() != ' ') collapsed += ' ';
    } else {
      collapsed += c;
    }
  }
  return has_word(collapsed, "in the image");
}

void filtering() {
  const auto corpus = synthetic_corpus();
  std::size_t expect_removed = 0, expect_kept = 0, expect_uncertain = 0;
  for (const auto& s : corpus)
    for (const auto* c : {&s.pos, s.neg ? &*s.neg : nullptr}) {
      if (!c) continue;
      for (std::size_t i = 1; i < c->size(); i += 2) {
        if (has_word((*c)[i].value, "uncertain")) {
          ++expect_removed;
          ++expect_uncertain;
        } else {
          ++expect_kept;
        }
      }
    }
  check(expect_uncertain > 0 && expect_kept > 0, "corpus does not exercise both branches");
  const auto r = filter_samples(corpus);
  check(r.rounds_removed == expect_removed,
        "removed " + std::to_string(r.rounds_removed) + " rounds, expected " + std::to_string(expect_removed));
  std::size_t kept = 0;
  for (const auto& s : r.kept)
    for (const auto* c : {&s.pos, s.neg ? &*s.neg : nullptr}) {
      if (!c) continue;
      kept += round_count(*c);
      for (std::size_t i = 0; i < c->size(); ++i) {
        check(!has_phrase((*c)[i].value), "phrase survived: " + (*c)[i].value);
        if (i % 2) check(!has_word((*c)[i].value, "uncertain"), "uncertain round kept: " + (*c)[i].value);
      }
    }
  check(kept == expect_kept, "kept " + std::to_string(kept) + " rounds, expected " + std::to_string(expect_kept));
  check(r.phrases_stripped() > 0, "no phrase was stripped");

  const auto again = filter_samples(r.kept);
  check(again.kept == r.kept && again.removed.empty() && again.rounds_removed == 0 &&
            again.phrases_stripped() == 0,
        "filtering is not idempotent");
}

void composition() {
  std::mt19937_64 rng(3);
  std::vector<GeneratedSample> base, extra;
  auto conv = [&](std::size_t rounds, const std::string& tag) {
    Conversation c;
    for (std::size_t r = 0; r < rounds; ++r) {
      c.push_back({Speaker::Human, tag + "q" + std::to_string(r)});
      c.push_back({Speaker::Gpt, tag + "a" + std::to_string(r)});
    }
    return c;
  };
  for (int i = 0; i < 30; ++i) base.push_back({"b" + std::to_string(i), "b.jpg", conv(1 + rng() % 6, "p"), conv(1 + rng() % 6, "n")});
  for (int i = 0; i < 12; ++i) extra.push_back({"x" + std::to_string(i), "x.jpg", conv(1 + rng() % 6, "p"), conv(1 + rng() % 6, "n")});

  for (std::optional<std::size_t> r : {std::optional<std::size_t>(1), std::optional<std::size_t>(2),
                                       std::optional<std::size_t>(4), std::optional<std::size_t>()}) {
    const auto out = compose(base, {}, CompositionStrategy::concat(r), 0);
    check(out.size() == base.size(), "concat changed the sample count");
    for (std::size_t i = 0; i < base.size(); ++i) {
      const auto pos = round_count(base[i].pos), neg = round_count(*base[i].neg);
      check(round_count(out[i].pos) == pos + std::min(r.value_or(neg), neg), "concat round count");
    }
  }
  check(compose(base, extra, CompositionStrategy::combine(), 0).size() == 2 * (base.size() + extra.size()),
        "combine did not double the sample count");
  for (std::size_t n : {0u, 1u, 5u, 12u}) {
    const auto a = compose(base, extra, CompositionStrategy::replace(n), 11);
    check(a.size() == base.size(), "replace changed the size");
    check(a == compose(base, extra, CompositionStrategy::replace(n), 11), "replace not seed-reproducible");
    const auto from_extra = std::count_if(a.begin(), a.end(), [](const auto& s) { return s.id[0] == 'x'; });
    check(static_cast<std::size_t>(from_extra) == n, "replace swapped the wrong number of samples");
  }
  check(compose(base, extra, CompositionStrategy::replace(5), 11) !=
            compose(base, extra, CompositionStrategy::replace(5), 12),
        "different seeds gave the same selection");
}

// ---------------------------------------------------------------------------
// CLI

int run_cli(const fs::path& cwd, const std::string& args, const std::string& stdout_name) {
  const auto cmd = "cd '" + cwd.string() + "' && MMVU_API_TOKEN= '" + kCli.string() + "' " + args + " > '" +
                   stdout_name + "' 2> /dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

void cli() {
  const auto root = fs::temp_directory_path() / ("mmvu_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::string F = kFixtures.string(), G = (kFixtures / "gen").string();
  const std::vector<std::pair<std::string, std::string>> commands{
      {"validate", "validate --bench " + F + "/bench.jsonl"},
      {"eval", "eval --bench " + F + "/bench.jsonl --replay " + F + "/responses.jsonl --strategy cgr+var " +
                   "--out-outcomes outcomes.jsonl --out-responses responses.jsonl --workers 3"},
      {"metrics", "metrics --bench " + F + "/bench.jsonl --outcomes outcomes.jsonl --out-dir m"},
      {"attn", "attn --bench " + F + "/bench.jsonl --responses responses.jsonl --outcomes outcomes.jsonl --out attn.json"},
      {"logits", "logits --bench " + F + "/bench.jsonl --responses responses.jsonl --outcomes outcomes.jsonl --out logits.json"},
      {"metrics+analysis", "metrics --bench " + F + "/bench.jsonl --outcomes outcomes.jsonl --analysis attn.json --out-dir ma"},
      {"var", "var --image " + F + "/images/p01.png --dump " + F + "/dumps/p01-pos.matn --out refined.png"},
      {"gen", "gen --images-dir " + G + "/images --replay " + G + "/replay.jsonl --out gen.json"},
      {"filter", "filter --in " + G + "/dataset.json --out filtered.json"},
      {"compose", "compose --base filtered.json --extra " + G + "/extra.json --strategy replace:2 --seed 9 --out composed.json"},
      {"report", "report --metrics m/metrics.json --out-dir r --golden " + (kGolden / "report.md").string()},
  };
  std::map<std::string, std::string> runs[2];
  for (int k = 0; k < 2; ++k) {
    const auto dir = root / ("run" + std::to_string(k));
    fs::create_directories(dir);
    for (const auto& [name, args] : commands) {
      const int rc = run_cli(dir, args, "stdout_" + name + ".txt");
      check(rc == 0, name + " exited " + std::to_string(rc));
    }
    runs[k] = tree_contents(dir);
  }
  check(runs[0].size() > commands.size(), "subcommands wrote no files");
  for (const auto& [file, bytes] : runs[0]) {
    auto it = runs[1].find(file);
    check(it != runs[1].end() && it->second == bytes, file + " differs between runs");
  }

  const auto bad = root / "usage";
  fs::create_directories(bad);
  const std::vector<std::string> usage{
      "",
      "frobnicate",
      "eval --bench " + F + "/bench.jsonl --out-outcomes o.jsonl",
      "eval --bench " + F + "/bench.jsonl --replay " + F + "/responses.jsonl --strategy var --no-image --out-outcomes o.jsonl",
      "eval --bench " + F + "/bench.jsonl --replay " + F + "/responses.jsonl --strategy fastest --out-outcomes o.jsonl",
      "compose --base " + G + "/dataset.json --strategy concat:3 --out c.json",
      "metrics --bench " + F + "/bench.jsonl",
      "var --image x.png --dump y.matn --out z.png --kernel 4",
  };
  for (const auto& args : usage) {
    const int rc = run_cli(bad, args, "stdout.txt");
    check(rc == 3, "\"" + args.substr(0, 40) + "\" exited " + std::to_string(rc) + ", expected 3");
  }
  fs::remove_all(root);
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void()>>> criteria{
      {"metric oracle equivalence", metric_oracle},
      {"outcome taxonomy", outcome_taxonomy},
      {"softmax", softmax_props},
      {"attention statistics", attention_statistics},
      {"visual attention refinement", visual_refinement},
      {"wire formats", wire_formats},
      {"end-to-end replay", end_to_end_replay},
      {"filtering", filtering},
      {"composition", composition},
      {"cli", cli},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    std::string why;
    try {
      fn();
    } catch (const Failed& f) {
      why = f.why;
    } catch (const std::exception& e) {
      why = std::string("exception: ") + e.what();
    }
    if (why.empty()) {
      std::cout << "PASS " << name << '\n';
    } else {
      std::cout << "FAIL " << name << ": " << why << '\n';
      ++failures;
    }
  }
  return failures ? 1 : 0;
}
