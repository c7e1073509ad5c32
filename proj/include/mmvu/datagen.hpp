#pragma once

// Paired training-sample construction: LLM generation, keyword filtering and
// dataset composition.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"
#include "mmvu/adapter.hpp"
#include "mmvu/error.hpp"
#include "mmvu/image.hpp"

namespace mmvu {

enum class Speaker { Human, Gpt };

constexpr std::string_view speaker_key(Speaker s) { return s == Speaker::Human ? "human" : "gpt"; }

struct ConversationTurn {
  Speaker from = Speaker::Human;
  std::string value;

  bool operator==(const ConversationTurn&) const = default;
};

using Conversation = std::vector<ConversationTurn>;

inline std::size_t round_count(const Conversation& c) { return c.size() / 2; }

struct GeneratedSample {
  std::string id;
  std::string image;
  Conversation pos;                 // the only conversation for unpaired samples
  std::optional<Conversation> neg;  // present for paired samples

  bool paired() const { return neg.has_value(); }
  std::size_t rounds() const { return round_count(pos) + (neg ? round_count(*neg) : 0); }

  bool operator==(const GeneratedSample&) const = default;
};

// Turns alternate human/gpt starting with human; texts are non-empty.
inline std::optional<std::string> conversation_problem(const Conversation& c) {
  if (c.size() % 2 != 0) return "odd number of turns";
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto want = i % 2 == 0 ? Speaker::Human : Speaker::Gpt;
    if (c[i].from != want)
      return "turn " + std::to_string(i) + " should be from " + std::string(speaker_key(want));
    if (c[i].value.empty()) return "turn " + std::to_string(i) + " is empty";
  }
  return std::nullopt;
}

enum class PromptVersion { V0, V1, V2, V3 };

inline std::optional<PromptVersion> parse_prompt_version(std::string_view s) {
  if (s == "v0" || s == "0") return PromptVersion::V0;
  if (s == "v1" || s == "1") return PromptVersion::V1;
  if (s == "v2" || s == "2") return PromptVersion::V2;
  if (s == "v3" || s == "3") return PromptVersion::V3;
  return std::nullopt;
}

constexpr int version_number(PromptVersion v) { return static_cast<int>(v); }

// Common extraction preamble followed by the version-specific steps.
inline std::string render_generation_prompt(PromptVersion v, const std::filesystem::path& prompt_dir) {
  auto read = [&](const std::string& name) {
    const auto path = prompt_dir / name;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("missing template asset " + path.string());
    std::string s{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
  };
  return read("gen_common.txt") + "\n\n" + read("gen_v" + std::to_string(version_number(v)) + ".txt");
}

// ---------------------------------------------------------------------------
// Reply parsing

namespace detail {

inline std::string strip_code_fence(std::string_view text) {
  auto t = text;
  while (!t.empty() && std::isspace(static_cast<unsigned char>(t.front()))) t.remove_prefix(1);
  while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.remove_suffix(1);
  if (t.substr(0, 3) != "```") return std::string(t);
  const auto nl = t.find('\n');
  if (nl == std::string_view::npos) return std::string(t);
  t.remove_prefix(nl + 1);
  if (t.size() >= 3 && t.substr(t.size() - 3) == "```") t.remove_suffix(3);
  return std::string(t);
}

inline void require_keys(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed,
                         const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + " is not an object");
  for (const auto& [k, _] : obj.items())
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ValidationError(where + ": unexpected key \"" + k + "\"");
}

inline Conversation parse_turns(const nlohmann::json& arr, const std::string& where) {
  if (!arr.is_array()) throw ValidationError(where + " must be an array");
  Conversation c;
  for (const auto& t : arr) {
    require_keys(t, {"from", "value"}, where + " turn");
    if (!t.contains("from") || !t["from"].is_string() || !t.contains("value") || !t["value"].is_string())
      throw ValidationError(where + ": turns need string \"from\" and \"value\"");
    const auto from = t["from"].get<std::string>();
    if (from != "human" && from != "gpt") throw ValidationError(where + ": unknown speaker \"" + from + "\"");
    c.push_back({from == "human" ? Speaker::Human : Speaker::Gpt, t["value"].get<std::string>()});
  }
  if (auto p = conversation_problem(c)) throw ValidationError(where + ": " + *p);
  return c;
}

// Multiple-choice rounds: the human turn lists the options, the gpt turn
// carries the correct option's text.
inline Conversation parse_mcq_rounds(const nlohmann::json& arr, const std::string& where) {
  if (!arr.is_array()) throw ValidationError(where + " must be an array");
  Conversation c;
  for (const auto& q : arr) {
    require_keys(q, {"question", "options", "answer"}, where + " entry");
    if (!q.contains("question") || !q["question"].is_string() || q["question"].get<std::string>().empty())
      throw ValidationError(where + ": question must be a non-empty string");
    if (!q.contains("options") || !q["options"].is_array() || q["options"].size() != 4)
      throw ValidationError(where + ": options must hold exactly 4 strings");
    if (!q.contains("answer") || !q["answer"].is_string())
      throw ValidationError(where + ": answer must be a string");
    std::string human = q["question"].get<std::string>();
    const auto answer = q["answer"].get<std::string>();
    bool found = false;
    for (std::size_t i = 0; i < 4; ++i) {
      const auto& o = q["options"][i];
      if (!o.is_string() || o.get<std::string>().empty())
        throw ValidationError(where + ": options must be non-empty strings");
      human += "\n";
      human += static_cast<char>('A' + i);
      human += ". " + o.get<std::string>();
      found = found || o.get<std::string>() == answer;
    }
    if (!found) throw ValidationError(where + ": answer does not match any option");
    c.push_back({Speaker::Human, std::move(human)});
    c.push_back({Speaker::Gpt, answer});
  }
  return c;
}

}  // namespace detail

// Strictly parses one model reply; only a surrounding Markdown fence is tolerated.
inline GeneratedSample parse_generation_reply(std::string_view reply, PromptVersion v, const std::string& id,
                                              const std::string& image) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::strip_code_fence(reply));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("reply is not valid JSON (" + std::string(e.what()) + ")");
  }
  GeneratedSample s{id, image, {}, std::nullopt};
  switch (v) {
    case PromptVersion::V0:
    case PromptVersion::V1:
      detail::require_keys(j, {"id", "image", "conversations"}, "reply");
      if (!j.contains("conversations")) throw ValidationError("reply: missing conversations");
      s.pos = detail::parse_turns(j["conversations"], "conversations");
      break;
    case PromptVersion::V2:
    case PromptVersion::V3: {
      detail::require_keys(j, {"id", "image", "conversations-pos", "conversations-neg"}, "reply");
      if (!j.contains("conversations-pos") || !j.contains("conversations-neg"))
        throw ValidationError("reply: needs conversations-pos and conversations-neg");
      auto parse = v == PromptVersion::V2 ? detail::parse_turns : detail::parse_mcq_rounds;
      s.pos = parse(j["conversations-pos"], "conversations-pos");
      s.neg = parse(j["conversations-neg"], "conversations-neg");
      break;
    }
  }
  if (s.rounds() == 0) throw ValidationError("reply has no conversation rounds");
  return s;
}

// ---------------------------------------------------------------------------
// Generation

struct GenerationConfig {
  PromptVersion version = PromptVersion::V3;
  std::filesystem::path prompt_dir;
  std::size_t workers = 4;
  int max_attempts = 3;               // parse attempts per image
  double max_skip_fraction = 0.5;     // above this the run fails
};

struct GenerationResult {
  std::vector<GeneratedSample> samples;  // in input order
  std::vector<std::pair<std::string, std::string>> skipped;  // image, last parse error
};

class GenerationFailed : public TransportError {
 public:
  using TransportError::TransportError;
};

// One request per image (id = file stem). Unparseable replies are retried,
// then the image is skipped. Transport errors abort the run.
inline GenerationResult generate_samples(const std::vector<std::filesystem::path>& images,
                                         const GenerationConfig& cfg, Transport& llm) {
  if (cfg.workers == 0) throw UsageError("workers must be >= 1");
  const auto prompt = render_generation_prompt(cfg.version, cfg.prompt_dir);

  struct Slot {
    std::optional<GeneratedSample> sample;
    std::string error;
    std::exception_ptr fatal;
  };
  std::vector<Slot> slots(images.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < images.size(); i = next++) {
      auto& slot = slots[i];
      try {
        const auto& path = images[i];
        ModelRequest req{path.stem().string(), std::string(kTagGenerate), prompt, read_file_bytes(path),
                         false, false};
        for (int attempt = 1; attempt <= cfg.max_attempts && !slot.sample; ++attempt) {
          const auto reply = llm.send(req);
          try {
            slot.sample = parse_generation_reply(reply.raw_text, cfg.version, req.item_id,
                                                 path.filename().string());
          } catch (const ValidationError& e) {
            slot.error = e.what();
          }
        }
      } catch (...) {
        slot.fatal = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const auto n = std::min(cfg.workers, std::max<std::size_t>(images.size(), 1));
    for (std::size_t w = 1; w < n; ++w) pool.emplace_back(work);
    work();
  }

  GenerationResult out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (slots[i].fatal) std::rethrow_exception(slots[i].fatal);
    if (slots[i].sample)
      out.samples.push_back(std::move(*slots[i].sample));
    else
      out.skipped.emplace_back(images[i].string(), slots[i].error);
  }
  if (!images.empty() &&
      static_cast<double>(out.skipped.size()) / static_cast<double>(images.size()) > cfg.max_skip_fraction)
    throw GenerationFailed("generation failed: " + std::to_string(out.skipped.size()) + " of " +
                           std::to_string(images.size()) + " images produced no valid reply");
  return out;
}

// ---------------------------------------------------------------------------
// Filtering

struct FilterOptions {
  bool drop_on_phrase = false;  // drop rounds containing the phrase instead of editing them
};

struct FilterResult {
  std::vector<GeneratedSample> kept;
  std::vector<GeneratedSample> removed;  // samples left with no rounds, as they were before filtering
  std::size_t rounds_removed = 0;
  std::size_t phrases_stripped_human = 0;
  std::size_t phrases_stripped_gpt = 0;

  std::size_t phrases_stripped() const { return phrases_stripped_human + phrases_stripped_gpt; }
};

namespace detail {

inline const std::regex& uncertain_re() {
  static const std::regex re(R"(\buncertain\b)", std::regex::icase);
  return re;
}

inline const std::regex& phrase_re() {
  static const std::regex re(R"(\bin\s+the\s+image\b)", std::regex::icase);
  return re;
}

// Collapses blank runs within each line, trims lines, drops blanks before
// punctuation and separators left at a line start. Line breaks are kept.
inline std::string normalize_spaces(std::string_view s) {
  std::string out;
  bool pending = false;
  bool line_start = true;
  for (char c : s) {
    if (c == '\n') {
      out += c;
      pending = false;
      line_start = true;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending = !line_start;
      continue;
    }
    const bool punct = c == '?' || c == '.' || c == ',' || c == '!' || c == ';' || c == ':';
    if (line_start && (c == ',' || c == ';' || c == ':')) continue;
    if (pending && !punct) out += ' ';
    pending = false;
    line_start = false;
    out += c;
  }
  return out;
}

// Removes the phrase until none remains; returns the number removed.
inline std::size_t strip_phrase(std::string& text) {
  std::size_t count = 0;
  for (;;) {
    std::smatch m;
    if (!std::regex_search(text, m, phrase_re())) break;
    text.erase(static_cast<std::size_t>(m.position(0)), static_cast<std::size_t>(m.length(0)));
    ++count;
  }
  if (count) text = normalize_spaces(text);
  return count;
}

}  // namespace detail

inline bool contains_uncertain(std::string_view text) {
  return std::regex_search(text.begin(), text.end(), detail::uncertain_re());
}

inline bool contains_phrase(std::string_view text) {
  return std::regex_search(text.begin(), text.end(), detail::phrase_re());
}

inline FilterResult filter_samples(const std::vector<GeneratedSample>& samples, const FilterOptions& opt = {}) {
  FilterResult r;
  auto filter_conv = [&](const Conversation& in) {
    Conversation out;
    for (std::size_t i = 0; i + 1 < in.size(); i += 2) {
      auto q = in[i], a = in[i + 1];
      if (contains_uncertain(a.value) ||
          (opt.drop_on_phrase && (contains_phrase(q.value) || contains_phrase(a.value)))) {
        ++r.rounds_removed;
        continue;
      }
      r.phrases_stripped_human += detail::strip_phrase(q.value);
      r.phrases_stripped_gpt += detail::strip_phrase(a.value);
      if (q.value.empty() || a.value.empty()) {
        ++r.rounds_removed;
        continue;
      }
      out.push_back(std::move(q));
      out.push_back(std::move(a));
    }
    return out;
  };
  for (const auto& s : samples) {
    GeneratedSample f{s.id, s.image, filter_conv(s.pos), std::nullopt};
    if (s.neg) f.neg = filter_conv(*s.neg);
    if (f.rounds() == 0)
      r.removed.push_back(s);
    else
      r.kept.push_back(std::move(f));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Composition

// xoshiro256** 1.0 (Blackman and Vigna), state seeded from one 64-bit value
// through splitmix64.
class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed) {
    for (auto& word : s_) {
      seed += 0x9E3779B97F4A7C15ULL;
      std::uint64_t z = seed;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
      word = z ^ (z >> 31);
    }
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, bound) by rejection; bound must be > 0.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const auto r = next();
      if (r >= threshold) return r % bound;
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

// k distinct indices from [0, n), drawn by a partial Fisher-Yates shuffle.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Xoshiro256& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  return idx;
}

struct CompositionStrategy {
  enum class Kind { Concat, Combine, Replace };
  Kind kind = Kind::Concat;
  std::optional<std::size_t> rounds;  // Concat; nullopt means all rounds
  std::size_t n = 0;                  // Replace

  static CompositionStrategy concat(std::optional<std::size_t> r) { return {Kind::Concat, r, 0}; }
  static CompositionStrategy combine() { return {Kind::Combine, std::nullopt, 0}; }
  static CompositionStrategy replace(std::size_t n) { return {Kind::Replace, std::nullopt, n}; }

  // "concat:1|2|4|all", "combine", "replace:N"
  static CompositionStrategy parse(std::string_view s) {
    if (s == "combine") return combine();
    if (s == "concat:all") return concat(std::nullopt);
    if (s == "concat:1" || s == "concat:2" || s == "concat:4")
      return concat(static_cast<std::size_t>(s.back() - '0'));
    if (s.substr(0, 8) == "replace:" && s.size() > 8 &&
        std::all_of(s.begin() + 8, s.end(), [](char c) { return c >= '0' && c <= '9'; }))
      return replace(std::stoull(std::string(s.substr(8))));
    throw UsageError("unknown composition strategy \"" + std::string(s) +
                     "\" (expected concat:1|2|4|all, combine or replace:N)");
  }
};

// Concat and Combine transform every paired sample of base followed by extra;
// unpaired samples pass through. Replace swaps n seeded-random base samples
// for n seeded-random extra samples, keeping original relative order.
inline std::vector<GeneratedSample> compose(const std::vector<GeneratedSample>& base,
                                            const std::vector<GeneratedSample>& extra,
                                            const CompositionStrategy& strategy, std::uint64_t seed) {
  using Kind = CompositionStrategy::Kind;
  std::vector<GeneratedSample> out;
  if (strategy.kind == Kind::Replace) {
    if (strategy.n > base.size() || strategy.n > extra.size())
      throw ValidationError("replace:" + std::to_string(strategy.n) + " needs at least that many base (" +
                            std::to_string(base.size()) + ") and extra (" + std::to_string(extra.size()) +
                            ") samples");
    Xoshiro256 rng(seed);
    auto drop = sample_indices(base.size(), strategy.n, rng);
    auto take = sample_indices(extra.size(), strategy.n, rng);
    std::sort(drop.begin(), drop.end());
    std::sort(take.begin(), take.end());
    for (std::size_t i = 0; i < base.size(); ++i)
      if (!std::binary_search(drop.begin(), drop.end(), i)) out.push_back(base[i]);
    for (auto i : take) out.push_back(extra[i]);
    return out;
  }

  auto emit = [&](const GeneratedSample& s) {
    if (!s.neg) {
      out.push_back(s);
      return;
    }
    if (strategy.kind == Kind::Combine) {
      out.push_back({s.id + "-pos", s.image, s.pos, std::nullopt});
      out.push_back({s.id + "-neg", s.image, *s.neg, std::nullopt});
      return;
    }
    GeneratedSample merged{s.id, s.image, s.pos, std::nullopt};
    const auto take = std::min(strategy.rounds.value_or(round_count(*s.neg)), round_count(*s.neg));
    merged.pos.insert(merged.pos.end(), s.neg->begin(), s.neg->begin() + static_cast<std::ptrdiff_t>(take * 2));
    out.push_back(std::move(merged));
  };
  for (const auto& s : base) emit(s);
  for (const auto& s : extra) emit(s);
  return out;
}

// ---------------------------------------------------------------------------
// Training JSON

inline nlohmann::ordered_json to_json(const Conversation& c) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& t : c) {
    nlohmann::ordered_json o;
    o["from"] = speaker_key(t.from);
    o["value"] = t.value;
    arr.push_back(std::move(o));
  }
  return arr;
}

inline nlohmann::ordered_json to_json(const GeneratedSample& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["image"] = s.image;
  if (s.neg) {
    j["conversations-pos"] = to_json(s.pos);
    j["conversations-neg"] = to_json(*s.neg);
  } else {
    j["conversations"] = to_json(s.pos);
  }
  return j;
}

inline void write_training_json(const std::vector<GeneratedSample>& samples, std::ostream& out) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& s : samples) arr.push_back(to_json(s));
  out << arr.dump(2) << '\n';
}

inline std::vector<GeneratedSample> read_training_json(std::istream& in) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("dataset is not valid JSON (" + std::string(e.what()) + ")");
  }
  if (!j.is_array()) throw ValidationError("dataset must be a JSON array");
  std::vector<GeneratedSample> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto where = "dataset entry " + std::to_string(i);
    const auto& o = j[i];
    detail::require_keys(o, {"id", "image", "conversations", "conversations-pos", "conversations-neg"}, where);
    if (!o.contains("id") || !o["id"].is_string() || !o.contains("image") || !o["image"].is_string())
      throw ValidationError(where + ": id and image must be strings");
    GeneratedSample s{o["id"].get<std::string>(), o["image"].get<std::string>(), {}, std::nullopt};
    if (o.contains("conversations")) {
      if (o.contains("conversations-pos") || o.contains("conversations-neg"))
        throw ValidationError(where + ": mixes conversations with conversations-pos/neg");
      s.pos = detail::parse_turns(o["conversations"], where);
    } else if (o.contains("conversations-pos") && o.contains("conversations-neg")) {
      s.pos = detail::parse_turns(o["conversations-pos"], where);
      s.neg = detail::parse_turns(o["conversations-neg"], where);
    } else {
      throw ValidationError(where + ": missing conversations");
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<GeneratedSample> read_training_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset " + path.string());
  try {
    return read_training_json(in);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace mmvu
