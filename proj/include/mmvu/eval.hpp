#pragma once

// Prompt rendering, answer extraction and pair evaluation.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"
#include "mmvu/adapter.hpp"
#include "mmvu/attention_dump.hpp"
#include "mmvu/benchmark.hpp"
#include "mmvu/error.hpp"
#include "mmvu/image.hpp"
#include "mmvu/outcome.hpp"
#include "mmvu/var.hpp"

namespace mmvu {

enum class StrategyKind { Baseline, Instruction, Cgr, Var, CgrPlusVar };

constexpr std::string_view strategy_key(StrategyKind k) {
  switch (k) {
    case StrategyKind::Baseline: return "baseline";
    case StrategyKind::Instruction: return "instruction";
    case StrategyKind::Cgr: return "cgr";
    case StrategyKind::Var: return "var";
    case StrategyKind::CgrPlusVar: return "cgr+var";
  }
  return "baseline";
}

inline std::optional<StrategyKind> parse_strategy(std::string_view s) {
  for (auto k : {StrategyKind::Baseline, StrategyKind::Instruction, StrategyKind::Cgr,
                 StrategyKind::Var, StrategyKind::CgrPlusVar})
    if (strategy_key(k) == s) return k;
  return std::nullopt;
}

struct Strategy {
  StrategyKind kind = StrategyKind::Baseline;
  bool no_image = false;  // text-only ablation

  bool uses_cgr() const { return kind == StrategyKind::Cgr || kind == StrategyKind::CgrPlusVar; }
  bool uses_var() const { return kind == StrategyKind::Var || kind == StrategyKind::CgrPlusVar; }

  void validate() const {
    if (no_image && uses_var())
      throw UsageError("strategy " + std::string(strategy_key(kind)) +
                       " needs the image and cannot run in no-image mode");
  }
};

inline constexpr std::string_view kAnswerDirective =
    "Answer with the option's letter from the given choices directly.";
inline constexpr std::size_t kMaxExtractedInfoChars = 2048;

// Template assets read from a prompts directory.
struct PromptAssets {
  std::string instruction;  // instruction.txt
  std::string cgr_extract;  // cgr_extract.txt
  std::string cgr_answer;   // cgr_answer.txt, placeholders {info} {question} {options}

  static PromptAssets load(const std::filesystem::path& dir) {
    auto read = [&](const char* name) {
      const auto path = dir / name;
      std::ifstream in(path, std::ios::binary);
      if (!in) throw Error("missing template asset " + path.string());
      std::string s{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
      while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
      return s;
    };
    return {read("instruction.txt"), read("cgr_extract.txt"), read("cgr_answer.txt")};
  }
};

// Replaces {name} placeholders in one pass; substituted text is not rescanned.
inline std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto name = tmpl.substr(i + 1, close - i - 1);
        const bool ident = !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
          return std::islower(static_cast<unsigned char>(c)) || c == '_';
        });
        if (ident) {
          auto it = vars.find(std::string(name));
          if (it == vars.end())
            throw ValidationError("unresolved placeholder {" + std::string(name) + "} in template");
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

inline std::string render_options(const BenchmarkItem& item) {
  std::string s;
  for (auto l : kOptionLetters) {
    if (!s.empty()) s += '\n';
    s += letter_char(l);
    s += ". ";
    s += item.option(l);
  }
  return s;
}

inline std::string build_extraction_prompt(const PromptAssets& assets) { return assets.cgr_extract; }

// Prompt for the answering request. `extracted_info` is required for the
// CGR strategies and ignored otherwise.
inline std::string build_prompt(const BenchmarkItem& item, const Strategy& strategy,
                                const PromptAssets& assets,
                                std::optional<std::string_view> extracted_info = std::nullopt) {
  const auto options = render_options(item);
  const auto tail = std::string("\n") + std::string(kAnswerDirective);
  if (strategy.uses_cgr()) {
    if (!extracted_info) throw ValidationError("CGR answer step requires extracted information");
    return substitute(assets.cgr_answer, {{"info", std::string(*extracted_info)},
                                          {"question", item.question},
                                          {"options", options}}) +
           tail;
  }
  auto base = item.question + "\n" + options + tail;
  if (strategy.kind == StrategyKind::Instruction) {
    if (assets.instruction.empty()) throw Error("missing template asset instruction.txt");
    return assets.instruction + "\n\n" + base;
  }
  return base;
}

// Caps extracted information at `limit` bytes, cutting after the last
// sentence end that fits. Falls back to a hard cut on a UTF-8 boundary.
inline std::string cap_extracted_info(std::string_view info, std::size_t limit = kMaxExtractedInfoChars) {
  if (info.size() <= limit) return std::string(info);
  std::size_t cut = 0;
  for (std::size_t i = 0; i < limit; ++i) {
    const char c = info[i];
    const bool end = c == '.' || c == '!' || c == '?' || c == '\n';
    if (end && (i + 1 == info.size() || std::isspace(static_cast<unsigned char>(info[i + 1]))))
      cut = i + 1;
  }
  if (cut == 0) {
    cut = limit;
    while (cut > 0 && (static_cast<unsigned char>(info[cut]) & 0xC0) == 0x80) --cut;
  }
  auto s = std::string(info.substr(0, cut));
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

enum class ExtractionMethod { LeadingLetter, Parenthesized, OptionTextMatch, None };

constexpr std::string_view method_key(ExtractionMethod m) {
  switch (m) {
    case ExtractionMethod::LeadingLetter: return "leading_letter";
    case ExtractionMethod::Parenthesized: return "parenthesized";
    case ExtractionMethod::OptionTextMatch: return "option_text_match";
    case ExtractionMethod::None: return "none";
  }
  return "none";
}

struct ExtractedChoice {
  std::optional<OptionLetter> letter;
  ExtractionMethod method = ExtractionMethod::None;

  bool operator==(const ExtractedChoice&) const = default;
};

namespace detail {

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
inline bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Letter A-D at `pos` that is not part of a longer word.
inline std::optional<OptionLetter> standalone_letter(std::string_view s, std::size_t pos) {
  if (pos >= s.size()) return std::nullopt;
  auto l = letter_from_char(s[pos]);
  if (!l) return std::nullopt;
  if (pos > 0 && is_alnum(s[pos - 1])) return std::nullopt;
  if (pos + 1 < s.size() && is_alnum(s[pos + 1])) return std::nullopt;
  return l;
}

}  // namespace detail

// Maps a free-text reply to an option letter. Rules, first match wins:
//   1. a letter A-D opening the trimmed text, alone or followed by '.', ')' or ':'
//   2. "(X)" anywhere, or a letter right after "answer is" (earliest wins)
//   3. exactly one option's full text contained, case-insensitively
inline ExtractedChoice extract_option(std::string_view raw_text,
                                      const std::array<std::string, 4>& options) {
  const auto t = detail::trim(raw_text);

  if (!t.empty()) {
    if (auto l = letter_from_char(t[0])) {
      std::size_t next = 1;
      if (next < t.size() && (t[next] == '.' || t[next] == ')' || t[next] == ':')) ++next;
      if (next == t.size() || detail::is_space(t[next]))
        return {l, ExtractionMethod::LeadingLetter};
    }
  }

  std::optional<std::pair<std::size_t, OptionLetter>> best;
  auto consider = [&](std::size_t pos, OptionLetter l) {
    if (!best || pos < best->first) best = std::make_pair(pos, l);
  };
  for (std::size_t i = 0; i + 2 < t.size(); ++i) {
    if (t[i] == '(' && t[i + 2] == ')')
      if (auto l = letter_from_char(t[i + 1])) {
        consider(i, *l);
        break;
      }
  }
  const auto low = detail::lower(t);
  constexpr std::string_view kPhrase = "answer is";
  for (auto at = low.find(kPhrase); at != std::string::npos; at = low.find(kPhrase, at + 1)) {
    auto p = at + kPhrase.size();
    while (p < t.size() && (detail::is_space(t[p]) || t[p] == ':' || t[p] == '(' || t[p] == '"' ||
                            t[p] == '\'' || t[p] == '*'))
      ++p;
    if (auto l = detail::standalone_letter(t, p)) {
      consider(at, *l);
      break;
    }
  }
  if (best) return {best->second, ExtractionMethod::Parenthesized};

  std::optional<OptionLetter> found;
  int hits = 0;
  for (auto l : kOptionLetters) {
    const auto opt = detail::lower(options[letter_index(l)]);
    if (!opt.empty() && low.find(opt) != std::string::npos) {
      ++hits;
      found = l;
    }
  }
  if (hits == 1) return {found, ExtractionMethod::OptionTextMatch};
  return {};
}

// ---------------------------------------------------------------------------
// Evaluation run

struct EvalConfig {
  Strategy strategy;
  PromptAssets assets;
  std::filesystem::path image_root;
  std::size_t workers = 4;
  double max_error_rate = 0.10;  // abort when a larger fraction of items fail
  VarParams var;
};

struct ItemResult {
  std::vector<ModelResponse> responses;  // request order; the answering response is last
  ExtractedChoice choice;
  bool correct = false;
  std::optional<std::string> error;

  const ModelResponse* answer() const {
    if (error || responses.empty() || responses.back().tag != kTagMain) return nullptr;
    return &responses.back();
  }
};

struct PairResult {
  ItemPair pair;
  ItemResult pos;
  ItemResult neg;
  PairOutcome outcome = PairOutcome::NF;
};

struct EvalRun {
  std::vector<PairResult> pairs;
  std::size_t errored_items = 0;
  std::size_t unparseable_items = 0;

  std::vector<std::pair<Category, PairOutcome>> outcomes() const {
    std::vector<std::pair<Category, PairOutcome>> v;
    v.reserve(pairs.size());
    for (const auto& p : pairs) v.emplace_back(p.pair.category(), p.outcome);
    return v;
  }
};

class EvalAborted : public TransportError {
 public:
  using TransportError::TransportError;
};

// Runs every request one item needs. Failures are recorded, not thrown.
inline ItemResult evaluate_item(const BenchmarkItem& item, const EvalConfig& cfg, Transport& transport) {
  ItemResult result;
  try {
    std::optional<std::string> image;
    if (!cfg.strategy.no_image) image = read_file_bytes(cfg.image_root / item.image_ref);

    std::optional<std::string> info;
    if (cfg.strategy.uses_cgr()) {
      ModelRequest extract{item.item_id, std::string(kTagCgrExtract), build_extraction_prompt(cfg.assets),
                           image, false, false};
      result.responses.push_back(transport.send(extract));
      info = cap_extracted_info(result.responses.back().raw_text);
    }
    const auto prompt = build_prompt(item, cfg.strategy, cfg.assets, info);

    auto payload = image;
    if (cfg.strategy.uses_var()) {
      ModelRequest probe{item.item_id, std::string(kTagVarProbe), prompt, image, false, true};
      result.responses.push_back(transport.send(probe));
      const auto& ref = result.responses.back().attention_ref;
      if (!ref) throw ContentError("no attention dump returned for \"" + item.item_id + "\"");
      const auto dump = read_attention_dump(*ref);
      payload = encode_png(refine_image(decode_png(*image), dump, cfg.var));
    }

    ModelRequest ask{item.item_id, std::string(kTagMain), prompt, payload, true, false};
    result.responses.push_back(transport.send(ask));
    result.choice = extract_option(result.responses.back().raw_text, item.options);
    result.correct = result.choice.letter == item.answer;
  } catch (const std::exception& e) {
    result.error = e.what();
    result.choice = {};
    result.correct = false;
  }
  return result;
}

// Evaluates every pair once. Result order follows `pairs` whatever the
// scheduling; unparseable or failed items score as incorrect.
inline EvalRun run_eval(const std::vector<ItemPair>& pairs, const EvalConfig& cfg, Transport& transport) {
  cfg.strategy.validate();
  if (cfg.strategy.uses_var()) cfg.var.validate();
  if (cfg.workers == 0) throw UsageError("workers must be >= 1");

  const std::size_t tasks = pairs.size() * 2;
  std::vector<ItemResult> results(tasks);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < tasks; i = next++) {
      const auto& pair = pairs[i / 2];
      results[i] = evaluate_item(i % 2 == 0 ? pair.positive : pair.negative, cfg, transport);
    }
  };
  {
    std::vector<std::jthread> pool;
    const auto n = std::min(cfg.workers, std::max<std::size_t>(tasks, 1));
    for (std::size_t w = 1; w < n; ++w) pool.emplace_back(work);
    work();
  }

  EvalRun run;
  run.pairs.reserve(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    PairResult r{pairs[p], std::move(results[2 * p]), std::move(results[2 * p + 1])};
    r.outcome = classify_pair(r.pos.correct, r.neg.correct);
    for (const auto* item : {&r.pos, &r.neg}) {
      if (item->error)
        ++run.errored_items;
      else if (item->choice.method == ExtractionMethod::None)
        ++run.unparseable_items;
    }
    run.pairs.push_back(std::move(r));
  }
  if (tasks && static_cast<double>(run.errored_items) / static_cast<double>(tasks) > cfg.max_error_rate) {
    std::string first;
    for (const auto& p : run.pairs)
      for (const auto* item : {&p.pos, &p.neg})
        if (item->error && first.empty()) first = *item->error;
    throw EvalAborted("evaluation aborted: " + std::to_string(run.errored_items) + " of " +
                      std::to_string(tasks) + " items failed (first error: " + first + ")");
  }
  return run;
}

// ---------------------------------------------------------------------------
// Result files

struct OutcomeRecord {
  std::string pair_id;
  PairOutcome outcome = PairOutcome::NF;
  std::optional<OptionLetter> pos_choice;
  std::optional<OptionLetter> neg_choice;

  bool operator==(const OutcomeRecord&) const = default;
};

inline nlohmann::ordered_json to_json(const OutcomeRecord& r) {
  auto letter = [](const std::optional<OptionLetter>& l) {
    return l ? nlohmann::ordered_json(std::string(1, letter_char(*l))) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json j;
  j["pair_id"] = r.pair_id;
  j["outcome"] = outcome_key(r.outcome);
  j["pos_choice"] = letter(r.pos_choice);
  j["neg_choice"] = letter(r.neg_choice);
  return j;
}

inline std::vector<OutcomeRecord> outcome_records(const EvalRun& run) {
  std::vector<OutcomeRecord> v;
  for (const auto& p : run.pairs)
    v.push_back({p.pair.pair_id, p.outcome, p.pos.choice.letter, p.neg.choice.letter});
  return v;
}

inline void write_outcomes(const std::vector<OutcomeRecord>& records, std::ostream& out) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline std::vector<OutcomeRecord> read_outcomes(std::istream& in) {
  std::vector<OutcomeRecord> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    const auto where = "outcomes line " + std::to_string(line) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(where + "malformed JSON (" + e.what() + ")");
    }
    OutcomeRecord r;
    if (!j.is_object() || !j.contains("pair_id") || !j["pair_id"].is_string())
      throw ValidationError(where + "missing pair_id");
    r.pair_id = j["pair_id"].get<std::string>();
    auto o = j.contains("outcome") && j["outcome"].is_string()
                 ? parse_outcome(j["outcome"].get<std::string>())
                 : std::nullopt;
    if (!o) throw ValidationError(where + "outcome must be one of UR, UF, NR, NF");
    r.outcome = *o;
    auto letter = [&](const char* key) -> std::optional<OptionLetter> {
      if (!j.contains(key) || j[key].is_null()) return std::nullopt;
      auto l = j[key].is_string() ? parse_letter(j[key].get<std::string>()) : std::nullopt;
      if (!l) throw ValidationError(where + key + " must be a letter or null");
      return l;
    };
    r.pos_choice = letter("pos_choice");
    r.neg_choice = letter("neg_choice");
    out.push_back(std::move(r));
  }
  return out;
}

// Orders records like `pairs`; each pair needs exactly one record and no
// record may name an unknown pair.
inline std::vector<OutcomeRecord> align_outcomes(const std::vector<ItemPair>& pairs,
                                                 const std::vector<OutcomeRecord>& records) {
  std::map<std::string, const OutcomeRecord*> by_id;
  for (const auto& r : records)
    if (!by_id.emplace(r.pair_id, &r).second)
      throw ValidationError("outcomes: duplicate record for pair \"" + r.pair_id + "\"");
  std::vector<OutcomeRecord> out;
  std::vector<std::string> missing;
  for (const auto& p : pairs) {
    auto it = by_id.find(p.pair_id);
    if (it == by_id.end()) {
      missing.push_back(p.pair_id);
      continue;
    }
    out.push_back(*it->second);
    by_id.erase(it);
  }
  if (!by_id.empty())
    throw ValidationError("outcomes: pair \"" + by_id.begin()->first + "\" is not in the benchmark");
  if (!missing.empty())
    throw ValidationError("outcomes: no record for pair \"" + missing.front() + "\" (" +
                          std::to_string(missing.size()) + " missing)");
  return out;
}

inline void write_responses(const EvalRun& run, std::ostream& out,
                            const std::filesystem::path& base_dir = {}) {
  for (const auto& p : run.pairs)
    for (const auto* item : {&p.pos, &p.neg})
      for (const auto& r : item->responses) out << to_replay_json(r, base_dir).dump() << '\n';
}

}  // namespace mmvu
