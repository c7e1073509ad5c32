#pragma once

// Benchmark data model: paired positive/negative multiple-choice items,
// their JSONL encoding and structural validation.

#include <algorithm>
#include <array>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mmvu/error.hpp"

namespace mmvu {

enum class CategoryLevel { Character, Attribute, Context };

// Order is the column order of the results tables.
enum class Category {
  CharNum,
  Presence,
  ColorTexture,
  Number,
  Shape,
  Posture,
  Position,
  AbstractKnowledge,
  ConcreteKnowledge,
  Expertise,
  Activity,
  Relationships,
};

inline constexpr std::size_t kCategoryCount = 12;

struct CategoryInfo {
  Category category;
  std::string_view key;     // file spelling
  std::string_view column;  // table header
  CategoryLevel level;
};

inline constexpr std::array<CategoryInfo, kCategoryCount> kCategoryTable{{
    {Category::CharNum, "char_num", "Char/Num", CategoryLevel::Character},
    {Category::Presence, "presence", "Pres.", CategoryLevel::Attribute},
    {Category::ColorTexture, "color_texture", "Color/Tex", CategoryLevel::Attribute},
    {Category::Number, "number", "Num.", CategoryLevel::Attribute},
    {Category::Shape, "shape", "Shape", CategoryLevel::Attribute},
    {Category::Posture, "posture", "Posture", CategoryLevel::Attribute},
    {Category::Position, "position", "Pos.", CategoryLevel::Attribute},
    {Category::AbstractKnowledge, "abstract_knowledge", "Abstract.", CategoryLevel::Context},
    {Category::ConcreteKnowledge, "concrete_knowledge", "Concrete.", CategoryLevel::Context},
    {Category::Expertise, "expertise", "Expert.", CategoryLevel::Context},
    {Category::Activity, "activity", "Act.", CategoryLevel::Context},
    {Category::Relationships, "relationships", "Rel.", CategoryLevel::Context},
}};

constexpr std::size_t category_index(Category c) { return static_cast<std::size_t>(c); }
constexpr const CategoryInfo& category_info(Category c) { return kCategoryTable[category_index(c)]; }
constexpr CategoryLevel category_level(Category c) { return category_info(c).level; }
constexpr std::string_view category_key(Category c) { return category_info(c).key; }

inline std::optional<Category> parse_category(std::string_view key) {
  for (const auto& info : kCategoryTable)
    if (info.key == key) return info.category;
  return std::nullopt;
}

enum class Polarity { Positive, Negative };

constexpr std::string_view polarity_key(Polarity p) {
  return p == Polarity::Positive ? "positive" : "negative";
}

inline std::optional<Polarity> parse_polarity(std::string_view s) {
  if (s == "positive") return Polarity::Positive;
  if (s == "negative") return Polarity::Negative;
  return std::nullopt;
}

enum class OptionLetter { A, B, C, D };

inline constexpr std::array<OptionLetter, 4> kOptionLetters{OptionLetter::A, OptionLetter::B,
                                                            OptionLetter::C, OptionLetter::D};

constexpr std::size_t letter_index(OptionLetter l) { return static_cast<std::size_t>(l); }
constexpr char letter_char(OptionLetter l) { return static_cast<char>('A' + letter_index(l)); }

constexpr std::optional<OptionLetter> letter_from_char(char c) {
  if (c < 'A' || c > 'D') return std::nullopt;
  return static_cast<OptionLetter>(c - 'A');
}

inline std::optional<OptionLetter> parse_letter(std::string_view s) {
  if (s.size() != 1) return std::nullopt;
  return letter_from_char(s.front());
}

struct BenchmarkItem {
  std::string item_id;
  std::string pair_id;
  std::string image_ref;
  Category category = Category::CharNum;
  Polarity polarity = Polarity::Positive;
  std::string question;
  std::array<std::string, 4> options;  // indexed by OptionLetter
  OptionLetter answer = OptionLetter::A;

  const std::string& option(OptionLetter l) const { return options[letter_index(l)]; }

  bool operator==(const BenchmarkItem&) const = default;
};

struct ItemPair {
  std::string pair_id;
  BenchmarkItem positive;
  BenchmarkItem negative;

  Category category() const { return positive.category; }

  bool operator==(const ItemPair&) const = default;
};

namespace detail {

inline const std::string& require_string(const nlohmann::json& obj, const char* key,
                                         std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw ValidationError("line " + std::to_string(line) + ": missing key \"" + key + "\"");
  if (!it->is_string())
    throw ValidationError("line " + std::to_string(line) + ": key \"" + key +
                          "\" must be a string");
  return it->get_ref<const std::string&>();
}

inline const std::string& require_nonempty(const nlohmann::json& obj, const char* key,
                                           std::size_t line) {
  const auto& s = require_string(obj, key, line);
  if (s.empty())
    throw ValidationError("line " + std::to_string(line) + ": key \"" + key +
                          "\" must not be empty");
  return s;
}

}  // namespace detail

// Parses one JSONL record. `line` is 1-based and only used in messages.
inline BenchmarkItem parse_benchmark_record(std::string_view text, std::size_t line) {
  static const std::set<std::string> kKeys{"item_id", "pair_id",  "image",   "category",
                                           "polarity", "question", "options", "answer"};
  const auto where = "line " + std::to_string(line) + ": ";
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(where + "malformed JSON (" + e.what() + ")");
  }
  if (!obj.is_object()) throw ValidationError(where + "record is not a JSON object");
  for (const auto& [key, _] : obj.items())
    if (!kKeys.count(key)) throw ValidationError(where + "unknown key \"" + key + "\"");

  BenchmarkItem item;
  item.item_id = detail::require_nonempty(obj, "item_id", line);
  item.pair_id = detail::require_nonempty(obj, "pair_id", line);
  item.image_ref = detail::require_nonempty(obj, "image", line);
  item.question = detail::require_nonempty(obj, "question", line);

  const auto& cat = detail::require_string(obj, "category", line);
  auto category = parse_category(cat);
  if (!category) throw ValidationError(where + "unknown category \"" + cat + "\"");
  item.category = *category;

  const auto& pol = detail::require_string(obj, "polarity", line);
  auto polarity = parse_polarity(pol);
  if (!polarity) throw ValidationError(where + "unknown polarity \"" + pol + "\"");
  item.polarity = *polarity;

  auto opts = obj.find("options");
  if (opts == obj.end()) throw ValidationError(where + "missing key \"options\"");
  if (!opts->is_object()) throw ValidationError(where + "\"options\" must be an object");
  for (const auto& [key, _] : opts->items())
    if (!parse_letter(key)) throw ValidationError(where + "unexpected option key \"" + key + "\"");
  for (auto l : kOptionLetters) {
    const std::string key(1, letter_char(l));
    auto it = opts->find(key);
    if (it == opts->end()) throw ValidationError(where + "missing option key \"" + key + "\"");
    if (!it->is_string() || it->get_ref<const std::string&>().empty())
      throw ValidationError(where + "option \"" + key + "\" must be a non-empty string");
    item.options[letter_index(l)] = it->get<std::string>();
  }
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j)
      if (item.options[i] == item.options[j])
        throw ValidationError(where + "options " + std::string(1, char('A' + i)) + " and " +
                              std::string(1, char('A' + j)) + " are identical");

  const auto& ans = detail::require_string(obj, "answer", line);
  auto answer = parse_letter(ans);
  if (!answer) throw ValidationError(where + "answer must be one of A, B, C, D");
  item.answer = *answer;
  return item;
}

// Reads a whole benchmark file. Empty lines are skipped.
inline std::vector<BenchmarkItem> parse_benchmark(std::istream& in) {
  std::vector<BenchmarkItem> items;
  std::map<std::string, std::size_t> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    auto item = parse_benchmark_record(text, line);
    auto [it, inserted] = seen.emplace(item.item_id, line);
    if (!inserted)
      throw ValidationError("line " + std::to_string(line) + ": duplicate item_id \"" +
                            item.item_id + "\" (first seen on line " +
                            std::to_string(it->second) + ")");
    items.push_back(std::move(item));
  }
  return items;
}

inline nlohmann::ordered_json to_json(const BenchmarkItem& item) {
  nlohmann::ordered_json opts;
  for (auto l : kOptionLetters) opts[std::string(1, letter_char(l))] = item.option(l);
  nlohmann::ordered_json j;
  j["item_id"] = item.item_id;
  j["pair_id"] = item.pair_id;
  j["image"] = item.image_ref;
  j["category"] = category_key(item.category);
  j["polarity"] = polarity_key(item.polarity);
  j["question"] = item.question;
  j["options"] = std::move(opts);
  j["answer"] = std::string(1, letter_char(item.answer));
  return j;
}

inline void serialize_benchmark(const std::vector<BenchmarkItem>& items, std::ostream& out) {
  for (const auto& item : items) out << to_json(item).dump() << '\n';
}

// Groups items by pair_id. Throws listing every offending pair_id.
inline std::vector<ItemPair> pair_items(const std::vector<BenchmarkItem>& items) {
  struct Slot {
    std::vector<const BenchmarkItem*> pos, neg;
  };
  std::map<std::string, Slot> groups;
  for (const auto& item : items) {
    auto& slot = groups[item.pair_id];
    (item.polarity == Polarity::Positive ? slot.pos : slot.neg).push_back(&item);
  }

  std::vector<ItemPair> pairs;
  std::vector<std::string> bad;
  for (const auto& [id, slot] : groups) {
    if (slot.pos.size() != 1 || slot.neg.size() != 1) {
      bad.push_back(id + " (" + std::to_string(slot.pos.size()) + " positive, " +
                    std::to_string(slot.neg.size()) + " negative)");
      continue;
    }
    const auto& p = *slot.pos.front();
    const auto& n = *slot.neg.front();
    if (p.image_ref != n.image_ref || p.category != n.category) {
      bad.push_back(id + " (image or category differs between polarities)");
      continue;
    }
    pairs.push_back(ItemPair{id, p, n});
  }
  if (!bad.empty()) {
    std::string msg = "invalid pairs:";
    for (const auto& b : bad) msg += " " + b + ";";
    msg.pop_back();
    throw ValidationError(msg);
  }
  return pairs;
}

}  // namespace mmvu
