#pragma once

// Table-style Markdown/CSV rendering of a MetricsReport, the metrics.json
// interchange file, and byte-exact golden comparison.

#include <array>
#include <iomanip>
#include <locale>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mmvu/analytics.hpp"
#include "mmvu/benchmark.hpp"
#include "mmvu/error.hpp"
#include "mmvu/metrics.hpp"

namespace mmvu {

struct RenderedReport {
  std::string markdown;
  std::string csv;
};

inline constexpr std::string_view kMicroColumn = "Avg. (micro)";
inline constexpr std::string_view kMacroColumn = "Avg. (macro)";

// Category columns in table order, then micro and macro averages.
inline std::vector<std::string> report_columns() {
  std::vector<std::string> cols;
  for (const auto& info : kCategoryTable) cols.emplace_back(info.column);
  cols.emplace_back(kMicroColumn);
  cols.emplace_back(kMacroColumn);
  return cols;
}

inline std::vector<std::string> ra_cells(const MetricsReport& r) {
  std::vector<std::string> cells;
  for (const auto& m : r.per_category) cells.push_back(format_percent(m.ra));
  cells.push_back(format_percent(r.micro.ra));
  cells.push_back(format_percent(r.macro.ra));
  return cells;
}

inline std::vector<std::string> mr_cells(const MetricsReport& r) {
  std::vector<std::string> cells;
  for (const auto& m : r.per_category) cells.push_back(format_percent(m.mr));
  cells.push_back(format_percent(r.micro.mr));
  cells.push_back(format_percent(r.macro.mr));
  return cells;
}

namespace detail {

inline std::string md_row(const std::vector<std::string>& cells) {
  std::string s = "|";
  for (const auto& c : cells) s += " " + c + " |";
  return s + "\n";
}

inline std::string md_table(std::string_view title, const std::vector<std::string>& cells) {
  const auto cols = report_columns();
  std::string s = "## " + std::string(title) + "\n\n" + md_row(cols) + "|";
  for (std::size_t i = 0; i < cols.size(); ++i) s += "---:|";
  return s + "\n" + md_row(cells) + "\n";
}

inline std::string fixed6(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

inline std::string opt_fixed6(const std::optional<double>& v) {
  return v ? fixed6(*v) : std::string(kUndefinedCell);
}

inline std::string percent_of(std::size_t num, std::size_t den) {
  return format_percent(MetricValue::ratio(num, den));
}

}  // namespace detail

// Pure function of its inputs; Markdown and CSV share the same cell strings.
inline RenderedReport render(const MetricsReport& report,
                             const std::optional<AnalysisOutput>& analysis = std::nullopt) {
  const auto ra = ra_cells(report), mr = mr_cells(report);
  const auto& c = report.micro.counts;

  std::string md = "# Evaluation report\n\n";
  md += detail::md_table("Robustness Accuracy (RA, %, higher is better)", ra);
  md += detail::md_table("Misleading Rate (MR, %, lower is better)", mr);

  md += "## Outcome counts\n\n| Outcome |";
  for (const auto& info : kCategoryTable) md += " " + std::string(info.column) + " |";
  md += " All |\n|---|";
  for (std::size_t i = 0; i <= kCategoryCount; ++i) md += "---:|";
  md += "\n";
  for (auto o : kPairOutcomes) {
    md += "| " + std::string(outcome_key(o)) + " |";
    auto pick = [o](const OutcomeCounts& k) {
      switch (o) {
        case PairOutcome::UR: return k.n_ur;
        case PairOutcome::UF: return k.n_uf;
        case PairOutcome::NR: return k.n_nr;
        case PairOutcome::NF: return k.n_nf;
      }
      return std::size_t{0};
    };
    for (const auto& m : report.per_category) md += " " + std::to_string(pick(m.counts)) + " |";
    md += " " + std::to_string(pick(c)) + " |\n";
  }
  md += "\n";

  md += "Pairs: " + std::to_string(c.total()) + " (UR " + std::to_string(c.n_ur) + ", UF " +
        std::to_string(c.n_uf) + ", NR " + std::to_string(c.n_nr) + ", NF " + std::to_string(c.n_nf) + ")\n\n";
  md += "Categories without a defined value: RA " + std::to_string(report.macro.undefined_ra) + ", MR " +
        std::to_string(report.macro.undefined_mr) + "\n";
  if (report.parse_tally) {
    const auto& t = *report.parse_tally;
    md += "\nUnparseable responses: " + std::to_string(t.unparseable) + " of " + std::to_string(t.items) +
          " items (" + detail::percent_of(t.unparseable, t.items) + "%)\n";
  }

  if (analysis) {
    md += "\n## Attention and confidence\n\n| Statistic | Value |\n|---|---:|\n";
    auto row = [&md](const std::string& k, const std::string& v) { md += "| " + k + " | " + v + " |\n"; };
    if (const auto& a = analysis->answer_attention) {
      row("Answer attention to system", a->mean ? detail::fixed6(a->mean->to_system) : std::string(kUndefinedCell));
      row("Answer attention to visual", a->mean ? detail::fixed6(a->mean->to_visual) : std::string(kUndefinedCell));
      row("Answer attention to question",
          a->mean ? detail::fixed6(a->mean->to_question) : std::string(kUndefinedCell));
      row("Responses with attention", std::to_string(a->count));
    }
    if (const auto& s = analysis->ratio_summary) {
      row("Question-to-system ratio (neg/pos)", detail::opt_fixed6(s->sys));
      row("Question-to-visual ratio (neg/pos)", detail::opt_fixed6(s->vis));
      row("Pairs in ratio", std::to_string(s->count));
      row("Pairs skipped", std::to_string(s->skipped));
    }
    if (const auto& u = analysis->uf_confidence) {
      row("UF confidence ratio (P_neg/P_pos)", detail::opt_fixed6(u->mean_ratio));
      row("UF pairs with logits", std::to_string(u->count));
      row("UF pairs missing logits", std::to_string(u->missing_logits));
    }
  }

  std::string csv = "metric";
  for (const auto& col : report_columns()) csv += "," + col;
  csv += "\nRA";
  for (const auto& cell : ra) csv += "," + cell;
  csv += "\nMR";
  for (const auto& cell : mr) csv += "," + cell;
  csv += "\n";
  return {std::move(md), std::move(csv)};
}

// ---------------------------------------------------------------------------
// Golden comparison

struct GoldenDiff {
  bool equal = true;
  std::size_t line = 0;  // 1-based; 0 when equal
  std::optional<std::string> expected;  // nullopt past the end of the golden text
  std::optional<std::string> actual;    // nullopt past the end of the rendered text

  std::string describe() const {
    if (equal) return "identical";
    auto show = [](const std::optional<std::string>& s) { return s ? "\"" + *s + "\"" : std::string("<end of file>"); };
    return "line " + std::to_string(line) + ": expected " + show(expected) + ", got " + show(actual);
  }
};

namespace detail {
inline std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, nl - start));
    start = nl + 1;
  }
}
}  // namespace detail

// Byte-exact; line endings are significant.
inline GoldenDiff compare_golden(std::string_view rendered, std::string_view golden) {
  if (rendered == golden) return {};
  const auto a = detail::split_lines(rendered), g = detail::split_lines(golden);
  for (std::size_t i = 0;; ++i) {
    std::optional<std::string> ga, gg;
    if (i < a.size()) ga = a[i];
    if (i < g.size()) gg = g[i];
    if (ga != gg) return {false, i + 1, gg, ga};
  }
}

// ---------------------------------------------------------------------------
// metrics.json

inline nlohmann::ordered_json to_json(const MetricValue& m) {
  return m.defined() ? nlohmann::ordered_json(*m.value) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json to_json(const CategoryMetrics& m) {
  nlohmann::ordered_json j;
  j["UR"] = m.counts.n_ur;
  j["UF"] = m.counts.n_uf;
  j["NR"] = m.counts.n_nr;
  j["NF"] = m.counts.n_nf;
  j["ra"] = to_json(m.ra);
  j["mr"] = to_json(m.mr);
  return j;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json cats = nlohmann::ordered_json::object();
  for (const auto& info : kCategoryTable) cats[std::string(info.key)] = to_json(r.category(info.category));
  j["categories"] = std::move(cats);
  j["micro"] = to_json(r.micro);
  nlohmann::ordered_json macro;
  macro["ra"] = to_json(r.macro.ra);
  macro["mr"] = to_json(r.macro.mr);
  macro["undefined_ra"] = r.macro.undefined_ra;
  macro["undefined_mr"] = r.macro.undefined_mr;
  j["macro"] = std::move(macro);
  if (r.parse_tally) j["parse_tally"] = {{"unparseable", r.parse_tally->unparseable}, {"items", r.parse_tally->items}};
  return j;
}

// Rebuilds a report from the stored counts; derived values are recomputed.
inline MetricsReport metrics_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("categories") || !j["categories"].is_object())
    throw ValidationError("metrics: missing categories object");
  auto count = [](const nlohmann::json& o, const char* k, const std::string& where) {
    if (!o.contains(k) || !o[k].is_number_unsigned())
      throw ValidationError("metrics: " + where + "." + k + " must be a non-negative integer");
    return o[k].get<std::size_t>();
  };
  std::array<OutcomeCounts, kCategoryCount> counts{};
  for (const auto& [key, v] : j["categories"].items()) {
    auto cat = parse_category(key);
    if (!cat) throw ValidationError("metrics: unknown category \"" + key + "\"");
    if (!v.is_object()) throw ValidationError("metrics: category " + key + " is not an object");
    counts[category_index(*cat)] = {count(v, "UR", key), count(v, "UF", key), count(v, "NR", key),
                                    count(v, "NF", key)};
  }
  auto report = report_from_counts(counts);
  if (auto it = j.find("parse_tally"); it != j.end() && !it->is_null())
    report.parse_tally = ParseTally{count(*it, "unparseable", "parse_tally"), count(*it, "items", "parse_tally")};
  return report;
}

}  // namespace mmvu
