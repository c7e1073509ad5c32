#pragma once

// Misleading Rate and Robustness Accuracy over pair outcomes.
//
//   MR = N_UF / (N_UR + N_UF)
//   RA = N_UR / (N_UR + N_UF + N_NR + N_NF)
//
// A metric whose denominator is zero is undefined, never zero.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmvu/benchmark.hpp"
#include "mmvu/outcome.hpp"

namespace mmvu {

struct OutcomeCounts {
  std::size_t n_ur = 0;
  std::size_t n_uf = 0;
  std::size_t n_nr = 0;
  std::size_t n_nf = 0;

  std::size_t total() const { return n_ur + n_uf + n_nr + n_nf; }

  void add(PairOutcome o) {
    switch (o) {
      case PairOutcome::UR: ++n_ur; break;
      case PairOutcome::UF: ++n_uf; break;
      case PairOutcome::NR: ++n_nr; break;
      case PairOutcome::NF: ++n_nf; break;
    }
  }

  OutcomeCounts& operator+=(const OutcomeCounts& o) {
    n_ur += o.n_ur;
    n_uf += o.n_uf;
    n_nr += o.n_nr;
    n_nf += o.n_nf;
    return *this;
  }

  bool operator==(const OutcomeCounts&) const = default;
};

// Exact ratio of two counts; kept so percentages can be rounded without
// floating-point drift.
struct Fraction {
  std::uint64_t num = 0;
  std::uint64_t den = 1;
};

struct MetricValue {
  std::optional<double> value;
  std::optional<Fraction> exact;

  bool defined() const { return value.has_value(); }

  static MetricValue undefined() { return {}; }
  static MetricValue ratio(std::uint64_t num, std::uint64_t den) {
    if (den == 0) return {};
    return {static_cast<double>(num) / static_cast<double>(den), Fraction{num, den}};
  }
  static MetricValue real(double v) { return {v, std::nullopt}; }
};

inline MetricValue misleading_rate(const OutcomeCounts& c) {
  return MetricValue::ratio(c.n_uf, c.n_ur + c.n_uf);
}

inline MetricValue robustness_accuracy(const OutcomeCounts& c) {
  return MetricValue::ratio(c.n_ur, c.total());
}

struct CategoryMetrics {
  OutcomeCounts counts;
  MetricValue ra;
  MetricValue mr;
};

inline CategoryMetrics category_metrics(const OutcomeCounts& c) {
  return {c, robustness_accuracy(c), misleading_rate(c)};
}

// Unweighted mean over categories whose metric is defined.
struct MacroAverage {
  MetricValue ra;
  MetricValue mr;
  std::size_t undefined_ra = 0;
  std::size_t undefined_mr = 0;
};

struct ParseTally {
  std::size_t unparseable = 0;
  std::size_t items = 0;
};

struct MetricsReport {
  std::array<CategoryMetrics, kCategoryCount> per_category;
  CategoryMetrics micro;
  MacroAverage macro;
  std::optional<ParseTally> parse_tally;

  const CategoryMetrics& category(Category c) const { return per_category[category_index(c)]; }
};

inline MetricsReport report_from_counts(const std::array<OutcomeCounts, kCategoryCount>& counts) {
  MetricsReport report;
  OutcomeCounts all;
  double ra_sum = 0.0, mr_sum = 0.0;
  std::size_t ra_n = 0, mr_n = 0;
  for (std::size_t i = 0; i < kCategoryCount; ++i) {
    report.per_category[i] = category_metrics(counts[i]);
    all += counts[i];
    const auto& m = report.per_category[i];
    if (m.ra.defined()) {
      ra_sum += *m.ra.value;
      ++ra_n;
    }
    if (m.mr.defined()) {
      mr_sum += *m.mr.value;
      ++mr_n;
    }
  }
  report.micro = category_metrics(all);
  report.macro.undefined_ra = kCategoryCount - ra_n;
  report.macro.undefined_mr = kCategoryCount - mr_n;
  if (ra_n) report.macro.ra = MetricValue::real(ra_sum / static_cast<double>(ra_n));
  if (mr_n) report.macro.mr = MetricValue::real(mr_sum / static_cast<double>(mr_n));
  return report;
}

inline MetricsReport build_report(std::span<const std::pair<Category, PairOutcome>> outcomes) {
  std::array<OutcomeCounts, kCategoryCount> counts{};
  for (const auto& [cat, outcome] : outcomes) counts[category_index(cat)].add(outcome);
  return report_from_counts(counts);
}

inline MetricsReport build_report(const std::vector<std::pair<Category, PairOutcome>>& outcomes) {
  return build_report(std::span<const std::pair<Category, PairOutcome>>(outcomes));
}

inline constexpr std::string_view kUndefinedCell = "\xE2\x80\x94";  // em dash

// Percentage with two decimals, round half away from zero, '.' separator.
inline std::string format_percent(const MetricValue& m) {
  if (!m.defined()) return std::string(kUndefinedCell);
  std::uint64_t hundredths;
  if (m.exact) {
    // round(10000 * num / den) in integers
    const auto scaled = m.exact->num * 20000;
    hundredths = (scaled / m.exact->den + 1) / 2;
  } else {
    hundredths = static_cast<std::uint64_t>(std::floor(std::fabs(*m.value) * 10000.0 + 0.5));
  }
  auto s = std::to_string(hundredths / 100) + ".";
  const auto frac = hundredths % 100;
  if (frac < 10) s += '0';
  s += std::to_string(frac);
  return s;
}

}  // namespace mmvu
