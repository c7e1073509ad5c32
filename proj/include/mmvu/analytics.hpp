#pragma once

// Attention statistics over a head-averaged final-layer attention matrix,
// and option-logit confidence analysis.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmvu/attention_dump.hpp"
#include "mmvu/benchmark.hpp"
#include "mmvu/error.hpp"
#include "mmvu/outcome.hpp"

namespace mmvu {

// Dense square matrix, row-major.
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  std::size_t size() const { return n_; }
  double operator()(std::size_t row, std::size_t col) const { return data_[row * n_ + col]; }
  double& operator()(std::size_t row, std::size_t col) { return data_[row * n_ + col]; }
  std::span<const double> values() const { return data_; }

  double max_entry() const {
    return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end());
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

inline Matrix average_heads(const AttentionDump& dump) {
  const auto n = dump.tokens();
  const auto heads = dump.segments.heads;
  Matrix out(n);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out(i, j) += dump.at(h, i, j);
  const double inv = heads ? 1.0 / heads : 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) *= inv;
  return out;
}

namespace detail {

inline void check_shape(const Matrix& a, const SegmentLengths& seg) {
  if (a.size() != seg.total())
    throw ValidationError("attention matrix is " + std::to_string(a.size()) + "x" +
                          std::to_string(a.size()) + " but segments sum to " +
                          std::to_string(seg.total()));
}

inline double row_block_max(const Matrix& a, std::size_t row, std::size_t col_begin,
                            std::size_t col_end) {
  double m = a(row, col_begin);
  for (std::size_t j = col_begin + 1; j < col_end; ++j) m = std::max(m, a(row, j));
  return m;
}

}  // namespace detail

struct AnswerAttentionScores {
  double to_system = 0.0;
  double to_visual = 0.0;
  double to_question = 0.0;
};

// Mean over answer rows of the per-row maximum into each target block.
inline AnswerAttentionScores answer_attention_scores(const Matrix& a, const SegmentLengths& seg) {
  detail::check_shape(a, seg);
  const auto vis = seg.vis_begin(), q = seg.q_begin(), ans = seg.a_begin(), n = seg.total();
  AnswerAttentionScores s;
  for (std::size_t r = ans; r < n; ++r) {
    s.to_system += detail::row_block_max(a, r, 0, vis);
    s.to_visual += detail::row_block_max(a, r, vis, q);
    s.to_question += detail::row_block_max(a, r, q, ans);
  }
  const double rows = static_cast<double>(seg.n_a);
  s.to_system /= rows;
  s.to_visual /= rows;
  s.to_question /= rows;
  return s;
}

struct QuestionAttentionBound {
  double to_system = 0.0;
  double to_visual = 0.0;
};

// Minimum over question rows of the per-row maximum into the system and
// visual blocks: the weakest link between any question token and the target.
inline QuestionAttentionBound question_attention_bound(const Matrix& a, const SegmentLengths& seg) {
  detail::check_shape(a, seg);
  const auto vis = seg.vis_begin(), q = seg.q_begin(), ans = seg.a_begin();
  QuestionAttentionBound b{detail::row_block_max(a, q, 0, vis), detail::row_block_max(a, q, vis, q)};
  for (std::size_t r = q + 1; r < ans; ++r) {
    b.to_system = std::min(b.to_system, detail::row_block_max(a, r, 0, vis));
    b.to_visual = std::min(b.to_visual, detail::row_block_max(a, r, vis, q));
  }
  return b;
}

inline constexpr double kRatioEpsilon = 1e-12;

struct PairAttentionRatios {
  double sys_ratio = 0.0;
  double vis_ratio = 0.0;
};

// neg/pos per target; absent when a positive-side bound is below epsilon.
inline std::optional<PairAttentionRatios> pair_attention_ratios(
    const QuestionAttentionBound& pos, const QuestionAttentionBound& neg,
    double epsilon = kRatioEpsilon) {
  if (pos.to_system < epsilon || pos.to_visual < epsilon) return std::nullopt;
  return PairAttentionRatios{neg.to_system / pos.to_system, neg.to_visual / pos.to_visual};
}

using OptionLogits = std::array<double, 4>;

struct OptionProbabilities {
  std::array<double, 4> probs{};

  double operator[](OptionLetter l) const { return probs[letter_index(l)]; }
};

inline OptionProbabilities softmax(const OptionLogits& logits) {
  for (double v : logits)
    if (!std::isfinite(v)) throw ValidationError("softmax: non-finite logit");
  const double top = *std::max_element(logits.begin(), logits.end());
  OptionProbabilities p;
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) sum += (p.probs[i] = std::exp(logits[i] - top));
  for (auto& v : p.probs) v /= sum;
  return p;
}

struct ConfidenceRatio {
  double p_pos = 0.0;
  double p_neg = 0.0;
  double ratio = 0.0;
};

inline ConfidenceRatio confidence_ratio(const OptionLogits& pos_logits, OptionLetter pos_answer,
                                        const OptionLogits& neg_logits, OptionLetter neg_answer) {
  ConfidenceRatio r;
  r.p_pos = softmax(pos_logits)[pos_answer];
  r.p_neg = softmax(neg_logits)[neg_answer];
  r.ratio = r.p_neg / r.p_pos;
  return r;
}

// One evaluated pair, as far as the confidence analysis is concerned.
struct LogitPair {
  std::string pair_id;
  PairOutcome outcome = PairOutcome::NF;
  OptionLetter pos_answer = OptionLetter::A;
  OptionLetter neg_answer = OptionLetter::A;
  std::optional<OptionLogits> pos_logits;
  std::optional<OptionLogits> neg_logits;
};

struct UfConfidenceSummary {
  std::size_t count = 0;
  std::optional<double> mean_ratio;  // arithmetic mean of per-pair ratios
  std::size_t missing_logits = 0;    // UF pairs without logits on both sides
  std::vector<std::pair<std::string, ConfidenceRatio>> pairs;
};

inline UfConfidenceSummary aggregate_uf_ratios(std::span<const LogitPair> pairs) {
  UfConfidenceSummary s;
  double sum = 0.0;
  for (const auto& p : pairs) {
    if (p.outcome != PairOutcome::UF) continue;
    if (!p.pos_logits || !p.neg_logits) {
      ++s.missing_logits;
      continue;
    }
    auto r = confidence_ratio(*p.pos_logits, p.pos_answer, *p.neg_logits, p.neg_answer);
    sum += r.ratio;
    s.pairs.emplace_back(p.pair_id, r);
  }
  s.count = s.pairs.size();
  if (s.count) s.mean_ratio = sum / static_cast<double>(s.count);
  return s;
}

// Corpus-level attention summary.
struct AnswerAttentionSummary {
  std::size_t count = 0;  // responses that carried a dump
  std::optional<AnswerAttentionScores> mean;
};

inline AnswerAttentionSummary summarize_answer_attention(std::span<const AnswerAttentionScores> all) {
  AnswerAttentionSummary s;
  s.count = all.size();
  if (all.empty()) return s;
  AnswerAttentionScores m;
  for (const auto& a : all) {
    m.to_system += a.to_system;
    m.to_visual += a.to_visual;
    m.to_question += a.to_question;
  }
  const double n = static_cast<double>(all.size());
  m.to_system /= n;
  m.to_visual /= n;
  m.to_question /= n;
  s.mean = m;
  return s;
}

struct RatioSummary {
  std::size_t count = 0;
  std::size_t skipped = 0;
  std::optional<double> sys;  // mean of per-pair ratios
  std::optional<double> vis;
};

inline RatioSummary summarize_ratios(std::span<const std::optional<PairAttentionRatios>> all) {
  RatioSummary s;
  double sys = 0.0, vis = 0.0;
  for (const auto& r : all) {
    if (!r) {
      ++s.skipped;
      continue;
    }
    ++s.count;
    sys += r->sys_ratio;
    vis += r->vis_ratio;
  }
  if (s.count) {
    s.sys = sys / static_cast<double>(s.count);
    s.vis = vis / static_cast<double>(s.count);
  }
  return s;
}

struct AnalysisOutput {
  std::optional<AnswerAttentionSummary> answer_attention;
  std::optional<RatioSummary> ratio_summary;
  std::optional<UfConfidenceSummary> uf_confidence;
};

namespace detail {
inline nlohmann::ordered_json opt_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}
}  // namespace detail

inline nlohmann::ordered_json to_json(const UfConfidenceSummary& s, bool with_pairs) {
  nlohmann::ordered_json j;
  j["count"] = s.count;
  j["mean_ratio"] = detail::opt_number(s.mean_ratio);
  j["aggregation"] = "mean_of_ratios";
  j["missing_logits"] = s.missing_logits;
  if (with_pairs) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& [id, r] : s.pairs)
      arr.push_back({{"pair_id", id}, {"p_pos", r.p_pos}, {"p_neg", r.p_neg}, {"ratio", r.ratio}});
    j["pairs"] = std::move(arr);
  }
  return j;
}

inline nlohmann::ordered_json to_json(const AnalysisOutput& a) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  if (a.answer_attention) {
    nlohmann::ordered_json s;
    const auto& m = a.answer_attention->mean;
    s["to_system"] = m ? nlohmann::ordered_json(m->to_system) : nullptr;
    s["to_visual"] = m ? nlohmann::ordered_json(m->to_visual) : nullptr;
    s["to_question"] = m ? nlohmann::ordered_json(m->to_question) : nullptr;
    s["count"] = a.answer_attention->count;
    j["answer_attention"] = std::move(s);
  }
  if (a.ratio_summary) {
    nlohmann::ordered_json s;
    s["sys"] = detail::opt_number(a.ratio_summary->sys);
    s["vis"] = detail::opt_number(a.ratio_summary->vis);
    s["skipped"] = a.ratio_summary->skipped;
    s["count"] = a.ratio_summary->count;
    s["aggregation"] = "mean_of_ratios";
    j["ratio_summary"] = std::move(s);
  }
  if (a.uf_confidence) j["uf_confidence"] = to_json(*a.uf_confidence, false);
  return j;
}

inline AnalysisOutput analysis_from_json(const nlohmann::json& j) {
  auto num = [](const nlohmann::json& o, const char* k) -> std::optional<double> {
    auto it = o.find(k);
    if (it == o.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) throw ValidationError(std::string("analysis: \"") + k + "\" must be a number");
    return it->get<double>();
  };
  auto count = [](const nlohmann::json& o, const char* k) -> std::size_t {
    auto it = o.find(k);
    return (it != o.end() && it->is_number_unsigned()) ? it->get<std::size_t>() : 0;
  };
  if (!j.is_object()) throw ValidationError("analysis: expected a JSON object");
  AnalysisOutput a;
  if (auto it = j.find("answer_attention"); it != j.end()) {
    AnswerAttentionSummary s;
    s.count = count(*it, "count");
    auto sys = num(*it, "to_system"), vis = num(*it, "to_visual"), q = num(*it, "to_question");
    if (sys && vis && q) s.mean = AnswerAttentionScores{*sys, *vis, *q};
    a.answer_attention = s;
  }
  if (auto it = j.find("ratio_summary"); it != j.end()) {
    RatioSummary s;
    s.sys = num(*it, "sys");
    s.vis = num(*it, "vis");
    s.skipped = count(*it, "skipped");
    s.count = count(*it, "count");
    a.ratio_summary = s;
  }
  if (auto it = j.find("uf_confidence"); it != j.end()) {
    UfConfidenceSummary s;
    s.count = count(*it, "count");
    s.mean_ratio = num(*it, "mean_ratio");
    s.missing_logits = count(*it, "missing_logits");
    a.uf_confidence = s;
  }
  return a;
}

}  // namespace mmvu
