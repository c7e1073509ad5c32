#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace mmvu {

// Result of scoring one positive/negative pair.
//   UR  understood, robust to the negative question
//   UF  understood, misled by the negative question
//   NR  not understood, negative answered correctly
//   NF  neither answered correctly
enum class PairOutcome { UR, UF, NR, NF };

inline constexpr std::array<PairOutcome, 4> kPairOutcomes{PairOutcome::UR, PairOutcome::UF,
                                                          PairOutcome::NR, PairOutcome::NF};

constexpr PairOutcome classify_pair(bool pos_correct, bool neg_correct) {
  if (pos_correct) return neg_correct ? PairOutcome::UR : PairOutcome::UF;
  return neg_correct ? PairOutcome::NR : PairOutcome::NF;
}

constexpr std::string_view outcome_key(PairOutcome o) {
  switch (o) {
    case PairOutcome::UR: return "UR";
    case PairOutcome::UF: return "UF";
    case PairOutcome::NR: return "NR";
    case PairOutcome::NF: return "NF";
  }
  return "NF";
}

inline std::optional<PairOutcome> parse_outcome(std::string_view s) {
  for (auto o : kPairOutcomes)
    if (outcome_key(o) == s) return o;
  return std::nullopt;
}

}  // namespace mmvu
