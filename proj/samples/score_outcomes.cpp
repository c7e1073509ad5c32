// Scores a handful of pair outcomes and prints the rendered tables.

#include <iostream>
#include <vector>

#include "mmvu/metrics.hpp"
#include "mmvu/report.hpp"

int main() {
  using mmvu::Category;
  using mmvu::PairOutcome;
  const std::vector<std::pair<Category, PairOutcome>> outcomes{
      {Category::CharNum, mmvu::classify_pair(true, true)},
      {Category::CharNum, mmvu::classify_pair(true, false)},
      {Category::Presence, mmvu::classify_pair(true, true)},
      {Category::Activity, mmvu::classify_pair(false, true)},
  };
  const auto report = mmvu::build_report(outcomes);
  std::cout << mmvu::render(report).markdown;
  std::cout << "\nmicro MR " << mmvu::format_percent(report.micro.mr) << "\n";
}
