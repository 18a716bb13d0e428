#pragma once

// Built-in invariant suite behind `cascade_ltr selfcheck`.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cascade_ltr/diffsort.hpp"

namespace cascade_ltr::cli {

struct SelfCheckOptions {
  // Relaxed sort under test; tests swap in broken variants.
  SortRelaxation sort = neural_sort;
  std::uint64_t seed = 7;
};

struct PropertyOutcome {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelfCheckSummary {
  std::vector<PropertyOutcome> properties;

  std::size_t run() const { return properties.size(); }
  std::size_t passed() const;
  std::size_t failed() const { return run() - passed(); }
};

SelfCheckSummary run_selfcheck(const SelfCheckOptions& options = {});

// Prints the table and the counts; returns 0 iff every property passed.
int cmd_selfcheck(std::ostream& out, std::ostream& err, const SelfCheckOptions& options = {});

}  // namespace cascade_ltr::cli
