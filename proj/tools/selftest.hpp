#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace genex {

struct SelftestLine {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Invariant checks across every module. Output depends only on the seed.
std::vector<SelftestLine> run_selftest(std::uint64_t seed, std::size_t threads);

}  // namespace genex
