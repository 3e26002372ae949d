// SPDX-License-Identifier: Apache-2.0
//
// Exhaustive reference for the assignment problem. Factorial cost; meant
// for cross-checking the Hungarian solver on small Q.
#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace aptdet {

struct BruteForceMatch {
  double cost = std::numeric_limits<double>::infinity();
  std::vector<int> assignment;
};

inline constexpr std::size_t kBruteForceMaxQ = 9;

inline BruteForceMatch brute_force_match(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  if (n > kBruteForceMaxQ) throw std::invalid_argument("brute-force matching limited to Q <= 9");
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  BruteForceMatch best;
  if (n == 0) {
    best.cost = 0.0;
    return best;
  }
  do {
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) total += cost[r][static_cast<std::size_t>(perm[r])];
    if (total < best.cost) {
      best.cost = total;
      best.assignment = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace aptdet
