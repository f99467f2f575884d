#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace cftoken {

/// Unit-cost Levenshtein distance, two-row dynamic program.
template <class T>
std::size_t levenshtein(std::span<const T> a, std::span<const T> b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Levenshtein(a, b) / max(|a|, |b|); 0 when both are empty.
template <class T>
double normalized_edit_distance(std::span<const T> a, std::span<const T> b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 0.0;
  return static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

template <class T>
double normalized_edit_distance(const std::vector<T>& a, const std::vector<T>& b) {
  return normalized_edit_distance(std::span<const T>(a), std::span<const T>(b));
}

// ---------------------------------------------------------------------------
// Highlighting diffs between a factual and a regenerated token list.

enum class DiffFlag { same, changed };

inline std::string to_string(DiffFlag f) { return f == DiffFlag::same ? "same" : "changed"; }

/// Position-wise comparison; regenerated tokens past the factual length are changed.
template <class T>
std::vector<DiffFlag> positional_diff(std::span<const T> factual, std::span<const T> regenerated) {
  std::vector<DiffFlag> flags(regenerated.size(), DiffFlag::changed);
  for (std::size_t i = 0; i < std::min(factual.size(), regenerated.size()); ++i)
    if (factual[i] == regenerated[i]) flags[i] = DiffFlag::same;
  return flags;
}

/// Flags regenerated tokens matched by a minimum-cost Levenshtein alignment.
template <class T>
std::vector<DiffFlag> alignment_diff(std::span<const T> factual, std::span<const T> regenerated) {
  const std::size_t n = factual.size(), m = regenerated.size();
  std::vector<std::size_t> dp((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return dp[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j) + 1, at(i, j - 1) + 1,
                           at(i - 1, j - 1) + (factual[i - 1] == regenerated[j - 1] ? 0 : 1)});
  std::vector<DiffFlag> flags(m, DiffFlag::changed);
  std::size_t i = n, j = m;
  while (i > 0 && j > 0) {
    if (factual[i - 1] == regenerated[j - 1] && at(i, j) == at(i - 1, j - 1)) {
      flags[j - 1] = DiffFlag::same;
      --i, --j;
    } else if (at(i, j) == at(i - 1, j - 1) + 1) {
      --i, --j;
    } else if (at(i, j) == at(i - 1, j) + 1) {
      --i;
    } else {
      --j;
    }
  }
  return flags;
}

}  // namespace cftoken
