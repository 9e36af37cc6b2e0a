#pragma once

#include <cstdint>
#include <vector>

namespace bgate {

/// Nested two-level cross-fitting assignment. `outer[i]` is the outer fold of
/// unit i, `inner[i]` its inner fold within that outer fold.
struct FoldPlan {
  std::vector<int> outer;
  std::vector<int> inner;
  int k = 0;
  int j = 0;

  /// Units of outer fold `fold`, in ascending unit order.
  std::vector<int> outer_members(int fold) const;
  /// Units outside outer fold `fold`.
  std::vector<int> outer_complement(int fold) const;
  /// Units of inner fold `inner_fold` inside outer fold `fold`.
  std::vector<int> inner_members(int fold, int inner_fold) const;
  /// Units of outer fold `fold` that are not in inner fold `inner_fold`.
  std::vector<int> inner_complement(int fold, int inner_fold) const;
};

/// Random permutation followed by contiguous blocks; when n is not divisible
/// by k the extra units go to the first folds. Throws DataError when k < 2 or
/// n < k.
std::vector<int> make_folds(int n, int k, std::uint64_t seed);

/// Two-level plan: outer folds as in make_folds, then each outer fold split
/// into j inner folds with the same remainder rule. Requires k, j >= 2 and
/// n >= k * j.
FoldPlan make_fold_plan(int n, int k, int j, std::uint64_t seed);

/// Members of every fold of a single-level assignment.
std::vector<std::vector<int>> fold_members(const std::vector<int>& folds, int k);

}  // namespace bgate
