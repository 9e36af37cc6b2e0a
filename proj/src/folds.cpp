#include "bgate/folds.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "bgate/dataset.hpp"
#include "bgate/random.hpp"

namespace bgate {

namespace {

// Assigns ids 0..k-1 to `members` (already in random order) in contiguous
// blocks, remainder to the earliest blocks.
void assign_blocks(const std::vector<int>& members, int k, std::vector<int>& ids) {
  const int n = static_cast<int>(members.size());
  const int base = n / k;
  const int extra = n % k;
  int pos = 0;
  for (int f = 0; f < k; ++f) {
    const int size = base + (f < extra ? 1 : 0);
    for (int s = 0; s < size; ++s) ids[members[pos++]] = f;
  }
}

std::vector<int> permutation(int n, std::uint64_t seed) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

}  // namespace

std::vector<int> make_folds(int n, int k, std::uint64_t seed) {
  if (k < 2) throw DataError("fold count must be at least 2");
  if (n < k) {
    throw DataError("cannot split " + std::to_string(n) + " units into " + std::to_string(k) +
                    " non-empty folds");
  }
  std::vector<int> ids(static_cast<std::size_t>(n), -1);
  assign_blocks(permutation(n, seed), k, ids);
  return ids;
}

FoldPlan make_fold_plan(int n, int k, int j, std::uint64_t seed) {
  if (k < 2 || j < 2) throw DataError("fold counts k and j must be at least 2");
  if (n < k * j) {
    throw DataError("n = " + std::to_string(n) + " is smaller than k*j = " +
                    std::to_string(k * j) + "; a fold would be empty");
  }
  FoldPlan plan;
  plan.k = k;
  plan.j = j;
  plan.outer.assign(static_cast<std::size_t>(n), -1);
  plan.inner.assign(static_cast<std::size_t>(n), -1);
  const auto perm = permutation(n, seed);
  assign_blocks(perm, k, plan.outer);
  // Inner split reuses the random order restricted to each outer fold.
  for (int f = 0; f < k; ++f) {
    std::vector<int> members;
    for (int unit : perm) {
      if (plan.outer[unit] == f) members.push_back(unit);
    }
    assign_blocks(members, j, plan.inner);
  }
  return plan;
}

std::vector<std::vector<int>> fold_members(const std::vector<int>& folds, int k) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < folds.size(); ++i) out[folds[i]].push_back(static_cast<int>(i));
  return out;
}

std::vector<int> FoldPlan::outer_members(int fold) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < outer.size(); ++i) {
    if (outer[i] == fold) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> FoldPlan::outer_complement(int fold) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < outer.size(); ++i) {
    if (outer[i] != fold) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> FoldPlan::inner_members(int fold, int inner_fold) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < outer.size(); ++i) {
    if (outer[i] == fold && inner[i] == inner_fold) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> FoldPlan::inner_complement(int fold, int inner_fold) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < outer.size(); ++i) {
    if (outer[i] == fold && inner[i] != inner_fold) out.push_back(static_cast<int>(i));
  }
  return out;
}

}  // namespace bgate
