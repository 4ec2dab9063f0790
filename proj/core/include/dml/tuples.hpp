#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace dml {

enum class TupleKind { pairs, triplets, quadruplets };

// Index tuples into a batch. Roles by kind:
//   pairs       (i, j)           role decided by labels (and the switch mark)
//   triplets    (a, p, n)
//   quadruplets (a, p, n1, n2)
// `switched` marks tuples whose positive/negative roles were swapped by
// rho_regularize_tuples: swapped triplets carry the swap in their index order
// and are exempt from class-constraint checks; swapped pairs invert the role
// their labels would imply.
struct TupleSet {
  TupleKind kind = TupleKind::triplets;
  std::vector<std::array<std::size_t, 4>> items;  // unused trailing slots are 0
  std::vector<std::uint8_t> switched;             // empty or one flag per item
  std::string provenance;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
  std::size_t arity() const;
  bool is_switched(std::size_t t) const { return !switched.empty() && switched[t] != 0; }

  // Bounds and bookkeeping checks against a batch of n samples.
  void validate(std::size_t n) const;
};

}  // namespace dml
