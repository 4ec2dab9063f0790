#include "dml/tuples.hpp"

#include <stdexcept>
#include <string>

namespace dml {

std::size_t TupleSet::arity() const {
  switch (kind) {
    case TupleKind::pairs: return 2;
    case TupleKind::triplets: return 3;
    case TupleKind::quadruplets: return 4;
  }
  throw std::logic_error("TupleSet: bad kind");
}

void TupleSet::validate(std::size_t n) const {
  if (!switched.empty() && switched.size() != items.size())
    throw std::invalid_argument("TupleSet: switch marks do not match tuple count");
  const std::size_t k = arity();
  for (std::size_t t = 0; t < items.size(); ++t) {
    for (std::size_t s = 0; s < k; ++s) {
      if (items[t][s] >= n)
        throw std::invalid_argument("TupleSet: index " + std::to_string(items[t][s]) +
                                    " out of range in tuple " + std::to_string(t));
    }
  }
}

}  // namespace dml
