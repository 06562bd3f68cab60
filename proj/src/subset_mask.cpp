#include "softmoe/subset_mask.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace softmoe {

SubsetMask::SubsetMask(std::vector<std::size_t> indices) : indices_(std::move(indices)) {
  std::sort(indices_.begin(), indices_.end());
  if (std::adjacent_find(indices_.begin(), indices_.end()) != indices_.end())
    throw std::invalid_argument("SubsetMask: duplicate expert index");
}

SubsetMask SubsetMask::full(std::size_t n) {
  std::vector<std::size_t> all(n);
  for (std::size_t j = 0; j < n; ++j) all[j] = j;
  return SubsetMask(std::move(all));
}

bool SubsetMask::contains(std::size_t j) const noexcept {
  return std::binary_search(indices_.begin(), indices_.end(), j);
}

void SubsetMask::validate(std::size_t n) const {
  if (!indices_.empty() && indices_.back() >= n)
    throw std::out_of_range("SubsetMask: expert index " + std::to_string(indices_.back()) +
                            " out of range for " + std::to_string(n) + " experts");
}

std::vector<bool> SubsetMask::membership(std::size_t n) const {
  validate(n);
  std::vector<bool> flags(n, false);
  for (std::size_t j : indices_) flags[j] = true;
  return flags;
}

std::string SubsetMask::to_string() const {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < indices_.size(); ++i) os << (i ? "," : "") << indices_[i];
  os << '}';
  return os.str();
}

}  // namespace softmoe
