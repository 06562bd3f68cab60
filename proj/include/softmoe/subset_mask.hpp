#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace softmoe {

/// A set of expert indices, stored sorted and unique.
class SubsetMask {
 public:
  SubsetMask() = default;
  /// Sorts and validates; duplicates are rejected.
  explicit SubsetMask(std::vector<std::size_t> indices);
  SubsetMask(std::initializer_list<std::size_t> indices)
      : SubsetMask(std::vector<std::size_t>(indices)) {}

  static SubsetMask full(std::size_t n);

  const std::vector<std::size_t>& indices() const noexcept { return indices_; }
  std::size_t k() const noexcept { return indices_.size(); }
  bool empty() const noexcept { return indices_.empty(); }
  bool contains(std::size_t j) const noexcept;

  /// Throws std::out_of_range if any index is >= n.
  void validate(std::size_t n) const;
  /// Dense membership flags of length n.
  std::vector<bool> membership(std::size_t n) const;

  std::string to_string() const;

  friend bool operator==(const SubsetMask&, const SubsetMask&) = default;
  friend auto operator<=>(const SubsetMask& a, const SubsetMask& b) {
    return a.indices_ <=> b.indices_;
  }

 private:
  std::vector<std::size_t> indices_;
};

}  // namespace softmoe
