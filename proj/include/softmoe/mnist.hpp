#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "softmoe/datasets.hpp"
#include "softmoe/tensor.hpp"

namespace softmoe {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;  // 2051
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;  // 2049

class IdxError : public std::runtime_error {
 public:
  enum class Reason { Io, WrongMagic, BadDimensions, Truncated, CountMismatch, BadLabel };
  IdxError(Reason reason, const std::string& msg) : std::runtime_error(msg), reason_(reason) {}
  Reason reason() const noexcept { return reason_; }

 private:
  Reason reason_;
};

struct MnistStore {
  std::size_t count = 0;
  std::size_t rows = 28;
  std::size_t cols = 28;
  std::vector<std::uint8_t> pixels;  // count * rows * cols
  std::vector<std::uint8_t> labels;

  std::span<const std::uint8_t> image(std::size_t i) const {
    return {pixels.data() + i * rows * cols, rows * cols};
  }
};

/// Parses a big-endian IDX image/label file pair.
MnistStore load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Raw encoders, used for fixtures.
std::vector<std::uint8_t> encode_idx_images(std::size_t count, std::size_t rows, std::size_t cols,
                                            std::span<const std::uint8_t> pixels);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);

/// 28x28 image -> 4 tokens of 196: quadrants TL, TR, BL, BR, each row-major.
/// With normalize, pixels are scaled to [0, 1].
Matrix patchify_image(std::span<const std::uint8_t> img, bool normalize = true);
/// Inverse of patchify_image on an unnormalized patch matrix.
std::vector<double> unpatchify(const Matrix& patches);

/// Whole store as a 10-class labelled set of patch matrices.
LabeledSet mnist_to_labeled_set(const MnistStore& store, bool normalize = true);

}  // namespace softmoe
