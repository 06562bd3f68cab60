#include "softmoe/mnist.hpp"

#include <fstream>
#include <iterator>
#include <string>

namespace softmoe {

namespace {

std::vector<std::uint8_t> read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IdxError(IdxError::Reason::Io, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t off,
                        const std::filesystem::path& p) {
  if (buf.size() < off + 4) throw IdxError(IdxError::Reason::Truncated, p.string() + ": truncated header");
  return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) |
         (std::uint32_t{buf[off + 2]} << 8) | std::uint32_t{buf[off + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void check_magic(std::uint32_t got, std::uint32_t want, const std::filesystem::path& p) {
  if (got != want)
    throw IdxError(IdxError::Reason::WrongMagic, p.string() + ": wrong magic " +
                                                     std::to_string(got) + " (expected " +
                                                     std::to_string(want) + ")");
}

}  // namespace

MnistStore load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto ib = read_all(images);
  const auto lb = read_all(labels);

  check_magic(read_be32(ib, 0, images), kIdxImagesMagic, images);
  check_magic(read_be32(lb, 0, labels), kIdxLabelsMagic, labels);

  MnistStore store;
  store.count = read_be32(ib, 4, images);
  store.rows = read_be32(ib, 8, images);
  store.cols = read_be32(ib, 12, images);
  if (store.rows == 0 || store.cols == 0)
    throw IdxError(IdxError::Reason::BadDimensions, images.string() + ": zero image dimension");
  const std::size_t label_count = read_be32(lb, 4, labels);
  if (label_count != store.count)
    throw IdxError(IdxError::Reason::CountMismatch,
                   "image count " + std::to_string(store.count) + " != label count " +
                       std::to_string(label_count));

  const std::size_t pixel_bytes = store.count * store.rows * store.cols;
  if (ib.size() < 16 + pixel_bytes)
    throw IdxError(IdxError::Reason::Truncated, images.string() + ": truncated pixel payload");
  if (lb.size() < 8 + label_count)
    throw IdxError(IdxError::Reason::Truncated, labels.string() + ": truncated label payload");

  store.pixels.assign(ib.begin() + 16, ib.begin() + 16 + static_cast<std::ptrdiff_t>(pixel_bytes));
  store.labels.assign(lb.begin() + 8, lb.begin() + 8 + static_cast<std::ptrdiff_t>(label_count));
  return store;
}

std::vector<std::uint8_t> encode_idx_images(std::size_t count, std::size_t rows, std::size_t cols,
                                            std::span<const std::uint8_t> pixels) {
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxImagesMagic);
  put_be32(out, static_cast<std::uint32_t>(count));
  put_be32(out, static_cast<std::uint32_t>(rows));
  put_be32(out, static_cast<std::uint32_t>(cols));
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxLabelsMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

Matrix patchify_image(std::span<const std::uint8_t> img, bool normalize) {
  constexpr std::size_t side = 28;
  constexpr std::size_t half = 14;
  if (img.size() != side * side)
    throw ShapeError("patchify_image: expected 784 pixels, got " + std::to_string(img.size()));
  const double scale = normalize ? 1.0 / 255.0 : 1.0;
  Matrix out(4, half * half);
  for (std::size_t q = 0; q < 4; ++q) {
    const std::size_t r0 = (q / 2) * half;
    const std::size_t c0 = (q % 2) * half;
    for (std::size_t r = 0; r < half; ++r)
      for (std::size_t c = 0; c < half; ++c)
        out(q, r * half + c) = scale * img[(r0 + r) * side + c0 + c];
  }
  return out;
}

std::vector<double> unpatchify(const Matrix& patches) {
  constexpr std::size_t side = 28;
  constexpr std::size_t half = 14;
  if (patches.rows() != 4 || patches.cols() != half * half)
    throw ShapeError("unpatchify: expected 4x196, got " + patches.shape_str());
  std::vector<double> img(side * side);
  for (std::size_t q = 0; q < 4; ++q) {
    const std::size_t r0 = (q / 2) * half;
    const std::size_t c0 = (q % 2) * half;
    for (std::size_t r = 0; r < half; ++r)
      for (std::size_t c = 0; c < half; ++c) img[(r0 + r) * side + c0 + c] = patches(q, r * half + c);
  }
  return img;
}

LabeledSet mnist_to_labeled_set(const MnistStore& store, bool normalize) {
  LabeledSet set;
  set.classes = 10;
  set.inputs.reserve(store.count);
  for (std::size_t i = 0; i < store.count; ++i) {
    if (store.labels[i] > 9)
      throw IdxError(IdxError::Reason::BadLabel, "label " + std::to_string(store.labels[i]) + " at index " +
                                                     std::to_string(i) + " is not a digit");
    set.inputs.push_back(patchify_image(store.image(i), normalize));
    set.labels.push_back(store.labels[i]);
  }
  return set;
}

}  // namespace softmoe
