#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "softmoe/datasets.hpp"
#include "softmoe/mnist.hpp"

using namespace softmoe;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("softmoe_datasets_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

IdxError::Reason load_failure(const fs::path& images, const fs::path& labels) {
  try {
    load_mnist_idx(images, labels);
  } catch (const IdxError& e) {
    return e.reason();
  }
  FAIL("expected an IdxError");
  return IdxError::Reason::Io;
}

}  // namespace

TEST_CASE("tokenization is row-major and checked") {
  const std::vector<double> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const Matrix a = tokenize_vector(v, 2, 5);
  CHECK(a(1, 0) == 5.0);
  const Matrix b = tokenize_vector(v, 5, 2);
  CHECK(b(2, 1) == 5.0);
  CHECK(flatten(b) == v);
  CHECK_THROWS_AS(tokenize_vector(v, 3, 3), ShapeError);
}

TEST_CASE("norm batches carry the euclidean norm as target") {
  RngStream s(1, "norm");
  NormTaskConfig cfg;
  cfg.batch_size = 4000;
  const auto batch = gen_norm_batch(cfg, s);
  REQUIRE(batch.inputs.size() == 4000);
  double sq = 0.0;
  for (std::size_t i = 0; i < batch.inputs.size(); ++i) {
    CHECK(batch.targets[i] == doctest::Approx(frobenius_norm(batch.inputs[i])).epsilon(1e-15));
    for (double x : batch.inputs[i].flat()) sq += x * x;
  }
  // variance 5 per coordinate
  CHECK(sq / (4000.0 * 10.0) == doctest::Approx(5.0).epsilon(0.03));
  cfg.tokens = 5;
  cfg.dim = 2;
  CHECK(gen_norm_batch(cfg, s).inputs.front().rows() == 5);
  cfg.dim = 3;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("cluster data is balanced, seeded and separable when clusters are tight") {
  RngStream m(2, "means");
  const auto cfg = make_cluster_config(5, 3, 4, 3.0, 0.1, 103, 50, m);
  RngStream a(3, "draw"), b(3, "draw");
  const auto [tr, te] = gen_cluster_dataset(cfg, a);
  const auto [tr2, te2] = gen_cluster_dataset(cfg, b);
  CHECK(tr.inputs == tr2.inputs);
  CHECK(te.labels == te2.labels);
  CHECK(tr.size() == 103);
  CHECK(te.size() == 50);
  std::vector<int> counts(5, 0);
  for (auto l : tr.labels) counts[l]++;
  for (int c : counts) CHECK((c == 20 || c == 21));
  CHECK(nearest_mean_accuracy(cfg, te) == 1.0);
}

TEST_CASE("cluster configs are validated") {
  RngStream m(4, "means");
  auto cfg = make_cluster_config(3, 2, 2, 1.0, 1.0, 10, 10, m);
  cfg.means[1] = cfg.means[0];
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.means.pop_back();
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("patchify splits 28x28 into four quadrant tokens") {
  std::vector<std::uint8_t> img(784);
  for (std::size_t r = 0; r < 28; ++r)
    for (std::size_t c = 0; c < 28; ++c) img[r * 28 + c] = static_cast<std::uint8_t>((r < 14 ? 0 : 2) + (c < 14 ? 0 : 1));
  const Matrix raw = patchify_image(img, false);
  REQUIRE(raw.rows() == 4);
  REQUIRE(raw.cols() == 196);
  for (std::size_t q = 0; q < 4; ++q)
    for (double v : raw.row(q)) REQUIRE(v == static_cast<double>(q));

  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<std::uint8_t>(i * 7);
  const Matrix p = patchify_image(img, false);
  CHECK(p(1, 0) == img[14]);     // TR starts at column 14
  CHECK(p(2, 0) == img[14 * 28]);  // BL starts at row 14
  CHECK(p(0, 14) == img[28]);    // second row of TL
  const auto back = unpatchify(p);
  for (std::size_t i = 0; i < img.size(); ++i) REQUIRE(back[i] == img[i]);

  img[0] = 255;
  CHECK(patchify_image(img)(0, 0) == 1.0);
  CHECK_THROWS_AS(patchify_image(std::vector<std::uint8_t>(100)), ShapeError);
}

TEST_CASE("idx files round trip through the loader") {
  const fs::path dir = scratch("roundtrip");
  std::vector<std::uint8_t> pixels(3 * 784);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<std::uint8_t>(i % 251);
  const std::vector<std::uint8_t> labels{7, 0, 9};
  write_bytes(dir / "img", encode_idx_images(3, 28, 28, pixels));
  write_bytes(dir / "lbl", encode_idx_labels(labels));

  const MnistStore store = load_mnist_idx(dir / "img", dir / "lbl");
  CHECK(store.count == 3);
  CHECK(store.pixels == pixels);
  CHECK(store.labels == labels);
  const LabeledSet set = mnist_to_labeled_set(store);
  CHECK(set.classes == 10);
  CHECK(set.labels[0] == 7);
  CHECK(set.inputs[2] == patchify_image(store.image(2)));
}

TEST_CASE("malformed idx files are reported by reason") {
  const fs::path dir = scratch("bad");
  std::vector<std::uint8_t> pixels(2 * 784, 1);
  const auto img = encode_idx_images(2, 28, 28, pixels);
  const auto lbl = encode_idx_labels(std::vector<std::uint8_t>{1, 2});
  write_bytes(dir / "img", img);
  write_bytes(dir / "lbl", lbl);

  CHECK(load_failure(dir / "missing", dir / "lbl") == IdxError::Reason::Io);
  CHECK(load_failure(dir / "lbl", dir / "lbl") == IdxError::Reason::WrongMagic);

  write_bytes(dir / "short", std::vector<std::uint8_t>(img.begin(), img.end() - 10));
  CHECK(load_failure(dir / "short", dir / "lbl") == IdxError::Reason::Truncated);
  write_bytes(dir / "tiny", std::vector<std::uint8_t>(img.begin(), img.begin() + 6));
  CHECK(load_failure(dir / "tiny", dir / "lbl") == IdxError::Reason::Truncated);

  write_bytes(dir / "three", encode_idx_labels(std::vector<std::uint8_t>{1, 2, 3}));
  CHECK(load_failure(dir / "img", dir / "three") == IdxError::Reason::CountMismatch);

  write_bytes(dir / "flat", encode_idx_images(2, 0, 28, {}));
  CHECK(load_failure(dir / "flat", dir / "lbl") == IdxError::Reason::BadDimensions);

  write_bytes(dir / "eleven", encode_idx_labels(std::vector<std::uint8_t>{1, 11}));
  const MnistStore store = load_mnist_idx(dir / "img", dir / "eleven");
  CHECK_THROWS_AS(mnist_to_labeled_set(store), IdxError);
}
