#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <vector>

#include "dcal/embedding.hpp"
#include "doctest.h"

using namespace dcal;

namespace {

ImageSample ramp_image(int w, int h, int ch) {
  ImageSample img;
  img.width = w;
  img.height = h;
  img.channels = ch;
  img.pixels.resize(static_cast<std::size_t>(w) * h * ch);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = static_cast<float>(i) / static_cast<float>(img.pixels.size());
  return img;
}

}  // namespace

TEST_CASE("patchify: 2x2 image with 1x1 patches is the pixel list") {
  ImageSample img;
  img.width = 2;
  img.height = 2;
  img.channels = 1;
  img.pixels = {0.1f, 0.2f, 0.3f, 0.4f};
  auto p = patchify<double>(img, 1);
  REQUIRE(p.rows() == 4);
  REQUIRE(p.cols() == 1);
  CHECK(p.at(0, 0) == doctest::Approx(0.1));
  CHECK(p.at(1, 0) == doctest::Approx(0.2));
  CHECK(p.at(2, 0) == doctest::Approx(0.3));
  CHECK(p.at(3, 0) == doctest::Approx(0.4));
}

TEST_CASE("patchify: index arithmetic oracle on an 8x4 grayscale image") {
  // 8 wide, 4 tall, patch 4 -> grid 1x2; patch row index gr*cols+gc.
  ImageSample img = ramp_image(8, 4, 1);
  auto p = patchify<float>(img, 4);
  REQUIRE(p.rows() == 2);
  REQUIRE(p.cols() == 16);
  // Patch (gr=0, gc=1), inner (pr=2, pc=3) -> pixel (row 2, col 7).
  const int k = 2 * 4 + 3;
  CHECK(p.at(1, k) == img.pixels[2 * 8 + 7]);
  // Patch 0, inner (0,0) is pixel (0,0).
  CHECK(p.at(0, 0) == img.pixels[0]);
}

TEST_CASE("patchify: RGB channels stay interleaved per pixel") {
  ImageSample img = ramp_image(4, 4, 3);
  auto p = patchify<float>(img, 2);
  REQUIRE(p.rows() == 4);
  REQUIRE(p.cols() == 12);
  // Patch (1,1) covers pixel rows 2..3, cols 2..3. Inner (1,0) channel 2
  // -> pixel (3,2) channel 2 -> flat ((3*4)+2)*3+2.
  const int k = (1 * 2 + 0) * 3 + 2;
  CHECK(p.at(3, k) == img.pixels[(3 * 4 + 2) * 3 + 2]);
}

TEST_CASE("patchify rejects bad geometry") {
  ImageSample img = ramp_image(6, 4, 1);
  CHECK_THROWS_AS(patchify<float>(img, 4), std::invalid_argument);
  CHECK_THROWS_AS(patchify<float>(img, 0), std::invalid_argument);
  img.pixels.pop_back();
  CHECK_THROWS_AS(patchify<float>(img, 2), std::invalid_argument);
}

TEST_CASE("unpatchify inverts patchify") {
  for (int ch : {1, 3}) {
    ImageSample img = ramp_image(8, 8, ch);
    auto p = patchify<float>(img, 4);
    auto rec = unpatchify(p, 2, 2, 4, ch);
    REQUIRE(rec.size() == img.pixels.size());
    for (std::size_t i = 0; i < rec.size(); ++i) CHECK(rec[i] == img.pixels[i]);
  }
}

TEST_CASE("embed_tokens: class token first, projection plus positions") {
  // 2 patches of width 2, D = 2. Identity-ish projection for a hand oracle.
  auto patches = Tensor<double>::from_data({2, 2}, {1, 2, 3, 4});
  auto w = Tensor<double>::from_data({2, 2}, {1, 0, 0, 1});
  auto cls = Tensor<double>::from_data({1, 2}, {10, 20});
  auto pos = Tensor<double>::from_data({3, 2}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  auto seq = embed_tokens(patches, w, cls, pos, 1, 2);
  REQUIRE(seq.tokens.rows() == 3);
  REQUIRE(seq.tokens.cols() == 2);
  CHECK(seq.tokens.at(0, 0) == doctest::Approx(10.1));
  CHECK(seq.tokens.at(0, 1) == doctest::Approx(20.2));
  CHECK(seq.tokens.at(1, 0) == doctest::Approx(1.3));
  CHECK(seq.tokens.at(2, 1) == doctest::Approx(4.6));
  CHECK(seq.patch_count() == 2);
}

TEST_CASE("embed_tokens validates shapes") {
  auto patches = Tensor<double>({2, 3});
  auto w = Tensor<double>({2, 4});  // mismatched inner dim
  auto cls = Tensor<double>({1, 4});
  auto pos = Tensor<double>({3, 4});
  CHECK_THROWS_AS(embed_tokens(patches, w, cls, pos, 1, 2), std::invalid_argument);
  auto w_ok = Tensor<double>({3, 4});
  CHECK_THROWS_AS(embed_tokens(patches, w_ok, Tensor<double>({2, 4}), pos, 1, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(embed_tokens(patches, w_ok, cls, Tensor<double>({4, 4}), 1, 2),
                  std::invalid_argument);
}

TEST_CASE("embed_tokens participates in the autodiff graph") {
  auto patches = Tensor<float>::from_data({2, 2}, {1, 2, 3, 4});
  auto w = Tensor<float>::from_data({2, 2}, {1, 0, 0, 1}, true);
  auto cls = Tensor<float>({1, 2}, 0.f, true);
  auto pos = Tensor<float>({3, 2}, 0.f, true);
  auto seq = embed_tokens(patches, w, cls, pos, 1, 2);
  auto loss = sum_all(seq.tokens);
  backward(loss);
  // d(sum)/d(pos) is all ones; d/d(cls) likewise.
  for (float g : pos.grad_data()) CHECK(g == 1.0f);
  for (float g : cls.grad_data()) CHECK(g == 1.0f);
  // d/dW column sums of patches: each W column sees sum of patch col = 1+3, 2+4.
  CHECK(w.grad_data()[0] == doctest::Approx(4.0f));
  CHECK(w.grad_data()[2] == doctest::Approx(6.0f));
}
