#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>
#include <vector>

#include "dcal/cross_attention.hpp"
#include "doctest.h"

using namespace dcal;

namespace {

template <typename T>
EncoderBlockParams<T> random_block(int d, unsigned seed, double sigma = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, sigma);
  auto mat = [&](int r, int c) {
    Tensor<T> t({r, c}, T(0), true);
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    return t;
  };
  EncoderBlockParams<T> b;
  b.w_q = mat(d, d);
  b.w_k = mat(d, d);
  b.w_v = mat(d, d);
  b.w_o = mat(d, d);
  b.b_o = mat(1, d);
  b.w_ff1 = mat(d, 4 * d);
  b.b_ff1 = mat(1, 4 * d);
  b.w_ff2 = mat(4 * d, d);
  b.b_ff2 = mat(1, d);
  b.ln1_g = Tensor<T>({1, d}, T(1), true);
  b.ln1_b = mat(1, d);
  b.ln2_g = Tensor<T>({1, d}, T(1), true);
  b.ln2_b = mat(1, d);
  return b;
}

template <typename T>
Tensor<T> random_mat(int r, int c, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 0.5);
  Tensor<T> t({r, c});
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace

TEST_CASE("pwca with a duplicated pair halves weights, preserves output") {
  // K2 = K1, V2 = V1: joint softmax spreads each score over two identical
  // slots, so w'_ij = w_ij / 2 and the weighted sum is unchanged.
  for (unsigned seed = 0; seed < 100; ++seed) {
    auto q = random_mat<float>(3, 4, 3 * seed + 1);
    auto k = random_mat<float>(5, 4, 3 * seed + 2);
    auto v = random_mat<float>(5, 4, 3 * seed + 3);
    auto sa = scaled_dot_attention(q, k, v);
    auto pw = pwca(q, k, v, k, v);
    REQUIRE(pw.weights.cols() == 10);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 5; ++j) {
        CHECK(std::abs(pw.weights.at(i, j) - 0.5f * sa.weights.at(i, j)) < 1e-5f);
        CHECK(std::abs(pw.weights.at(i, j + 5) - 0.5f * sa.weights.at(i, j)) <
              1e-5f);
      }
    for (std::size_t i = 0; i < sa.output.numel(); ++i)
      CHECK(std::abs(pw.output.data()[i] - sa.output.data()[i]) < 1e-4f);
  }
}

TEST_CASE("pwca joint softmax rows span both sequences and sum to one") {
  auto q = random_mat<double>(2, 4, 11);
  auto k1 = random_mat<double>(3, 4, 12);
  auto v1 = random_mat<double>(3, 4, 13);
  auto k2 = random_mat<double>(6, 4, 14);
  auto v2 = random_mat<double>(6, 4, 15);
  auto r = pwca(q, k1, v1, k2, v2);
  REQUIRE(r.weights.cols() == 9);
  for (int i = 0; i < 2; ++i) {
    double s = 0;
    for (int j = 0; j < 9; ++j) s += r.weights.at(i, j);
    CHECK(s == doctest::Approx(1.0));
  }
  // One softmax, not two: the distractor shifts the target's own weights.
  auto solo = scaled_dot_attention(q, k1, v1);
  bool differs = false;
  for (int j = 0; j < 3; ++j)
    if (std::abs(r.weights.at(0, j) - solo.weights.at(0, j)) > 1e-6) differs = true;
  CHECK(differs);
}

TEST_CASE("pwca_block with a duplicate partner matches encoder_block closely") {
  const int d = 8;
  auto p = random_block<float>(d, 21, 0.1);
  auto x = random_mat<float>(5, d, 22);
  std::mt19937_64 r1(0), r2(0);
  auto plain = encoder_block(x, p, 2, 0.0f, true, r1);
  auto pw = pwca_block(x, x, p, 2, 0.0f, true, r2);
  for (std::size_t i = 0; i < plain.output.numel(); ++i)
    CHECK(std::abs(pw.output.data()[i] - plain.output.data()[i]) < 1e-4f);
}

TEST_CASE("pwca_block rejects width mismatch") {
  auto p = random_block<float>(4, 31);
  std::mt19937_64 rng(0);
  CHECK_THROWS_AS(pwca_block(random_mat<float>(3, 4, 1), random_mat<float>(3, 6, 2),
                             p, 2, 0.0f, true, rng),
                  std::invalid_argument);
}

TEST_CASE("pwca_block shares parameters observably") {
  // Perturbing the shared block changes both the plain and the pwca output;
  // both views alias the same storage.
  const int d = 4;
  auto p = random_block<float>(d, 41, 0.2);
  auto x = random_mat<float>(3, d, 42);
  auto partner = random_mat<float>(3, d, 43);
  std::mt19937_64 rng(0);
  auto before = pwca_block(x, partner, p, 2, 0.0f, true, rng).output;
  p.w_v.data()[0] += 0.5f;
  auto after = pwca_block(x, partner, p, 2, 0.0f, true, rng).output;
  bool changed = false;
  for (std::size_t i = 0; i < before.numel(); ++i)
    if (before.data()[i] != after.data()[i]) changed = true;
  CHECK(changed);
}

TEST_CASE("glca equals the shared kernel") {
  auto q = random_mat<double>(2, 4, 51);
  auto k = random_mat<double>(5, 4, 52);
  auto v = random_mat<double>(5, 4, 53);
  auto a = glca(q, k, v);
  auto b = scaled_dot_attention(q, k, v);
  for (std::size_t i = 0; i < a.output.numel(); ++i)
    CHECK(a.output.data()[i] == b.output.data()[i]);
}

TEST_CASE("glca_block extracts exactly the selected rows") {
  const int d = 8;
  auto p = random_block<float>(d, 61, 0.1);
  auto x = random_mat<float>(6, d, 62);
  LocalSelection sel;
  sel.indices = {0, 3, 5};
  auto out = glca_block(x, sel, p, 2);
  REQUIRE(out.output.rows() == 3);
  REQUIRE(out.output.cols() == d);
  // Row r of the output depends only on selection slot r: recompute with a
  // different selection sharing slot 0 and compare the CLS row.
  LocalSelection sel2;
  sel2.indices = {0, 1, 2, 3, 4, 5};
  auto out2 = glca_block(x, sel2, p, 2);
  for (int c = 0; c < d; ++c)
    CHECK(out.output.at(0, c) == doctest::Approx(out2.output.at(0, c)).epsilon(1e-5));
}

TEST_CASE("glca_block with every row selected matches a plain block sans drop") {
  // Selecting all rows in natural order makes gather a no-op, so the GLCA
  // block reduces to the standard pre-LN encoder block.
  const int d = 8;
  auto p = random_block<float>(d, 71, 0.1);
  auto x = random_mat<float>(5, d, 72);
  LocalSelection sel;
  sel.indices = {0, 1, 2, 3, 4};
  auto g = glca_block(x, sel, p, 2);
  std::mt19937_64 rng(0);
  auto e = encoder_block(x, p, 2, 0.0f, false, rng);
  for (std::size_t i = 0; i < g.output.numel(); ++i)
    CHECK(std::abs(g.output.data()[i] - e.output.data()[i]) < 1e-6f);
}

TEST_CASE("glca_block bounds-checks the selection") {
  auto p = random_block<float>(4, 81);
  auto x = random_mat<float>(3, 4, 82);
  LocalSelection sel;
  sel.indices = {0, 3};
  CHECK_THROWS_AS(glca_block(x, sel, p, 2), std::out_of_range);
  sel.indices = {-1};
  CHECK_THROWS_AS(glca_block(x, sel, p, 2), std::out_of_range);
}
