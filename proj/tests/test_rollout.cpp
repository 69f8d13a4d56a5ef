#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>
#include <vector>

#include "dcal/rollout.hpp"
#include "doctest.h"

using namespace dcal;

namespace {

Tensor<double> row_stochastic(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Tensor<double> s({n, n});
  for (int i = 0; i < n; ++i) {
    double sum = 0;
    for (int j = 0; j < n; ++j) sum += (s.at(i, j) = u(rng));
    for (int j = 0; j < n; ++j) s.at(i, j) /= sum;
  }
  return s;
}

}  // namespace

TEST_CASE("renormalize: 0.5 S + 0.5 I, rows stay stochastic") {
  auto s = Tensor<double>::from_data({2, 2}, {0.8, 0.2, 0.4, 0.6});
  auto r = renormalize(s);
  CHECK(r.at(0, 0) == doctest::Approx(0.9));
  CHECK(r.at(0, 1) == doctest::Approx(0.1));
  CHECK(r.at(1, 0) == doctest::Approx(0.2));
  CHECK(r.at(1, 1) == doctest::Approx(0.8));
  CHECK_THROWS_AS(renormalize(Tensor<double>({2, 3})), std::invalid_argument);
}

TEST_CASE("rollout: one layer is the layer itself") {
  auto s = row_stochastic(4, 1);
  auto m = rollout<double>({s});
  CHECK(m.layer_index == 1);
  for (std::size_t i = 0; i < s.numel(); ++i)
    CHECK(m.s_hat.data()[i] == s.data()[i]);
}

TEST_CASE("rollout: newest factor is leftmost") {
  // A maps everything to row 0's distribution only if multiplied on the left.
  auto a = Tensor<double>::from_data({2, 2}, {0.0, 1.0, 1.0, 0.0});  // swap
  auto b = Tensor<double>::from_data({2, 2}, {0.9, 0.1, 0.3, 0.7});
  // layers = {b (layer 1), a (layer 2)} -> S_hat = a * b.
  auto m = rollout<double>({b, a});
  CHECK(m.layer_index == 2);
  CHECK(m.s_hat.at(0, 0) == doctest::Approx(0.3));
  CHECK(m.s_hat.at(0, 1) == doctest::Approx(0.7));
  CHECK(m.s_hat.at(1, 0) == doctest::Approx(0.9));
  CHECK(m.s_hat.at(1, 1) == doctest::Approx(0.1));
}

TEST_CASE("rollout of row-stochastic factors is row-stochastic") {
  std::vector<Tensor<double>> layers;
  for (int l = 0; l < 4; ++l) layers.push_back(renormalize(row_stochastic(5, 10 + l)));
  auto m = rollout(layers);
  for (int i = 0; i < 5; ++i) {
    double s = 0;
    for (int j = 0; j < 5; ++j) s += m.s_hat.at(i, j);
    CHECK(s == doctest::Approx(1.0));
  }
}

TEST_CASE("rollout validates input") {
  CHECK_THROWS_AS(rollout<double>({}), std::invalid_argument);
  CHECK_THROWS_AS(rollout<double>({row_stochastic(3, 1), row_stochastic(4, 2)}),
                  std::invalid_argument);
}

TEST_CASE("cls_response drops the CLS-to-CLS entry") {
  RolloutMap<double> m;
  m.s_hat = Tensor<double>::from_data({3, 3}, {0.5, 0.3, 0.2,
                                               0.1, 0.8, 0.1,
                                               0.2, 0.2, 0.6});
  auto r = cls_response(m);
  REQUIRE(r.size() == 2);
  CHECK(r[0] == doctest::Approx(0.3));
  CHECK(r[1] == doctest::Approx(0.2));
}

TEST_CASE("select_local_queries: k = max(1, floor(R*N)), CLS prepended") {
  std::vector<double> resp{0.1, 0.9, 0.4, 0.3};
  auto sel = select_local_queries(resp, 0.5);  // k = 2
  REQUIRE(sel.indices.size() == 3);
  CHECK(sel.indices[0] == 0);
  CHECK(sel.indices[1] == 2);  // patch 1 -> token row 2
  CHECK(sel.indices[2] == 3);  // patch 2 -> token row 3
  // Tiny ratio still selects one patch.
  auto one = select_local_queries(resp, 0.01);
  REQUIRE(one.indices.size() == 2);
  CHECK(one.indices[1] == 2);
  // Full ratio selects everything in response order.
  auto full = select_local_queries(resp, 1.0);
  REQUIRE(full.indices.size() == 5);
  CHECK(full.indices == std::vector<int>{0, 2, 3, 4, 1});
}

TEST_CASE("select_local_queries: ties break toward the lower index") {
  std::vector<double> resp{0.1, 0.5, 0.3, 0.5};
  auto sel = select_local_queries(resp, 0.5);  // k = 2, both 0.5s
  REQUIRE(sel.indices.size() == 3);
  CHECK(sel.indices[1] == 2);  // patch 1 beats patch 3 on the tie
  CHECK(sel.indices[2] == 4);
}

TEST_CASE("select_local_queries validates arguments") {
  CHECK_THROWS_AS(select_local_queries({0.5}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(select_local_queries({0.5}, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(select_local_queries({}, 0.5), std::invalid_argument);
}

TEST_CASE("selection carries ratio and responses for export") {
  std::vector<double> resp{0.2, 0.7};
  auto sel = select_local_queries(resp, 1.0);
  CHECK(sel.ratio == 1.0);
  CHECK(sel.responses == resp);
}
