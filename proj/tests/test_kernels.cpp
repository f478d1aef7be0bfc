#include <omp.h>

#include <random>
#include <vector>

#include "dei2n/kernels.hpp"
#include "doctest.h"

using namespace dei2n::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("gemm computes a hand-checked product") {
  const std::vector<double> a{1, 2, 3, 4, 5, 6};     // 2x3
  const std::vector<double> b{7, 8, 9, 10, 11, 12};  // 3x2
  std::vector<double> c(4, 0.0);
  gemm(Trans::no, Trans::no, 2, 2, 3, a, b, c);
  CHECK(c == std::vector<double>{58, 64, 139, 154});
}

TEST_CASE("gemm accumulates into its output") {
  const std::vector<double> a{1, 0, 0, 1}, b{5, 6, 7, 8};
  std::vector<double> c{1, 1, 1, 1};
  gemm(Trans::no, Trans::no, 2, 2, 2, a, b, c);
  CHECK(c == std::vector<double>{6, 7, 8, 9});
}

TEST_CASE("blocked gemm matches the reference for every transpose combination") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng() % 41, n = 1 + rng() % 37, k = 1 + rng() % 45;
    const Trans ta = rng() % 2 ? Trans::yes : Trans::no;
    const Trans tb = rng() % 2 ? Trans::yes : Trans::no;
    const auto a = random_vector(m * k, rng), b = random_vector(k * n, rng);
    auto c = random_vector(m * n, rng);
    auto expected = c;
    gemm(ta, tb, m, n, k, a, b, c);
    reference::gemm(ta, tb, m, n, k, a, b, expected);
    for (std::size_t i = 0; i < c.size(); ++i) REQUIRE(c[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }
}

TEST_CASE("batched gemm matches the reference") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t batch = 1 + rng() % 6, m = 1 + rng() % 21, n = 1 + rng() % 21,
                      k = 1 + rng() % 21;
    const Trans ta = rng() % 2 ? Trans::yes : Trans::no;
    const Trans tb = rng() % 2 ? Trans::yes : Trans::no;
    const auto a = random_vector(batch * m * k, rng), b = random_vector(batch * k * n, rng);
    std::vector<double> c(batch * m * n, 0.0), expected = c;
    batched_gemm(batch, ta, tb, m, n, k, a, b, c);
    reference::batched_gemm(batch, ta, tb, m, n, k, a, b, expected);
    for (std::size_t i = 0; i < c.size(); ++i) REQUIRE(c[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }
}

TEST_CASE("large products are bit-identical for any thread count") {
  std::mt19937_64 rng(9);
  const std::size_t m = 300, n = 70, k = 110;
  const auto a = random_vector(m * k, rng), b = random_vector(k * n, rng);
  std::vector<double> serial(m * n, 0.0), parallel(m * n, 0.0);
  const int threads = omp_get_max_threads();
  omp_set_num_threads(1);
  gemm(Trans::no, Trans::yes, m, n, k, a, b, serial);
  omp_set_num_threads(threads < 4 ? 4 : threads);
  gemm(Trans::no, Trans::yes, m, n, k, a, b, parallel);
  omp_set_num_threads(threads);
  CHECK(serial == parallel);
}
