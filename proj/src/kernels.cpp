#include "dei2n/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cassert>
#include <vector>

namespace dei2n::kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = std::size_t{1} << 16;

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kLanes = 4;
constexpr std::size_t kVecs = 3;
constexpr std::size_t kColBlock = kLanes * kVecs;

typedef double Vec __attribute__((vector_size(kLanes * sizeof(double)), aligned(8), may_alias));

void check_sizes(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
                 std::span<const double> b, std::span<double> c) {
  assert(a.size() >= m * k);
  assert(b.size() >= k * n);
  assert(c.size() >= m * n);
  (void)m, (void)n, (void)k, (void)a, (void)b, (void)c;
}

// op(B) packed into column panels of width kColBlock, each k x kColBlock
// row-major and zero-padded on the right.
struct PackedB {
  std::vector<double> data;
  std::size_t panels = 0;
};

void pack_b(Trans tb, std::size_t n, std::size_t k, const double* b, PackedB& out) {
  out.panels = (n + kColBlock - 1) / kColBlock;
  out.data.assign(out.panels * k * kColBlock, 0.0);
  for (std::size_t panel = 0; panel < out.panels; ++panel) {
    double* dst = out.data.data() + panel * k * kColBlock;
    const std::size_t j0 = panel * kColBlock, width = std::min(kColBlock, n - j0);
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t q = 0; q < width; ++q)
        dst[p * kColBlock + q] = tb == Trans::yes ? b[(j0 + q) * k + p] : b[p * n + j0 + q];
  }
}

// C[begin..end) += op(A) * op(B). A(i, p) lives at a[i * row_stride + p * col_stride].
void rows_kernel(std::size_t begin, std::size_t end, std::size_t n, std::size_t k,
                 const double* a, std::size_t row_stride, std::size_t col_stride,
                 const PackedB& packed, double* c) {
  std::size_t i = begin;
  for (; i + kRowBlock <= end; i += kRowBlock) {
    for (std::size_t panel = 0; panel < packed.panels; ++panel) {
      const double* bp = packed.data.data() + panel * k * kColBlock;
      Vec acc[kRowBlock][kVecs] = {};
      for (std::size_t p = 0; p < k; ++p) {
        const Vec* brow = reinterpret_cast<const Vec*>(bp + p * kColBlock);
        const Vec b0 = brow[0], b1 = brow[1], b2 = brow[2];
        for (std::size_t r = 0; r < kRowBlock; ++r) {
          const double av = a[(i + r) * row_stride + p * col_stride];
          acc[r][0] += av * b0;
          acc[r][1] += av * b1;
          acc[r][2] += av * b2;
        }
      }
      const std::size_t j0 = panel * kColBlock, width = std::min(kColBlock, n - j0);
      for (std::size_t r = 0; r < kRowBlock; ++r) {
        double* ci = c + (i + r) * n + j0;
        for (std::size_t q = 0; q < width; ++q) ci[q] += acc[r][q / kLanes][q % kLanes];
      }
    }
  }
  for (; i < end; ++i) {
    for (std::size_t panel = 0; panel < packed.panels; ++panel) {
      const double* bp = packed.data.data() + panel * k * kColBlock;
      Vec acc[kVecs] = {};
      for (std::size_t p = 0; p < k; ++p) {
        const Vec* brow = reinterpret_cast<const Vec*>(bp + p * kColBlock);
        const double av = a[i * row_stride + p * col_stride];
        for (std::size_t v = 0; v < kVecs; ++v) acc[v] += av * brow[v];
      }
      const std::size_t j0 = panel * kColBlock, width = std::min(kColBlock, n - j0);
      double* ci = c + i * n + j0;
      for (std::size_t q = 0; q < width; ++q) ci[q] += acc[q / kLanes][q % kLanes];
    }
  }
}

void gemm_serial(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
                 const double* a, const double* b, double* c, PackedB& scratch) {
  pack_b(tb, n, k, b, scratch);
  if (ta == Trans::yes)
    rows_kernel(0, m, n, k, a, 1, m, scratch, c);
  else
    rows_kernel(0, m, n, k, a, k, 1, scratch, c);
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c) {
  check_sizes(m, n, k, a, b, c);
  if (m == 0 || n == 0 || k == 0) return;

  PackedB packed;
  pack_b(tb, n, k, b.data(), packed);
  const std::size_t row_stride = ta == Trans::yes ? 1 : k;
  const std::size_t col_stride = ta == Trans::yes ? m : 1;

  const std::size_t blocks = (m + kRowBlock - 1) / kRowBlock;
  const bool parallel = m * n * k >= kParallelWork && blocks > 1;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const std::size_t begin = blk * kRowBlock;
    const std::size_t end = std::min(m, begin + kRowBlock);
    rows_kernel(begin, end, n, k, a.data(), row_stride, col_stride, packed, c.data());
  }
}

void batched_gemm(std::size_t batch, Trans ta, Trans tb, std::size_t m, std::size_t n,
                  std::size_t k, std::span<const double> a, std::span<const double> b,
                  std::span<double> c) {
  assert(a.size() >= batch * m * k && b.size() >= batch * k * n && c.size() >= batch * m * n);
  if (batch == 0 || m == 0 || n == 0 || k == 0) return;
  const bool parallel = batch * m * n * k >= kParallelWork && batch > 1;
#pragma omp parallel if (parallel)
  {
    PackedB scratch;
#pragma omp for schedule(static)
    for (std::size_t i = 0; i < batch; ++i)
      gemm_serial(ta, tb, m, n, k, a.data() + i * m * k, b.data() + i * k * n,
                  c.data() + i * m * n, scratch);
  }
}

namespace reference {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c) {
  check_sizes(m, n, k, a, b, c);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta == Trans::yes ? a[p * m + i] : a[i * k + p];
        const double bv = tb == Trans::yes ? b[j * k + p] : b[p * n + j];
        s += av * bv;
      }
      c[i * n + j] += s;
    }
}

void batched_gemm(std::size_t batch, Trans ta, Trans tb, std::size_t m, std::size_t n,
                  std::size_t k, std::span<const double> a, std::span<const double> b,
                  std::span<double> c) {
  for (std::size_t i = 0; i < batch; ++i)
    reference::gemm(ta, tb, m, n, k, a.subspan(i * m * k, m * k), b.subspan(i * k * n, k * n),
         c.subspan(i * m * n, m * n));
}

}  // namespace reference

}  // namespace dei2n::kernels
