#pragma once

// Dense row-major matrix kernels used by the differentiation engine.
//
// Every kernel accumulates into its output (C += op(A) * op(B)); callers
// zero the destination first when they want a plain product. Two
// implementations exist:
//   dei2n::kernels::reference  straightforward triple loops, serial
//   dei2n::kernels             register-blocked, OpenMP-parallel
// The reference versions are kept for the kernel tests and the benchmark.
//
// Parallel kernels split work by output rows (or by batch item), so every
// output element is summed in the same order regardless of thread count.

#include <cstddef>
#include <span>

namespace dei2n::kernels {

enum class Trans { no, yes };

/// C[m x n] += op(A) * op(B), where op(A) is m x k and op(B) is k x n.
/// With Trans::yes, A is stored k x m (resp. B stored n x k).
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c);

/// `batch` independent gemms over contiguous, equally sized slices.
void batched_gemm(std::size_t batch, Trans trans_a, Trans trans_b, std::size_t m,
                  std::size_t n, std::size_t k, std::span<const double> a,
                  std::span<const double> b, std::span<double> c);

/// Number of OpenMP threads the parallel kernels will use.
int max_threads();

namespace reference {

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c);

void batched_gemm(std::size_t batch, Trans trans_a, Trans trans_b, std::size_t m,
                  std::size_t n, std::size_t k, std::span<const double> a,
                  std::span<const double> b, std::span<double> c);

}  // namespace reference

}  // namespace dei2n::kernels
