#pragma once

// Hot inner loops. Every kernel has a portable scalar reference in
// scalar.cpp and, on x86-64, an AVX2/FMA variant in avx2.cpp. The variant is
// picked once at first use from cpuid, overridable with GRIDCAST_ISA=scalar|avx2.
//
// All matrices are dense row-major with leading dimension equal to the
// column count.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace gridcast::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  const char* name;
  // C[M,N] (=|+=) A[M,K] * B[K,N]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                  bool accumulate);
  // C[M,N] (=|+=) A[M,K] * B[N,K]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                  bool accumulate);
  // C[M,N] (=|+=) A[K,M]^T * B[K,N]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                  bool accumulate);
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  double (*dot)(std::size_t n, const double* x, const double* y);
  // dst[i] = src[i] / 255 in float; bit-identical across variants.
  void (*u8_to_unit)(std::size_t n, const std::uint8_t* src, float* dst);
};

const KernelTable& scalar_kernels();

/// nullptr when the AVX2 variant was not compiled in or the CPU lacks AVX2+FMA.
const KernelTable* avx2_kernels();

bool cpu_supports_avx2();

/// The table every caller goes through.
const KernelTable& active();

/// Force a variant (tests, benchmarks). Throws ConfigError if unavailable.
void select(Isa isa);
Isa parse_isa(std::string_view name);

inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                    bool accumulate = false) {
  active().gemm_nn(m, n, k, a, b, c, accumulate);
}
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                    bool accumulate = false) {
  active().gemm_nt(m, n, k, a, b, c, accumulate);
}
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                    bool accumulate = false) {
  active().gemm_tn(m, n, k, a, b, c, accumulate);
}
inline void axpy(std::size_t n, double alpha, const double* x, double* y) { active().axpy(n, alpha, x, y); }
inline double dot(std::size_t n, const double* x, const double* y) { return active().dot(n, x, y); }
inline void u8_to_unit(std::size_t n, const std::uint8_t* src, float* dst) { active().u8_to_unit(n, src, dst); }

namespace detail {
extern const KernelTable avx2_table;
}

}  // namespace gridcast::kernels
