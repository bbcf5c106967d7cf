#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "gridcast/error.hpp"
#include "gridcast/kernels/kernels.hpp"

using namespace gridcast;
using kernels::KernelTable;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Naive triple loop with explicit index maps; the oracle for all three layouts.
void naive_gemm(std::size_t m, std::size_t n, std::size_t k, const std::vector<double>& a, bool ta,
                const std::vector<double>& b, bool tb, std::vector<double>& c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      long double s = accumulate ? c[i * n + j] : 0.0L;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta ? a[p * m + i] : a[i * k + p];
        const double bv = tb ? b[j * k + p] : b[p * n + j];
        s += static_cast<long double>(av) * bv;
      }
      c[i * n + j] = static_cast<double>(s);
    }
  }
}

std::vector<const KernelTable*> tables() {
  std::vector<const KernelTable*> t{&kernels::scalar_kernels()};
  if (auto* a = kernels::avx2_kernels()) t.push_back(a);
  return t;
}

}  // namespace

TEST_CASE("every compiled gemm variant matches the naive loop") {
  std::mt19937_64 rng(11);
  const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {4, 8, 16}, {5, 13, 9}, {17, 3, 33}, {8, 40, 1}};
  for (const auto* t : tables()) {
    CAPTURE(t->name);
    for (const auto& s : shapes) {
      const std::size_t m = s[0], n = s[1], k = s[2];
      const auto a = random_vec(m * k, rng);
      const auto b = random_vec(k * n, rng);
      const auto init = random_vec(m * n, rng);
      for (bool acc : {false, true}) {
        std::vector<double> want = init, got = init;
        naive_gemm(m, n, k, a, false, b, false, want, acc);
        t->gemm_nn(m, n, k, a.data(), b.data(), got.data(), acc);
        for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

        want = init, got = init;
        naive_gemm(m, n, k, a, false, b, true, want, acc);
        t->gemm_nt(m, n, k, a.data(), b.data(), got.data(), acc);
        for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

        want = init, got = init;
        naive_gemm(m, n, k, a, true, b, false, want, acc);
        t->gemm_tn(m, n, k, a.data(), b.data(), got.data(), acc);
        for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("simd variant agrees with the scalar reference") {
  const auto* simd = kernels::avx2_kernels();
  if (simd == nullptr) {
    MESSAGE("AVX2 variant unavailable on this machine; equivalence not exercised");
    return;
  }
  const auto& ref = kernels::scalar_kernels();
  std::mt19937_64 rng(5);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 16u, 31u, 100u, 1027u}) {
    const auto x = random_vec(n, rng);
    auto y1 = random_vec(n, rng);
    auto y2 = y1;
    ref.axpy(n, 0.37, x.data(), y1.data());
    simd->axpy(n, 0.37, x.data(), y2.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(y2[i] == doctest::Approx(y1[i]).epsilon(1e-15));
    CHECK(simd->dot(n, x.data(), y1.data()) == doctest::Approx(ref.dot(n, x.data(), y1.data())).epsilon(1e-12));
  }
  // The byte conversion is exact, so the variants must be bit-identical.
  std::vector<std::uint8_t> src(1000);
  for (std::size_t i = 0; i < src.size(); ++i) src[i] = static_cast<std::uint8_t>((i * 37) & 0xff);
  std::vector<float> a(src.size()), b(src.size());
  ref.u8_to_unit(src.size(), src.data(), a.data());
  simd->u8_to_unit(src.size(), src.data(), b.data());
  CHECK(a == b);
}

TEST_CASE("u8_to_unit is raw / 255 in float") {
  std::vector<std::uint8_t> src(256);
  for (int i = 0; i < 256; ++i) src[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i);
  std::vector<float> dst(256);
  kernels::scalar_kernels().u8_to_unit(256, src.data(), dst.data());
  for (int i = 0; i < 256; ++i) CHECK(dst[static_cast<std::size_t>(i)] == static_cast<float>(i) / 255.0f);
  CHECK(dst[0] == 0.0f);
  CHECK(dst[255] == 1.0f);
}

TEST_CASE("dispatch selection") {
  CHECK(kernels::parse_isa("scalar") == kernels::Isa::scalar);
  CHECK(kernels::parse_isa("avx2") == kernels::Isa::avx2);
  CHECK_THROWS_AS(kernels::parse_isa("sse9"), ConfigError);
  const auto before = kernels::active().isa;
  kernels::select(kernels::Isa::scalar);
  CHECK(kernels::active().isa == kernels::Isa::scalar);
  if (kernels::avx2_kernels()) {
    kernels::select(kernels::Isa::avx2);
    CHECK(kernels::active().isa == kernels::Isa::avx2);
  } else {
    CHECK_THROWS_AS(kernels::select(kernels::Isa::avx2), ConfigError);
  }
  kernels::select(before);
}
