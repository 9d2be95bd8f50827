#pragma once

// Reference values computed by routes independent of the library code:
// truncated series, brute-force quadrature, and dense matrix algebra that
// the implementation never uses. Tests compare library output to these.

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <cstddef>
#include <vector>

namespace oracle {

// Bessel J_n by the ascending series sum_k (-1)^k / (k! (n+k)!) (x/2)^(2k+n),
// 25 terms: plenty for |x| < 5.
inline double bessel_j(int n, double x) {
  double term = 1.0;
  for (int i = 1; i <= n; ++i) term *= (x / 2.0) / i;  // (x/2)^n / n!
  double sum = term;
  for (int k = 1; k <= 25; ++k) {
    term *= -(x / 2.0) * (x / 2.0) / (k * (n + k));
    sum += term;
  }
  return sum;
}

// Plain O(N^2) DFT of a real series, no FFT involved.
inline std::vector<std::complex<double>> dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * j) / static_cast<double>(n);
      acc += x[j] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

// Fourier coefficient |c_m| of a periodic waveform via trapezoid quadrature
// over one period: c_m = (2/T) integral w(t) exp(-i 2 pi m t / T) dt.
template <typename F>
double fourier_mag(F&& w, double period, int m, int n_samples = 20000) {
  std::complex<double> acc = 0.0;
  for (int j = 0; j < n_samples; ++j) {
    const double t = period * (j + 0.5) / n_samples;
    const double ang = -2.0 * std::numbers::pi * m * t / period;
    acc += w(t) * std::complex<double>(std::cos(ang), std::sin(ang));
  }
  return 2.0 * std::abs(acc) / n_samples;
}

// --- dense 4x4 complex matrix helpers for the Liouvillian oracle ---

using C = std::complex<double>;
using Mat4 = std::array<C, 16>;  // row-major

inline Mat4 matmul(const Mat4& a, const Mat4& b) {
  Mat4 r{};
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) {
      const C aik = a[i * 4 + k];
      if (aik == C(0.0)) continue;
      for (int j = 0; j < 4; ++j) r[i * 4 + j] += aik * b[k * 4 + j];
    }
  return r;
}

inline Mat4 matadd(const Mat4& a, const Mat4& b, C sb = C(1.0)) {
  Mat4 r{};
  for (int i = 0; i < 16; ++i) r[i] = a[i] + sb * b[i];
  return r;
}

inline Mat4 identity4() {
  Mat4 r{};
  for (int i = 0; i < 4; ++i) r[i * 4 + i] = 1.0;
  return r;
}

inline double mat_norm1(const Mat4& a) {
  double best = 0.0;
  for (int j = 0; j < 4; ++j) {
    double col = 0.0;
    for (int i = 0; i < 4; ++i) col += std::abs(a[i * 4 + j]);
    best = std::max(best, col);
  }
  return best;
}

// exp(A) by scaling-and-squaring on a 12th-order Taylor sum.
inline Mat4 expm(Mat4 a) {
  int squarings = 0;
  double nrm = mat_norm1(a);
  while (nrm > 0.5) {
    for (auto& v : a) v *= 0.5;
    nrm *= 0.5;
    ++squarings;
  }
  Mat4 sum = identity4();
  Mat4 term = identity4();
  for (int k = 1; k <= 12; ++k) {
    term = matmul(term, a);
    for (auto& v : term) v /= static_cast<double>(k);
    sum = matadd(sum, term);
  }
  for (int s = 0; s < squarings; ++s) sum = matmul(sum, sum);
  return sum;
}

// Liouvillian for H = delta Sz - rabi Sx (S = sigma/2) with collapse
// channels L1 = sqrt(g1/2) sigma_minus and L2 = sqrt(g2/2) sigma_z in the
// convention drho/dt = -i[H,rho] + sum 2 L rho L+ - L+L rho - rho L+L.
// rho is vectorized row-major: v = (r00, r01, r10, r11), basis {e, g}.
// Superoperators: (A rho) -> (A kron I) v, (rho B) -> (I kron B^T) v.
inline Mat4 liouvillian(double delta, double rabi, double g1, double g2) {
  auto kron_left = [](const std::array<C, 4>& a2) {  // A kron I2
    Mat4 r{};
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int d = 0; d < 2; ++d) r[(2 * i + d) * 4 + (2 * j + d)] = a2[i * 2 + j];
    return r;
  };
  auto kron_right = [](const std::array<C, 4>& b2) {  // I2 kron B^T
    Mat4 r{};
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int d = 0; d < 2; ++d) r[(2 * d + j) * 4 + (2 * d + i)] = b2[i * 2 + j];
    return r;
  };
  auto dagger2 = [](const std::array<C, 4>& a2) {
    return std::array<C, 4>{std::conj(a2[0]), std::conj(a2[2]), std::conj(a2[1]),
                            std::conj(a2[3])};
  };
  auto mul2 = [](const std::array<C, 4>& a2, const std::array<C, 4>& b2) {
    return std::array<C, 4>{a2[0] * b2[0] + a2[1] * b2[2], a2[0] * b2[1] + a2[1] * b2[3],
                            a2[2] * b2[0] + a2[3] * b2[2], a2[2] * b2[1] + a2[3] * b2[3]};
  };

  const std::array<C, 4> h = {C(0.5 * delta), C(-0.5 * rabi), C(-0.5 * rabi), C(-0.5 * delta)};
  const std::array<C, 4> l1 = {C(0.0), C(0.0), C(std::sqrt(g1 / 2.0)), C(0.0)};  // sigma_minus
  const std::array<C, 4> l2 = {C(std::sqrt(g2 / 2.0)), C(0.0), C(0.0), C(-std::sqrt(g2 / 2.0))};

  Mat4 L = matadd(kron_left(h), kron_right(h), C(-1.0));
  for (auto& v : L) v *= C(0.0, -1.0);  // -i (H rho - rho H)
  for (const auto& l : {l1, l2}) {
    const auto ld = dagger2(l);
    const auto ldl = mul2(ld, l);
    // 2 L rho L+  ->  2 (L kron (L+)^T) ... build via kron_left(L) * kron_right(L+)
    Mat4 jump = matmul(kron_left(l), kron_right(ld));
    for (auto& v : jump) v *= 2.0;
    L = matadd(L, jump);
    L = matadd(L, kron_left(ldl), C(-1.0));
    L = matadd(L, kron_right(ldl), C(-1.0));
  }
  return L;
}

inline std::array<C, 4> apply4(const Mat4& m, const std::array<C, 4>& v) {
  std::array<C, 4> r{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) r[i] += m[i * 4 + j] * v[j];
  return r;
}

}  // namespace oracle
