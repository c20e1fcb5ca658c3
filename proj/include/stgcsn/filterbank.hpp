#pragma once

#include <span>
#include <vector>

#include "stgcsn/graph.hpp"

namespace stgcsn {

/// Dyadic diffusion wavelets H_j = P^(2^(j-1)) - P^(2^j), j = 1..J.
class WaveletBank {
 public:
  WaveletBank() = default;
  explicit WaveletBank(std::vector<Matrix> filters) : filters_(std::move(filters)) {}

  int scale_count() const { return static_cast<int>(filters_.size()); }
  /// 1-based scale index.
  const Matrix& filter(int j) const { return filters_.at(static_cast<std::size_t>(j - 1)); }
  std::span<const Matrix> filters() const { return filters_; }

 private:
  std::vector<Matrix> filters_;
};

WaveletBank build_wavelet_bank(const MarkovShift& shift, int j_max);

/// Wavelets from an explicit power chain (powers[k] = P^(2^k)); shared by
/// the fixed banks and the trainable shifts.
std::vector<Matrix> wavelets_from_powers(std::span<const Matrix> powers, int j_max);

struct PolynomialFilter {
  std::vector<double> coefficients;  // h_0 .. h_{P-1}
};

/// sum_p h_p S^p, evaluated by Horner's rule.
Matrix polynomial_matrix(const PolynomialFilter& filter, const Matrix& shift);

/// Per channel: h * z_c * g^T.
STSignal apply_st_filter(const Matrix& h, const Matrix& g, const STSignal& z);

STSignal apply_polynomial_filter(const PolynomialFilter& spatial, const PolynomialFilter& temporal,
                                 const Matrix& shift_s, const Matrix& shift_t, const STSignal& z);

}  // namespace stgcsn
