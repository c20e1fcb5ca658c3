#include "stgcsn/filterbank.hpp"

#include <cmath>
#include <string>

#include "stgcsn/error.hpp"

namespace stgcsn {

std::vector<Matrix> wavelets_from_powers(std::span<const Matrix> powers, int j_max) {
  if (j_max < 1) throw PreconditionError("wavelet bank: scale count must be >= 1");
  if (static_cast<int>(powers.size()) < j_max + 1) {
    throw PreconditionError("wavelet bank: need dyadic powers through 2^" + std::to_string(j_max) +
                            ", have " + std::to_string(powers.size()));
  }
  std::vector<Matrix> filters;
  filters.reserve(static_cast<std::size_t>(j_max));
  for (int j = 1; j <= j_max; ++j) {
    filters.push_back(powers[static_cast<std::size_t>(j - 1)] - powers[static_cast<std::size_t>(j)]);
  }
  return filters;
}

WaveletBank build_wavelet_bank(const MarkovShift& shift, int j_max) {
  return WaveletBank(wavelets_from_powers(shift.powers(), j_max));
}

Matrix polynomial_matrix(const PolynomialFilter& filter, const Matrix& shift) {
  if (filter.coefficients.empty()) throw PreconditionError("polynomial filter: no coefficients");
  if (shift.rows() != shift.cols()) throw ShapeError("polynomial filter: shift is not square");
  for (double c : filter.coefficients) {
    if (!std::isfinite(c)) throw PreconditionError("polynomial filter: non-finite coefficient");
  }
  const auto n = shift.rows();
  const auto& h = filter.coefficients;
  Matrix acc = h.back() * Matrix::Identity(n, n);
  for (auto it = h.rbegin() + 1; it != h.rend(); ++it) {
    acc = shift * acc;
    acc.diagonal().array() += *it;
  }
  return acc;
}

STSignal apply_st_filter(const Matrix& h, const Matrix& g, const STSignal& z) {
  if (h.rows() != h.cols() || g.rows() != g.cols() ||
      static_cast<std::size_t>(h.cols()) != z.rows() ||
      static_cast<std::size_t>(g.cols()) != z.cols()) {
    throw ShapeError("apply_st_filter: filters " + std::to_string(h.rows()) + "x" +
                     std::to_string(h.cols()) + ", " + std::to_string(g.rows()) + "x" +
                     std::to_string(g.cols()) + " do not match signal " +
                     std::to_string(z.rows()) + "x" + std::to_string(z.cols()));
  }
  std::vector<Matrix> out;
  out.reserve(z.channels());
  for (const auto& zc : z.data()) {
    Matrix hz = h * zc;
    out.push_back(hz * g.transpose());
  }
  return STSignal(std::move(out));
}

STSignal apply_polynomial_filter(const PolynomialFilter& spatial, const PolynomialFilter& temporal,
                                 const Matrix& shift_s, const Matrix& shift_t, const STSignal& z) {
  return apply_st_filter(polynomial_matrix(spatial, shift_s), polynomial_matrix(temporal, shift_t), z);
}

}  // namespace stgcsn
