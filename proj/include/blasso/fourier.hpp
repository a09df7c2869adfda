#pragma once

#include <blasso/model.hpp>

#include <complex>
#include <numbers>

namespace blasso {

using ComplexVector = Eigen::VectorXcd;

/// Real Fourier measurements on the 1-D torus up to cut-off frequency f_c:
/// phi(x) = (1, sqrt2 sin(2 pi l x)_{l=1..f_c}, sqrt2 cos(2 pi l x)_{l=1..f_c}).
class FourierModel final : public ForwardModel {
 public:
  explicit FourierModel(int cutoff)
      : ForwardModel(2 * checked(cutoff) + 1, DomainSpec::torus(1), Smoothness::Exact), fc_(cutoff) {}

  int cutoff() const { return fc_; }

  /// m-th derivative of every feature coordinate at x (m = 0 gives phi).
  Vector derivative(double x, int order) const {
    Vector out(n());
    out[0] = order == 0 ? 1.0 : 0.0;
    const double shift = order * std::numbers::pi / 2;
    for (int l = 1; l <= fc_; ++l) {
      const double w = 2 * std::numbers::pi * l;
      const double scale = std::numbers::sqrt2 * std::pow(w, order);
      out[l] = scale * std::sin(w * x + shift);
      out[fc_ + l] = scale * std::cos(w * x + shift);
    }
    return out;
  }

  Vector feature(const Point& x) const override { return derivative(x[0], 0); }

  Matrix jacobian(const Point& x) const override { return derivative(x[0], 1); }

  std::vector<Matrix> hessian(const Point& x) const override {
    const Vector h = derivative(x[0], 2);
    std::vector<Matrix> out(static_cast<std::size_t>(n()), Matrix(1, 1));
    for (int i = 0; i < n(); ++i) out[static_cast<std::size_t>(i)](0, 0) = h[i];
    return out;
  }

  Matrix hessian_contract(const Point& x, const Vector& p) const override {
    return Matrix::Constant(1, 1, derivative(x[0], 2).dot(p));
  }

  /// Upper bound of |eta^{(order)}| over the torus for eta = <phi, p>.
  double derivative_bound(const Vector& p, int order) const {
    double acc = order == 0 ? std::abs(p[0]) : 0.0;
    for (int l = 1; l <= fc_; ++l) {
      const double w = 2 * std::numbers::pi * l;
      acc += std::numbers::sqrt2 * std::pow(w, order) * std::hypot(p[l], p[fc_ + l]);
    }
    return acc;
  }

 private:
  static int checked(int fc) {
    if (fc < 0) throw ArgumentError("cut-off frequency must be >= 0");
    return fc;
  }

  int fc_;
};

inline std::shared_ptr<const FourierModel> build_fourier_model(int cutoff) {
  return std::make_shared<const FourierModel>(cutoff);
}

/// Complex Fourier coefficients (int e^{-2 i pi l x} dm(x)) for l = -f_c..f_c,
/// stored at index l + f_c.
inline ComplexVector fourier_coefficients(int cutoff, const DiscreteMeasure& m) {
  ComplexVector out = ComplexVector::Zero(2 * cutoff + 1);
  for (int j = 0; j < m.size(); ++j) {
    for (int l = -cutoff; l <= cutoff; ++l) {
      const double theta = -2 * std::numbers::pi * l * m.positions[j][0];
      out[l + cutoff] += m.amplitudes[j] * std::complex<double>(std::cos(theta), std::sin(theta));
    }
  }
  return out;
}

enum class MapDirection { ComplexToReal, RealToComplex };

/// Unitary change of basis between complex exponential coefficients
/// (index l + f_c for l = -f_c..f_c) and the real feature ordering
/// (constant, sines, cosines). ComplexToReal maps fourier_coefficients(m)
/// onto apply_forward(m).
inline ComplexVector complex_real_map(int cutoff, const ComplexVector& v, MapDirection dir) {
  if (cutoff < 0) throw ArgumentError("cut-off frequency must be >= 0");
  const int n = 2 * cutoff + 1;
  if (v.size() != n) throw ArgumentError("coefficient vector has the wrong dimension for this cut-off");
  const std::complex<double> i(0.0, 1.0);
  const double r = 1.0 / std::numbers::sqrt2;
  ComplexVector out(n);
  if (dir == MapDirection::ComplexToReal) {
    out[0] = v[cutoff];
    for (int l = 1; l <= cutoff; ++l) {
      const auto pos = v[cutoff + l];
      const auto neg = v[cutoff - l];
      out[l] = i * (pos - neg) * r;
      out[cutoff + l] = (pos + neg) * r;
    }
  } else {
    out[cutoff] = v[0];
    for (int l = 1; l <= cutoff; ++l) {
      const auto s = v[l];
      const auto c = v[cutoff + l];
      out[cutoff + l] = (c - i * s) * r;
      out[cutoff - l] = (c + i * s) * r;
    }
  }
  return out;
}

}  // namespace blasso
