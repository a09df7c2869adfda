#pragma once

#include <blasso/model.hpp>

#include <mutex>

namespace blasso {

/// One-hidden-layer ReLU features: phi~(x) = (max(0, <a_j, x>))_j, optionally
/// normalized to unit Euclidean norm. Positions x are the hidden neurons.
///
/// The derivative of max(0, .) at 0 is taken as 0. A point landing exactly on
/// a hinge hyperplane is nudged by 1e-12 along the offending row before
/// evaluation.
class ReluModel final : public ForwardModel {
 public:
  ReluModel(Matrix features, bool normalize, double box_radius)
      : ForwardModel(static_cast<int>(features.rows()), make_domain(features, box_radius),
                     Smoothness::AlmostEverywhere),
        a_(std::move(features)),
        normalize_(normalize) {
    for (Eigen::Index j = 0; j < a_.rows(); ++j)
      if (a_.row(j).squaredNorm() == 0.0) throw ArgumentError("feature matrix has a zero row");
  }

  bool normalized() const { return normalize_; }
  const Matrix& features() const { return a_; }

  static double default_radius(int d) { return 10.0 * std::sqrt(static_cast<double>(d)); }

  Vector feature(const Point& x) const override {
    const Local s = local(x, false);
    return normalize_ ? Vector(s.u / s.r) : s.u;
  }

  Matrix jacobian(const Point& x) const override {
    const Local s = local(x);
    if (!normalize_) return s.jac;
    const Vector phi = s.u / s.r;
    return (s.jac - phi * (phi.transpose() * s.jac)) / s.r;
  }

  std::vector<Matrix> hessian(const Point& x) const override {
    const int d = dim();
    std::vector<Matrix> out(static_cast<std::size_t>(n()), Matrix::Zero(d, d));
    if (!normalize_) return out;
    const Local s = local(x);
    const Vector g = s.jac.transpose() * s.u / s.r;
    const Matrix hr = (s.jac.transpose() * s.jac - g * g.transpose()) / s.r;
    const double r2 = s.r * s.r;
    for (int i = 0; i < n(); ++i) {
      const Vector ai = s.jac.row(i).transpose();
      out[static_cast<std::size_t>(i)] = -(ai * g.transpose() + g * ai.transpose()) / r2 +
                                         2.0 * s.u[i] / (r2 * s.r) * g * g.transpose() - s.u[i] / r2 * hr;
    }
    return out;
  }

  Matrix hessian_contract(const Point& x, const Vector& p) const override {
    const int d = dim();
    if (!normalize_) return Matrix::Zero(d, d);
    const Local s = local(x);
    const Vector g = s.jac.transpose() * s.u / s.r;
    const Matrix hr = (s.jac.transpose() * s.jac - g * g.transpose()) / s.r;
    const Vector jp = s.jac.transpose() * p;
    const double pu = p.dot(s.u);
    const double r2 = s.r * s.r;
    return -(jp * g.transpose() + g * jp.transpose()) / r2 + 2.0 * pu / (r2 * s.r) * g * g.transpose() -
           pu / r2 * hr;
  }

  /// Normalized features are invariant under positive rescaling of x, so the
  /// canonical representative lies on the unit sphere.
  Point canonicalize(const Point& x) const override {
    if (!normalize_) return domain().wrap(x);
    const double nx = x.norm();
    return nx > 0.0 ? domain().wrap(x / nx) : domain().wrap(x);
  }

  Matrix gauge_basis(const Point& x) const override {
    if (!normalize_ || x.norm() == 0.0) return Matrix(x.size(), 0);
    return x.normalized();
  }

 private:
  struct Local {
    Vector u;    // raw features
    Matrix jac;  // raw Jacobian (rows a_j on the active side)
    double r = 0.0;
  };

  static DomainSpec make_domain(const Matrix& a, double radius) {
    const auto d = a.cols();
    if (d < 1) throw ArgumentError("feature matrix needs at least one column");
    if (!(radius > 0.0)) throw ArgumentError("box radius must be positive");
    return DomainSpec::box(Vector::Constant(d, -radius), Vector::Constant(d, radius));
  }

  Local local(const Point& x0, bool with_jacobian = true) const {
    domain().require(x0);
    Point x = x0;
    Vector z = a_ * x;
    for (Eigen::Index j = 0; j < z.size(); ++j) {
      if (z[j] == 0.0) {
        static std::once_flag warned;
        std::call_once(warned, [] { log_warning("evaluation point on a ReLU hinge; perturbing by 1e-12"); });
        x += 1e-12 * a_.row(j).transpose().normalized();
        z = a_ * x;
      }
    }
    Local s;
    s.u = z.cwiseMax(0.0);
    if (with_jacobian) s.jac = (z.array() > 0.0).cast<double>().matrix().asDiagonal() * a_;
    s.r = s.u.norm();
    if (normalize_ && s.r == 0.0)
      throw DegenerateFeatureError("normalized ReLU feature undefined: all pre-activations are non-positive");
    return s;
  }

  Matrix a_;
  bool normalize_;
};

inline std::shared_ptr<const ReluModel> build_relu_model(Matrix features, bool normalize, double box_radius = -1.0) {
  const double r = box_radius > 0.0 ? box_radius : ReluModel::default_radius(static_cast<int>(features.cols()));
  return std::make_shared<const ReluModel>(std::move(features), normalize, r);
}

}  // namespace blasso
