#pragma once

#include <blasso/core.hpp>

#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <utility>

namespace blasso {

enum class Geometry { Torus, Box };

/// Parameter domain: the periodic torus [0,1)^d or an axis-aligned box.
struct DomainSpec {
  int dim = 1;
  Geometry geometry = Geometry::Torus;
  Vector lower;  // box only
  Vector upper;  // box only

  static DomainSpec torus(int d) {
    DomainSpec s;
    s.dim = d;
    s.geometry = Geometry::Torus;
    s.validate();
    return s;
  }

  static DomainSpec box(Vector lower, Vector upper) {
    DomainSpec s;
    s.dim = static_cast<int>(lower.size());
    s.geometry = Geometry::Box;
    s.lower = std::move(lower);
    s.upper = std::move(upper);
    s.validate();
    return s;
  }

  void validate() const {
    if (dim < 1) throw ArgumentError("domain dimension must be >= 1");
    if (geometry == Geometry::Box) {
      if (lower.size() != dim || upper.size() != dim)
        throw ArgumentError("box bounds must have one entry per dimension");
      for (int i = 0; i < dim; ++i)
        if (!(lower[i] < upper[i])) throw ArgumentError("box bounds must satisfy lower < upper");
    }
  }

  bool contains(const Point& x) const {
    if (x.size() != dim || !x.allFinite()) return false;
    if (geometry == Geometry::Torus) return true;
    return ((x.array() >= lower.array()) && (x.array() <= upper.array())).all();
  }

  /// Maps a point to its canonical representative (wraps torus coordinates
  /// into [0,1), clamps into the box).
  Point wrap(Point x) const {
    if (geometry == Geometry::Torus) {
      for (int i = 0; i < dim; ++i) {
        x[i] -= std::floor(x[i]);
        if (x[i] >= 1.0) x[i] = 0.0;
      }
    } else {
      x = x.cwiseMax(lower).cwiseMin(upper);
    }
    return x;
  }

  double distance(const Point& a, const Point& b) const {
    if (geometry == Geometry::Box) return (a - b).norm();
    double acc = 0.0;
    for (int i = 0; i < dim; ++i) {
      double t = std::abs(a[i] - b[i]);
      t -= std::floor(t);
      t = std::min(t, 1.0 - t);
      acc += t * t;
    }
    return std::sqrt(acc);
  }

  void require(const Point& x) const {
    if (!contains(x)) {
      std::ostringstream os;
      os << "position (" << x.transpose() << ") is outside the domain";
      throw DomainError(os.str());
    }
  }
};

inline constexpr double kDefaultMergeTolerance = 1e-7;

/// Finite sum of weighted Dirac masses.
struct DiscreteMeasure {
  std::vector<Point> positions;
  Vector amplitudes = Vector(0);

  DiscreteMeasure() = default;
  DiscreteMeasure(std::vector<Point> x, Vector a) : positions(std::move(x)), amplitudes(std::move(a)) {
    if (static_cast<Eigen::Index>(positions.size()) != amplitudes.size())
      throw ArgumentError("measure needs one amplitude per position");
  }

  /// Convenience for 1-D measures.
  static DiscreteMeasure on_line(const std::vector<double>& x, const std::vector<double>& a) {
    if (x.size() != a.size()) throw ArgumentError("measure needs one amplitude per position");
    DiscreteMeasure m;
    for (double xi : x) m.positions.push_back(Point::Constant(1, xi));
    m.amplitudes = Eigen::Map<const Vector>(a.data(), static_cast<Eigen::Index>(a.size()));
    return m;
  }

  int size() const { return static_cast<int>(positions.size()); }
  bool empty() const { return positions.empty(); }
  double tv_norm() const { return amplitudes.lpNorm<1>(); }

  void push_back(const Point& x, double a) {
    positions.push_back(x);
    amplitudes.conservativeResize(amplitudes.size() + 1);
    amplitudes[amplitudes.size() - 1] = a;
  }

  /// Keeps the spikes whose index satisfies `keep`.
  template <class Pred>
  void filter(Pred keep) {
    std::vector<Point> x;
    std::vector<double> a;
    for (int j = 0; j < size(); ++j) {
      if (keep(j)) {
        x.push_back(positions[j]);
        a.push_back(amplitudes[j]);
      }
    }
    positions = std::move(x);
    amplitudes = Eigen::Map<Vector>(a.data(), static_cast<Eigen::Index>(a.size()));
  }

  /// Drops spikes with |amplitude| <= tol.
  void prune(double tol) {
    Vector a = amplitudes;
    filter([&](int j) { return std::abs(a[j]) > tol; });
  }

  /// Smallest pairwise distance (infinity when k < 2).
  double min_separation(const DomainSpec& dom) const {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < size(); ++i)
      for (int j = i + 1; j < size(); ++j) best = std::min(best, dom.distance(positions[i], positions[j]));
    return best;
  }
};

enum class Smoothness { Exact, AlmostEverywhere };

/// Measurement operator defined by a smooth feature map phi: domain -> R^n.
///
/// Implementations are immutable after construction and every evaluation is
/// a pure function, so one instance may be shared across threads.
class ForwardModel {
 public:
  virtual ~ForwardModel() = default;

  int n() const { return n_; }
  int dim() const { return domain_.dim; }
  const DomainSpec& domain() const { return domain_; }
  Smoothness smoothness() const { return smoothness_; }

  virtual Vector feature(const Point& x) const = 0;
  /// n x d matrix whose row i is the gradient of phi_i.
  virtual Matrix jacobian(const Point& x) const = 0;
  /// Per output coordinate i, the d x d Hessian of phi_i.
  virtual std::vector<Matrix> hessian(const Point& x) const = 0;

  /// sum_i p_i * Hessian(phi_i)(x); override when a cheaper contraction exists.
  virtual Matrix hessian_contract(const Point& x, const Vector& p) const {
    const auto h = hessian(x);
    Matrix out = Matrix::Zero(dim(), dim());
    for (int i = 0; i < n_; ++i) out += p[i] * h[i];
    return out;
  }

  /// Canonical representative of x with identical features. The default
  /// wraps torus coordinates and clamps into the box.
  virtual Point canonicalize(const Point& x) const { return domain_.wrap(x); }

  /// d x g orthonormal basis of directions along which phi is locally
  /// invariant at x (g = 0 for models without such a symmetry).
  virtual Matrix gauge_basis(const Point& x) const { return Matrix(x.size(), 0); }

  /// n x k matrix [phi(x_1) ... phi(x_k)].
  Matrix feature_matrix(const std::vector<Point>& xs) const {
    Matrix out(n_, static_cast<Eigen::Index>(xs.size()));
    for (std::size_t j = 0; j < xs.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = feature(xs[j]);
    return out;
  }

 protected:
  ForwardModel(int n, DomainSpec domain, Smoothness s) : n_(n), domain_(std::move(domain)), smoothness_(s) {
    if (n_ < 1) throw ArgumentError("measurement dimension must be >= 1");
    domain_.validate();
  }

 private:
  int n_;
  DomainSpec domain_;
  Smoothness smoothness_;
};

using ModelPtr = std::shared_ptr<const ForwardModel>;

/// Sum_j beta_j phi(x_j).
inline Vector apply_forward(const ForwardModel& model, const DiscreteMeasure& m) {
  Vector out = Vector::Zero(model.n());
  for (int j = 0; j < m.size(); ++j) {
    model.domain().require(m.positions[j]);
    out += m.amplitudes[j] * model.feature(m.positions[j]);
  }
  return out;
}

/// Dual vector p together with the function eta(x) = <phi(x), p>.
struct Certificate {
  Vector dual;
  double lambda = 1.0;
  ModelPtr model;

  /// p = (y - Phi m) / lambda.
  static Certificate from_residual(ModelPtr model, const DiscreteMeasure& m, const Vector& y, double lambda) {
    Certificate c;
    c.dual = (y - apply_forward(*model, m)) / lambda;
    c.lambda = lambda;
    c.model = std::move(model);
    return c;
  }
};

struct CertificateValue {
  double value = 0.0;
  Vector gradient;
  Matrix hessian;
};

inline double certificate_value(const ForwardModel& model, const Vector& p, const Point& x) {
  return model.feature(x).dot(p);
}

inline CertificateValue certificate_eval(const ForwardModel& model, const Vector& p, const Point& x) {
  model.domain().require(x);
  CertificateValue v;
  v.value = model.feature(x).dot(p);
  v.gradient = model.jacobian(x).transpose() * p;
  v.hessian = model.hessian_contract(x, p);
  return v;
}

inline CertificateValue certificate_eval(const Certificate& cert, const Point& x) {
  return certificate_eval(*cert.model, cert.dual, x);
}

}  // namespace blasso
