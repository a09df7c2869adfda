#pragma once

#include <blasso/model.hpp>

#include <algorithm>
#include <cstdint>
#include <random>

namespace blasso {

struct ScanOptions {
  int grid_size = 4096;         // points for d = 1
  int grid_per_axis = 32;       // points per axis for d = 2, 3
  int multistart_points = 64;   // random starts when the grid is too large
  int newton_steps = 20;
  int ascent_steps = 200;
  int polished_candidates = 8;  // grid maxima refined per scan
  std::uint64_t seed = 0;
};

/// What a scan maximizes: |eta| or -eta.
enum class ScanSense { Absolute, Lowest };

struct Peak {
  Point x;
  double value = 0.0;  // signed eta(x)
};

/// Locates the extrema of eta(x) = <phi(x), p> over the model's domain.
///
/// In one dimension (and small grids in two or three) eta is tabulated on a
/// uniform grid and the best grid maxima are polished with damped Newton
/// steps. Otherwise random starts drawn from `seed` are pushed uphill by
/// gradient ascent and the best few finish with Newton steps.
class CertificateScanner {
 public:
  CertificateScanner(ModelPtr model, ScanOptions opts) : model_(std::move(model)), opts_(opts) {
    if (opts_.grid_size < 2 || opts_.grid_per_axis < 2) throw ArgumentError("certificate grid size must be >= 2");
    const int d = model_->dim();
    const auto& dom = model_->domain();
    long total = 0;
    if (d == 1) total = opts_.grid_size;
    else if (d <= 3) total = static_cast<long>(std::pow(opts_.grid_per_axis, d));
    use_grid_ = total > 0 && (d == 1 || total * model_->n() <= 4'000'000);
    if (use_grid_) {
      const int per_axis = d == 1 ? opts_.grid_size : opts_.grid_per_axis;
      grid_.reserve(static_cast<std::size_t>(total));
      std::vector<int> idx(static_cast<std::size_t>(d), 0);
      for (long c = 0; c < total; ++c) {
        Point x(d);
        for (int a = 0; a < d; ++a) {
          const double t = idx[static_cast<std::size_t>(a)];
          if (dom.geometry == Geometry::Torus) x[a] = t / per_axis;
          else x[a] = dom.lower[a] + (dom.upper[a] - dom.lower[a]) * (t + 0.5) / per_axis;
        }
        grid_.push_back(x);
        for (int a = 0; a < d; ++a) {
          if (++idx[static_cast<std::size_t>(a)] < per_axis) break;
          idx[static_cast<std::size_t>(a)] = 0;
        }
      }
      grid_features_ = Matrix(static_cast<Eigen::Index>(grid_.size()), model_->n());
      for (std::size_t i = 0; i < grid_.size(); ++i) {
        try {
          grid_features_.row(static_cast<Eigen::Index>(i)) = model_->feature(grid_[i]).transpose();
        } catch (const DegenerateFeatureError&) {
          grid_features_.row(static_cast<Eigen::Index>(i)).setZero();
        }
      }
      spacing_ = dom.geometry == Geometry::Torus ? 1.0 / per_axis
                                                  : (dom.upper - dom.lower).minCoeff() / per_axis;
    }
  }

  const ForwardModel& model() const { return *model_; }
  const ScanOptions& options() const { return opts_; }
  bool uses_grid() const { return use_grid_; }
  const std::vector<Point>& grid() const { return grid_; }

  /// eta at every grid point (empty in multi-start mode).
  Vector grid_values(const Vector& p) const {
    if (!use_grid_) return Vector(0);
    return grid_features_ * p;
  }

  /// Polished local extrema, best first, duplicates removed.
  std::vector<Peak> peaks(const Vector& p, ScanSense sense, const std::vector<Point>& extra_starts = {},
                          std::uint64_t salt = 0) const {
    std::vector<std::pair<Point, double>> starts;  // point, orientation
    auto orient = [&](double v) { return sense == ScanSense::Lowest ? -1.0 : (v >= 0.0 ? 1.0 : -1.0); };
    std::vector<Peak> found;
    if (use_grid_) {
      const Vector vals = grid_values(p);
      const Eigen::Index N = vals.size();
      auto score = [&](Eigen::Index i) { return sense == ScanSense::Lowest ? -vals[i] : std::abs(vals[i]); };
      std::vector<Eigen::Index> cand;
      if (model_->dim() == 1) {
        const bool torus = model_->domain().geometry == Geometry::Torus;
        for (Eigen::Index i = 0; i < N; ++i) {
          const Eigen::Index l = i == 0 ? (torus ? N - 1 : -1) : i - 1;
          const Eigen::Index r = i == N - 1 ? (torus ? 0 : -1) : i + 1;
          const double s = score(i);
          if ((l < 0 || s >= score(l)) && (r < 0 || s >= score(r))) cand.push_back(i);
        }
      } else {
        cand.resize(static_cast<std::size_t>(N));
        for (Eigen::Index i = 0; i < N; ++i) cand[static_cast<std::size_t>(i)] = i;
      }
      const auto keep = std::min<std::size_t>(cand.size(), static_cast<std::size_t>(opts_.polished_candidates));
      std::partial_sort(cand.begin(), cand.begin() + static_cast<long>(keep), cand.end(),
                        [&](Eigen::Index a, Eigen::Index b) { return score(a) > score(b); });
      cand.resize(keep);
      for (auto i : cand) starts.emplace_back(grid_[static_cast<std::size_t>(i)], orient(vals[i]));
      for (const auto& x : extra_starts) starts.emplace_back(x, orient(certificate_value(*model_, p, x)));
      for (const auto& [x, s] : starts) found.push_back(polish(p, x, s, 0, opts_.newton_steps));
    } else {
      std::mt19937_64 rng(opts_.seed ^ (0x9E3779B97F4A7C15ULL * (salt + 1)));
      const auto& dom = model_->domain();
      for (int s = 0; s < opts_.multistart_points; ++s) {
        Point x(model_->dim());
        for (int a = 0; a < x.size(); ++a) {
          std::uniform_real_distribution<double> u(dom.geometry == Geometry::Torus ? 0.0 : dom.lower[a],
                                                   dom.geometry == Geometry::Torus ? 1.0 : dom.upper[a]);
          x[a] = u(rng);
        }
        starts.emplace_back(x, 0.0);
      }
      for (const auto& x : extra_starts) starts.emplace_back(x, 0.0);
      std::vector<Peak> rough;
      for (auto& [x, s] : starts) {
        double v;
        Point xc;
        try {
          xc = model_->canonicalize(x);
          v = certificate_value(*model_, p, xc);
        } catch (const DegenerateFeatureError&) {
          continue;
        }
        rough.push_back(polish(p, xc, orient(v), opts_.ascent_steps, 0));
      }
      auto better = [&](const Peak& a, const Peak& b) { return objective(a.value, sense) > objective(b.value, sense); };
      std::sort(rough.begin(), rough.end(), better);
      const auto keep = std::min<std::size_t>(rough.size(), static_cast<std::size_t>(opts_.polished_candidates));
      for (std::size_t i = 0; i < keep; ++i)
        found.push_back(polish(p, rough[i].x, orient(rough[i].value), 0, opts_.newton_steps));
    }
    std::sort(found.begin(), found.end(),
              [&](const Peak& a, const Peak& b) { return objective(a.value, sense) > objective(b.value, sense); });
    std::vector<Peak> unique;
    for (auto& pk : found) {
      bool dup = false;
      for (const auto& u : unique)
        if (model_->domain().distance(u.x, pk.x) < 1e-6) dup = true;
      if (!dup) unique.push_back(std::move(pk));
    }
    return unique;
  }

  Peak best(const Vector& p, ScanSense sense, const std::vector<Point>& extra_starts = {},
            std::uint64_t salt = 0) const {
    auto all = peaks(p, sense, extra_starts, salt);
    if (all.empty()) throw Error("certificate scan found no admissible point");
    return all.front();
  }

  static double objective(double value, ScanSense sense) {
    return sense == ScanSense::Lowest ? -value : std::abs(value);
  }

 private:
  double trust_radius(const Point& x) const {
    const auto& dom = model_->domain();
    if (dom.geometry == Geometry::Torus) return use_grid_ ? 2.0 * spacing_ : 0.05;
    if (model_->gauge_basis(x).cols() > 0) return 0.3 * x.norm();
    return 0.05 * (dom.upper - dom.lower).minCoeff();
  }

  /// Maximizes orient * eta starting at x: `ascent` gradient steps followed
  /// by up to `newton` damped Newton steps.
  Peak polish(const Vector& p, Point x, double orient, int ascent, int newton) const {
    x = model_->canonicalize(x);
    double w = orient * certificate_value(*model_, p, x);
    double step_len = trust_radius(x);
    for (int it = 0; it < ascent + newton; ++it) {
      const bool newton_phase = it >= ascent;
      Vector g = orient * (model_->jacobian(x).transpose() * p);
      const Matrix gauge = model_->gauge_basis(x);
      if (gauge.cols() > 0) g -= gauge * (gauge.transpose() * g);
      const double gn = g.norm();
      if (!(gn > 0.0)) break;
      const double trust = trust_radius(x);
      Vector dx;
      bool is_newton = false;
      if (newton_phase) {
        Matrix h = orient * model_->hessian_contract(x, p);
        if (gauge.cols() > 0) {
          const Matrix proj = Matrix::Identity(x.size(), x.size()) - gauge * gauge.transpose();
          h = proj * h * proj - gauge * gauge.transpose() * std::max(1.0, h.norm());
        }
        Eigen::LLT<Matrix> llt(-h);
        if (llt.info() == Eigen::Success) {
          dx = llt.solve(g);
          is_newton = true;
        }
      }
      if (!is_newton) dx = g * (std::min(step_len, trust) / gn);
      if (dx.norm() > trust) dx *= trust / dx.norm();
      double t = 1.0;
      bool accepted = false;
      Point xn;
      double wn = w;
      for (int bt = 0; bt < 40; ++bt) {
        try {
          xn = model_->canonicalize(x + t * dx);
          wn = orient * certificate_value(*model_, p, xn);
        } catch (const DegenerateFeatureError&) {
          t *= 0.5;
          continue;
        }
        if (wn > w || (is_newton && wn >= w)) {
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) {
        if (!newton_phase && it + 1 < ascent) {
          it = ascent - 1;  // hand over to the Newton phase
          continue;
        }
        break;
      }
      const double moved = model_->domain().distance(xn, x);
      const double gain = wn - w;
      x = xn;
      w = wn;
      if (!is_newton) step_len = std::min(2.0 * t * step_len, trust);
      if (moved <= 1e-15 * std::max(1.0, x.norm())) break;
      if (!newton_phase && gain <= 1e-14 * std::max(1.0, std::abs(w))) it = std::max(it, ascent - 1);
    }
    return Peak{x, orient * w};
  }

  ModelPtr model_;
  ScanOptions opts_;
  bool use_grid_ = false;
  std::vector<Point> grid_;
  Matrix grid_features_;
  double spacing_ = 0.0;
};

}  // namespace blasso
