#pragma once

// Periodic finite-difference backend and analytic trigonometric generators
// for grid fields.

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "connlab/domain.hpp"
#include "connlab/errors.hpp"
#include "connlab/lie_algebra.hpp"

namespace connlab {

class GridField {
 public:
  static constexpr Backend backend = Backend::Grid;

  GridField() = default;
  GridField(Eigen::Index rows, Eigen::Index cols, std::vector<Mat> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {}

  static GridField zero(const Domain& domain, Eigen::Index rows, Eigen::Index cols) {
    return GridField(rows, cols, std::vector<Mat>(domain.site_count(), Mat::Zero(rows, cols)));
  }

  static GridField constant(const Domain& domain, const Mat& m) {
    return GridField(m.rows(), m.cols(), std::vector<Mat>(domain.site_count(), m));
  }

  // Samples fn(x) at every site; x^mu = i_mu * h.
  template <class Fn>
  static GridField sample(const Domain& domain, Eigen::Index rows, Eigen::Index cols, Fn&& fn) {
    const SiteIndexer idx{domain.dim, domain.sites_per_axis};
    const double h = domain.spacing();
    std::vector<Mat> values(domain.site_count());
    std::array<double, kMaxDim> x{};
    for (std::size_t s = 0; s < values.size(); ++s) {
      const auto c = idx.coords(s);
      for (int mu = 0; mu < domain.dim; ++mu) x[static_cast<std::size_t>(mu)] = h * c[static_cast<std::size_t>(mu)];
      values[s] = fn(std::span<const double>(x.data(), static_cast<std::size_t>(domain.dim)));
      if (values[s].rows() != rows || values[s].cols() != cols) {
        throw TypeMismatch("generator returned a value of the wrong shape");
      }
    }
    return GridField(rows, cols, std::move(values));
  }

  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  const std::vector<Mat>& values() const { return values_; }
  std::vector<Mat>& values() { return values_; }
  const Mat& operator[](std::size_t site) const { return values_[site]; }

  GridField& operator+=(const GridField& o) {
    check_compatible(o);
    for (std::size_t s = 0; s < values_.size(); ++s) values_[s] += o.values_[s];
    return *this;
  }
  GridField& operator-=(const GridField& o) {
    check_compatible(o);
    for (std::size_t s = 0; s < values_.size(); ++s) values_[s] -= o.values_[s];
    return *this;
  }
  GridField& operator*=(double k) {
    for (auto& v : values_) v *= k;
    return *this;
  }

  friend GridField operator+(GridField a, const GridField& b) { return a += b; }
  friend GridField operator-(GridField a, const GridField& b) { return a -= b; }
  friend GridField operator*(double k, GridField a) { return a *= k; }

  GridField product(const GridField& o) const {
    if (cols_ != o.rows_) throw TypeMismatch("matrix shapes do not compose in product");
    if (values_.size() != o.values_.size()) throw DomainMismatch("grid fields have different site counts");
    std::vector<Mat> out(values_.size());
    for (std::size_t s = 0; s < values_.size(); ++s) out[s] = values_[s] * o.values_[s];
    return GridField(rows_, o.cols_, std::move(out));
  }

  // Centered difference (f(i+e) - f(i-e)) / 2h with periodic wraparound.
  GridField partial(int axis, const Domain& domain) const {
    const SiteIndexer idx{domain.dim, domain.sites_per_axis};
    const double inv2h = 1.0 / (2.0 * domain.spacing());
    std::vector<Mat> out(values_.size());
    for (std::size_t s = 0; s < values_.size(); ++s) {
      out[s] = inv2h * (values_[idx.shifted(s, axis, +1)] - values_[idx.shifted(s, axis, -1)]);
    }
    return GridField(rows_, cols_, std::move(out));
  }

  template <class Fn>
  void for_each_sample(const Domain&, Fn&& fn) const {
    for (const auto& v : values_) fn(v);
  }

  template <class Fn>
  GridField map_linear(Fn&& fn) const {
    std::vector<Mat> out(values_.size());
    for (std::size_t s = 0; s < values_.size(); ++s) out[s] = fn(values_[s]);
    const Mat probe = out.empty() ? fn(Mat::Zero(rows_, cols_)) : out.front();
    return GridField(probe.rows(), probe.cols(), std::move(out));
  }

 private:
  void check_compatible(const GridField& o) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) throw TypeMismatch("grid value shapes differ");
    if (values_.size() != o.values_.size()) throw DomainMismatch("grid fields have different site counts");
  }

  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
  std::vector<Mat> values_;
};

// sum_j M_j sin(2 pi k_j . x / L + phase_j): smooth, periodic on [0, L)^d,
// with closed-form partial derivatives.
struct TrigMode {
  std::array<int, kMaxDim> wave{};
  double phase = 0.0;
  Mat amplitude;
};

class TrigSeries {
 public:
  TrigSeries(Eigen::Index rows, Eigen::Index cols, double box_length, std::vector<TrigMode> modes = {})
      : rows_(rows), cols_(cols), box_length_(box_length), modes_(std::move(modes)) {}

  void add(TrigMode mode) { modes_.push_back(std::move(mode)); }
  const std::vector<TrigMode>& modes() const { return modes_; }
  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }

  Mat value(std::span<const double> x) const {
    Mat v = Mat::Zero(rows_, cols_);
    for (const auto& m : modes_) v += std::sin(argument(m, x)) * m.amplitude;
    return v;
  }

  Mat partial(int axis, std::span<const double> x) const {
    Mat v = Mat::Zero(rows_, cols_);
    const double k0 = 2.0 * std::numbers::pi / box_length_;
    for (const auto& m : modes_) {
      const int k = m.wave[static_cast<std::size_t>(axis)];
      if (k != 0) v += (k0 * k * std::cos(argument(m, x))) * m.amplitude;
    }
    return v;
  }

 private:
  double argument(const TrigMode& m, std::span<const double> x) const {
    double a = m.phase;
    const double k0 = 2.0 * std::numbers::pi / box_length_;
    for (std::size_t i = 0; i < x.size(); ++i) a += k0 * m.wave[i] * x[i];
    return a;
  }

  Eigen::Index rows_;
  Eigen::Index cols_;
  double box_length_;
  std::vector<TrigMode> modes_;
};

}  // namespace connlab
