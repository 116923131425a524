#pragma once

// Matrix-coefficient polynomials in x^1..x^d: the exact backend.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "connlab/domain.hpp"
#include "connlab/errors.hpp"
#include "connlab/lie_algebra.hpp"

namespace connlab {

class PolyField {
 public:
  static constexpr Backend backend = Backend::Polynomial;
  static constexpr double kNegligible = 1e-24;

  using Exponent = std::array<std::uint8_t, kMaxDim>;
  using Terms = std::map<Exponent, Mat>;

  PolyField() = default;
  PolyField(Eigen::Index rows, Eigen::Index cols) : rows_(rows), cols_(cols) {}

  static PolyField zero(const Domain&, Eigen::Index rows, Eigen::Index cols) { return PolyField(rows, cols); }

  static PolyField constant(const Domain&, const Mat& m) { return monomial(Exponent{}, m); }

  static PolyField monomial(const Exponent& e, const Mat& m) {
    PolyField p(m.rows(), m.cols());
    p.terms_.emplace(e, m);
    return p;
  }

  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  const Terms& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  void add_term(const Exponent& e, const Mat& m) {
    check_shape(m.rows(), m.cols());
    auto [it, inserted] = terms_.try_emplace(e, m);
    if (!inserted) it->second += m;
  }

  PolyField& operator+=(const PolyField& o) {
    check_shape(o.rows_, o.cols_);
    for (const auto& [e, m] : o.terms_) add_term(e, m);
    return *this;
  }
  PolyField& operator-=(const PolyField& o) {
    check_shape(o.rows_, o.cols_);
    for (const auto& [e, m] : o.terms_) add_term(e, -m);
    return *this;
  }
  PolyField& operator*=(double s) {
    for (auto& [e, m] : terms_) m *= s;
    return *this;
  }

  friend PolyField operator+(PolyField a, const PolyField& b) { return a += b; }
  friend PolyField operator-(PolyField a, const PolyField& b) { return a -= b; }
  friend PolyField operator*(double s, PolyField a) { return a *= s; }

  // Pointwise matrix product. Pairs whose coefficient norms multiply to less
  // than kNegligible are skipped; they sit far below double rounding of any
  // coefficient that survives pruning.
  //
  // Contributions to each output exponent e are summed in a canonical order:
  // by min(a, e - a) over the left exponent a, with the two mirrored pairs
  // (a, e - a) and (e - a, a) added to each other first. For commuting
  // (1x1) coefficients this makes p.product(q) and q.product(p) bitwise
  // equal, so u(1) wedges such as A^A vanish exactly.
  PolyField product(const PolyField& o) const {
    if (cols_ != o.rows_) throw TypeMismatch("matrix shapes do not compose in product");
    PolyField out(rows_, o.cols_);
    if (terms_.empty() || o.terms_.empty()) return out;
    struct Contribution {
      Exponent cell;
      Exponent key;
      Mat value;
    };
    std::vector<Contribution> parts;
    std::vector<std::pair<const Exponent*, double>> rhs;
    std::vector<const Mat*> rhs_m;
    for (const auto& [e, m] : o.terms_) {
      rhs.emplace_back(&e, m.norm());
      rhs_m.push_back(&m);
    }
    for (const auto& [ea, ma] : terms_) {
      const double na = ma.norm();
      for (std::size_t j = 0; j < rhs.size(); ++j) {
        if (na * rhs[j].second < kNegligible) continue;
        const Exponent& eb = *rhs[j].first;
        Exponent e;
        for (std::size_t k = 0; k < e.size(); ++k) e[k] = static_cast<std::uint8_t>(ea[k] + eb[k]);
        parts.push_back({e, std::min(ea, eb), ma * *rhs_m[j]});
      }
    }
    std::vector<std::size_t> order(parts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      if (parts[x].cell != parts[y].cell) return parts[x].cell < parts[y].cell;
      return parts[x].key < parts[y].key;
    });
    std::size_t i = 0;
    while (i < order.size()) {
      const Exponent& cell = parts[order[i]].cell;
      Mat acc;
      bool first = true;
      while (i < order.size() && parts[order[i]].cell == cell) {
        Mat group = parts[order[i]].value;
        if (i + 1 < order.size() && parts[order[i + 1]].cell == cell && parts[order[i + 1]].key == parts[order[i]].key) {
          group += parts[order[i + 1]].value;
          ++i;
        }
        ++i;
        if (first) {
          acc = std::move(group);
          first = false;
        } else {
          acc += group;
        }
      }
      out.terms_.emplace_hint(out.terms_.end(), cell, std::move(acc));
    }
    return out;
  }

  PolyField partial(int axis, const Domain&) const {
    PolyField out(rows_, cols_);
    const auto ax = static_cast<std::size_t>(axis);
    for (const auto& [e, m] : terms_) {
      if (e[ax] == 0) continue;
      Exponent de = e;
      de[ax] = static_cast<std::uint8_t>(e[ax] - 1);
      out.add_term(de, static_cast<double>(e[ax]) * m);
    }
    return out;
  }

  Mat value_at(std::span<const double> x) const {
    Mat v = Mat::Zero(rows_, cols_);
    for (const auto& [e, m] : terms_) {
      double mono = 1.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        for (int k = 0; k < e[i]; ++k) mono *= x[i];
      }
      v += mono * m;
    }
    return v;
  }

  // Calls fn(value) at every point of the m^d sampling lattice, in lattice
  // order (first axis fastest).
  template <class Fn>
  void for_each_sample(const Domain& domain, Fn&& fn) const {
    const int m = domain.sampling_points_per_axis;
    const std::size_t count = domain.sample_count();
    std::array<double, kMaxDim> x{};
    for (std::size_t s = 0; s < count; ++s) {
      std::size_t rest = s;
      for (int mu = 0; mu < domain.dim; ++mu) {
        x[static_cast<std::size_t>(mu)] =
            static_cast<double>(rest % static_cast<std::size_t>(m)) / static_cast<double>(m - 1);
        rest /= static_cast<std::size_t>(m);
      }
      fn(value_at(std::span<const double>(x.data(), static_cast<std::size_t>(domain.dim))));
    }
  }

  // Applies a linear map to every coefficient.
  template <class Fn>
  PolyField map_linear(Fn&& fn) const {
    PolyField out;
    bool first = true;
    for (const auto& [e, m] : terms_) {
      Mat v = fn(m);
      if (first) {
        out = PolyField(v.rows(), v.cols());
        first = false;
      }
      out.terms_.emplace(e, std::move(v));
    }
    if (first) {
      const Mat probe = fn(Mat::Zero(rows_, cols_));
      out = PolyField(probe.rows(), probe.cols());
    }
    return out;
  }

  // Drops terms whose coefficient norm is at most tol. On [0,1]^d every
  // monomial is bounded by 1, so the pointwise error is at most the sum of
  // the dropped norms.
  PolyField pruned(double tol) const {
    PolyField out(rows_, cols_);
    for (const auto& [e, m] : terms_) {
      if (m.norm() > tol) out.terms_.emplace(e, m);
    }
    return out;
  }

  // Upper bound on sup |value| over [0,1]^d (Frobenius).
  double sup_bound() const {
    double s = 0.0;
    for (const auto& [e, m] : terms_) s += m.norm();
    return s;
  }

  int total_degree() const {
    int deg = 0;
    for (const auto& [e, m] : terms_) {
      int t = 0;
      for (auto k : e) t += k;
      deg = std::max(deg, t);
    }
    return deg;
  }

 private:
  void check_shape(Eigen::Index r, Eigen::Index c) {
    if (terms_.empty() && rows_ == 0 && cols_ == 0) {
      rows_ = r;
      cols_ = c;
      return;
    }
    if (r != rows_ || c != cols_) throw TypeMismatch("polynomial coefficient shapes differ");
  }

  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
  Terms terms_;
};

}  // namespace connlab
