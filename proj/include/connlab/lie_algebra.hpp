#pragma once

// Compact gauge algebras u(1), su(2), su(3) in their defining representation.
//
// Generators are anti-Hermitian: J_a = -(i/2) sigma_a for su(2),
// J_a = -(i/2) lambda_a for su(3) (Gell-Mann), J_1 = i for u(1).  With this
// choice <J_a, J_b> = Re tr(J_a^dagger J_b) is diagonal, so coefficients of an
// algebra element are recovered by projection.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "connlab/errors.hpp"

namespace connlab {

using Complex = std::complex<double>;

// Matrix values of every field. Representations here are at most 3x3, so the
// storage is inline (no heap traffic per site).
using Mat = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 3, 3>;

enum class AlgebraName { u1, su2, su3 };

inline std::string_view to_string(AlgebraName name) {
  switch (name) {
    case AlgebraName::u1: return "u1";
    case AlgebraName::su2: return "su2";
    case AlgebraName::su3: return "su3";
  }
  return "?";
}

inline AlgebraName parse_algebra_name(std::string_view s) {
  if (s == "u1") return AlgebraName::u1;
  if (s == "su2") return AlgebraName::su2;
  if (s == "su3") return AlgebraName::su3;
  throw ConfigurationError("unknown algebra '" + std::string(s) + "' (expected u1, su2 or su3)");
}

// Residuals of the structural invariants, as measured by LieAlgebra::validate().
struct AlgebraValidation {
  double closure = 0.0;        // max |[J_a,J_b] - f_abc J_c|
  double antisymmetry = 0.0;   // max |f_abc + f_bac|
  double jacobi = 0.0;         // max |cyclic sum of f f|
  double anti_hermitian = 0.0; // max |J_a + J_a^dagger|
  double orthogonality = 0.0;  // max |<J_a,J_b>| for a != b

  double worst() const {
    return std::max({closure, antisymmetry, jacobi, anti_hermitian, orthogonality});
  }
};

class LieAlgebra {
 public:
  AlgebraName name() const { return name_; }
  int dim() const { return static_cast<int>(generators_.size()); }
  int rep_dim() const { return rep_dim_; }
  const Mat& generator(int a) const { return generators_[static_cast<std::size_t>(a)]; }
  const std::vector<Mat>& generators() const { return generators_; }
  bool abelian() const { return name_ == AlgebraName::u1; }

  // f[a][b][c] with [J_a, J_b] = sum_c f[a][b][c] J_c.
  double f(int a, int b, int c) const {
    return structure_[static_cast<std::size_t>((a * dim() + b) * dim() + c)];
  }

  // <J_a, J_a>; the basis is orthogonal so this is the whole metric.
  double metric(int a) const { return metric_[static_cast<std::size_t>(a)]; }

  // Coefficients of the projection of m onto span{J_a}.
  Eigen::VectorXd coefficients(const Mat& m) const {
    Eigen::VectorXd c(dim());
    for (int a = 0; a < dim(); ++a) {
      c[a] = (generator(a).adjoint() * m).trace().real() / metric(a);
    }
    return c;
  }

  Mat matrix(const Eigen::Ref<const Eigen::VectorXd>& coeffs) const {
    Mat m = Mat::Zero(rep_dim_, rep_dim_);
    for (int a = 0; a < dim(); ++a) m += coeffs[a] * generator(a);
    return m;
  }

  Mat identity() const { return Mat::Identity(rep_dim_, rep_dim_); }

  AlgebraValidation validate() const {
    AlgebraValidation v;
    const int n = dim();
    for (int a = 0; a < n; ++a) {
      v.anti_hermitian = std::max(v.anti_hermitian,
                                  (generator(a) + generator(a).adjoint()).cwiseAbs().maxCoeff());
      for (int b = 0; b < n; ++b) {
        if (a != b) {
          v.orthogonality = std::max(
              v.orthogonality, std::abs((generator(a).adjoint() * generator(b)).trace().real()));
        }
        Mat expanded = Mat::Zero(rep_dim_, rep_dim_);
        for (int c = 0; c < n; ++c) {
          expanded += f(a, b, c) * generator(c);
          v.antisymmetry = std::max(v.antisymmetry, std::abs(f(a, b, c) + f(b, a, c)));
        }
        const Mat comm = generator(a) * generator(b) - generator(b) * generator(a);
        v.closure = std::max(v.closure, (comm - expanded).cwiseAbs().maxCoeff());
        for (int c = 0; c < n; ++c) {
          for (int d = 0; d < n; ++d) {
            double s = 0.0;
            for (int e = 0; e < n; ++e) {
              s += f(a, b, e) * f(e, c, d) + f(b, c, e) * f(e, a, d) + f(c, a, e) * f(e, b, d);
            }
            v.jacobi = std::max(v.jacobi, std::abs(s));
          }
        }
      }
    }
    return v;
  }

  friend bool operator==(const LieAlgebra& x, const LieAlgebra& y) { return x.name_ == y.name_; }

 private:
  friend LieAlgebra make_algebra(AlgebraName);

  LieAlgebra(AlgebraName name, int rep_dim, std::vector<Mat> generators)
      : name_(name), rep_dim_(rep_dim), generators_(std::move(generators)) {
    const int n = dim();
    metric_.resize(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) {
      metric_[static_cast<std::size_t>(a)] =
          (generator(a).adjoint() * generator(a)).trace().real();
    }
    // f_abc = <J_c, [J_a,J_b]> / <J_c,J_c>; exact zeros are kept exact.
    structure_.assign(static_cast<std::size_t>(n * n * n), 0.0);
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        const Mat comm = generator(a) * generator(b) - generator(b) * generator(a);
        const Eigen::VectorXd c = coefficients(comm);
        for (int k = 0; k < n; ++k) {
          double value = c[k];
          if (std::abs(value) < 1e-15) value = 0.0;
          structure_[static_cast<std::size_t>((a * n + b) * n + k)] = value;
        }
      }
    }
  }

  AlgebraName name_;
  int rep_dim_;
  std::vector<Mat> generators_;
  std::vector<double> metric_;
  std::vector<double> structure_;
};

inline LieAlgebra make_algebra(AlgebraName name) {
  const Complex i(0.0, 1.0);
  const Complex half_i = -0.5 * i;
  std::vector<Mat> gens;
  switch (name) {
    case AlgebraName::u1: {
      Mat j(1, 1);
      j(0, 0) = i;
      gens.push_back(j);
      return LieAlgebra(name, 1, std::move(gens));
    }
    case AlgebraName::su2: {
      Mat s1(2, 2), s2(2, 2), s3(2, 2);
      s1 << 0, 1, 1, 0;
      s2 << 0, -i, i, 0;
      s3 << 1, 0, 0, -1;
      for (const Mat* s : {&s1, &s2, &s3}) gens.push_back(half_i * *s);
      return LieAlgebra(name, 2, std::move(gens));
    }
    case AlgebraName::su3: {
      std::array<Mat, 8> l;
      for (auto& m : l) m = Mat::Zero(3, 3);
      l[0](0, 1) = 1; l[0](1, 0) = 1;
      l[1](0, 1) = -i; l[1](1, 0) = i;
      l[2](0, 0) = 1; l[2](1, 1) = -1;
      l[3](0, 2) = 1; l[3](2, 0) = 1;
      l[4](0, 2) = -i; l[4](2, 0) = i;
      l[5](1, 2) = 1; l[5](2, 1) = 1;
      l[6](1, 2) = -i; l[6](2, 1) = i;
      const double r3 = 1.0 / std::sqrt(3.0);
      l[7](0, 0) = r3; l[7](1, 1) = r3; l[7](2, 2) = -2.0 * r3;
      for (const auto& m : l) gens.push_back(half_i * m);
      return LieAlgebra(name, 3, std::move(gens));
    }
  }
  throw ConfigurationError("unknown algebra");
}

inline LieAlgebra make_algebra(std::string_view name) { return make_algebra(parse_algebra_name(name)); }

using AlgebraPtr = std::shared_ptr<const LieAlgebra>;

// Process-wide immutable instances; fields hold these by pointer.
inline AlgebraPtr shared_algebra(AlgebraName name) {
  static const std::array<AlgebraPtr, 3> cache = {
      std::make_shared<const LieAlgebra>(make_algebra(AlgebraName::u1)),
      std::make_shared<const LieAlgebra>(make_algebra(AlgebraName::su2)),
      std::make_shared<const LieAlgebra>(make_algebra(AlgebraName::su3))};
  return cache[static_cast<std::size_t>(name)];
}

inline AlgebraPtr shared_algebra(std::string_view name) { return shared_algebra(parse_algebra_name(name)); }

// An element sum_a coeffs[a] J_a of a specific algebra.
class AlgebraValue {
 public:
  AlgebraValue(AlgebraPtr algebra, Eigen::VectorXd coeffs)
      : algebra_(std::move(algebra)), coeffs_(std::move(coeffs)) {
    if (coeffs_.size() != algebra_->dim()) {
      throw TypeMismatch("coefficient vector length does not match algebra dimension");
    }
  }

  static AlgebraValue zero(AlgebraPtr algebra) {
    const int n = algebra->dim();
    return AlgebraValue(std::move(algebra), Eigen::VectorXd::Zero(n));
  }

  static AlgebraValue basis(AlgebraPtr algebra, int a) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(algebra->dim());
    c[a] = 1.0;
    return AlgebraValue(std::move(algebra), std::move(c));
  }

  const LieAlgebra& algebra() const { return *algebra_; }
  const AlgebraPtr& algebra_ptr() const { return algebra_; }
  const Eigen::VectorXd& coeffs() const { return coeffs_; }
  Mat matrix() const { return algebra_->matrix(coeffs_); }

  AlgebraValue operator-() const { return AlgebraValue(algebra_, -coeffs_); }
  friend AlgebraValue operator*(double s, const AlgebraValue& x) {
    return AlgebraValue(x.algebra_, s * x.coeffs_);
  }

 private:
  AlgebraPtr algebra_;
  Eigen::VectorXd coeffs_;
};

// A group element in the defining representation.
struct GroupValue {
  AlgebraPtr algebra;
  Mat matrix;

  double unitarity_defect() const {
    const Mat id = Mat::Identity(matrix.rows(), matrix.cols());
    return (matrix.adjoint() * matrix - id).norm();
  }
  double determinant_defect() const {
    return std::abs(Eigen::MatrixXcd(matrix).determinant() - Complex(1.0, 0.0));
  }
};

namespace detail {

inline void require_same_algebra(const AlgebraValue& x, const AlgebraValue& y) {
  if (!(x.algebra() == y.algebra())) {
    throw TypeMismatch("operands belong to different algebras (" +
                       std::string(to_string(x.algebra().name())) + " vs " +
                       std::string(to_string(y.algebra().name())) + ")");
  }
}

}  // namespace detail

// [X, Y] computed from the structure constants.
inline AlgebraValue commutator(const AlgebraValue& x, const AlgebraValue& y) {
  detail::require_same_algebra(x, y);
  const LieAlgebra& g = x.algebra();
  const int n = g.dim();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  for (int a = 0; a < n; ++a) {
    if (x.coeffs()[a] == 0.0) continue;
    for (int b = 0; b < n; ++b) {
      const double xy = x.coeffs()[a] * y.coeffs()[b];
      if (xy == 0.0) continue;
      for (int k = 0; k < n; ++k) c[k] += g.f(a, b, k) * xy;
    }
  }
  return AlgebraValue(x.algebra_ptr(), std::move(c));
}

// {X, Y} = XY + YX. Leaves the algebra in general, so it stays a matrix.
inline Mat anticommutator(const AlgebraValue& x, const AlgebraValue& y) {
  detail::require_same_algebra(x, y);
  const Mat mx = x.matrix();
  const Mat my = y.matrix();
  return mx * my + my * mx;
}

// Re tr(X^dagger Y) in the defining representation.
inline double inner_product(const AlgebraValue& x, const AlgebraValue& y) {
  detail::require_same_algebra(x, y);
  double s = 0.0;
  for (int a = 0; a < x.algebra().dim(); ++a) {
    s += x.algebra().metric(a) * x.coeffs()[a] * y.coeffs()[a];
  }
  return s;
}

// Matrix exponential of an arbitrary (small) matrix. Eigen's MatrixFunctions
// implements scaling and squaring with Pade approximants.
inline Mat matrix_exp(const Mat& m) {
  const Eigen::MatrixXcd dense = m;
  return Mat(dense.exp());
}

inline GroupValue exp_map(const AlgebraValue& x) { return GroupValue{x.algebra_ptr(), matrix_exp(x.matrix())}; }

}  // namespace connlab
