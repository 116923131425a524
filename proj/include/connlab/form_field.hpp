#pragma once

// Matrix-valued differential p-forms over a Domain.
//
// A p-form stores one matrix-valued scalar field per strictly increasing
// multi-index mu_1 < ... < mu_p (FormIndexing order). The wedge product has
// no 1/(p! q!) normalisation: for 1-forms (X ^ Y)_{mu nu} = X_mu Y_nu - X_nu Y_mu,
// so F = dA + A ^ A has components d_mu A_nu - d_nu A_mu + [A_mu, A_nu].
//
// The scalar-field backend is a template parameter (PolyField or GridField),
// so the two backends never meet inside one expression.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "connlab/domain.hpp"
#include "connlab/errors.hpp"
#include "connlab/grid.hpp"
#include "connlab/lie_algebra.hpp"
#include "connlab/polynomial.hpp"

namespace connlab {

template <class Field>
class FormField {
 public:
  using field_type = Field;
  // Analytic source of a grid field: value of component `comp` at point x.
  using Generator = std::function<Mat(std::size_t comp, std::span<const double> x)>;

  FormField(Domain domain, AlgebraPtr algebra, int degree, std::vector<Field> components)
      : domain_(domain), algebra_(std::move(algebra)), degree_(degree), comps_(std::move(components)) {
    if (domain_.backend != Field::backend) throw UnsupportedBackend("domain backend does not match field backend");
    if (degree_ < 0) throw DegreeError("negative form degree");
    if (comps_.size() != FormIndexing::count(domain_.dim, degree_)) {
      throw DegreeError("component count does not match C(d, p)");
    }
    for (std::size_t i = 1; i < comps_.size(); ++i) {
      if (comps_[i].rows() != comps_[0].rows() || comps_[i].cols() != comps_[0].cols()) {
        throw TypeMismatch("form components have different matrix shapes");
      }
    }
    if (!comps_.empty()) {
      rows_ = comps_[0].rows();
      cols_ = comps_[0].cols();
    }
  }

  static FormField zero(const Domain& domain, AlgebraPtr algebra, int degree, Eigen::Index rows,
                        Eigen::Index cols) {
    std::vector<Field> c(FormIndexing::count(domain.dim, degree), Field::zero(domain, rows, cols));
    FormField f(domain, std::move(algebra), degree, std::move(c));
    f.rows_ = rows;
    f.cols_ = cols;
    return f;
  }

  // Algebra-valued zero p-form (n x n values).
  static FormField zero(const Domain& domain, AlgebraPtr algebra, int degree) {
    const auto n = algebra->rep_dim();
    return zero(domain, std::move(algebra), degree, n, n);
  }

  // Constant components, one matrix per multi-index.
  static FormField constant(const Domain& domain, AlgebraPtr algebra, int degree,
                            const std::vector<Mat>& values) {
    if (values.size() != FormIndexing::count(domain.dim, degree)) {
      throw DegreeError("constant form needs one value per component");
    }
    std::vector<Field> c;
    c.reserve(values.size());
    for (const auto& v : values) c.push_back(Field::constant(domain, v));
    return FormField(domain, std::move(algebra), degree, std::move(c));
  }

  // Grid field sampled from an analytic generator; the generator is kept so
  // the field can be re-sampled by refine().
  static FormField sample(const Domain& domain, AlgebraPtr algebra, int degree, Eigen::Index rows,
                          Eigen::Index cols, Generator gen)
    requires(Field::backend == Backend::Grid)
  {
    std::vector<Field> c;
    const std::size_t count = FormIndexing::count(domain.dim, degree);
    for (std::size_t i = 0; i < count; ++i) {
      c.push_back(Field::sample(domain, rows, cols, [&](std::span<const double> x) { return gen(i, x); }));
    }
    FormField f(domain, std::move(algebra), degree, std::move(c));
    f.rows_ = rows;
    f.cols_ = cols;
    f.generator_ = std::make_shared<const Generator>(std::move(gen));
    return f;
  }

  int degree() const { return degree_; }
  const Domain& domain() const { return domain_; }
  const LieAlgebra& algebra() const { return *algebra_; }
  const AlgebraPtr& algebra_ptr() const { return algebra_; }
  std::size_t size() const { return comps_.size(); }
  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }

  const std::vector<std::uint32_t>& masks() const { return FormIndexing::masks(domain_.dim, degree_); }
  const Field& operator[](std::size_t i) const { return comps_[i]; }
  Field& operator[](std::size_t i) { return comps_[i]; }
  const std::vector<Field>& components() const { return comps_; }

  // Component for the multi-index given by 0-based axes, e.g. {0, 2}.
  const Field& component(const std::vector<int>& axes) const {
    return comps_[FormIndexing::position(domain_.dim, FormIndexing::mask_of(axes))];
  }

  bool has_generator() const { return generator_ != nullptr; }
  const Generator& generator() const { return *generator_; }

  FormField& operator+=(const FormField& o) {
    require_compatible(o, "add");
    for (std::size_t i = 0; i < comps_.size(); ++i) comps_[i] += o.comps_[i];
    generator_.reset();
    return *this;
  }
  FormField& operator-=(const FormField& o) {
    require_compatible(o, "subtract");
    for (std::size_t i = 0; i < comps_.size(); ++i) comps_[i] -= o.comps_[i];
    generator_.reset();
    return *this;
  }
  FormField& operator*=(double s) {
    for (auto& c : comps_) c *= s;
    generator_.reset();
    return *this;
  }

  friend FormField operator+(FormField a, const FormField& b) { return a += b; }
  friend FormField operator-(FormField a, const FormField& b) { return a -= b; }
  friend FormField operator*(double s, FormField a) { return a *= s; }
  friend FormField operator-(FormField a) { return a *= -1.0; }

  void require_same_space(const FormField& o, const char* op) const {
    if (!(domain_ == o.domain_)) throw DomainMismatch(std::string(op) + ": operands live on different domains");
    if (!(*algebra_ == *o.algebra_)) throw TypeMismatch(std::string(op) + ": operands use different algebras");
  }

 private:
  void require_compatible(const FormField& o, const char* op) const {
    require_same_space(o, op);
    if (degree_ != o.degree_) throw DegreeError(std::string(op) + ": form degrees differ");
    if (rows_ != o.rows_ || cols_ != o.cols_) throw TypeMismatch(std::string(op) + ": value shapes differ");
  }

  Domain domain_;
  AlgebraPtr algebra_;
  int degree_;
  std::vector<Field> comps_;
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
  std::shared_ptr<const Generator> generator_;
};

using PolyForm = FormField<PolyField>;
using GridForm = FormField<GridField>;

template <class Field>
FormField<Field> add(const FormField<Field>& x, const FormField<Field>& y) {
  return x + y;
}

template <class Field>
FormField<Field> scale(double c, const FormField<Field>& x) {
  return c * x;
}

// X ^ Y with matrix products of the components.
template <class Field>
FormField<Field> wedge(const FormField<Field>& x, const FormField<Field>& y) {
  x.require_same_space(y, "wedge");
  const Domain& dom = x.domain();
  const int p = x.degree();
  const int q = y.degree();
  if (p + q > dom.dim) {
    throw DegreeError("wedge of a " + std::to_string(p) + "-form and a " + std::to_string(q) +
                      "-form exceeds dimension " + std::to_string(dom.dim));
  }
  if (x.cols() != y.rows()) throw TypeMismatch("wedge: matrix shapes do not compose");
  auto out = FormField<Field>::zero(dom, x.algebra_ptr(), p + q, x.rows(), y.cols());
  const auto& mx = x.masks();
  const auto& my = y.masks();
  for (std::size_t i = 0; i < mx.size(); ++i) {
    for (std::size_t j = 0; j < my.size(); ++j) {
      if (mx[i] & my[j]) continue;
      const int sign = FormIndexing::shuffle_sign(mx[i], my[j]);
      Field term = x[i].product(y[j]);
      if (sign < 0) term *= -1.0;
      out[FormIndexing::position(dom.dim, mx[i] | my[j])] += term;
    }
  }
  return out;
}

template <class Field>
FormField<Field> exterior_derivative(const FormField<Field>& x) {
  const Domain& dom = x.domain();
  const int p = x.degree();
  if (p >= dom.dim) {
    throw DegreeError("exterior derivative of a " + std::to_string(p) + "-form in dimension " +
                      std::to_string(dom.dim));
  }
  auto out = FormField<Field>::zero(dom, x.algebra_ptr(), p + 1, x.rows(), x.cols());
  const auto& mx = x.masks();
  for (std::size_t i = 0; i < mx.size(); ++i) {
    for (int mu = 0; mu < dom.dim; ++mu) {
      const std::uint32_t bit = 1u << mu;
      if (mx[i] & bit) continue;
      Field term = x[i].partial(mu, dom);
      if (FormIndexing::shuffle_sign(bit, mx[i]) < 0) term *= -1.0;
      out[FormIndexing::position(dom.dim, mx[i] | bit)] += term;
    }
  }
  return out;
}

// A form of degree > d: no components, identically zero. Returned by the
// covariant derivatives whose result cannot exist in low dimension.
template <class Field>
FormField<Field> vacuous_form(const Domain& domain, AlgebraPtr algebra, int degree) {
  if (degree <= domain.dim) throw DegreeError("vacuous_form requires degree > dimension");
  return FormField<Field>(domain, std::move(algebra), degree, {});
}

// Mean over sample points of sum_I Re tr(X_I^dagger Y_I).
template <class Field>
double inner(const FormField<Field>& x, const FormField<Field>& y) {
  x.require_same_space(y, "inner");
  if (x.degree() != y.degree()) throw DegreeError("inner: form degrees differ");
  const Domain& dom = x.domain();
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<Mat> xs;
    xs.reserve(dom.sample_count());
    x[i].for_each_sample(dom, [&](const Mat& v) { xs.push_back(v); });
    std::size_t k = 0;
    y[i].for_each_sample(dom, [&](const Mat& v) { total += (xs[k++].adjoint() * v).trace().real(); });
  }
  return total / static_cast<double>(dom.sample_count());
}

// sqrt of the mean over sample points of sum_I Re tr(X_I^dagger X_I).
// Summation order is fixed: components in FormIndexing order, then samples.
template <class Field>
double l2_norm(const FormField<Field>& x) {
  const Domain& dom = x.domain();
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i].for_each_sample(dom, [&](const Mat& v) { total += v.squaredNorm(); });
  }
  return std::sqrt(total / static_cast<double>(dom.sample_count()));
}

// Largest pointwise Frobenius norm of any component at any sample point.
template <class Field>
double max_norm(const FormField<Field>& x) {
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i].for_each_sample(x.domain(), [&](const Mat& v) { m = std::max(m, v.norm()); });
  }
  return m;
}

// Applies a linear map to every matrix value.
template <class Field, class Fn>
FormField<Field> map_linear(const FormField<Field>& x, Fn&& fn) {
  std::vector<Field> c;
  c.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) c.push_back(x[i].map_linear(fn));
  return FormField<Field>(x.domain(), x.algebra_ptr(), x.degree(), std::move(c));
}

// alpha(x) * m for a form with 1x1 values alpha.
template <class Field>
FormField<Field> tensor_constant(const FormField<Field>& alpha, const Mat& m) {
  if (alpha.rows() != 1 || alpha.cols() != 1) throw TypeMismatch("tensor_constant needs 1x1 values");
  return map_linear(alpha, [&](const Mat& v) -> Mat { return v(0, 0) * m; });
}

// Same field re-sampled from its generator on the doubled grid.
template <class Field>
FormField<Field> refine(const FormField<Field>& x) {
  if constexpr (Field::backend != Backend::Grid) {
    throw UnsupportedBackend("refine: polynomial fields are exact and cannot be refined");
  } else {
    if (!x.has_generator()) throw UnsupportedBackend("refine: field has no analytic generator to re-sample");
    return FormField<Field>::sample(x.domain().refined(), x.algebra_ptr(), x.degree(), x.rows(), x.cols(),
                                    x.generator());
  }
}

// Evaluates polynomial components at the sites of a grid domain.
inline GridForm sample_poly_to_grid(const PolyForm& x, const Domain& grid) {
  if (grid.backend != Backend::Grid) throw UnsupportedBackend("sample_poly_to_grid: target must be a grid domain");
  if (grid.dim != x.domain().dim) throw DomainMismatch("sample_poly_to_grid: dimensions differ");
  std::vector<GridField> c;
  for (std::size_t i = 0; i < x.size(); ++i) {
    c.push_back(GridField::sample(grid, x.rows(), x.cols(),
                                  [&](std::span<const double> p) { return x[i].value_at(p); }));
  }
  return GridForm(grid, x.algebra_ptr(), x.degree(), std::move(c));
}

}  // namespace connlab
