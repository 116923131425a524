#pragma once

// Connections, curvature, covariant derivatives and gauge transformations.

#include <cmath>
#include <initializer_list>
#include <memory>
#include <string>
#include <utility>

#include "connlab/form_field.hpp"

namespace connlab {

// A gauge potential: an algebra-valued 1-form. It transforms affinely,
// A -> g A g^-1 + g d(g^-1), unlike the covariant forms built from it.
template <class Field>
class Connection {
 public:
  explicit Connection(FormField<Field> form) : form_(std::move(form)) {
    if (form_.degree() != 1) throw DegreeError("a connection is a 1-form");
  }

  static Connection zero(const Domain& domain, AlgebraPtr algebra) {
    return Connection(FormField<Field>::zero(domain, std::move(algebra), 1));
  }

  const FormField<Field>& form() const { return form_; }
  const Domain& domain() const { return form_.domain(); }
  const LieAlgebra& algebra() const { return form_.algebra(); }
  const AlgebraPtr& algebra_ptr() const { return form_.algebra_ptr(); }

  // A + t K.
  Connection shifted(const FormField<Field>& k, double t = 1.0) const { return Connection(form_ + t * k); }

 private:
  FormField<Field> form_;
};

using PolyConnection = Connection<PolyField>;
using GridConnection = Connection<GridField>;

namespace detail {

// exp(p) as a truncated power series. With b = sup-bound of p on [0,1]^d the
// dropped tail is at most b^{K+1}/(K+1)! * e^b, which is driven below `tail`.
inline PolyField poly_exp(const PolyField& p, const Domain& domain, double tail = 1e-16) {
  const double b = p.sup_bound();
  const Mat id = Mat::Identity(p.rows(), p.cols());
  PolyField sum = PolyField::constant(domain, id);
  PolyField term = sum;
  double bound = 1.0;
  for (int k = 1; k < 200; ++k) {
    term = term.product(p).pruned(1e-18);
    term *= 1.0 / k;
    sum += term;
    bound *= b / k;
    if (bound * b / (k + 1) * std::exp(b) < tail) break;
  }
  return sum.pruned(1e-18);
}

}  // namespace detail

// Point-dependent group element g(x), stored together with g(x)^-1 so both
// the adjoint action and g d(g^-1) are available without inversion.
template <class Field>
class GroupField {
 public:
  GroupField(FormField<Field> g, FormField<Field> g_inverse) : g_(std::move(g)), inv_(std::move(g_inverse)) {
    if (g_.degree() != 0 || inv_.degree() != 0) throw DegreeError("group fields are 0-forms");
    g_.require_same_space(inv_, "GroupField");
  }

  static GroupField identity(const Domain& domain, const AlgebraPtr& algebra) {
    auto id = FormField<Field>::constant(domain, algebra, 0, {algebra->identity()});
    return GroupField(id, id);
  }

  // g = exp(X) for an algebra-valued 0-form X. Polynomial backend: truncated
  // exponential series of the polynomial generator, differentiated exactly.
  // Grid backend: pointwise matrix exponential of the sampled values; if X has
  // an analytic generator, g keeps one too (so it can be refined).
  static GroupField exp_of(const FormField<Field>& x) {
    if (x.degree() != 0) throw DegreeError("exp_of expects an algebra-valued 0-form");
    if constexpr (Field::backend == Backend::Polynomial) {
      const Domain& dom = x.domain();
      auto g = PolyForm(dom, x.algebra_ptr(), 0, {detail::poly_exp(x[0], dom)});
      auto inv = PolyForm(dom, x.algebra_ptr(), 0, {detail::poly_exp(-1.0 * x[0], dom)});
      return GroupField(std::move(g), std::move(inv));
    } else {
      if (x.has_generator()) {
        auto gen = std::make_shared<typename GridForm::Generator>(x.generator());
        auto g = GridForm::sample(x.domain(), x.algebra_ptr(), 0, x.rows(), x.cols(),
                                  [gen](std::size_t c, std::span<const double> p) { return matrix_exp((*gen)(c, p)); });
        auto inv = GridForm::sample(x.domain(), x.algebra_ptr(), 0, x.rows(), x.cols(),
                                    [gen](std::size_t c, std::span<const double> p) { return matrix_exp(-(*gen)(c, p)); });
        return GroupField(std::move(g), std::move(inv));
      }
      auto g = map_linear(x, [](const Mat& v) -> Mat { return matrix_exp(v); });
      auto inv = map_linear(x, [](const Mat& v) -> Mat { return matrix_exp(-v); });
      return GroupField(std::move(g), std::move(inv));
    }
  }

  const FormField<Field>& g() const { return g_; }
  const FormField<Field>& inverse() const { return inv_; }
  const Domain& domain() const { return g_.domain(); }

  // Pointwise product (g h)(x) = g(x) h(x).
  friend GroupField operator*(const GroupField& a, const GroupField& b) {
    return GroupField(wedge(a.g_, b.g_), wedge(b.inv_, a.inv_));
  }

  // max over sample points of ||g^dagger g - 1||.
  double unitarity_defect() const {
    double worst = 0.0;
    const Mat id = g_.algebra().identity();
    g_[0].for_each_sample(g_.domain(), [&](const Mat& v) { worst = std::max(worst, (v.adjoint() * v - id).norm()); });
    return worst;
  }

  // max over sample points of ||g g^-1 - 1||.
  double inverse_defect() const {
    return max_norm(wedge(g_, inv_) - FormField<Field>::constant(domain(), g_.algebra_ptr(), 0, {g_.algebra().identity()}));
  }

 private:
  FormField<Field> g_;
  FormField<Field> inv_;
};

using PolyGroupField = GroupField<PolyField>;
using GridGroupField = GroupField<GridField>;

// F = dA + A ^ A.
template <class Field>
FormField<Field> curvature(const Connection<Field>& a) {
  return exterior_derivative(a.form()) + wedge(a.form(), a.form());
}

// DK = dK + A ^ K + K ^ A on an adjoint 1-form.
template <class Field>
FormField<Field> cov_d_adjoint_1form(const Connection<Field>& a, const FormField<Field>& k) {
  if (k.degree() != 1) throw DegreeError("cov_d_adjoint_1form expects a 1-form");
  return exterior_derivative(k) + wedge(a.form(), k) + wedge(k, a.form());
}

// DW = dW + A ^ W - W ^ A on an adjoint 2-form. In d = 2 there are no
// 3-forms; the result is the (component-free) zero 3-form.
template <class Field>
FormField<Field> cov_d_adjoint_2form(const Connection<Field>& a, const FormField<Field>& w) {
  if (w.degree() != 2) throw DegreeError("cov_d_adjoint_2form expects a 2-form");
  a.form().require_same_space(w, "cov_d_adjoint_2form");
  if (w.domain().dim < 3) return vacuous_form<Field>(w.domain(), w.algebra_ptr(), 3);
  return exterior_derivative(w) + wedge(a.form(), w) - wedge(w, a.form());
}

// Graded commutator [K, W] = K ^ W - W ^ K of a 1-form and a 2-form.
template <class Field>
FormField<Field> graded_commutator(const FormField<Field>& k, const FormField<Field>& w) {
  if (k.degree() != 1 || w.degree() != 2) throw DegreeError("graded_commutator expects a 1-form and a 2-form");
  k.require_same_space(w, "graded_commutator");
  if (w.domain().dim < 3) return vacuous_form<Field>(w.domain(), w.algebra_ptr(), 3);
  return wedge(k, w) - wedge(w, k);
}

// DV = dV + A V for a column field V (n x 1 values).
template <class Field>
FormField<Field> cov_d_vector(const Connection<Field>& a, const FormField<Field>& v) {
  if (v.degree() != 0) throw DegreeError("cov_d_vector expects a 0-form");
  if (v.rows() != a.form().cols() || v.cols() != 1) {
    throw TypeMismatch("cov_d_vector: V must be a column of length " + std::to_string(a.form().cols()));
  }
  return exterior_derivative(v) + wedge(a.form(), v);
}

// g X g^-1, componentwise.
template <class Field>
FormField<Field> gauge_transform_adjoint(const GroupField<Field>& g, const FormField<Field>& x) {
  g.g().require_same_space(x, "gauge_transform_adjoint");
  return wedge(wedge(g.g(), x), g.inverse());
}

// A' = g A g^-1 + g d(g^-1).
template <class Field>
Connection<Field> gauge_transform_connection(const GroupField<Field>& g, const Connection<Field>& a) {
  g.g().require_same_space(a.form(), "gauge_transform_connection");
  return Connection<Field>(gauge_transform_adjoint(g, a.form()) + wedge(g.g(), exterior_derivative(g.inverse())));
}

// A norm-valued result that may be vacuous in low dimension.
struct ResidualValue {
  double value = 0.0;
  bool degenerate_dimension = false;
};

// ||D F|| for F = curvature(A). Vacuous (0, flagged) for d < 3.
template <class Field>
ResidualValue bianchi_residual(const Connection<Field>& a) {
  if (a.domain().dim < 3) return {0.0, true};
  return {l2_norm(cov_d_adjoint_2form(a, curvature(a))), false};
}

// Outcome of checking an identity lhs = rhs: the absolute residual and the
// relative one, absolute / (1 + sum of the norms of the terms involved).
struct IdentityCheck {
  double absolute = 0.0;
  double relative = 0.0;
  bool degenerate_dimension = false;
};

inline IdentityCheck make_check(double absolute, std::initializer_list<double> term_norms) {
  double s = 1.0;
  for (double n : term_norms) s += n;
  return {absolute, absolute / s, false};
}

// D#K = DK + 2 K^K, with D# the covariant derivative of A# = A + K.
template <class Field>
IdentityCheck check_dsharp_k(const Connection<Field>& a, const FormField<Field>& k) {
  const auto lhs = cov_d_adjoint_1form(a.shifted(k), k);
  const auto dk = cov_d_adjoint_1form(a, k);
  const auto kk = wedge(k, k);
  return make_check(l2_norm(lhs - dk - 2.0 * kk), {l2_norm(lhs), l2_norm(dk), 2.0 * l2_norm(kk)});
}

// F# = F + DK + K^K.
template <class Field>
IdentityCheck check_curvature_shift(const Connection<Field>& a, const FormField<Field>& k) {
  const auto fs = curvature(a.shifted(k));
  const auto f = curvature(a);
  const auto dk = cov_d_adjoint_1form(a, k);
  const auto kk = wedge(k, k);
  return make_check(l2_norm(fs - f - dk - kk), {l2_norm(fs), l2_norm(f), l2_norm(dk), l2_norm(kk)});
}

// DDK + [K, F] = 0 for any adjoint 1-form K (needs d >= 3).
template <class Field>
IdentityCheck check_ddk(const Connection<Field>& a, const FormField<Field>& k) {
  if (a.domain().dim < 3) return {0.0, 0.0, true};
  const auto ddk = cov_d_adjoint_2form(a, cov_d_adjoint_1form(a, k));
  const auto kf = graded_commutator(k, curvature(a));
  return make_check(l2_norm(ddk + kf), {l2_norm(ddk), l2_norm(kf)});
}

// DF = 0 (needs d >= 3); terms are dF and A^F - F^A.
template <class Field>
IdentityCheck check_bianchi(const Connection<Field>& a) {
  if (a.domain().dim < 3) return {0.0, 0.0, true};
  const auto f = curvature(a);
  const auto df = exterior_derivative(f);
  const auto af = wedge(a.form(), f) - wedge(f, a.form());
  return make_check(l2_norm(df + af), {l2_norm(df), l2_norm(af)});
}

// D#V = DV + K V.
template <class Field>
IdentityCheck check_dsharp_vector(const Connection<Field>& a, const FormField<Field>& k, const FormField<Field>& v) {
  const auto lhs = cov_d_vector(a.shifted(k), v);
  const auto dv = cov_d_vector(a, v);
  const auto kv = wedge(k, v);
  return make_check(l2_norm(lhs - dv - kv), {l2_norm(lhs), l2_norm(dv), l2_norm(kv)});
}

// curvature(g.A) = g curvature(A) g^-1.
template <class Field>
IdentityCheck check_curvature_covariance(const GroupField<Field>& g, const Connection<Field>& a) {
  const auto lhs = curvature(gauge_transform_connection(g, a));
  const auto rhs = gauge_transform_adjoint(g, curvature(a));
  return make_check(l2_norm(lhs - rhs), {l2_norm(lhs), l2_norm(rhs)});
}

// d(d X) = 0.
template <class Field>
IdentityCheck check_dd_zero(const FormField<Field>& x) {
  const auto dx = exterior_derivative(x);
  return make_check(l2_norm(exterior_derivative(dx)), {l2_norm(dx)});
}

}  // namespace connlab
