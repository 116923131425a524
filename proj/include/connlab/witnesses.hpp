#pragma once

// Explicit copy pairs with known classification, for tests and experiments.

#include <cmath>
#include <numbers>
#include <string>

#include "connlab/copy_analysis.hpp"
#include "connlab/random_fields.hpp"

namespace connlab {

template <class Field>
struct Witness {
  std::string name;
  Connection<Field> base;
  FormField<Field> direction;
  Verdict expected;
};

namespace detail {

inline PolyField::Exponent axis_power(int axis, int power) {
  PolyField::Exponent e{};
  e[static_cast<std::size_t>(axis)] = static_cast<std::uint8_t>(power);
  return e;
}

inline Mat scalar(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return m;
}

// Real 1x1 0-form: the polynomial `poly` on the exact backend, `periodic`
// sampled on the grid.
template <class Field, class Periodic>
FormField<Field> scalar_form(const Domain& domain, const AlgebraPtr& g, const PolyField& poly, Periodic&& periodic) {
  if constexpr (Field::backend == Backend::Polynomial) {
    return PolyForm(domain, g, 0, {poly});
  } else {
    return GridForm::sample(domain, g, 0, 1, 1,
                            [periodic](std::size_t, std::span<const double> x) { return scalar(periodic(x)); });
  }
}

// 1-form whose only nonzero component is `axis_value` along dx^{mu}.
template <class Field>
FormField<Field> single_component_1form(const FormField<Field>& value0, int mu) {
  auto k = FormField<Field>::zero(value0.domain(), value0.algebra_ptr(), 1);
  k[static_cast<std::size_t>(mu)] = value0[0];
  return k;
}

inline void require_nonabelian_triple(const LieAlgebra& g, const char* who) {
  if (g.dim() < 3) throw ConstructionError(std::string(who) + ": needs su2 or su3 (uses J_1, J_2, J_3)");
}

}  // namespace detail

// A = 0, K = J_axis phi(x^1) dx^1. dK = 0 and K^K = 0, so every point of the
// line is a copy.
template <class Field>
Witness<Field> single_generator_witness(const Domain& domain, const AlgebraPtr& g, int axis = 0) {
  if (axis < 0 || axis >= g->dim()) throw ConstructionError("single_generator_witness: bad generator index");
  PolyField phi_poly(1, 1);
  phi_poly.add_term(detail::axis_power(0, 1), detail::scalar(1.0));
  phi_poly.add_term(detail::axis_power(0, 2), detail::scalar(-2.0));
  phi_poly.add_term(detail::axis_power(0, 3), detail::scalar(1.5));
  const double length = domain.box_length;
  auto phi = detail::scalar_form<Field>(domain, g, phi_poly, [length](std::span<const double> x) {
    return std::sin(2.0 * std::numbers::pi * x[0] / length);
  });
  auto k = detail::single_component_1form(tensor_constant(phi, g->generator(axis)), 0);
  return {"single_generator", Connection<Field>::zero(domain, g), std::move(k), Verdict::AllCopies};
}

// Two pure gauges h_i d(h_i^-1) with h_i = g0 exp(phi_i J_axis). The twist g0
// is a genuinely non-abelian gauge field; K = -d(phi_2 - phi_1) g0 J_axis g0^-1
// has K^K = 0, so the line is a line of copies of the vacuum.
template <class Field>
Witness<Field> vacuum_witness(const Domain& domain, const AlgebraPtr& g, int axis = 2, double twist = 0.4) {
  if (axis < 0 || axis >= g->dim()) throw ConstructionError("vacuum_witness: bad generator index");
  PolyField phi1_poly(1, 1), phi2_poly(1, 1), chi_poly(1, 1);
  phi1_poly.add_term(detail::axis_power(0, 1), detail::scalar(0.7));
  phi1_poly.add_term(detail::axis_power(1, 1), detail::scalar(-0.3));
  phi2_poly.add_term(detail::axis_power(0, 2), detail::scalar(-0.5));
  phi2_poly.add_term(detail::axis_power(1, 1), detail::scalar(0.6));
  chi_poly.add_term(detail::axis_power(1, 1), detail::scalar(twist));
  const double length = domain.box_length;
  const double k0 = 2.0 * std::numbers::pi / length;
  auto phi1 = detail::scalar_form<Field>(domain, g, phi1_poly, [k0](std::span<const double> x) {
    return 0.7 * std::sin(k0 * x[0]) - 0.3 * std::cos(k0 * x[1]);
  });
  auto phi2 = detail::scalar_form<Field>(domain, g, phi2_poly, [k0](std::span<const double> x) {
    return -0.5 * std::cos(k0 * x[0]) + 0.6 * std::sin(k0 * x[1]);
  });
  auto chi = detail::scalar_form<Field>(domain, g, chi_poly, [k0, twist](std::span<const double> x) {
    return twist * std::sin(k0 * x[1]);
  });
  // Twist along a generator other than J_axis.
  const int other = g->dim() > 1 ? (axis + 1) % g->dim() : axis;
  const auto g0 = GroupField<Field>::exp_of(tensor_constant(chi, g->generator(other)));
  const auto h1 = g0 * GroupField<Field>::exp_of(tensor_constant(phi1, g->generator(axis)));
  const auto h2 = g0 * GroupField<Field>::exp_of(tensor_constant(phi2, g->generator(axis)));
  auto a = make_pure_gauge(h1);
  auto a_sharp = make_pure_gauge(h2);
  auto k = a_sharp.form() - a.form();
  return {"vacuum_pair", std::move(a), std::move(k), Verdict::AllCopies};
}

// Two unrelated pure gauges exp(X_i) d exp(-X_i). Both are flat, hence
// copies, but K^K != 0 in general and the line leaves the vacuum.
template <class Field>
Witness<Field> generic_vacuum_pair(const Domain& domain, const AlgebraPtr& g) {
  detail::require_nonabelian_triple(*g, "generic_vacuum_pair");
  PolyField u(1, 1), v(1, 1);
  u.add_term(detail::axis_power(0, 1), detail::scalar(0.8));
  v.add_term(detail::axis_power(1, 1), detail::scalar(0.8));
  const double k0 = 2.0 * std::numbers::pi / domain.box_length;
  auto su = detail::scalar_form<Field>(domain, g, u, [k0](std::span<const double> x) { return 0.8 * std::sin(k0 * x[0]); });
  auto sv = detail::scalar_form<Field>(domain, g, v, [k0](std::span<const double> x) { return 0.8 * std::sin(k0 * x[1]); });
  const auto g1 = GroupField<Field>::exp_of(tensor_constant(su, g->generator(0)));
  const auto g2 = GroupField<Field>::exp_of(tensor_constant(sv, g->generator(1)));
  auto a = make_pure_gauge(g1);
  auto k = make_pure_gauge(g2).form() - a.form();
  return {"generic_vacuum_pair", std::move(a), std::move(k), Verdict::EndpointsOnly};
}

// A = c (J_1 dx^1 + J_2 dx^2) has F = c^2 J_3 dx^1 dx^2, so exp(alpha J_3)
// stabilises F. Polynomial alpha = amplitude * x^1 (1 - x^1); grid alpha =
// amplitude * sin(2 pi x^1 / L). With constant_alpha the transform is global.
template <class Field>
Witness<Field> stabilizer_witness(const Domain& domain, const AlgebraPtr& g, double c = 1.0,
                                  double amplitude = 1.0, bool constant_alpha = false) {
  detail::require_nonabelian_triple(*g, "stabilizer_witness");
  auto a_form = FormField<Field>::zero(domain, g, 1);
  a_form[0] = FormField<Field>::constant(domain, g, 0, {c * g->generator(0)})[0];
  a_form[1] = FormField<Field>::constant(domain, g, 0, {c * g->generator(1)})[0];
  Connection<Field> a(std::move(a_form));
  PolyField alpha_poly(1, 1);
  if (constant_alpha) {
    alpha_poly.add_term(PolyField::Exponent{}, detail::scalar(amplitude));
  } else {
    alpha_poly.add_term(detail::axis_power(0, 1), detail::scalar(amplitude));
    alpha_poly.add_term(detail::axis_power(0, 2), detail::scalar(-amplitude));
  }
  const double length = domain.box_length;
  auto alpha = detail::scalar_form<Field>(domain, g, alpha_poly, [=](std::span<const double> x) {
    return constant_alpha ? amplitude : amplitude * std::sin(2.0 * std::numbers::pi * x[0] / length);
  });
  auto pair = make_stabilizer_copy(a, alpha, 2);
  return {constant_alpha ? "stabilizer_copy_global" : "stabilizer_copy", std::move(a), std::move(pair.difference),
          Verdict::EndpointsOnly};
}

// Random smooth A and K: generically not a copy pair.
template <class Field>
Witness<Field> random_pair(const Domain& domain, const AlgebraPtr& g, std::uint64_t seed) {
  CounterRng rng(seed, 1);
  auto a = random_smooth_form<Field>(domain, g, 1, rng);
  auto k = random_smooth_form<Field>(domain, g, 1, rng);
  return {"random_pair", Connection<Field>(std::move(a)), std::move(k), Verdict::NotCopyPair};
}

}  // namespace connlab
