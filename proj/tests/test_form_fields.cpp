#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "connlab/random_fields.hpp"

using namespace connlab;

namespace {

const AlgebraPtr su2 = shared_algebra(AlgebraName::su2);
const AlgebraPtr u1 = shared_algebra(AlgebraName::u1);

Mat scalar(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return m;
}

template <class Field>
double max_abs_diff(const FormField<Field>& x, const FormField<Field>& y) {
  return max_norm(x - y);
}

// Transposes every value of a form.
template <class Field>
FormField<Field> transposed(const FormField<Field>& x) {
  return map_linear(x, [](const Mat& m) -> Mat { return m.transpose(); });
}

}  // namespace

TEST_CASE("form indexing orders multi-indices lexicographically") {
  const auto& m = FormIndexing::masks(3, 2);
  REQUIRE(m.size() == 3);
  CHECK(FormIndexing::label(m[0]) == "(1,2)");
  CHECK(FormIndexing::label(m[1]) == "(1,3)");
  CHECK(FormIndexing::label(m[2]) == "(2,3)");
  CHECK(FormIndexing::label(FormIndexing::masks(3, 0)[0]) == "()");
  CHECK(FormIndexing::count(4, 2) == 6);
  CHECK(FormIndexing::count(2, 3) == 0);
  CHECK(FormIndexing::shuffle_sign(0b10, 0b01) == -1);
  CHECK(FormIndexing::shuffle_sign(0b01, 0b10) == 1);
  CHECK(FormIndexing::shuffle_sign(0b100, 0b011) == 1);
}

TEST_CASE("site indexer wraps periodically") {
  const SiteIndexer idx{2, 4};
  CHECK(idx.shifted(0, 0, -1) == 3);
  CHECK(idx.shifted(3, 0, +1) == 0);
  CHECK(idx.shifted(0, 1, -1) == 12);
  const auto c = idx.coords(13);
  CHECK(c[0] == 1);
  CHECK(c[1] == 3);
  CHECK(idx.index(c) == 13);
}

TEST_CASE("domain validation") {
  CHECK_THROWS_AS(Domain::grid(2, 7), ConfigurationError);
  CHECK_THROWS_AS(Domain::grid(2, 2), ConfigurationError);
  CHECK_THROWS_AS(Domain::grid(2, 8, 0.0), ConfigurationError);
  CHECK_THROWS_AS(Domain::grid(5, 8), ConfigurationError);
  CHECK_THROWS_AS(Domain::polynomial(2, 3), ConfigurationError);
  CHECK(Domain::grid(3, 8, 2.0).spacing() == 0.25);
  CHECK(Domain::grid(2, 8).refined().sites_per_axis == 16);
  CHECK_THROWS_AS(Domain::polynomial(2).refined(), UnsupportedBackend);
}

TEST_CASE("wedge of u1 1-form with itself vanishes") {
  const auto dom = Domain::polynomial(3);
  CounterRng rng(1);
  const auto a = random_poly_form(dom, u1, 1, 2, rng);
  CHECK(max_norm(wedge(a, a)) == 0.0);
  const auto gd = Domain::grid(3, 8);
  const auto b = random_grid_noise(gd, u1, 1, rng);
  CHECK(max_norm(wedge(b, b)) == 0.0);
}

TEST_CASE("wedge of constant single-component 1-forms") {
  const auto dom = Domain::polynomial(2);
  const Mat z = Mat::Zero(2, 2);
  const auto x = PolyForm::constant(dom, su2, 1, {su2->generator(0), z});
  const auto y = PolyForm::constant(dom, su2, 1, {z, su2->generator(1)});
  const auto w = wedge(x, y);
  REQUIRE(w.degree() == 2);
  const std::array<double, 2> p{0.3, 0.7};
  CHECK((w[0].value_at(p) - su2->generator(0) * su2->generator(1)).norm() == 0.0);
}

TEST_CASE("1-form wedge matches the component formula") {
  const auto dom = Domain::grid(3, 4);
  CounterRng rng(2);
  const auto x = random_grid_noise(dom, su2, 1, rng);
  const auto y = random_grid_noise(dom, su2, 1, rng);
  const auto w = wedge(x, y);
  for (int mu = 0; mu < 3; ++mu) {
    for (int nu = mu + 1; nu < 3; ++nu) {
      const auto& c = w.component({mu, nu});
      for (std::size_t s = 0; s < dom.site_count(); ++s) {
        const Mat expect = x[mu][s] * y[nu][s] - x[nu][s] * y[mu][s];
        CHECK((c[s] - expect).norm() <= 1e-15);
      }
    }
  }
}

TEST_CASE("polynomial and grid wedges agree after sampling") {
  const auto pd = Domain::polynomial(2);
  const auto gd = Domain::grid(2, 8);
  CounterRng rng(3);
  const auto x = random_poly_form(pd, su2, 1, 2, rng);
  const auto y = random_poly_form(pd, su2, 1, 2, rng);
  const auto sampled_then_wedged = wedge(sample_poly_to_grid(x, gd), sample_poly_to_grid(y, gd));
  const auto wedged_then_sampled = sample_poly_to_grid(wedge(x, y), gd);
  CHECK(max_abs_diff(sampled_then_wedged, wedged_then_sampled) <= 1e-13);
}

TEST_CASE("graded sign rule for 1-forms") {
  CounterRng rng(4);
  SECTION("scalar values anticommute") {
    const auto dom = Domain::polynomial(3);
    const auto x = random_poly_form(dom, u1, 1, 2, rng);
    const auto y = random_poly_form(dom, u1, 1, 2, rng);
    CHECK(max_norm(wedge(x, y) + wedge(y, x)) <= 1e-13);
  }
  SECTION("matrix values: X^Y = -(Y^T ^ X^T)^T") {
    const auto dom = Domain::grid(3, 4);
    const auto x = random_grid_noise(dom, su2, 1, rng);
    const auto y = random_grid_noise(dom, su2, 1, rng);
    CHECK(max_norm(wedge(x, y) + transposed(wedge(transposed(y), transposed(x)))) <= 1e-15);
  }
}

TEST_CASE("wedge is bilinear") {
  const auto dom = Domain::grid(2, 4);
  CounterRng rng(5);
  const auto x = random_grid_noise(dom, su2, 1, rng);
  const auto y = random_grid_noise(dom, su2, 1, rng);
  const auto z = random_grid_noise(dom, su2, 1, rng);
  CHECK(max_norm(wedge(2.0 * x + z, y) - (2.0 * wedge(x, y) + wedge(z, y))) <= 1e-14);
  CHECK(max_norm(wedge(x, y - 3.0 * z) - (wedge(x, y) - 3.0 * wedge(x, z))) <= 1e-14);
}

TEST_CASE("wedge errors") {
  const auto dom = Domain::polynomial(2);
  const auto two = PolyForm::zero(dom, su2, 2);
  const auto one = PolyForm::zero(dom, su2, 1);
  CHECK_THROWS_AS(wedge(two, one), DegreeError);
  CHECK_THROWS_AS(wedge(one, PolyForm::zero(Domain::polynomial(3), su2, 1)), DomainMismatch);
  CHECK_THROWS_AS(wedge(one, PolyForm::zero(dom, shared_algebra(AlgebraName::su3), 1)), TypeMismatch);
  CHECK_THROWS_AS(PolyForm(Domain::grid(2, 4), su2, 1, {PolyField(2, 2), PolyField(2, 2)}), UnsupportedBackend);
  CHECK_THROWS_AS(PolyForm(dom, su2, 1, {PolyField(2, 2)}), DegreeError);
}

TEST_CASE("exterior derivative of x2 dx1 in u1") {
  const auto dom = Domain::polynomial(2);
  PolyField a1(1, 1);
  PolyField::Exponent e{};
  e[1] = 1;
  a1.add_term(e, u1->generator(0));
  const PolyForm a(dom, u1, 1, {a1, PolyField(1, 1)});
  const auto da = exterior_derivative(a);
  const std::array<double, 2> p{0.2, 0.9};
  CHECK((da[0].value_at(p) - (-1.0) * u1->generator(0)).norm() == 0.0);
}

TEST_CASE("d of d vanishes on both backends") {
  CounterRng rng(6);
  for (int d = 2; d <= 4; ++d) {
    const auto pd = Domain::polynomial(d);
    const auto gd = Domain::grid(d, d == 4 ? 4 : 8);
    for (int p = 0; p + 2 <= d; ++p) {
      INFO("d=" << d << " p=" << p);
      const auto x = random_poly_form(pd, su2, p, 3, rng);
      CHECK(max_norm(exterior_derivative(exterior_derivative(x))) <= 1e-14);
      const auto y = random_trig_form(gd, su2, p, rng);
      CHECK(max_norm(exterior_derivative(exterior_derivative(y))) <= 1e-14);
    }
  }
}

TEST_CASE("exterior derivative of a top form is a degree error") {
  const auto dom = Domain::grid(2, 4);
  CHECK_THROWS_AS(exterior_derivative(GridForm::zero(dom, su2, 2)), DegreeError);
}

TEST_CASE("grid derivative converges at second order") {
  CounterRng rng(7);
  const auto coarse = Domain::grid(2, 8);
  auto series = random_trig_series(coarse, *su2, 1, 2, rng);
  auto error_at = [&](int n) {
    const auto dom = Domain::grid(2, n);
    const auto a = trig_form(dom, su2, 1, series);
    // Exact (dA)_12 = d_1 A_2 - d_2 A_1.
    const auto exact = GridForm::sample(dom, su2, 2, 2, 2, [&](std::size_t, std::span<const double> x) {
      return Mat(series[1].partial(0, x) - series[0].partial(1, x));
    });
    return l2_norm(exterior_derivative(a) - exact);
  };
  const double e8 = error_at(8);
  const double e16 = error_at(16);
  const double e32 = error_at(32);
  CHECK(e8 / e16 >= 3.8);
  CHECK(e16 / e32 >= 3.8);
}

TEST_CASE("linear operations") {
  const auto dom = Domain::grid(2, 4);
  CounterRng rng(8);
  const auto x = random_grid_noise(dom, su2, 1, rng);
  const auto y = random_grid_noise(dom, su2, 1, rng);
  CHECK(max_norm(add(x, scale(-1.0, x))) == 0.0);
  CHECK(max_norm(scale(2.0, x) - add(x, x)) == 0.0);
  const auto xy = add(x, y);
  const auto yx = add(y, x);
  for (std::size_t i = 0; i < xy.size(); ++i) {
    for (std::size_t s = 0; s < dom.site_count(); ++s) CHECK(xy[i][s] == yx[i][s]);
  }
  CHECK_THROWS_AS(add(x, GridForm::zero(dom, su2, 2)), DegreeError);
}

TEST_CASE("l2 norm") {
  const auto pd = Domain::polynomial(3);
  CHECK(l2_norm(PolyForm::zero(pd, su2, 1)) == 0.0);
  const auto j1 = PolyForm::constant(pd, su2, 0, {su2->generator(0)});
  CHECK(l2_norm(j1) == Catch::Approx(std::sqrt(0.5)).epsilon(1e-15));
  const auto gj1 = GridForm::constant(Domain::grid(2, 4), su2, 0, {su2->generator(0)});
  CHECK(l2_norm(gj1) == Catch::Approx(std::sqrt(0.5)).epsilon(1e-15));

  CounterRng rng(9);
  const auto x = random_poly_form(pd, su2, 1, 2, rng);
  for (double c : {-2.5, 0.1, 7.0}) CHECK(std::abs(l2_norm(c * x) - std::abs(c) * l2_norm(x)) <= 1e-13 * l2_norm(x));
  CHECK(inner(x, x) == Catch::Approx(l2_norm(x) * l2_norm(x)).epsilon(1e-13));
}

TEST_CASE("polynomial norm samples the lattice j/(m-1)") {
  // f = x1: samples 0, 1/3, 2/3, 1 along each line, mean of squares 7/18.
  const auto dom = Domain::polynomial(2, 4);
  PolyField f(1, 1);
  PolyField::Exponent e{};
  e[0] = 1;
  f.add_term(e, scalar(1.0));
  const PolyForm x(dom, u1, 0, {f});
  CHECK(l2_norm(x) == Catch::Approx(std::sqrt(7.0 / 18.0)).epsilon(1e-15));
}

TEST_CASE("refine") {
  const auto dom = Domain::grid(2, 8);
  SECTION("constant fields stay constant") {
    const auto c = GridForm::sample(dom, su2, 0, 2, 2, [](std::size_t, std::span<const double>) {
      return Mat(su2->generator(2));
    });
    const auto r = refine(c);
    REQUIRE(r.domain().sites_per_axis == 16);
    for (const auto& v : r[0].values()) CHECK(v == su2->generator(2));
  }
  SECTION("sinusoidal field matches closed form at shared sites") {
    auto fn = [](std::span<const double> x) { return std::sin(2.0 * std::numbers::pi * x[0]) * std::cos(2.0 * std::numbers::pi * x[1]); };
    const auto f = GridForm::sample(dom, u1, 0, 1, 1, [&](std::size_t, std::span<const double> x) { return scalar(fn(x)); });
    const auto r = refine(f);
    const SiteIndexer coarse{2, 8};
    const SiteIndexer fine{2, 16};
    for (std::size_t s = 0; s < dom.site_count(); ++s) {
      auto c = coarse.coords(s);
      const std::array<double, 2> x{c[0] / 8.0, c[1] / 8.0};
      c[0] *= 2;
      c[1] *= 2;
      CHECK(std::abs(r[0][fine.index(c)](0, 0).real() - fn(x)) <= 1e-15);
      CHECK(r[0][fine.index(c)] == f[0][s]);
    }
  }
  SECTION("errors") {
    CHECK_THROWS_AS(refine(PolyForm::zero(Domain::polynomial(2), su2, 1)), UnsupportedBackend);
    CHECK_THROWS_AS(refine(GridForm::zero(dom, su2, 1)), UnsupportedBackend);
    CounterRng rng(10);
    const auto a = random_trig_form(dom, su2, 1, rng);
    CHECK(refine(a).has_generator());
    CHECK_FALSE((2.0 * a).has_generator());
  }
}

TEST_CASE("sample_poly_to_grid") {
  const auto pd = Domain::polynomial(2);
  const auto gd = Domain::grid(2, 8);
  SECTION("constant polynomial becomes a constant grid field") {
    const auto c = PolyForm::constant(pd, su2, 0, {su2->generator(1)});
    const auto g = sample_poly_to_grid(c, gd);
    for (const auto& v : g[0].values()) CHECK(v == su2->generator(1));
  }
  SECTION("least-squares fit of a sampled linear polynomial recovers its coefficients") {
    CounterRng rng(11);
    const auto x = random_poly_form(pd, u1, 0, 1, rng);
    const auto g = sample_poly_to_grid(x, gd);
    const SiteIndexer idx{2, 8};
    Eigen::MatrixXd design(64, 3);
    Eigen::VectorXd rhs(64);
    for (std::size_t s = 0; s < 64; ++s) {
      const auto c = idx.coords(s);
      design.row(static_cast<Eigen::Index>(s)) << 1.0, c[0] * gd.spacing(), c[1] * gd.spacing();
      rhs[static_cast<Eigen::Index>(s)] = g[0][s](0, 0).imag();
    }
    const Eigen::VectorXd fit = design.colPivHouseholderQr().solve(rhs);
    PolyField::Exponent e0{}, e1{}, e2{};
    e1[0] = 1;
    e2[1] = 1;
    CHECK(std::abs(fit[0] - x[0].terms().at(e0)(0, 0).imag()) <= 1e-13);
    CHECK(std::abs(fit[1] - x[0].terms().at(e1)(0, 0).imag()) <= 1e-13);
    CHECK(std::abs(fit[2] - x[0].terms().at(e2)(0, 0).imag()) <= 1e-13);
  }
  SECTION("dimension mismatch") {
    CHECK_THROWS_AS(sample_poly_to_grid(PolyForm::zero(pd, su2, 1), Domain::grid(3, 4)), DomainMismatch);
    CHECK_THROWS_AS(sample_poly_to_grid(PolyForm::zero(pd, su2, 1), Domain::polynomial(2)), UnsupportedBackend);
  }
}

TEST_CASE("Leibniz rule: exact on polynomials, O(h^2) on the grid") {
  CounterRng rng(12);
  SECTION("polynomial") {
    const auto dom = Domain::polynomial(3);
    for (int p = 0; p <= 1; ++p) {
      const auto x = random_poly_form(dom, su2, p, 2, rng);
      const auto y = random_poly_form(dom, su2, 1, 2, rng);
      const double sign = p % 2 == 0 ? 1.0 : -1.0;
      const auto lhs = exterior_derivative(wedge(x, y));
      const auto rhs = wedge(exterior_derivative(x), y) + sign * wedge(x, exterior_derivative(y));
      CHECK(max_norm(lhs - rhs) <= 1e-13);
    }
  }
  SECTION("grid violation shrinks under refinement") {
    const auto dom = Domain::grid(2, 8);
    const auto x = random_trig_form(dom, su2, 0, rng);
    const auto y = random_trig_form(dom, su2, 1, rng);
    auto violation = [](const GridForm& a, const GridForm& b) {
      return l2_norm(exterior_derivative(wedge(a, b)) - wedge(exterior_derivative(a), b) -
                     wedge(a, exterior_derivative(b)));
    };
    const double v8 = violation(x, y);
    const double v16 = violation(refine(x), refine(y));
    CHECK(v8 > 1e-6);
    CHECK(v8 / v16 >= 3.5);
  }
}

TEST_CASE("vacuous forms") {
  const auto dom = Domain::grid(2, 4);
  const auto v = vacuous_form<GridField>(dom, su2, 3);
  CHECK(v.size() == 0);
  CHECK(l2_norm(v) == 0.0);
  CHECK_THROWS_AS(vacuous_form<GridField>(dom, su2, 2), DegreeError);
}

TEST_CASE("tensor_constant and map_linear") {
  const auto dom = Domain::polynomial(2);
  CounterRng rng(13);
  const auto alpha = random_poly_scalar(dom, su2, 2, rng);
  const auto t = tensor_constant(alpha, su2->generator(2));
  const std::array<double, 2> p{0.4, 0.1};
  CHECK((t[0].value_at(p) - alpha[0].value_at(p)(0, 0) * su2->generator(2)).norm() <= 1e-15);
  CHECK_THROWS_AS(tensor_constant(PolyForm::zero(dom, su2, 0), su2->generator(0)), TypeMismatch);
}
