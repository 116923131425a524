#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "connlab/copy_solver.hpp"
#include "connlab/witnesses.hpp"

using namespace connlab;

namespace {

const AlgebraPtr su2 = shared_algebra(AlgebraName::su2);
const AlgebraPtr su3 = shared_algebra(AlgebraName::su3);
const AlgebraPtr u1 = shared_algebra(AlgebraName::u1);

// Dimension of the kernel of d on periodic 1-forms with centered
// differences, counted mode by mode: the symbol of d at wave vector k is
// v -> s ^ v with s_mu = sin(2 pi k_mu / n); its kernel is 1-dimensional if
// s != 0 and d-dimensional otherwise (for d = 2).
long fourier_nullity_2d(int n) {
  long total = 0;
  for (int k1 = 0; k1 < n; ++k1) {
    for (int k2 = 0; k2 < n; ++k2) {
      const double s1 = std::sin(2.0 * std::numbers::pi * k1 / n);
      const double s2 = std::sin(2.0 * std::numbers::pi * k2 / n);
      total += (std::abs(s1) < 1e-12 && std::abs(s2) < 1e-12) ? 2 : 1;
    }
  }
  return total;
}

GridForm perturbed(const GridForm& k, double fraction, std::uint64_t seed) {
  CounterRng rng(seed, 2);
  const auto noise = random_grid_noise(k.domain(), k.algebra_ptr(), 1, rng);
  return k + (fraction * l2_norm(k) / l2_norm(noise)) * noise;
}

}  // namespace

TEST_CASE("flatten and unflatten are inverse") {
  const Domain dom = Domain::grid(3, 4);
  CounterRng rng(1, 0);
  const auto x = random_grid_noise(dom, su3, 1, rng);
  const auto v = flatten(x);
  CHECK(v.size() == 64 * 3 * 8);
  // Coefficients are traces against the basis, so the round trip is exact
  // only up to rounding.
  CHECK(max_norm(unflatten(v, dom, su3, 1) - x) <= 1e-15);
  CHECK((flatten(unflatten(v, dom, su3, 1)) - v).lpNorm<Eigen::Infinity>() <= 1e-15);
  CHECK_THROWS_AS(unflatten(v.head(10), dom, su3, 1), DomainMismatch);
}

TEST_CASE("assembled operator reproduces the field covariant derivative") {
  for (const auto& g : {su2, su3, u1}) {
    const Domain dom = Domain::grid(3, 4);
    CounterRng rng(2, 0);
    const auto a = GridConnection(random_trig_form(dom, g, 1, rng));
    const auto k = random_grid_noise(dom, g, 1, rng);
    const auto op = assemble_linearized(a);
    CHECK(op.matrix.rows() == 64 * 3 * g->dim());
    CHECK(op.matrix.cols() == 64 * 3 * g->dim());
    const auto field = cov_d_adjoint_1form(a, k);
    CHECK(max_norm(op.apply_field(k) - field) <= 1e-12);
  }
}

TEST_CASE("grid-only operations reject the polynomial backend") {
  const Domain dom = Domain::polynomial(2);
  const auto a = PolyConnection::zero(dom, su2);
  CHECK_THROWS_AS(assemble_linearized(a), UnsupportedBackend);
  CHECK_THROWS_AS(infinitesimal_copy_directions(a, 3, SolverOptions{}), UnsupportedBackend);
  CHECK_THROWS_AS(find_copy(a, PolyForm::zero(dom, su2, 1), SolverOptions{}), UnsupportedBackend);
}

TEST_CASE("solver options are validated") {
  SolverOptions o;
  CHECK_NOTHROW(o.validate());
  o.max_iterations = 0;
  CHECK_THROWS_AS(o.validate(), ConfigurationError);
  o = SolverOptions{};
  o.residual_target = -1.0;
  CHECK_THROWS_AS(o.validate(), ConfigurationError);
  o = SolverOptions{};
  o.singular_value_cutoff = 0.0;
  CHECK_THROWS_AS(o.validate(), ConfigurationError);
  const Domain dom = Domain::grid(2, 4);
  CHECK_THROWS_AS(infinitesimal_copy_directions(GridConnection::zero(dom, u1), 0, SolverOptions{}), ConfigurationError);
  CHECK_THROWS_AS(infinitesimal_copy_directions(GridConnection::zero(dom, u1), 33, SolverOptions{}), ConfigurationError);
}

TEST_CASE("abelian null space matches the Fourier count") {
  for (int n : {4, 6}) {
    const Domain dom = Domain::grid(2, n);
    const long expect = fourier_nullity_2d(n);
    CHECK(expect == n * n + 4);
    const auto r = infinitesimal_copy_directions(GridConnection::zero(dom, u1), expect + 2, SolverOptions{});
    CHECK(r.method == "dense_svd");
    CHECK(r.full_spectrum);
    CHECK(r.nullity == expect);
    CHECK(r.certified_null_count() == static_cast<std::size_t>(expect));
    CHECK_FALSE(r.directions.back().below_cutoff);
  }
  // su(2) at A = 0 decouples into three copies of the abelian problem.
  const auto r = infinitesimal_copy_directions(GridConnection::zero(Domain::grid(2, 4), su2), 62, SolverOptions{});
  CHECK(r.nullity == 3 * fourier_nullity_2d(4));
}

TEST_CASE("dense and iterative spectra agree") {
  const Domain dom = Domain::grid(2, 4);
  const auto a = GridConnection::zero(dom, u1);
  SolverOptions iterative;
  iterative.dense_svd_max_columns = 1;
  const auto d = infinitesimal_copy_directions(a, 24, SolverOptions{});
  const auto it = infinitesimal_copy_directions(a, 24, iterative);
  CHECK(it.method == "shift_invert_subspace");
  CHECK_FALSE(it.full_spectrum);
  CHECK(it.nullity == d.nullity);
  for (std::size_t i = 0; i < d.directions.size(); ++i) {
    CHECK(it.directions[i].singular_value == Catch::Approx(d.directions[i].singular_value).margin(1e-8));
  }
  CHECK(it.largest_singular_value == Catch::Approx(d.largest_singular_value).epsilon(1e-6));
}

TEST_CASE("certified directions solve the linearized condition") {
  const Domain dom = Domain::grid(2, 6);
  CounterRng rng(3, 0);
  const auto a = GridConnection(random_trig_form(dom, su2, 1, rng, 2, 0.5));
  const auto r = infinitesimal_copy_directions(a, 8, SolverOptions{});
  REQUIRE(r.certified_null_count() >= 1);
  for (const auto& d : r.directions) {
    CHECK(l2_norm(d.direction) == Catch::Approx(1.0).epsilon(1e-12));
    if (d.below_cutoff && d.certified) CHECK(d.field_residual <= 1e-8);
  }
  for (std::size_t i = 1; i < r.directions.size(); ++i) {
    CHECK(r.directions[i - 1].singular_value <= r.directions[i].singular_value);
  }
}

TEST_CASE("deflation removes known directions") {
  const Domain dom = Domain::grid(2, 4);
  const auto a = GridConnection::zero(dom, u1);
  std::vector<GridForm> known = {GridForm::constant(dom, u1, 1, {u1->generator(0), Mat::Zero(1, 1)})};
  const auto base = infinitesimal_copy_directions(a, 22, SolverOptions{});
  const auto defl = infinitesimal_copy_directions(a, 22, SolverOptions{}, known);
  CHECK(defl.nullity == base.nullity - 1);
  for (const auto& d : defl.directions) {
    if (d.below_cutoff) CHECK(std::abs(inner(d.direction, known[0])) <= 1e-8 * l2_norm(known[0]));
  }
}

TEST_CASE("null directions are copies to second order") {
  const Domain dom = Domain::grid(2, 4);
  const auto a = GridConnection::zero(dom, su2);
  const auto r = infinitesimal_copy_directions(a, 12, SolverOptions{});
  const CopyDirection* pick = nullptr;
  for (const auto& d : r.directions) {
    if (d.below_cutoff && d.self_wedge > 1e-3) pick = &d;
  }
  REQUIRE(pick != nullptr);
  const double r1 = copy_residuals(a, 1e-2 * pick->direction).copy;
  const double r2 = copy_residuals(a, 5e-3 * pick->direction).copy;
  CHECK(r1 / r2 == Catch::Approx(4.0).epsilon(1e-3));
}

TEST_CASE("Jacobian agrees with finite differences") {
  const Domain dom = Domain::grid(2, 6);
  CounterRng rng(4, 0);
  const auto a = GridConnection(random_trig_form(dom, su3, 1, rng));
  const auto k = random_trig_form(dom, su3, 1, rng);
  const auto c = jacobian_fd_check(a, k, 5, 1e-5, 7);
  CHECK(c.probes == 5);
  CHECK(c.max_relative_error <= 1e-6);
  CHECK_THROWS_AS(jacobian_fd_check(a, k, 0, 1e-5, 7), ConfigurationError);
  CHECK_THROWS_AS(jacobian_fd_check(a, k, 1, 0.0, 7), ConfigurationError);
}

TEST_CASE("copy residual vector is DK + K^K") {
  const Domain dom = Domain::grid(2, 4);
  CounterRng rng(5, 0);
  const auto a = GridConnection(random_grid_noise(dom, su2, 1, rng));
  const auto k = random_grid_noise(dom, su2, 1, rng);
  const auto expect = flatten(cov_d_adjoint_1form(a, k) + wedge(k, k));
  CHECK((copy_residual_vector(a, k) - expect).norm() == 0.0);
}

TEST_CASE("finder recovers a perturbed stabilizer copy") {
  const Domain dom = Domain::grid(2, 8);
  const auto w = stabilizer_witness<GridField>(dom, su2);
  SolverOptions o;
  o.max_iterations = 50;
  const auto res = find_copy(w.base, perturbed(w.direction, 0.01, 11), o);
  CHECK(res.converged);
  CHECK(res.iterations <= 50);
  CHECK(res.report.residual_copy <= 1e-10);
  CHECK(res.curvature_oracle <= 1e-9);
  CHECK(res.oracle_passed);
  CHECK(res.report.verdict == Verdict::EndpointsOnly);
  double last = 1e300;
  for (const auto& rec : res.log) {
    if (!rec.accepted) continue;
    CHECK(rec.residual < last);
    last = rec.residual;
  }
  CHECK(l2_norm(res.k - w.direction) <= 0.1 * l2_norm(w.direction));
}

TEST_CASE("abelian problem is solved in one step") {
  const Domain dom = Domain::grid(2, 6);
  CounterRng rng(6, 0);
  const auto a = GridConnection(random_trig_form(dom, u1, 1, rng));
  const auto k0 = random_grid_noise(dom, u1, 1, rng);
  SolverOptions o;
  o.step_damping = 1e-12;
  const auto res = find_copy(a, k0, o);
  CHECK(res.iterations == 1);
  CHECK(res.report.residual_copy <= 1e-10);
  CHECK(max_norm(wedge(res.k, res.k)) == 0.0);
}

TEST_CASE("finder failures carry partial results") {
  const Domain dom = Domain::grid(2, 6);
  CounterRng rng(7, 0);
  const auto a = GridConnection(random_trig_form(dom, su2, 1, rng));
  const auto k0 = random_grid_noise(dom, su2, 1, rng);
  SolverOptions o;
  o.max_iterations = 1;
  try {
    find_copy(a, k0, o);
    FAIL("expected FindCopyError");
  } catch (const FindCopyError& e) {
    CHECK(e.kind() == FindCopyError::Kind::IterationLimit);
    CHECK(e.partial().log.size() == 1);
    CHECK_FALSE(e.partial().converged);
  }

  const auto au = GridConnection::zero(dom, u1);
  SolverOptions strict;
  strict.residual_target = 1e-300;
  strict.step_damping = 1e-12;
  try {
    find_copy(au, random_grid_noise(dom, u1, 1, rng), strict);
    FAIL("expected FindCopyError");
  } catch (const FindCopyError& e) {
    CHECK(e.kind() == FindCopyError::Kind::Stagnation);
    CHECK(e.partial().report.residual_copy <= 1e-12);
  }
}
