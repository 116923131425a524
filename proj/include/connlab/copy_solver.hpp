#pragma once

// Numerical search for copies on the grid backend.
//
//  * infinitesimal copies: near-null right singular vectors of the sparse
//    matrix of dA -> D_A dA (the linearisation of the curvature at A);
//  * finite copies: Levenberg-Marquardt on R(K) = ||DK + K^K||^2, whose
//    Jacobian dK -> D_A dK + K^dK + dK^K is D_{A+K} itself.
//
// Flattening order of grid forms into real vectors is fixed: site-major, then
// form component (FormIndexing order), then algebra index. Entry
// (site * C + comp) * N + a holds the J_a coefficient.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "connlab/copy_analysis.hpp"
#include "connlab/random_fields.hpp"

namespace connlab {

struct SolverOptions {
  int max_iterations = 200;
  double residual_target = 1e-10;
  double step_damping = 1e-3;
  // Relative to the largest singular value.
  double singular_value_cutoff = 1e-8;
  // Above this many columns the spectrum is computed iteratively.
  Eigen::Index dense_svd_max_columns = 2000;

  void validate() const {
    if (max_iterations <= 0) throw ConfigurationError("solver max_iterations must be positive");
    if (!(residual_target > 0.0)) throw ConfigurationError("solver residual_target must be positive");
    if (!(step_damping > 0.0)) throw ConfigurationError("solver step_damping must be positive");
    if (!(singular_value_cutoff > 0.0)) throw ConfigurationError("solver singular_value_cutoff must be positive");
    if (dense_svd_max_columns <= 0) throw ConfigurationError("solver dense_svd_max_columns must be positive");
  }
};

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

inline Eigen::VectorXd flatten(const GridForm& x) {
  const Domain& dom = x.domain();
  const LieAlgebra& g = x.algebra();
  const auto sites = static_cast<Eigen::Index>(dom.site_count());
  const auto comps = static_cast<Eigen::Index>(x.size());
  const Eigen::Index n = g.dim();
  Eigen::VectorXd v(sites * comps * n);
  for (Eigen::Index s = 0; s < sites; ++s) {
    for (Eigen::Index c = 0; c < comps; ++c) {
      v.segment((s * comps + c) * n, n) = g.coefficients(x[static_cast<std::size_t>(c)][static_cast<std::size_t>(s)]);
    }
  }
  return v;
}

inline GridForm unflatten(const Eigen::Ref<const Eigen::VectorXd>& v, const Domain& dom, const AlgebraPtr& g,
                          int degree) {
  const auto sites = static_cast<Eigen::Index>(dom.site_count());
  const auto comps = static_cast<Eigen::Index>(FormIndexing::count(dom.dim, degree));
  const Eigen::Index n = g->dim();
  if (v.size() != sites * comps * n) throw DomainMismatch("unflatten: vector length does not match the form space");
  std::vector<GridField> out;
  for (Eigen::Index c = 0; c < comps; ++c) {
    std::vector<Mat> values(static_cast<std::size_t>(sites));
    for (Eigen::Index s = 0; s < sites; ++s) values[static_cast<std::size_t>(s)] = g->matrix(v.segment((s * comps + c) * n, n));
    out.emplace_back(g->rep_dim(), g->rep_dim(), std::move(values));
  }
  return GridForm(dom, g, degree, std::move(out));
}

// Sparse matrix of dA -> D_A dA on adjoint 1-forms, in the flattened
// coefficient basis: rows N * C(d,2) * n^d, columns N * d * n^d.
struct LinearizedOperator {
  Domain domain;
  AlgebraPtr algebra;
  SparseMatrix matrix;

  Eigen::VectorXd apply(const GridForm& k) const { return matrix * flatten(k); }
  GridForm apply_field(const GridForm& k) const { return unflatten(apply(k), domain, algebra, 2); }
};

template <class Field>
LinearizedOperator assemble_linearized(const Connection<Field>& a) {
  if constexpr (Field::backend != Backend::Grid) {
    throw UnsupportedBackend("assemble_linearized: needs the grid backend (finite stencils)");
  } else {
    const Domain& dom = a.domain();
    const LieAlgebra& g = a.algebra();
    const int n = g.dim();
    const int d = dom.dim;
    const SiteIndexer idx{d, dom.sites_per_axis};
    const auto& two = FormIndexing::masks(d, 2);
    const auto c1 = static_cast<Eigen::Index>(d);
    const auto c2 = static_cast<Eigen::Index>(two.size());
    const auto sites = static_cast<Eigen::Index>(dom.site_count());
    const double inv2h = 1.0 / (2.0 * dom.spacing());

    // A in coefficients: acoef[(site * d + mu) * n + a].
    const Eigen::VectorXd acoef = flatten(a.form());
    auto col = [&](std::size_t site, int mu, int b) {
      return (static_cast<Eigen::Index>(site) * c1 + mu) * n + b;
    };

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(sites * c2 * n * (4 + 2 * n)));
    for (std::size_t s = 0; s < static_cast<std::size_t>(sites); ++s) {
      for (Eigen::Index q = 0; q < c2; ++q) {
        const auto axes = FormIndexing::indices(two[static_cast<std::size_t>(q)]);
        const int mu = axes[0];
        const int nu = axes[1];
        for (int c = 0; c < n; ++c) {
          const Eigen::Index row = (static_cast<Eigen::Index>(s) * c2 + q) * n + c;
          // d_mu K_nu - d_nu K_mu
          trip.emplace_back(row, col(idx.shifted(s, mu, +1), nu, c), inv2h);
          trip.emplace_back(row, col(idx.shifted(s, mu, -1), nu, c), -inv2h);
          trip.emplace_back(row, col(idx.shifted(s, nu, +1), mu, c), -inv2h);
          trip.emplace_back(row, col(idx.shifted(s, nu, -1), mu, c), inv2h);
          // [A_mu, K_nu] - [A_nu, K_mu], with [X,Y]^c = f_abc X^a Y^b
          for (int b = 0; b < n; ++b) {
            double w_nu = 0.0;
            double w_mu = 0.0;
            for (int aa = 0; aa < n; ++aa) {
              const double f = g.f(aa, b, c);
              if (f == 0.0) continue;
              w_nu += f * acoef[(static_cast<Eigen::Index>(s) * c1 + mu) * n + aa];
              w_mu += f * acoef[(static_cast<Eigen::Index>(s) * c1 + nu) * n + aa];
            }
            if (w_nu != 0.0) trip.emplace_back(row, col(s, nu, b), w_nu);
            if (w_mu != 0.0) trip.emplace_back(row, col(s, mu, b), -w_mu);
          }
        }
      }
    }
    SparseMatrix m(sites * c2 * n, sites * c1 * n);
    m.setFromTriplets(trip.begin(), trip.end());
    m.makeCompressed();
    return LinearizedOperator{dom, a.algebra_ptr(), std::move(m)};
  }
}

// ---------------------------------------------------------------------------
// Infinitesimal copies

struct CopyDirection {
  GridForm direction;          // l2_norm 1
  double singular_value = 0.0;
  double field_residual = 0.0; // l2_norm(D_A direction), recomputed on fields
  double self_wedge = 0.0;     // l2_norm(direction ^ direction)
  bool below_cutoff = false;
  bool certified = false;      // field_residual <= 10 * max(sigma, floor)
};

struct DirectionsResult {
  std::vector<CopyDirection> directions;  // ascending singular value
  double largest_singular_value = 0.0;
  double cutoff = 0.0;                    // absolute
  // Singular values <= cutoff: exact count for the dense path, a lower bound
  // (among the computed ones) for the iterative path.
  Eigen::Index nullity = 0;
  bool full_spectrum = false;
  std::string method;

  std::size_t certified_null_count() const {
    return static_cast<std::size_t>(std::count_if(directions.begin(), directions.end(),
                                                  [](const CopyDirection& d) { return d.below_cutoff && d.certified; }));
  }
};

class SpectrumNotConverged : public Error {
 public:
  SpectrumNotConverged(const std::string& what, DirectionsResult partial)
      : Error(what), partial_(std::move(partial)) {}
  const DirectionsResult& partial() const { return partial_; }

 private:
  DirectionsResult partial_;
};

namespace detail {

inline Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& x) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
  return qr.householderQ() * Eigen::MatrixXd::Identity(x.rows(), x.cols());
}

inline double largest_singular_value(const SparseMatrix& m) {
  CounterRng rng(0x51a7ULL);
  Eigen::VectorXd v(m.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform();
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 500; ++it) {
    Eigen::VectorXd w = m.transpose() * (m * v);
    const double next = w.norm();
    if (next == 0.0) return 0.0;
    v = w / next;
    if (std::abs(next - lambda) <= 1e-12 * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::sqrt(lambda);
}

// Ascending singular values, padded with zeros to m.cols(), and the matching
// right singular vectors.
struct Spectrum {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  bool converged = true;
};

// Wide matrices are padded with zero rows: BDCSVD's full V is unreliable
// when rows < cols, and zero rows change neither the singular values nor
// the right singular vectors.
inline Spectrum dense_spectrum(const SparseMatrix& m, Eigen::Index k) {
  const Eigen::Index cols = m.cols();
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(std::max(m.rows(), cols), cols);
  dense.topRows(m.rows()) = m;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(dense, Eigen::ComputeFullV);
  const Eigen::VectorXd all = svd.singularValues();
  // BDCSVD orders descending; the smallest are at the back.
  Spectrum s;
  s.values.resize(cols);
  s.vectors.resize(cols, k);
  for (Eigen::Index i = 0; i < cols; ++i) s.values[i] = all[cols - 1 - i];
  for (Eigen::Index i = 0; i < k; ++i) s.vectors.col(i) = svd.matrixV().col(cols - 1 - i);
  return s;
}

// Smallest eigenpairs of M^T M by shift-invert block subspace iteration. A
// block method resolves the large degenerate null spaces these operators
// have, which single-vector Krylov methods cannot.
inline Spectrum iterative_spectrum(const SparseMatrix& m, Eigen::Index k, double sigma_max, int max_iterations) {
  const Eigen::Index cols = m.cols();
  const Eigen::Index block = std::min<Eigen::Index>(cols, k + 8);
  SparseMatrix normal = SparseMatrix(m.transpose()) * m;
  const double shift = 1e-10 * sigma_max * sigma_max + std::numeric_limits<double>::min();
  SparseMatrix shifted = normal;
  for (Eigen::Index i = 0; i < cols; ++i) shifted.coeffRef(i, i) += shift;
  Eigen::SimplicialLDLT<SparseMatrix> solver(shifted);
  if (solver.info() != Eigen::Success) throw Error("iterative spectrum: factorisation failed");

  CounterRng rng(0x5eedULL);
  Eigen::MatrixXd x(cols, block);
  for (Eigen::Index j = 0; j < block; ++j) {
    for (Eigen::Index i = 0; i < cols; ++i) x(i, j) = rng.uniform();
  }
  x = orthonormalize(x);
  Spectrum s;
  s.converged = false;
  Eigen::VectorXd theta;
  const double tol = 1e-12 * sigma_max * sigma_max;
  for (int it = 0; it < max_iterations; ++it) {
    x = orthonormalize(solver.solve(x));
    const Eigen::MatrixXd bx = normal * x;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(x.transpose() * bx);
    x = x * eig.eigenvectors();
    theta = eig.eigenvalues();
    const Eigen::MatrixXd resid = normal * x - x * theta.asDiagonal();
    double worst = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) worst = std::max(worst, resid.col(j).norm());
    if (worst <= tol) {
      s.converged = true;
      break;
    }
  }
  s.vectors = x.leftCols(k);
  s.values.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) s.values[j] = (m * s.vectors.col(j)).norm();
  return s;
}

}  // namespace detail

// The k smallest singular values of D_A with their right singular vectors as
// 1-form fields. Optional `deflate` fields (e.g. known gauge directions) are
// pushed out of the near-null space by appending sigma_max * P^T rows.
template <class Field>
DirectionsResult infinitesimal_copy_directions(const Connection<Field>& a, Eigen::Index k, const SolverOptions& opts,
                                               const std::vector<FormField<Field>>& deflate = {}) {
  opts.validate();
  if constexpr (Field::backend != Backend::Grid) {
    throw UnsupportedBackend("infinitesimal_copy_directions: needs the grid backend");
  } else {
    const auto op = assemble_linearized(a);
    SparseMatrix m = op.matrix;
    const Eigen::Index cols = m.cols();
    if (k < 1 || k > cols) {
      throw ConfigurationError("infinitesimal_copy_directions: k must be in [1, " + std::to_string(cols) + "]");
    }
    double sigma_max = detail::largest_singular_value(m);
    if (!deflate.empty()) {
      Eigen::MatrixXd p(cols, static_cast<Eigen::Index>(deflate.size()));
      for (std::size_t i = 0; i < deflate.size(); ++i) p.col(static_cast<Eigen::Index>(i)) = flatten(deflate[i]);
      p = detail::orthonormalize(p);
      SparseMatrix extra = (std::max(sigma_max, 1.0) * p.transpose()).sparseView();
      SparseMatrix stacked(m.rows() + extra.rows(), cols);
      std::vector<Eigen::Triplet<double>> trip;
      for (Eigen::Index j = 0; j < m.outerSize(); ++j) {
        for (SparseMatrix::InnerIterator it(m, j); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
      }
      for (Eigen::Index j = 0; j < extra.outerSize(); ++j) {
        for (SparseMatrix::InnerIterator it(extra, j); it; ++it) trip.emplace_back(m.rows() + it.row(), it.col(), it.value());
      }
      stacked.setFromTriplets(trip.begin(), trip.end());
      m = std::move(stacked);
      sigma_max = detail::largest_singular_value(m);
    }

    DirectionsResult result;
    result.largest_singular_value = sigma_max;
    result.cutoff = opts.singular_value_cutoff * sigma_max;
    detail::Spectrum spec;
    if (cols <= opts.dense_svd_max_columns) {
      spec = detail::dense_spectrum(m, k);
      result.full_spectrum = true;
      result.method = "dense_svd";
      result.largest_singular_value = spec.values[cols - 1];
      result.cutoff = opts.singular_value_cutoff * result.largest_singular_value;
    } else {
      spec = detail::iterative_spectrum(m, k, sigma_max, opts.max_iterations);
      result.method = "shift_invert_subspace";
    }
    result.nullity = 0;
    for (Eigen::Index i = 0; i < spec.values.size(); ++i) {
      if (spec.values[i] <= result.cutoff) ++result.nullity;
    }

    const double floor = std::sqrt(static_cast<double>(cols)) * std::numeric_limits<double>::epsilon() *
                         result.largest_singular_value;
    for (Eigen::Index i = 0; i < k; ++i) {
      GridForm dir = unflatten(spec.vectors.col(i), op.domain, op.algebra, 1);
      const double norm = l2_norm(dir);
      dir *= 1.0 / norm;
      CopyDirection cd{dir, spec.values[i]};
      cd.field_residual = l2_norm(cov_d_adjoint_1form(a, dir));
      cd.self_wedge = l2_norm(wedge(dir, dir));
      cd.below_cutoff = cd.singular_value <= result.cutoff;
      cd.certified = cd.field_residual <= 10.0 * std::max(cd.singular_value, floor);
      result.directions.push_back(std::move(cd));
    }
    if (!spec.converged) {
      throw SpectrumNotConverged("infinitesimal_copy_directions: subspace iteration hit the iteration limit",
                                 std::move(result));
    }
    return result;
  }
}

// ---------------------------------------------------------------------------
// Finite copies

struct IterationRecord {
  int iter = 0;
  double residual = 0.0;  // relative copy residual after the iteration
  double damping = 0.0;   // Levenberg parameter used for the step
  double step_norm = 0.0; // Euclidean norm of the flattened step
  bool accepted = false;
};

struct FindCopyResult {
  GridForm k;
  CopyReport report;
  int iterations = 0;
  bool converged = false;
  // ||curvature(A+K) - curvature(A)|| / (1 + ||F#|| + ||F||), from scratch.
  double curvature_oracle = 0.0;
  bool oracle_passed = false;
  std::vector<IterationRecord> log;
};

class FindCopyError : public Error {
 public:
  enum class Kind { IterationLimit, Stagnation };
  FindCopyError(Kind kind, const std::string& what, FindCopyResult partial)
      : Error(what), kind_(kind), partial_(std::move(partial)) {}
  Kind kind() const { return kind_; }
  const FindCopyResult& partial() const { return partial_; }

 private:
  Kind kind_;
  FindCopyResult partial_;
};

// r(K) = flatten(DK + K^K).
inline Eigen::VectorXd copy_residual_vector(const GridConnection& a, const GridForm& k) {
  return flatten(cov_d_adjoint_1form(a, k) + wedge(k, k));
}

// Jacobian of r at K: D_A dK + K^dK + dK^K = D_{A+K} dK.
inline SparseMatrix copy_jacobian(const GridConnection& a, const GridForm& k) {
  return assemble_linearized(a.shifted(k)).matrix;
}

struct JacobianCheck {
  double max_relative_error = 0.0;
  int probes = 0;
};

// Compares J v with the central difference (r(K + eps v) - r(K - eps v)) / 2eps
// along random unit directions v.
inline JacobianCheck jacobian_fd_check(const GridConnection& a, const GridForm& k, int probes, double eps,
                                       std::uint64_t seed) {
  if (probes < 1) throw ConfigurationError("jacobian_fd_check: probes must be positive");
  if (!(eps > 0.0)) throw ConfigurationError("jacobian_fd_check: eps must be positive");
  const SparseMatrix jac = copy_jacobian(a, k);
  const Eigen::VectorXd x = flatten(k);
  CounterRng rng(seed, 11);
  JacobianCheck out{0.0, probes};
  for (int p = 0; p < probes; ++p) {
    Eigen::VectorXd v(x.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform();
    v.normalize();
    const Eigen::VectorXd exact = jac * v;
    const auto plus = unflatten(x + eps * v, k.domain(), k.algebra_ptr(), 1);
    const auto minus = unflatten(x - eps * v, k.domain(), k.algebra_ptr(), 1);
    const Eigen::VectorXd fd = (copy_residual_vector(a, plus) - copy_residual_vector(a, minus)) / (2.0 * eps);
    const double rel = (fd - exact).norm() / std::max(exact.norm(), std::numeric_limits<double>::min());
    out.max_relative_error = std::max(out.max_relative_error, rel);
  }
  return out;
}

template <class Field>
FindCopyResult find_copy(const Connection<Field>& a, const FormField<Field>& k0, const SolverOptions& opts) {
  opts.validate();
  if constexpr (Field::backend != Backend::Grid) {
    throw UnsupportedBackend("find_copy: needs the grid backend");
  } else {
    a.form().require_same_space(k0, "find_copy");
    const Domain& dom = a.domain();
    const AlgebraPtr& g = a.algebra_ptr();
    const double tol = default_tolerance(Backend::Grid);

    auto finish = [&](FindCopyResult& res) {
      res.report = classify_line(a, res.k, tol, "find_copy");
      const auto fs = curvature(a.shifted(res.k));
      const auto f = curvature(a);
      res.curvature_oracle = l2_norm(fs - f) / (1.0 + l2_norm(fs) + l2_norm(f));
      res.oracle_passed = res.curvature_oracle <= 10.0 * opts.residual_target;
    };

    FindCopyResult res{k0, {}, 0, false, 0.0, false, {}};
    Eigen::VectorXd x = flatten(k0);
    Eigen::VectorXd r = copy_residual_vector(a, res.k);
    double objective = r.squaredNorm();
    double rel = copy_residuals(a, res.k).copy;
    double lambda = opts.step_damping;
    int stalled = 0;

    for (int iter = 1; rel > opts.residual_target; ++iter) {
      if (iter > opts.max_iterations) {
        finish(res);
        throw FindCopyError(FindCopyError::Kind::IterationLimit,
                            "find_copy: iteration limit reached with residual " + std::to_string(rel), std::move(res));
      }
      const SparseMatrix jac = copy_jacobian(a, res.k);
      Eigen::VectorXd step;
      // (J^T J + l I)^-1 J^T r = J^T (J J^T + l I)^-1 r: factor the smaller side.
      if (jac.rows() <= jac.cols()) {
        SparseMatrix normal = jac * SparseMatrix(jac.transpose());
        for (Eigen::Index i = 0; i < normal.rows(); ++i) normal.coeffRef(i, i) += lambda;
        Eigen::SimplicialLDLT<SparseMatrix> ldlt(normal);
        step = -(jac.transpose() * ldlt.solve(r));
      } else {
        SparseMatrix normal = SparseMatrix(jac.transpose()) * jac;
        for (Eigen::Index i = 0; i < normal.rows(); ++i) normal.coeffRef(i, i) += lambda;
        Eigen::SimplicialLDLT<SparseMatrix> ldlt(normal);
        step = -ldlt.solve(jac.transpose() * r);
      }
      const Eigen::VectorXd x_trial = x + step;
      GridForm k_trial = unflatten(x_trial, dom, g, 1);
      const Eigen::VectorXd r_trial = copy_residual_vector(a, k_trial);
      const double obj_trial = r_trial.squaredNorm();

      IterationRecord rec{iter, rel, lambda, step.norm(), false};
      const double decrease = objective > 0.0 ? (objective - obj_trial) / objective : 0.0;
      if (obj_trial < objective) {
        x = x_trial;
        res.k = std::move(k_trial);
        r = r_trial;
        objective = obj_trial;
        rel = copy_residuals(a, res.k).copy;
        lambda = std::max(lambda * 0.1, 1e-14);
        rec.accepted = true;
      } else {
        lambda *= 10.0;
      }
      rec.residual = rel;
      res.log.push_back(rec);
      res.iterations = iter;

      stalled = decrease < 1e-14 ? stalled + 1 : 0;
      if (stalled >= 10 && rel > opts.residual_target) {
        finish(res);
        throw FindCopyError(FindCopyError::Kind::Stagnation,
                            "find_copy: stagnated with residual " + std::to_string(rel), std::move(res));
      }
    }
    res.converged = true;
    finish(res);
    return res;
  }
}

}  // namespace connlab
