#pragma once

// Seeded random fields for property tests and experiments.
//
// A single 64-bit seed drives a counter-based generator: draw k returns
// splitmix64(seed + k * golden_gamma). Random fields consume draws in a fixed
// order (component, then monomial or mode, then algebra index), so a seed
// fully determines every coefficient.

#include <array>
#include <cstdint>
#include <numbers>
#include <vector>

#include "connlab/form_field.hpp"

namespace connlab {

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed ^ (stream * 0xD1B54A32D192ED03ULL)) {}

  std::uint64_t next_u64() { return mix(seed_ + (counter_++) * 0x9E3779B97F4A7C15ULL); }

  // Uniform in [lo, hi).
  double uniform(double lo = -1.0, double hi = 1.0) {
    const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  std::uint64_t counter() const { return counter_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

inline Mat random_algebra_matrix(const LieAlgebra& g, CounterRng& rng, double amplitude = 1.0) {
  Eigen::VectorXd c(g.dim());
  for (int a = 0; a < g.dim(); ++a) c[a] = amplitude * rng.uniform();
  return g.matrix(c);
}

inline AlgebraValue random_algebra_value(const AlgebraPtr& g, CounterRng& rng, double amplitude = 1.0) {
  Eigen::VectorXd c(g->dim());
  for (int a = 0; a < g->dim(); ++a) c[a] = amplitude * rng.uniform();
  return AlgebraValue(g, std::move(c));
}

// Exponents of total degree <= max_degree in `dim` variables, graded then
// lexicographic.
inline std::vector<PolyField::Exponent> exponents_up_to(int dim, int max_degree) {
  std::vector<PolyField::Exponent> out;
  for (int total = 0; total <= max_degree; ++total) {
    PolyField::Exponent e{};
    // Enumerate compositions of `total` into `dim` parts.
    std::vector<PolyField::Exponent> level;
    auto rec = [&](auto&& self, int axis, int left) -> void {
      if (axis == dim - 1) {
        e[static_cast<std::size_t>(axis)] = static_cast<std::uint8_t>(left);
        level.push_back(e);
        return;
      }
      for (int k = left; k >= 0; --k) {
        e[static_cast<std::size_t>(axis)] = static_cast<std::uint8_t>(k);
        self(self, axis + 1, left - k);
      }
    };
    rec(rec, 0, total);
    out.insert(out.end(), level.begin(), level.end());
  }
  return out;
}

// Algebra-valued p-form whose components are polynomials of total degree
// <= max_degree with coefficients uniform in [-amplitude, amplitude).
inline PolyForm random_poly_form(const Domain& domain, const AlgebraPtr& g, int degree, int max_degree,
                                 CounterRng& rng, double amplitude = 1.0) {
  const auto exps = exponents_up_to(domain.dim, max_degree);
  std::vector<PolyField> comps;
  for (std::size_t i = 0; i < FormIndexing::count(domain.dim, degree); ++i) {
    PolyField p(g->rep_dim(), g->rep_dim());
    for (const auto& e : exps) p.add_term(e, random_algebra_matrix(*g, rng, amplitude));
    comps.push_back(std::move(p));
  }
  return PolyForm(domain, g, degree, std::move(comps));
}

// Real scalar (1x1) polynomial 0-form.
inline PolyForm random_poly_scalar(const Domain& domain, const AlgebraPtr& g, int max_degree, CounterRng& rng,
                                   double amplitude = 1.0) {
  PolyField p(1, 1);
  for (const auto& e : exponents_up_to(domain.dim, max_degree)) {
    Mat m(1, 1);
    m(0, 0) = amplitude * rng.uniform();
    p.add_term(e, m);
  }
  return PolyForm(domain, g, 0, {std::move(p)});
}

// Smooth algebra-valued grid p-form: per component, `modes` sinusoids with
// wave vectors in {-1,0,1}^d (not all zero), random phases and amplitudes.
// Carries its generator, so refine() re-samples the same function.
inline std::vector<TrigSeries> random_trig_series(const Domain& domain, const LieAlgebra& g, int degree, int modes,
                                                  CounterRng& rng, double amplitude = 1.0) {
  std::vector<TrigSeries> series;
  for (std::size_t i = 0; i < FormIndexing::count(domain.dim, degree); ++i) {
    TrigSeries s(g.rep_dim(), g.rep_dim(), domain.box_length);
    for (int j = 0; j < modes; ++j) {
      TrigMode m;
      bool nonzero = false;
      for (int mu = 0; mu < domain.dim; ++mu) {
        m.wave[static_cast<std::size_t>(mu)] = rng.uniform_int(-1, 1);
        nonzero = nonzero || m.wave[static_cast<std::size_t>(mu)] != 0;
      }
      if (!nonzero) m.wave[static_cast<std::size_t>(j % domain.dim)] = 1;
      m.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      m.amplitude = random_algebra_matrix(g, rng, amplitude);
      s.add(std::move(m));
    }
    series.push_back(std::move(s));
  }
  return series;
}

inline GridForm trig_form(const Domain& domain, const AlgebraPtr& g, int degree, std::vector<TrigSeries> series) {
  const auto rows = series.empty() ? g->rep_dim() : series.front().rows();
  const auto cols = series.empty() ? g->rep_dim() : series.front().cols();
  auto shared = std::make_shared<const std::vector<TrigSeries>>(std::move(series));
  return GridForm::sample(domain, g, degree, rows, cols,
                          [shared](std::size_t comp, std::span<const double> x) { return (*shared)[comp].value(x); });
}

inline GridForm random_trig_form(const Domain& domain, const AlgebraPtr& g, int degree, CounterRng& rng,
                                 int modes = 2, double amplitude = 1.0) {
  return trig_form(domain, g, degree, random_trig_series(domain, *g, degree, modes, rng, amplitude));
}

// Independent uniform coefficients at every site (not smooth).
inline GridForm random_grid_noise(const Domain& domain, const AlgebraPtr& g, int degree, CounterRng& rng) {
  std::vector<GridField> comps;
  for (std::size_t i = 0; i < FormIndexing::count(domain.dim, degree); ++i) {
    std::vector<Mat> values(domain.site_count());
    for (auto& v : values) v = random_algebra_matrix(*g, rng);
    comps.emplace_back(g->rep_dim(), g->rep_dim(), std::move(values));
  }
  return GridForm(domain, g, degree, std::move(comps));
}

// Dispatch helpers so backend-generic code can ask for "a random smooth form".
template <class Field>
FormField<Field> random_smooth_form(const Domain& domain, const AlgebraPtr& g, int degree, CounterRng& rng,
                                   double amplitude = 1.0) {
  if constexpr (Field::backend == Backend::Polynomial) {
    return random_poly_form(domain, g, degree, 2, rng, amplitude);
  } else {
    return random_trig_form(domain, g, degree, rng, 2, amplitude);
  }
}

}  // namespace connlab
