#pragma once

// Copy conditions, the straight line A_t = A + t K through connection space,
// and the classifier for lines through a pair of copies.
//
// Conventions: every norm reported here is relative to the scale of the
// line, s = 1 + ||F|| + ||DK|| + ||K^K||, with F = curvature(A) and D the
// covariant derivative of A. This makes the tolerances scale-free.

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "connlab/gauge_geometry.hpp"

namespace connlab {

enum class Verdict { AllCopies, EndpointsOnly, NotCopyPair };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::AllCopies: return "AllCopies";
    case Verdict::EndpointsOnly: return "EndpointsOnly";
    case Verdict::NotCopyPair: return "NotCopyPair";
  }
  return "?";
}

inline Verdict parse_verdict(std::string_view s) {
  if (s == "AllCopies") return Verdict::AllCopies;
  if (s == "EndpointsOnly") return Verdict::EndpointsOnly;
  if (s == "NotCopyPair") return Verdict::NotCopyPair;
  throw ConfigurationError("unknown verdict '" + std::string(s) + "'");
}

// Default classification tolerances per backend.
inline double default_tolerance(Backend b) { return b == Backend::Polynomial ? 1e-8 : 1e-4; }

// Interior parameters used by every verification sweep along a line.
inline constexpr std::array<double, 5> kLineSamples = {0.1, 0.25, 0.5, 0.75, 0.9};

template <class Field>
class LineFamily {
 public:
  LineFamily(Connection<Field> base, FormField<Field> direction)
      : base_(std::move(base)),
        direction_(std::move(direction)),
        f_(curvature(base_)),
        dk_(cov_d_adjoint_1form(base_, direction_)),
        kk_(wedge(direction_, direction_)) {
    base_.form().require_same_space(direction_, "LineFamily");
  }

  const Connection<Field>& base() const { return base_; }
  const FormField<Field>& direction() const { return direction_; }
  const FormField<Field>& curvature_base() const { return f_; }
  const FormField<Field>& dk() const { return dk_; }
  const FormField<Field>& kk() const { return kk_; }

  double scale() const { return 1.0 + l2_norm(f_) + l2_norm(dk_) + l2_norm(kk_); }

  Connection<Field> eval(double t) const { return base_.shifted(direction_, t); }

  // F_t = F + t DK + t^2 K^K.
  FormField<Field> curvature_closed_form(double t) const { return f_ + t * dk_ + (t * t) * kk_; }

  // dF_t/dt = DK + 2t K^K (= D_t K).
  FormField<Field> curvature_derivative(double t) const { return dk_ + (2.0 * t) * kk_; }

 private:
  Connection<Field> base_;
  FormField<Field> direction_;
  FormField<Field> f_;
  FormField<Field> dk_;
  FormField<Field> kk_;
};

template <class Field>
Connection<Field> line_eval(const LineFamily<Field>& line, double t) {
  return line.eval(t);
}

template <class Field>
FormField<Field> line_curvature_closed_form(const LineFamily<Field>& line, double t) {
  return line.curvature_closed_form(t);
}

template <class Field>
FormField<Field> line_curvature_derivative(const LineFamily<Field>& line, double t) {
  return line.curvature_derivative(t);
}

// curvature(A_t) against F + t DK + t^2 K^K.
template <class Field>
IdentityCheck check_line_curvature(const LineFamily<Field>& line, double t) {
  const auto direct = curvature(line.eval(t));
  const auto closed = line.curvature_closed_form(t);
  return make_check(l2_norm(direct - closed), {l2_norm(direct), l2_norm(closed)});
}

// D_t K (covariant derivative of A_t) against DK + 2t K^K.
template <class Field>
IdentityCheck check_line_covariant_derivative(const LineFamily<Field>& line, double t) {
  const auto direct = cov_d_adjoint_1form(line.eval(t), line.direction());
  const auto closed = line.curvature_derivative(t);
  return make_check(l2_norm(direct - closed), {l2_norm(direct), l2_norm(closed)});
}

struct CopyResiduals {
  double copy = 0.0;     // ||DK + K^K|| / (1 + ||F|| + ||DK|| + ||K^K||)
  double commute = 0.0;  // ||[K,F]|| / (1 + ||K^F|| + ||F^K||)
  bool commute_degenerate = false;  // d = 2: [K,F] is a 3-form and vanishes
};

template <class Field>
CopyResiduals copy_residuals_of(const LineFamily<Field>& line) {
  CopyResiduals r;
  r.copy = l2_norm(line.dk() + line.kk()) / line.scale();
  const Domain& dom = line.direction().domain();
  if (dom.dim < 3) {
    r.commute_degenerate = true;
    return r;
  }
  const auto kf = wedge(line.direction(), line.curvature_base());
  const auto fk = wedge(line.curvature_base(), line.direction());
  r.commute = l2_norm(kf - fk) / (1.0 + l2_norm(kf) + l2_norm(fk));
  return r;
}

// Relative norms of DK + K^K and of [K, F] for the pair (A, A + K).
template <class Field>
CopyResiduals copy_residuals(const Connection<Field>& a, const FormField<Field>& k) {
  return copy_residuals_of(LineFamily<Field>(a, k));
}

struct CopyReport {
  double residual_copy = 0.0;
  double residual_commute = 0.0;
  bool commute_degenerate = false;
  double dk_norm = 0.0;
  double kk_norm = 0.0;
  // ||F_{1/2} - F + K^K/4||, with F_{1/2} recomputed from scratch.
  double midpoint_check = 0.0;
  // ||F_{1/2} - F||.
  double midpoint_shift = 0.0;
  // dk_norm <= tol and kk_norm <= tol agree (they must, for a copy pair).
  bool flags_consistent = true;
  Verdict verdict = Verdict::NotCopyPair;
  double tolerance = 0.0;
  std::string instance;
};

// Decides which branch of the dichotomy a line through A and A + K is on.
//
//   residual_copy > tol           -> NotCopyPair (A + K is not a copy of A)
//   else dk_norm <= tol           -> AllCopies (F_t = F for every t)
//   else                          -> EndpointsOnly (F_t != F for t != 0, 1)
//
// Caveat: a K with DK = 0 that is not itself the difference of two copies
// (K^K != 0) fails the first test and is reported NotCopyPair. K = 0 is
// reported AllCopies.
template <class Field>
CopyReport classify_line(const LineFamily<Field>& line, double tol, std::string instance = {}) {
  if (!(tol > 0.0)) throw ConfigurationError("classify_line: tolerance must be positive");
  CopyReport r;
  r.tolerance = tol;
  r.instance = std::move(instance);
  const auto res = copy_residuals_of(line);
  r.residual_copy = res.copy;
  r.residual_commute = res.commute;
  r.commute_degenerate = res.commute_degenerate;
  const double s = line.scale();
  r.dk_norm = l2_norm(line.dk()) / s;
  r.kk_norm = l2_norm(line.kk()) / s;
  const auto f_half = curvature(line.eval(0.5));
  const auto shift = f_half - line.curvature_base();
  r.midpoint_shift = l2_norm(shift) / s;
  r.midpoint_check = l2_norm(shift + 0.25 * line.kk()) / s;
  if (r.residual_copy > tol) {
    r.verdict = Verdict::NotCopyPair;
  } else if (r.dk_norm <= tol) {
    r.verdict = Verdict::AllCopies;
  } else {
    r.verdict = Verdict::EndpointsOnly;
  }
  r.flags_consistent = r.verdict == Verdict::NotCopyPair || ((r.dk_norm <= tol) == (r.kk_norm <= tol));
  return r;
}

template <class Field>
CopyReport classify_line(const Connection<Field>& a, const FormField<Field>& k, double tol,
                         std::string instance = {}) {
  return classify_line(LineFamily<Field>(a, k), tol, std::move(instance));
}

template <class Field>
CopyReport classify_line(const Connection<Field>& a, const FormField<Field>& k) {
  return classify_line(a, k, default_tolerance(Field::backend));
}

// ||F_t - F|| / scale with F_t recomputed from curvature(A + tK).
template <class Field>
std::vector<double> curvature_sweep(const LineFamily<Field>& line, std::span<const double> ts) {
  std::vector<double> out;
  const double s = line.scale();
  for (double t : ts) out.push_back(l2_norm(curvature(line.eval(t)) - line.curvature_base()) / s);
  return out;
}

// True when the interior samples all agree: either every F_t equals F within
// tol, or none does. A mixed sweep contradicts the dichotomy.
inline bool sweep_is_unanimous(std::span<const double> sweep, double tol) {
  bool any_equal = false;
  bool any_different = false;
  for (double v : sweep) (v <= tol ? any_equal : any_different) = true;
  return !(any_equal && any_different);
}

// The three kinds of lines leaving A in direction K.
enum class LineKind {
  CopyLine,        // DK = 0 and K^K = 0: F_t = F for all t
  SingleCopyLine,  // DK + s K^K = 0 for one s != 0: exactly one copy, at A + sK
  NonCopyLine,     // no t != 0 with F_t = F
};

inline std::string_view to_string(LineKind k) {
  switch (k) {
    case LineKind::CopyLine: return "CopyLine";
    case LineKind::SingleCopyLine: return "SingleCopyLine";
    case LineKind::NonCopyLine: return "NonCopyLine";
  }
  return "?";
}

struct LineTaxon {
  LineKind kind = LineKind::NonCopyLine;
  // Parameter of the unique copy on a SingleCopyLine, NaN otherwise.
  double copy_parameter = std::numeric_limits<double>::quiet_NaN();
  double residual = 0.0;
};

// F_s - F = s DK + s^2 K^K vanishes for s != 0 iff DK = -s K^K. The best s
// is the least-squares fit s* = -<DK, K^K> / ||K^K||^2.
template <class Field>
LineTaxon classify_direction(const LineFamily<Field>& line, double tol) {
  LineTaxon t;
  const double s = line.scale();
  const double dk = l2_norm(line.dk());
  const double kk = l2_norm(line.kk());
  if (dk / s <= tol && kk / s <= tol) {
    t.kind = LineKind::CopyLine;
    t.residual = std::max(dk, kk) / s;
    return t;
  }
  if (kk / s > tol) {
    const double sp = -inner(line.dk(), line.kk()) / (kk * kk);
    const double res = l2_norm(sp * line.dk() + (sp * sp) * line.kk()) /
                       (1.0 + l2_norm(line.curvature_base()) + std::abs(sp) * dk + sp * sp * kk);
    t.residual = res;
    if (std::abs(sp) > tol && res <= tol) {
      t.kind = LineKind::SingleCopyLine;
      t.copy_parameter = sp;
      return t;
    }
  } else {
    t.residual = dk / s;
  }
  t.kind = LineKind::NonCopyLine;
  return t;
}

// g d(g^-1): flat by construction.
template <class Field>
Connection<Field> make_pure_gauge(const GroupField<Field>& g) {
  return Connection<Field>(wedge(g.g(), exterior_derivative(g.inverse())));
}

template <class Field>
struct CopyPair {
  Connection<Field> sharp;     // A#
  FormField<Field> difference; // K = A# - A
};

// Component of every value of x orthogonal to the generator J_axis.
template <class Field>
FormField<Field> off_axis_part(const FormField<Field>& x, int axis) {
  const LieAlgebra& g = x.algebra();
  const Mat j = g.generator(axis);
  const double w = g.metric(axis);
  return map_linear(x, [&](const Mat& v) -> Mat { return v - ((j.adjoint() * v).trace().real() / w) * j; });
}

// A# = exp(alpha J_axis) . A. When F = curvature(A) lies along J_axis, g
// commutes with F, so F# = g F g^-1 = F and (A, A#) is a copy pair.
template <class Field>
CopyPair<Field> make_stabilizer_copy(const Connection<Field>& a, const FormField<Field>& alpha, int axis) {
  const LieAlgebra& g = a.algebra();
  if (axis < 0 || axis >= g.dim()) throw ConstructionError("make_stabilizer_copy: generator index out of range");
  if (alpha.degree() != 0 || alpha.rows() != 1 || alpha.cols() != 1) {
    throw ConstructionError("make_stabilizer_copy: alpha must be a real scalar 0-form");
  }
  const auto f = curvature(a);
  const double off = l2_norm(off_axis_part(f, axis));
  if (off > 1e-10 * (1.0 + l2_norm(f))) {
    throw ConstructionError("make_stabilizer_copy: curvature is not valued along J_" + std::to_string(axis + 1) +
                            " (off-axis norm ||F - P(F)|| = " + std::to_string(off) + ")");
  }
  const auto gauge = GroupField<Field>::exp_of(tensor_constant(alpha, g.generator(axis)));
  auto sharp = gauge_transform_connection(gauge, a);
  auto k = sharp.form() - a.form();
  return {std::move(sharp), std::move(k)};
}

}  // namespace connlab
