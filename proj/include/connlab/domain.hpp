#pragma once

// Computational patch on which form fields live, plus the bookkeeping for
// strictly increasing multi-indices dx^{mu_1} ^ ... ^ dx^{mu_p}.

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "connlab/errors.hpp"

namespace connlab {

inline constexpr int kMaxDim = 4;

enum class Backend { Polynomial, Grid };

inline std::string_view to_string(Backend b) { return b == Backend::Polynomial ? "polynomial" : "grid"; }

inline Backend parse_backend(std::string_view s) {
  if (s == "polynomial") return Backend::Polynomial;
  if (s == "grid") return Backend::Grid;
  throw ConfigurationError("unknown backend '" + std::string(s) + "' (expected polynomial or grid)");
}

// Grid: periodic box [0, L)^d with n sites per axis, site coordinate i*h.
// Polynomial: [0, 1]^d, norms sampled on an m^d lattice {j/(m-1)}.
struct Domain {
  int dim = 2;
  Backend backend = Backend::Polynomial;
  int sites_per_axis = 0;
  double box_length = 0.0;
  int sampling_points_per_axis = 4;

  static Domain polynomial(int dim, int sampling_points_per_axis = 4) {
    Domain d;
    d.dim = dim;
    d.backend = Backend::Polynomial;
    d.sampling_points_per_axis = sampling_points_per_axis;
    d.validate();
    return d;
  }

  static Domain grid(int dim, int sites_per_axis, double box_length = 1.0) {
    Domain d;
    d.dim = dim;
    d.backend = Backend::Grid;
    d.sites_per_axis = sites_per_axis;
    d.box_length = box_length;
    d.sampling_points_per_axis = 0;
    d.validate();
    return d;
  }

  void validate() const {
    if (dim < 2 || dim > kMaxDim) throw ConfigurationError("domain dimension must be 2, 3 or 4");
    if (backend == Backend::Grid) {
      if (sites_per_axis < 4 || sites_per_axis % 2 != 0) {
        throw ConfigurationError("grid sites_per_axis must be even and >= 4");
      }
      if (!(box_length > 0.0)) throw ConfigurationError("grid box_length must be positive");
    } else if (sampling_points_per_axis < 4) {
      throw ConfigurationError("polynomial sampling_points_per_axis must be >= 4");
    }
  }

  double spacing() const { return box_length / sites_per_axis; }

  std::size_t site_count() const {
    std::size_t s = 1;
    for (int i = 0; i < dim; ++i) s *= static_cast<std::size_t>(sites_per_axis);
    return s;
  }

  // Points at which norms are evaluated.
  std::size_t sample_count() const {
    if (backend == Backend::Grid) return site_count();
    std::size_t s = 1;
    for (int i = 0; i < dim; ++i) s *= static_cast<std::size_t>(sampling_points_per_axis);
    return s;
  }

  Domain refined() const {
    if (backend != Backend::Grid) throw UnsupportedBackend("only grid domains can be refined");
    return grid(dim, 2 * sites_per_axis, box_length);
  }

  friend bool operator==(const Domain&, const Domain&) = default;
};

// Site index <-> integer coordinates, first axis fastest.
struct SiteIndexer {
  int dim;
  int n;

  std::array<int, kMaxDim> coords(std::size_t site) const {
    std::array<int, kMaxDim> c{};
    for (int mu = 0; mu < dim; ++mu) {
      c[static_cast<std::size_t>(mu)] = static_cast<int>(site % static_cast<std::size_t>(n));
      site /= static_cast<std::size_t>(n);
    }
    return c;
  }

  std::size_t index(const std::array<int, kMaxDim>& c) const {
    std::size_t s = 0;
    for (int mu = dim - 1; mu >= 0; --mu) s = s * static_cast<std::size_t>(n) + static_cast<std::size_t>(c[static_cast<std::size_t>(mu)]);
    return s;
  }

  // Neighbour of `site` shifted by `step` (+1 or -1) along `axis`, periodic.
  std::size_t shifted(std::size_t site, int axis, int step) const {
    std::size_t stride = 1;
    for (int mu = 0; mu < axis; ++mu) stride *= static_cast<std::size_t>(n);
    const int ci = static_cast<int>((site / stride) % static_cast<std::size_t>(n));
    const int cj = (ci + step + n) % n;
    return site + static_cast<std::size_t>(cj) * stride - static_cast<std::size_t>(ci) * stride;
  }
};

// Strictly increasing multi-indices of length p in {0..d-1}, represented as
// bitmasks and ordered lexicographically: for d = 3, p = 2 -> (01, 02, 12).
class FormIndexing {
 public:
  static const std::vector<std::uint32_t>& masks(int dim, int degree) {
    static const auto table = build();
    static const std::vector<std::uint32_t> empty;
    if (degree < 0 || degree > dim) return empty;
    return table[static_cast<std::size_t>(dim)][static_cast<std::size_t>(degree)];
  }

  static std::size_t count(int dim, int degree) { return masks(dim, degree).size(); }

  static std::size_t position(int dim, std::uint32_t mask) {
    const auto& m = masks(dim, std::popcount(mask));
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i] == mask) return i;
    }
    throw DegreeError("multi-index not valid in this dimension");
  }

  static std::vector<int> indices(std::uint32_t mask) {
    std::vector<int> out;
    for (int mu = 0; mu < kMaxDim; ++mu) {
      if (mask & (1u << mu)) out.push_back(mu);
    }
    return out;
  }

  static std::uint32_t mask_of(const std::vector<int>& idx) {
    std::uint32_t m = 0;
    for (int mu : idx) m |= 1u << mu;
    return m;
  }

  // "(1,2)" with 1-based axes; "()" for degree 0.
  static std::string label(std::uint32_t mask) {
    std::string s = "(";
    bool first = true;
    for (int mu : indices(mask)) {
      if (!first) s += ',';
      s += std::to_string(mu + 1);
      first = false;
    }
    return s + ")";
  }

  // Sign of the permutation sorting the concatenation (I, J) of disjoint sets.
  static int shuffle_sign(std::uint32_t left, std::uint32_t right) {
    int inversions = 0;
    for (int i : indices(left)) {
      inversions += std::popcount(right & ((1u << i) - 1u));
    }
    return inversions % 2 == 0 ? 1 : -1;
  }

 private:
  using Table = std::array<std::array<std::vector<std::uint32_t>, kMaxDim + 1>, kMaxDim + 1>;

  static Table build() {
    Table t;
    for (int d = 0; d <= kMaxDim; ++d) {
      for (int p = 0; p <= d; ++p) {
        std::vector<std::vector<int>> lists;
        for (std::uint32_t m = 0; m < (1u << d); ++m) {
          if (std::popcount(m) == p) lists.push_back(indices(m));
        }
        std::sort(lists.begin(), lists.end());
        for (const auto& l : lists) t[static_cast<std::size_t>(d)][static_cast<std::size_t>(p)].push_back(mask_of(l));
      }
    }
    return t;
  }
};

}  // namespace connlab
