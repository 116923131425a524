#pragma once

// JSON field dumps, report fragments and CSV tables.
//
// Field dump layout:
//   {"algebra": "su2", "backend": "grid", "degree": 1, "dim": 2,
//    "n_or_degree_info": {...}, "components": {"(1)": ..., "(2)": ...}}
// Grid components are arrays over sites (first axis fastest) of matrices;
// polynomial components map an exponent key "e1,e2,..." to a matrix. A
// matrix is an array of rows, each entry [re, im]. Doubles are written in
// shortest round-trip form, so load(dump(x)) reproduces x bit for bit.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "connlab/copy_analysis.hpp"

namespace connlab {

using Json = nlohmann::ordered_json;

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline double finite_or_throw(double v) {
  if (!std::isfinite(v)) throw FormatError("field dump: non-finite value");
  return v;
}

inline Json matrix_to_json(const Mat& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      row.push_back(Json::array({finite_or_throw(m(i, j).real()), finite_or_throw(m(i, j).imag())}));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Mat matrix_from_json(const Json& j, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) throw FormatError("field dump: bad matrix rows");
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw FormatError("field dump: bad matrix columns");
    }
    for (Eigen::Index k = 0; k < cols; ++k) {
      const Json& e = row[static_cast<std::size_t>(k)];
      if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
        throw FormatError("field dump: matrix entries must be [re, im]");
      }
      m(i, k) = Complex(e[0].get<double>(), e[1].get<double>());
    }
  }
  return m;
}

inline std::string exponent_key(const PolyField::Exponent& e, int dim) {
  std::string s;
  for (int i = 0; i < dim; ++i) {
    if (i) s += ',';
    s += std::to_string(static_cast<int>(e[static_cast<std::size_t>(i)]));
  }
  return s;
}

inline PolyField::Exponent parse_exponent_key(const std::string& key, int dim) {
  PolyField::Exponent e{};
  std::stringstream ss(key);
  std::string part;
  int i = 0;
  while (std::getline(ss, part, ',')) {
    if (i >= dim) throw FormatError("field dump: exponent key '" + key + "' has too many entries");
    std::size_t used = 0;
    int v = -1;
    try {
      v = std::stoi(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != part.size() || v < 0 || v > 255) throw FormatError("field dump: bad exponent key '" + key + "'");
    e[static_cast<std::size_t>(i++)] = static_cast<std::uint8_t>(v);
  }
  if (i != dim) throw FormatError("field dump: exponent key '" + key + "' has the wrong length");
  return e;
}

template <class T>
T required(const Json& j, const char* key) {
  if (!j.contains(key)) throw FormatError(std::string("field dump: missing key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError(std::string("field dump: key '") + key + "' has the wrong type");
  }
}

}  // namespace detail

template <class Field>
Json form_to_json(const FormField<Field>& x) {
  const Domain& dom = x.domain();
  Json j;
  j["algebra"] = std::string(to_string(x.algebra().name()));
  j["backend"] = std::string(to_string(dom.backend));
  j["degree"] = x.degree();
  j["dim"] = dom.dim;
  Json info;
  if constexpr (Field::backend == Backend::Grid) {
    info["n"] = dom.sites_per_axis;
    info["box_length"] = dom.box_length;
  } else {
    int deg = 0;
    for (const auto& c : x.components()) deg = std::max(deg, c.total_degree());
    info["max_degree"] = deg;
    info["sampling_points_per_axis"] = dom.sampling_points_per_axis;
  }
  info["rows"] = x.rows();
  info["cols"] = x.cols();
  j["n_or_degree_info"] = std::move(info);
  Json comps = Json::object();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::string key = FormIndexing::label(x.masks()[i]);
    if constexpr (Field::backend == Backend::Grid) {
      Json sites = Json::array();
      for (const auto& v : x[i].values()) sites.push_back(detail::matrix_to_json(v));
      comps[key] = std::move(sites);
    } else {
      Json terms = Json::object();
      for (const auto& [e, m] : x[i].terms()) terms[detail::exponent_key(e, dom.dim)] = detail::matrix_to_json(m);
      comps[key] = std::move(terms);
    }
  }
  j["components"] = std::move(comps);
  return j;
}

template <class Field>
FormField<Field> form_from_json(const Json& j) {
  static const std::vector<std::string> keys = {"algebra", "backend", "degree", "dim", "n_or_degree_info", "components"};
  if (!j.is_object()) throw FormatError("field dump: top level must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw FormatError("field dump: unknown key '" + k + "'");
  }
  const auto alg = shared_algebra(parse_algebra_name(detail::required<std::string>(j, "algebra")));
  const Backend backend = parse_backend(detail::required<std::string>(j, "backend"));
  if (backend != Field::backend) throw UnsupportedBackend("field dump: backend does not match the requested field type");
  const int degree = detail::required<int>(j, "degree");
  const int dim = detail::required<int>(j, "dim");
  const Json info = detail::required<Json>(j, "n_or_degree_info");
  const auto rows = detail::required<Eigen::Index>(info, "rows");
  const auto cols = detail::required<Eigen::Index>(info, "cols");
  if (rows < 1 || cols < 1) throw FormatError("field dump: matrix shape must be positive");
  Domain dom;
  if constexpr (Field::backend == Backend::Grid) {
    dom = Domain::grid(dim, detail::required<int>(info, "n"), detail::required<double>(info, "box_length"));
  } else {
    dom = Domain::polynomial(dim, detail::required<int>(info, "sampling_points_per_axis"));
  }
  if (degree < 0) throw DegreeError("field dump: negative degree");
  const Json comps = detail::required<Json>(j, "components");
  if (!comps.is_object()) throw FormatError("field dump: components must be an object");
  const auto& masks = FormIndexing::masks(dim, degree);
  if (comps.size() != masks.size()) throw FormatError("field dump: wrong number of components");
  std::vector<Field> fields;
  for (const auto mask : masks) {
    const std::string key = FormIndexing::label(mask);
    if (!comps.contains(key)) throw FormatError("field dump: missing component " + key);
    const Json& c = comps.at(key);
    if constexpr (Field::backend == Backend::Grid) {
      if (!c.is_array() || c.size() != dom.site_count()) throw FormatError("field dump: component " + key + " has the wrong site count");
      std::vector<Mat> values;
      values.reserve(c.size());
      for (const auto& m : c) values.push_back(detail::matrix_from_json(m, rows, cols));
      fields.emplace_back(rows, cols, std::move(values));
    } else {
      if (!c.is_object()) throw FormatError("field dump: polynomial component " + key + " must be an object");
      PolyField p(rows, cols);
      for (const auto& [ek, m] : c.items()) p.add_term(detail::parse_exponent_key(ek, dim), detail::matrix_from_json(m, rows, cols));
      fields.push_back(std::move(p));
    }
  }
  if (fields.empty()) return FormField<Field>::zero(dom, alg, degree, rows, cols);
  return FormField<Field>(dom, alg, degree, std::move(fields));
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class Field>
void save_form(const std::string& path, const FormField<Field>& x) {
  write_text(path, form_to_json(x).dump(1) + "\n");
}

template <class Field>
FormField<Field> load_form(const std::string& path) {
  const std::string text = read_text(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("field dump '" + path + "': " + e.what());
  }
  return form_from_json<Field>(j);
}

inline Json to_json(const IdentityCheck& c) {
  return Json{{"absolute", c.absolute}, {"relative", c.relative}, {"degenerate_dimension", c.degenerate_dimension}};
}

inline Json to_json(const CopyReport& r) {
  return Json{{"instance", r.instance},
              {"verdict", std::string(to_string(r.verdict))},
              {"tolerance", r.tolerance},
              {"residual_copy", r.residual_copy},
              {"residual_commute", r.residual_commute},
              {"commute_degenerate", r.commute_degenerate},
              {"dk_norm", r.dk_norm},
              {"kk_norm", r.kk_norm},
              {"midpoint_check", r.midpoint_check},
              {"midpoint_shift", r.midpoint_shift},
              {"flags_consistent", r.flags_consistent}};
}

// %.17g: enough digits to reproduce any double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  // Cells are either numbers (written with format_double) or strings.
  using Cell = std::variant<double, long long, std::string>;

  void add_row(std::vector<Cell> row) {
    if (row.size() != header_.size()) throw Error("csv row has " + std::to_string(row.size()) + " cells, header has " +
                                                  std::to_string(header_.size()));
    rows_.push_back(std::move(row));
  }

  const std::vector<std::string>& header() const { return header_; }
  std::size_t size() const { return rows_.size(); }

  std::string str() const {
    std::string out;
    for (std::size_t i = 0; i < header_.size(); ++i) out += (i ? "," : "") + header_[i];
    out += '\n';
    for (const auto& row : rows_) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out += ',';
        if (const auto* d = std::get_if<double>(&row[i])) {
          out += format_double(*d);
        } else if (const auto* n = std::get_if<long long>(&row[i])) {
          out += std::to_string(*n);
        } else {
          out += std::get<std::string>(row[i]);
        }
      }
      out += '\n';
    }
    return out;
  }

  void write(const std::string& path) const { write_text(path, str()); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<Cell>> rows_;
};

}  // namespace connlab
