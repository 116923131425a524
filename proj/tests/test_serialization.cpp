#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "connlab/serialization.hpp"
#include "connlab/witnesses.hpp"

using namespace connlab;

namespace {

const AlgebraPtr su2 = shared_algebra(AlgebraName::su2);
const AlgebraPtr su3 = shared_algebra(AlgebraName::su3);

template <class Field>
bool bit_equal(const FormField<Field>& x, const FormField<Field>& y) {
  if (x.degree() != y.degree() || x.size() != y.size() || x.rows() != y.rows()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if constexpr (Field::backend == Backend::Grid) {
      if (x[i].values().size() != y[i].values().size()) return false;
      for (std::size_t s = 0; s < x[i].values().size(); ++s) {
        if (x[i].values()[s] != y[i].values()[s]) return false;
      }
    } else {
      if (x[i].terms() != y[i].terms()) return false;
    }
  }
  return true;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("connlab_test_" + name);
}

}  // namespace

TEST_CASE("grid dumps round-trip bit for bit") {
  const Domain dom = Domain::grid(3, 4, 2.5);
  CounterRng rng(1, 0);
  for (int degree : {0, 1, 2, 3}) {
    const auto x = random_grid_noise(dom, su3, degree, rng);
    const auto j = form_to_json(x);
    const auto y = form_from_json<GridField>(Json::parse(j.dump()));
    CHECK(bit_equal(x, y));
    CHECK(y.domain().box_length == 2.5);
  }
}

TEST_CASE("polynomial dumps round-trip bit for bit") {
  const Domain dom = Domain::polynomial(3, 5);
  CounterRng rng(2, 0);
  const auto x = random_poly_form(dom, su2, 2, 3, rng);
  const auto path = temp_path("poly.json");
  save_form(path.string(), x);
  const auto y = load_form<PolyField>(path.string());
  CHECK(bit_equal(x, y));
  CHECK(y.domain().sampling_points_per_axis == 5);
  std::filesystem::remove(path);

  const auto j = form_to_json(x);
  CHECK(j["n_or_degree_info"]["max_degree"] == 3);
  CHECK(j["components"].contains("(1,3)"));
  CHECK(j["components"]["(1,2)"].contains("0,1,2"));
}

TEST_CASE("dump layout") {
  const Domain dom = Domain::grid(2, 4);
  const auto x = GridForm::constant(dom, su2, 1, {su2->generator(0), su2->generator(2)});
  const auto j = form_to_json(x);
  CHECK(j["algebra"] == "su2");
  CHECK(j["backend"] == "grid");
  CHECK(j["degree"] == 1);
  CHECK(j["dim"] == 2);
  CHECK(j["n_or_degree_info"]["n"] == 4);
  CHECK(j["components"]["(1)"].size() == 16);
  // J_1 = -(i/2) sigma_1: entry (0,1) is -i/2.
  CHECK(j["components"]["(1)"][0][0][1] == Json::array({0.0, -0.5}));
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"algebra", "backend", "degree", "dim", "n_or_degree_info", "components"});
}

TEST_CASE("malformed dumps are rejected") {
  const Domain dom = Domain::grid(2, 4);
  CounterRng rng(3, 0);
  const auto good = form_to_json(random_grid_noise(dom, su2, 1, rng));

  auto extra = good;
  extra["comment"] = "x";
  CHECK_THROWS_AS(form_from_json<GridField>(extra), FormatError);

  auto missing = good;
  missing.erase("degree");
  CHECK_THROWS_AS(form_from_json<GridField>(missing), FormatError);

  auto sites = good;
  sites["components"]["(1)"].erase(0);
  CHECK_THROWS_AS(form_from_json<GridField>(sites), FormatError);

  auto entry = good;
  entry["components"]["(2)"][3][0][0] = Json::array({1.0});
  CHECK_THROWS_AS(form_from_json<GridField>(entry), FormatError);

  auto algebra = good;
  algebra["algebra"] = "so3";
  CHECK_THROWS_AS(form_from_json<GridField>(algebra), ConfigurationError);

  CHECK_THROWS_AS(form_from_json<PolyField>(good), UnsupportedBackend);

  auto type = good;
  type["dim"] = "two";
  CHECK_THROWS_AS(form_from_json<GridField>(type), FormatError);

  const auto poly = form_to_json(random_poly_form(Domain::polynomial(2), su2, 1, 1, rng));
  auto key = poly;
  key["components"]["(1)"]["0,x"] = key["components"]["(1)"]["0,0"];
  CHECK_THROWS_AS(form_from_json<PolyField>(key), FormatError);
  auto len = poly;
  len["components"]["(1)"]["0,0,0"] = len["components"]["(1)"]["0,0"];
  CHECK_THROWS_AS(form_from_json<PolyField>(len), FormatError);

  CHECK_THROWS_AS(form_from_json<GridField>(Json::array()), FormatError);
}

TEST_CASE("non-finite values cannot be dumped") {
  const Domain dom = Domain::grid(2, 4);
  Mat bad = su2->generator(0);
  bad(0, 0) = Complex(std::numeric_limits<double>::quiet_NaN(), 0.0);
  const auto x = GridForm::constant(dom, su2, 0, {bad});
  CHECK_THROWS_AS(form_to_json(x), FormatError);
}

TEST_CASE("file errors") {
  CHECK_THROWS_AS(read_text("/nonexistent/dir/file.json"), IoError);
  CHECK_THROWS_AS(write_text("/nonexistent/dir/file.json", "x"), IoError);
  const auto path = temp_path("broken.json");
  write_text(path.string(), "{ not json");
  CHECK_THROWS_AS(load_form<GridField>(path.string()), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("csv tables") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(1.0) == "1");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  CsvTable t({"t", "residual", "label"});
  t.add_row({0.25, 1e-17, std::string("a")});
  t.add_row({static_cast<long long>(3), 2.0, std::string("b")});
  CHECK(t.size() == 2);
  CHECK(t.str() == "t,residual,label\n0.25,1.0000000000000001e-17,a\n3,2,b\n");
  CHECK_THROWS_AS(t.add_row({1.0}), Error);
}

TEST_CASE("report fragments") {
  const auto w = stabilizer_witness<PolyField>(Domain::polynomial(2), su2);
  const auto r = classify_line(w.base, w.direction, 1e-8, w.name);
  const auto j = to_json(r);
  CHECK(j["verdict"] == "EndpointsOnly");
  CHECK(j["instance"] == "stabilizer_copy");
  CHECK(j["tolerance"] == 1e-8);
  CHECK(j["residual_copy"].get<double>() == r.residual_copy);
  const auto c = to_json(IdentityCheck{1e-15, 1e-16, false});
  CHECK(c["relative"] == 1e-16);
  CHECK(c["degenerate_dimension"] == false);
}
