#include "ivqr/io.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

using namespace ivqr;
using namespace ivqr::io;

namespace {

ErrorCode code_of(const std::string& csv) {
  std::istringstream in(csv);
  try {
    read_csv(in);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::invalid_argument;
}

}  // namespace

TEST_CASE("well-formed three-row file") {
  std::istringstream in("cluster,y,x,w_1,z_1\na,1.5,2,0.1,1\nb,2.5,3,0.2,0\na,-1,1e-3,0.3,1\n");
  ClusteredDataset d = read_csv(in);
  CHECK(d.n() == 3);
  CHECK(d.w.cols() == 2);
  CHECK(d.w.col(0).isOnes());
  CHECK(d.w(2, 1) == 0.3);
  CHECK(d.x(2) == 1e-3);
  CHECK(d.cluster == std::vector<int>{0, 1, 0});
  CHECK(d.v.size() == 0);
}

TEST_CASE("labels follow first appearance and weights are read") {
  std::istringstream in("y,cluster,x,z_1,v\n1,9,1,1,2\n2,3,1,0,1\n3,9,2,1,1\n4,7,1,0,1\n");
  CsvOptions o;
  ClusteredDataset d = read_csv(in, o);
  CHECK(d.cluster == std::vector<int>{0, 1, 0, 2});
  CHECK(d.v(0) == 2.0);
  CHECK(d.w.cols() == 1);
}

TEST_CASE("malformed files") {
  CHECK(code_of("cluster,y,x,w_1\n1,1,1,1\n") == ErrorCode::missing_column);
  CHECK(code_of("cluster,x,z_1\n1,1,1\n") == ErrorCode::missing_column);
  CHECK(code_of("cluster,y,x,z_1\n1,1,1,1\n1,abc,1,1\n") == ErrorCode::parse_error);
  CHECK(code_of("cluster,y,x,z_1\n1,1,1\n") == ErrorCode::parse_error);
  CHECK(code_of("cluster,y,x,z_1\n1,inf,1,1\n") == ErrorCode::non_finite);
  CHECK(code_of("cluster,y,x,z_1\n1,nan,1,1\n") == ErrorCode::non_finite);
  CHECK(code_of("") == ErrorCode::parse_error);
  std::istringstream in("cluster,y,x,z_1\n1,1,1,1\n1,2,1,x\n");
  CHECK_THROWS_WITH(read_csv(in), doctest::Contains("line 3"));
}

TEST_CASE("CSV round trip is bit-identical") {
  ClusteredDataset d = sim::gen_dgp1(sim::Dgp1Config{.dz = 3, .seed = 8});
  d.v = Vector::LinSpaced(d.n(), 0.1, 3.7);
  std::stringstream s;
  write_csv(s, d);
  ClusteredDataset r = read_csv(s);
  CHECK(r.y == d.y);
  CHECK(r.x == d.x);
  CHECK(r.w == d.w);
  CHECK(r.z == d.z);
  CHECK(r.v == d.v);
  CHECK(r.cluster == d.cluster);
}

TEST_CASE("shortest round-trip number formatting") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int k = 0; k < 2000; ++k) {
    const double x = u(gen) * std::pow(10.0, static_cast<int>(gen() % 40) - 20);
    CHECK(parse_double(format_double(x), 1) == x);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(parse_double(format_double(std::numeric_limits<double>::denorm_min()), 1) ==
        std::numeric_limits<double>::denorm_min());
}

TEST_CASE("edge list and labels") {
  std::istringstream in("from,to\n0,1\n1,2\n5,3\n");
  network::Network net = read_edges(in);
  CHECK(net.n == 6);
  CHECK(net.edges.size() == 3);
  std::istringstream bad("0,1\n1,x\n");
  CHECK_THROWS_AS(read_edges(bad), Error);
  network::Partition p;
  p.labels = {0, -1, 1};
  std::ostringstream out;
  write_labels(out, p);
  CHECK(out.str() == "node,label\n0,0\n1,-1\n2,1\n");
}

TEST_CASE("test results round-trip through JSON") {
  bootstrap::TestResult r;
  r.method = bootstrap::Method::ar;
  r.taus = {0.25, 0.75};
  r.beta0 = {1.1, 0.1 + 0.2};
  r.statistic = std::numeric_limits<double>::infinity();
  r.critical_value = 0.123456789012345678;
  r.p_value = 1.0 / 3.0;
  r.alpha = 0.05;
  r.reject = true;
  r.n_sign_vectors = 512;
  r.mode = bootstrap::Mode::sample;
  r.excluded_draws = 2;
  r.boundary_hits = 1;
  r.warnings = {"a", "b"};
  const std::string text = emit_results({r}, Format::json, Json::object());
  Json doc = Json::parse(text);
  CHECK(doc["schema"] == std::string(schema_tag));
  bootstrap::TestResult back = test_result_from_json(doc["results"][0]);
  CHECK(back.method == r.method);
  CHECK(back.taus == r.taus);
  CHECK(back.beta0 == r.beta0);
  CHECK(back.statistic == r.statistic);
  CHECK(back.critical_value == r.critical_value);
  CHECK(back.p_value == r.p_value);
  CHECK(back.alpha == r.alpha);
  CHECK(back.reject == r.reject);
  CHECK(back.n_sign_vectors == r.n_sign_vectors);
  CHECK(back.mode == r.mode);
  CHECK(back.excluded_draws == r.excluded_draws);
  CHECK(back.boundary_hits == r.boundary_hits);
  CHECK(back.warnings == r.warnings);
}

TEST_CASE("empty result lists are valid documents") {
  Json doc = Json::parse(emit_results({}, Format::json, Json{{"seed", 1}}));
  CHECK(doc["schema"] == std::string(schema_tag));
  CHECK(doc["results"].is_array());
  CHECK(doc["results"].empty());
  CHECK(doc["config"]["seed"] == 1);
  const std::string csv = emit_results({}, Format::csv, Json::object());
  CHECK(csv.find(schema_tag) != std::string::npos);
  Json table = Json::parse(emit_table(sim::McTable{}, Format::json, Json::object()));
  CHECK(table["schema"] == std::string(schema_tag));
}

TEST_CASE("rejection table layout") {
  sim::McTable t;
  const std::vector<double> taus{0.1, 0.25, 0.5, 0.75, 0.9};
  const std::vector<bootstrap::Method> methods{bootstrap::Method::t_cr, bootstrap::Method::t,
                                               bootstrap::Method::ar,   bootstrap::Method::t_std,
                                               bootstrap::Method::im,   bootstrap::Method::crs};
  for (auto h : {sim::Hypothesis::h0, sim::Hypothesis::h1})
    for (auto m : methods)
      for (double tau : taus) {
        sim::McCell c;
        c.method = m;
        c.tau = tau;
        c.hypothesis = h;
        c.successes = 10;
        c.rejections = 1;
        t.cells.push_back(c);
      }
  std::istringstream csv(emit_table(t, Format::csv, Json::object()));
  std::string line;
  std::getline(csv, line);
  std::getline(csv, line);
  CHECK(line == "panel,method,tau=0.1,tau=0.25,tau=0.5,tau=0.75,tau=0.9");
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 6);
  }
  CHECK(rows == 12);
  Json doc = Json::parse(emit_table(t, Format::json, Json::object()));
  CHECK(doc["results"]["panels"]["H0"].size() == 6);
  CHECK(doc["results"]["panels"]["H1"]["T_CR"].size() == 5);
  CHECK(doc["results"]["panels"]["H0"]["AR"][2] == doctest::Approx(10.0));
}
