#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "ivcr/data.hpp"

using namespace ivcr;

TEST_CASE("csv parse maps columns by header name, any order") {
  std::istringstream in(
      "status,exposure,id,instrument,time,age,bmi\n"
      "1,0.25,a1,1,2.5,60,24.5\n"
      "0,-0.5,a2,0,1.25,55,30\n");
  Dataset d = load_dataset(in);
  REQUIRE(d.size() == 2);
  CHECK(d.p == 2);
  CHECK(d.subjects[0].id == "a1");
  CHECK(d.subjects[0].time == 2.5);
  CHECK(d.subjects[0].status == 1);
  CHECK(d.subjects[0].exposure == 0.25);
  CHECK(d.subjects[0].instrument == 1.0);
  CHECK(d.subjects[0].covariates == std::vector<double>{60.0, 24.5});
  CHECK(d.subjects[1].status == 0);
}

TEST_CASE("explicit covariate schema selects and orders columns") {
  std::istringstream in(
      "id,time,status,exposure,instrument,a,b,c\n"
      "x,1,1,0,1,10,20,30\n");
  ColumnSchema schema;
  schema.covariates = {"c", "a"};
  Dataset d = load_dataset(in, schema);
  CHECK(d.p == 2);
  CHECK(d.subjects[0].covariates == std::vector<double>{30.0, 10.0});
}

TEST_CASE("csv round trip preserves every value bit for bit") {
  Dataset d = testutil::random_dataset(60, 3, 42);
  d.subjects[7].time = 0.1 + 1e-16;  // value that a short print would destroy
  std::string once = testutil::to_csv(d);
  std::istringstream in(once);
  Dataset back = load_dataset(in);
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.subjects[i].id == d.subjects[i].id);
    CHECK(back.subjects[i].time == d.subjects[i].time);
    CHECK(back.subjects[i].status == d.subjects[i].status);
    CHECK(back.subjects[i].exposure == d.subjects[i].exposure);
    CHECK(back.subjects[i].instrument == d.subjects[i].instrument);
    CHECK(back.subjects[i].covariates == d.subjects[i].covariates);
  }
  CHECK(testutil::to_csv(back) == once);
}

TEST_CASE("parse failures carry the row and column") {
  std::istringstream missing(
      "id,time,status,exposure,instrument\n"
      "x,1,1,,1\n");
  CHECK_THROWS_WITH_AS(load_dataset(missing),
                       doctest::Contains("column 'exposure'"), DataError);
  std::istringstream garbled(
      "id,time,status,exposure,instrument\n"
      "x,oops,1,0,1\n");
  CHECK_THROWS_WITH_AS(load_dataset(garbled), doctest::Contains("row 1"),
                       DataError);
  std::istringstream nocol("id,time,exposure,instrument\nx,1,0,1\n");
  CHECK_THROWS_AS(load_dataset(nocol), DataError);
  std::istringstream negtime(
      "id,time,status,exposure,instrument\n"
      "x,-2,1,0,1\n");
  CHECK_THROWS_AS(load_dataset(negtime), DataError);
}

TEST_CASE("centering removes means once and records offsets") {
  Dataset d = testutil::random_dataset(40, 2, 7);
  Dataset c = center(d);
  REQUIRE(c.centered());
  REQUIRE(c.centering_offsets.size() == 4);  // instrument, exposure, 2 covs
  double se = 0, si = 0, s0 = 0, s1 = 0;
  for (const auto& s : c.subjects) {
    si += s.instrument;
    se += s.exposure;
    s0 += s.covariates[0];
    s1 += s.covariates[1];
  }
  const double n = static_cast<double>(c.size());
  CHECK(std::fabs(si / n) < 1e-12);
  CHECK(std::fabs(se / n) < 1e-12);
  CHECK(std::fabs(s0 / n) < 1e-12);
  CHECK(std::fabs(s1 / n) < 1e-12);
  // offsets + centered values reconstruct the originals
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(c.subjects[i].exposure + c.centering_offsets[1] ==
          doctest::Approx(d.subjects[i].exposure).epsilon(1e-12));
    CHECK(c.subjects[i].covariates[1] + c.centering_offsets[3] ==
          doctest::Approx(d.subjects[i].covariates[1]).epsilon(1e-12));
  }
  // centering an already centered dataset is the identity on values
  Dataset cc = center(c);
  for (std::size_t i = 0; i < d.size(); ++i)
    CHECK(cc.subjects[i].exposure ==
          doctest::Approx(c.subjects[i].exposure).epsilon(1e-12));
}

TEST_CASE("validate rejects structural violations") {
  Dataset empty;
  CHECK_THROWS_AS(validate(empty), DataError);

  Dataset d = testutil::random_dataset(10, 1, 3);
  d.subjects[4].covariates.push_back(1.0);
  CHECK_THROWS_AS(validate(d), DataError);

  Dataset no_events = testutil::dataset_from({1, 2, 3}, {0, 2, 0});
  CHECK_THROWS_AS(validate(no_events), DataError);

  Dataset ok = testutil::random_dataset(10, 1, 3);
  CHECK_NOTHROW(validate(ok));
}

TEST_CASE("tau resolution defaults to the last cause event") {
  Dataset d = testutil::dataset_from({1.0, 4.0, 2.5, 3.0}, {1, 0, 1, 2});
  FitOptions opts;
  CHECK(resolve_tau(d, opts) == 2.5);
  opts.tau = 2.0;
  CHECK(resolve_tau(d, opts) == 2.0);
  opts.tau = 9.0;  // beyond follow-up
  CHECK_THROWS_AS(resolve_tau(d, opts), DataError);
  opts.tau = -1.0;
  CHECK_THROWS_AS(resolve_tau(d, opts), DataError);
}

TEST_CASE("pooled competing event covers every status other than the cause") {
  Dataset d = testutil::dataset_from({1, 2, 3, 4}, {1, 2, 3, 0});
  CHECK(!d.is_competing(d.subjects[0]));
  CHECK(d.is_competing(d.subjects[1]));
  CHECK(d.is_competing(d.subjects[2]));
  CHECK(!d.is_competing(d.subjects[3]));
  CHECK(d.n_cause_events() == 1);
}
