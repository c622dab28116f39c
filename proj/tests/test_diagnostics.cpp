#include "sgpbae/diagnostics.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

#include "sgpbae/rng.hpp"

using namespace sgpbae;

TEST_CASE("rhat close to one for well-mixed chains") {
  Rng rng(1);
  ChainSet cs;
  for (int c = 0; c < 4; ++c) {
    cs.chains.push_back(rng.normal_matrix(1000, 3));
  }
  const Eigen::VectorXd r = rhat(cs);
  CHECK(median(r) < 1.1);
  CHECK(r.minCoeff() > 0.9);
}

TEST_CASE("rhat explodes for separated chains") {
  Rng rng(2);
  ChainSet cs;
  RowMat a = 0.01 * rng.normal_matrix(200, 1);
  RowMat b = a;
  b.array() += 100.0;
  cs.chains = {a, b};
  CHECK(rhat(cs)[0] > 10.0);
}

TEST_CASE("identical chains hit the closed-form floor") {
  Rng rng(3);
  RowMat a = rng.normal_matrix(50, 2);
  ChainSet cs;
  cs.chains = {a, a};
  const Eigen::VectorXd r = rhat(cs);
  const double expect = std::sqrt(49.0 / 50.0);
  CHECK(r[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(r[1] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("rhat is invariant under a common affine transform") {
  Rng rng(4);
  ChainSet cs;
  for (int c = 0; c < 3; ++c) {
    RowMat chain = rng.normal_matrix(100, 2);
    chain.array() += 0.2 * c;  // imperfect mixing on purpose
    cs.chains.push_back(chain);
  }
  const Eigen::VectorXd base = rhat(cs);
  ChainSet scaled = cs;
  for (auto& chain : scaled.chains) chain = (-3.7 * chain).array() + 11.0;
  const Eigen::VectorXd after = rhat(scaled);
  CHECK((base - after).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("rhat input validation") {
  ChainSet too_few;
  too_few.chains = {RowMat::Zero(10, 1)};
  CHECK_THROWS_AS((void)rhat(too_few), ChainCountTooSmall);

  ChainSet degenerate;
  degenerate.chains = {RowMat::Ones(10, 1), RowMat::Zero(10, 1)};
  CHECK_THROWS_AS((void)rhat(degenerate), DegenerateChains);
}

TEST_CASE("metric closed forms") {
  Rng rng(5);
  RowMat truth = rng.normal_matrix(6, 2);
  RowMat ones_var = RowMat::Ones(6, 2);
  RowMat mask = RowMat::Ones(6, 2);

  SUBCASE("perfect prediction") {
    const Metrics m = metrics(truth, ones_var, truth, mask);
    CHECK(m.rmse == 0.0);
    CHECK(m.mse == 0.0);
    CHECK(m.mae == 0.0);
    CHECK(m.smse == 0.0);
    CHECK(m.nll == doctest::Approx(0.5 * std::log(2.0 * M_PI)));
  }
  SUBCASE("constant mean predictor standardizes to one") {
    double mean = truth.mean();
    RowMat pred = RowMat::Constant(6, 2, mean);
    const Metrics m = metrics(pred, ones_var, truth, mask);
    CHECK(m.smse == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("selection errors") {
    CHECK_THROWS_AS((void)metrics(truth, ones_var, truth, RowMat::Zero(6, 2)),
                    EmptySelection);
    RowMat flat = RowMat::Constant(6, 2, 3.0);
    CHECK_THROWS_AS((void)metrics(flat, ones_var, flat, mask),
                    ZeroTruthVariance);
  }
}

TEST_CASE("nll moves toward the unit-gaussian floor as exact entries join") {
  RowMat truth(1, 3), pred(1, 3), var = RowMat::Ones(1, 3);
  truth << 0.0, 1.0, 2.0;
  pred << 0.5, 1.0, 2.0;
  RowMat m1 = RowMat::Zero(1, 3), m2 = RowMat::Zero(1, 3);
  m1(0, 0) = 1.0;
  m1(0, 2) = 1.0;  // keeps the truth variance positive
  m2 = m1;
  m2(0, 1) = 1.0;  // adds an entry predicted exactly
  const double floor = 0.5 * std::log(2.0 * M_PI);
  const double a = metrics(pred, var, truth, m1).nll;
  const double b = metrics(pred, var, truth, m2).nll;
  CHECK(a > b);
  CHECK(b > floor - 1e-12);
}

TEST_CASE("trace export: schema, count, lossless round trip") {
  ChainSet cs;
  Rng rng(6);
  cs.chains = {rng.normal_matrix(2, 1), rng.normal_matrix(2, 1)};
  const std::string path = "/tmp/sgpbae_traces.csv";
  export_traces(cs, path);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "chain,draw,dim,value");
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 4);

  const ChainSet back = load_traces(path);
  CHECK(back.chains.size() == 2);
  CHECK(back.chains[0] == cs.chains[0]);
  CHECK(back.chains[1] == cs.chains[1]);
}

TEST_CASE("metrics report is flat key=value text") {
  Metrics m;
  m.rmse = 1.5;
  const std::string report = metrics_report(m);
  CHECK(report.find("rmse=1.5") != std::string::npos);
  CHECK(report.find("nll=") != std::string::npos);
}
