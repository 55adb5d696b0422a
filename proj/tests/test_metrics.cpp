#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "depthforge/grid.hpp"
#include "depthforge/metrics.hpp"
#include "depthforge/rng.hpp"

using namespace depthforge;

namespace {

// Reference O(n^2) tau-a: (concordant - discordant) / C(n,2); any pair tied
// in either coordinate counts toward neither.
double kendall_brute(const std::vector<double>& pred,
                     const std::vector<double>& truth) {
  std::int64_t num = 0;
  std::size_t n = pred.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double dp = pred[i] - pred[j], dt = truth[i] - truth[j];
      if (dp == 0.0 || dt == 0.0) continue;
      num += (dp > 0.0) == (dt > 0.0) ? 1 : -1;
    }
  }
  std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  return static_cast<double>(num) / static_cast<double>(n0);
}

BitMask ones(int h, int w) { return BitMask(h, w, 1); }

Grid<double> row(const std::vector<double>& v) {
  return Grid<double>::from_values(1, static_cast<int>(v.size()), v);
}

}  // namespace

TEST_CASE("rmse hand values") {
  Grid<double> pred = row({1.0, 2.0, 3.0});
  Grid<double> truth = row({1.0, 2.0, 5.0});
  CHECK(rmse(pred, truth, ones(1, 3)) ==
        Catch::Approx(std::sqrt(4.0 / 3.0)).epsilon(1e-15));

  BitMask m = ones(1, 3);
  m[2] = 0;  // drop the only erroneous pixel
  CHECK(rmse(pred, truth, m) == 0.0);
}

TEST_CASE("rmse validates inputs") {
  Grid<double> a(2, 2, 1.0), b(2, 3, 1.0);
  REQUIRE_THROWS_AS(rmse(a, b, ones(2, 2)), Error);
  try {
    rmse(a, a, BitMask(2, 2));
    FAIL("expected empty_mask");
  } catch (const Error& e) {
    CHECK(e.code() == errc::empty_mask);
    CHECK(e.exit_class() == 4);
  }
}

TEST_CASE("delta_k threshold is strict") {
  Grid<double> pred = row({2.5, 2.0, 1.0});
  Grid<double> truth = row({2.0, 2.0, 1.3});
  // ratios: exactly 1.25 (excluded), 1.0 (included), 1.3 (excluded)
  CHECK(delta_k(pred, truth, ones(1, 3), 1.25) ==
        Catch::Approx(1.0 / 3.0).epsilon(1e-15));
  // a hair above the boundary admits the first pixel
  CHECK(delta_k(pred, truth, ones(1, 3), 1.25 + 1e-9) ==
        Catch::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(delta_k(pred, truth, ones(1, 3), 1.31) == 1.0);
}

TEST_CASE("delta_k rejects bad thresholds and non-positive depths") {
  Grid<double> pred = row({1.0, 2.0});
  Grid<double> truth = row({1.0, 2.0});
  try {
    delta_k(pred, truth, ones(1, 2), 1.0);
    FAIL("expected invalid_config");
  } catch (const Error& e) {
    CHECK(e.code() == errc::invalid_config);
    CHECK(e.exit_class() == 2);
  }

  Grid<double> zpred = row({0.0, 2.0});
  try {
    delta_k(zpred, truth, ones(1, 2), 1.25);
    FAIL("expected non_positive_depth");
  } catch (const Error& e) {
    CHECK(e.code() == errc::non_positive_depth);
  }
  // the same zero is fine when masked out
  BitMask m = ones(1, 2);
  m[0] = 0;
  CHECK(delta_k(zpred, truth, m, 1.25) == 1.0);
}

TEST_CASE("kendall tau hand values") {
  CHECK(kendall_tau(row({1.0, 3.0, 2.0}), row({1.0, 2.0, 3.0}), ones(1, 3)) ==
        Catch::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(kendall_tau(row({1.0, 2.0, 3.0, 4.0}), row({1.0, 2.0, 3.0, 4.0}),
                    ones(1, 4)) == 1.0);
  CHECK(kendall_tau(row({4.0, 3.0, 2.0, 1.0}), row({1.0, 2.0, 3.0, 4.0}),
                    ones(1, 4)) == -1.0);
  // constant prediction: every pair ties, tau-a is 0
  CHECK(kendall_tau(row({5.0, 5.0, 5.0}), row({1.0, 2.0, 3.0}), ones(1, 3)) ==
        0.0);
}

TEST_CASE("kendall tau needs two masked pixels") {
  BitMask m(1, 3);
  m[1] = 1;
  try {
    kendall_tau(row({1.0, 2.0, 3.0}), row({1.0, 2.0, 3.0}), m);
    FAIL("expected insufficient_pairs");
  } catch (const Error& e) {
    CHECK(e.code() == errc::insufficient_pairs);
  }
}

TEST_CASE("kendall tau matches the quadratic reference on random data") {
  Rng r(2024);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + static_cast<int>(r.uniform_int(59));
    std::vector<double> pred(n), truth(n);
    // small alphabets force heavy tie structure in both coordinates
    int alphabet = 2 + static_cast<int>(r.uniform_int(8));
    for (int i = 0; i < n; ++i) {
      pred[i] = static_cast<double>(r.uniform_int(alphabet));
      truth[i] = static_cast<double>(r.uniform_int(alphabet));
    }
    double fast = kendall_tau(row(pred), row(truth), ones(1, n));
    double slow = kendall_brute(pred, truth);
    REQUIRE(fast == slow);  // identical integer numerators, same division
  }
}

TEST_CASE("kendall tau ignores unmasked pixels") {
  Grid<double> pred = row({1.0, 100.0, 2.0, 3.0});
  Grid<double> truth = row({1.0, -50.0, 2.0, 3.0});
  BitMask m = ones(1, 4);
  m[1] = 0;
  CHECK(kendall_tau(pred, truth, m) == 1.0);
}

TEST_CASE("evaluate aggregates all metrics") {
  Grid<double> pred = row({1.0, 2.0, 3.9});
  Grid<double> truth = row({1.0, 2.0, 3.0});
  EvalReport rep = evaluate(pred, truth, ones(1, 3), {1.25, 1.5});
  CHECK(rep.n_pixels == 3);
  CHECK(rep.rmse == Catch::Approx(std::sqrt(0.81 / 3.0)).epsilon(1e-12));
  CHECK(rep.delta.at(1.25) == Catch::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(rep.delta.at(1.5) == 1.0);
  CHECK(rep.kendall == 1.0);
}
