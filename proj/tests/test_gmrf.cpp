#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "depthforge/depth.hpp"
#include "depthforge/errors.hpp"
#include "depthforge/gmrf.hpp"
#include "depthforge/grid.hpp"
#include "depthforge/rng.hpp"

using namespace depthforge;

namespace {

RgbImage flat_rgb(int h, int w, double r, double g, double b) {
  RgbImage img;
  img.r = Grid<double>(h, w, r);
  img.g = Grid<double>(h, w, g);
  img.b = Grid<double>(h, w, b);
  return img;
}

RgbImage random_rgb(int h, int w, Rng& rng) {
  RgbImage img;
  img.r = Grid<double>(h, w);
  img.g = Grid<double>(h, w);
  img.b = Grid<double>(h, w);
  for (std::size_t i = 0; i < img.r.size(); ++i) {
    img.r[i] = rng.uniform01();
    img.g[i] = rng.uniform01();
    img.b[i] = rng.uniform01();
  }
  return img;
}

// Random well-posed model: moderate-contrast image, random observations on
// a random subset of pixels, mid-range parameters, and a solver tolerance
// tight enough that iterative and dense solves agree to 1e-8 in values.
GmrfModel random_model(int h, int w, Rng& rng) {
  RgbImage img;
  img.r = Grid<double>(h, w);
  img.g = Grid<double>(h, w);
  img.b = Grid<double>(h, w);
  Grid<double> d(h, w);
  BitMask m(h, w);
  bool any = false;
  for (std::size_t i = 0; i < d.size(); ++i) {
    img.r[i] = 0.3 + 0.4 * rng.uniform01();
    img.g[i] = 0.3 + 0.4 * rng.uniform01();
    img.b[i] = 0.3 + 0.4 * rng.uniform01();
    d[i] = 2.0 * rng.uniform01() - 1.0;
    m[i] = rng.uniform01() < 0.7 ? 1 : 0;
    any = any || m[i];
  }
  if (!any) m[d.size() / 2] = 1;
  GmrfParams params;
  params.lambda = 0.5 + 1.5 * rng.uniform01();
  params.beta = 2.0 + 6.0 * rng.uniform01();
  params.tau = 50.0 + 450.0 * rng.uniform01();
  params.cg_tol = 1e-11;
  return build_gmrf(img, d, m, params);
}

Eigen::MatrixXd dense_precision(const GmrfModel& model) {
  const int n = static_cast<int>(model.size());
  const int w = model.width, h = model.height;
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
  for (int p = 0; p < n; ++p) q(p, p) = model.obs_precision[p];
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + 1 < w; ++x) {
      double we = model.w_h[static_cast<std::size_t>(y) * (w - 1) + x];
      int p = static_cast<int>(model.index(x, y));
      int r = static_cast<int>(model.index(x + 1, y));
      q(p, p) += we;
      q(r, r) += we;
      q(p, r) -= we;
      q(r, p) -= we;
    }
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x < w; ++x) {
      double we = model.w_v[static_cast<std::size_t>(y) * w + x];
      int p = static_cast<int>(model.index(x, y));
      int r = static_cast<int>(model.index(x, y + 1));
      q(p, p) += we;
      q(r, r) += we;
      q(p, r) -= we;
      q(r, p) -= we;
    }
  return q;
}

}  // namespace

TEST_CASE("edge weights follow image contrast") {
  GmrfParams params;
  params.lambda = 1.7;

  RgbImage flat = flat_rgb(4, 5, 0.3, 0.6, 0.2);
  Grid<double> d(4, 5, 0.1);
  BitMask m(4, 5, 1);
  GmrfModel model = build_gmrf(flat, d, m, params);
  for (double we : model.w_h) REQUIRE(we == 1.7);
  for (double we : model.w_v) REQUIRE(we == 1.7);

  // A full-contrast boundary drives its crossing weights to zero.
  RgbImage split = flat_rgb(4, 4, 0.0, 0.0, 0.0);
  for (int y = 0; y < 4; ++y)
    for (int x = 2; x < 4; ++x) {
      split.r(x, y) = 1.0;
      split.g(x, y) = 1.0;
      split.b(x, y) = 1.0;
    }
  Grid<double> d2(4, 4, 0.1);
  BitMask m2(4, 4, 1);
  GmrfModel cut = build_gmrf(split, d2, m2, params);
  for (int y = 0; y < 4; ++y) {
    double crossing = cut.w_h[static_cast<std::size_t>(y) * 3 + 1];
    REQUIRE(crossing < 1e-20);
    REQUIRE(cut.w_h[static_cast<std::size_t>(y) * 3 + 0] == 1.7);
  }

  GmrfParams sharper = params;
  sharper.beta *= 2.0;
  GmrfModel cut2 = build_gmrf(split, d2, m2, sharper);
  REQUIRE(cut2.w_h[1] < cut.w_h[1]);
}

TEST_CASE("build_gmrf populates observations and leverage") {
  Rng rng(11);
  RgbImage img = random_rgb(5, 6, rng);
  Grid<double> d(5, 6);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = rng.uniform01();
  BitMask m(5, 6, 1);
  m[7] = 0;
  m[20] = 0;
  GmrfParams params;
  GmrfModel model = build_gmrf(img, d, m, params);

  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x) {
      std::size_t p = model.index(x, y);
      REQUIRE(model.rho[p] == 1.0);
      if (m[p]) {
        REQUIRE(model.obs_value[p] == d[p]);
        REQUIRE(model.obs_precision[p] == params.tau);
        double k = std::max(model.kappa(x, y), params.lambda);
        REQUIRE(model.leverage_gain[p] == (params.tau + k) / k);
      } else {
        REQUIRE(model.obs_value[p] == 0.0);
        REQUIRE(model.obs_precision[p] == 0.0);
        REQUIRE(model.leverage_gain[p] == 1.0);
      }
    }

  BitMask empty(5, 6, 0);
  try {
    build_gmrf(img, d, empty, params);
    FAIL("empty conditioning accepted");
  } catch (const Error& e) {
    REQUIRE(e.code() == errc::empty_conditioning);
  }
  Grid<double> wrong(6, 5, 0.1);
  REQUIRE_THROWS_AS(build_gmrf(img, wrong, BitMask(6, 5, 1), params), Error);
}

TEST_CASE("gmrf parameter validation") {
  auto expect_config_error = [](GmrfParams p) {
    try {
      p.validate();
      FAIL("invalid parameters accepted");
    } catch (const Error& e) {
      REQUIRE(e.code() == errc::invalid_config);
      REQUIRE(e.exit_class() == 2);
    }
  };
  GmrfParams p;
  p.lambda = 0.0;
  expect_config_error(p);
  p = GmrfParams{};
  p.tau = -1.0;
  expect_config_error(p);
  p = GmrfParams{};
  p.nu = 0.0;
  expect_config_error(p);
  p = GmrfParams{};
  p.rho_reject = 1.0;
  expect_config_error(p);
  p = GmrfParams{};
  p.rho_reject = -0.1;
  expect_config_error(p);
  p = GmrfParams{};
  p.irls_max_iters = -1;
  expect_config_error(p);
  p = GmrfParams{};
  p.cg_tol = 0.0;
  expect_config_error(p);
  GmrfParams ok;
  ok.rho_reject = 0.0;  // rejection disabled is a valid configuration
  ok.validate();
}

TEST_CASE("conjugate gradients on the identity operator") {
  std::vector<double> b = {3.0, -1.5, 0.25, 7.0};
  std::vector<double> diag(b.size(), 1.0);
  auto identity = [](const std::vector<double>& v, std::vector<double>& out) {
    out = v;
  };
  std::vector<double> x = conjugate_gradient(identity, diag, b, 1e-12, 10);
  for (std::size_t i = 0; i < b.size(); ++i) REQUIRE(x[i] == b[i]);
}

TEST_CASE("solve_spd matches dense solves") {
  Rng rng(101);
  for (int trial = 0; trial < 10; ++trial) {
    GmrfModel model = random_model(8, 8, rng);
    std::vector<double> rhs(model.size());
    for (auto& v : rhs) v = 2.0 * rng.uniform01() - 1.0;

    std::vector<double> x = solve_spd(model, rhs);
    Eigen::MatrixXd q = dense_precision(model);
    Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(
        rhs.data(), static_cast<long>(rhs.size()));
    Eigen::VectorXd ref = q.llt().solve(b);
    for (std::size_t i = 0; i < rhs.size(); ++i)
      REQUIRE(std::abs(x[i] - ref[static_cast<long>(i)]) < 1e-8);
  }

  GmrfModel model = random_model(6, 6, rng);
  std::vector<double> zero(model.size(), 0.0);
  std::vector<double> x0 = solve_spd(model, zero);
  for (double v : x0) REQUIRE(v == 0.0);
}

TEST_CASE("solver divergence is reported") {
  Rng rng(7);
  GmrfModel model = random_model(8, 8, rng);
  std::vector<double> rhs(model.size(), 1.0);
  try {
    solve_spd(model, rhs, 1e-30, 2);
    FAIL("expected divergence");
  } catch (const Error& e) {
    REQUIRE(e.code() == errc::solver_divergence);
    REQUIRE(e.exit_class() == 4);
  }
}

TEST_CASE("posterior mean matches dense oracle and limits") {
  Rng rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    GmrfModel model = random_model(8, 8, rng);
    Grid<double> mu = posterior_mean_exact(model);
    Eigen::MatrixXd q = dense_precision(model);
    Eigen::VectorXd rhs(static_cast<long>(model.size()));
    for (std::size_t p = 0; p < model.size(); ++p)
      rhs[static_cast<long>(p)] = model.obs_precision[p] * model.obs_value[p];
    Eigen::VectorXd ref = q.llt().solve(rhs);
    for (std::size_t p = 0; p < model.size(); ++p)
      REQUIRE(std::abs(mu[p] - ref[static_cast<long>(p)]) < 1e-8);
  }

  // Likelihood-dominated limit: the mean reproduces the observations.
  Rng rng2(5);
  RgbImage img = random_rgb(6, 6, rng2);
  Grid<double> d(6, 6);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = 2.0 * rng2.uniform01() - 1.0;
  GmrfParams strong;
  strong.tau = 1e8;
  GmrfModel pinned = build_gmrf(img, d, BitMask(6, 6, 1), strong);
  Grid<double> mu = posterior_mean_exact(pinned);
  for (std::size_t i = 0; i < d.size(); ++i) REQUIRE(std::abs(mu[i] - d[i]) < 1e-6);

  // 1x3 chain with the middle unobserved: the solution is symmetric, so the
  // middle equals the average of its neighbors.
  RgbImage chain_img = flat_rgb(1, 3, 0.5, 0.5, 0.5);
  Grid<double> chain_d = Grid<double>::from_values(1, 3, {-0.4, 0.0, 0.8});
  BitMask chain_m = BitMask::from_values(1, 3, {1, 0, 1});
  GmrfModel chain = build_gmrf(chain_img, chain_d, chain_m, GmrfParams{});
  Grid<double> cmu = posterior_mean_exact(chain);
  REQUIRE(std::abs(cmu[1] - 0.5 * (cmu[0] + cmu[2])) < 1e-9);
}

TEST_CASE("posterior variance matches dense inverse") {
  Rng rng(31);
  GmrfModel model = random_model(8, 8, rng);
  Grid<double> var = posterior_variance_exact(model);
  Eigen::MatrixXd qinv = dense_precision(model).inverse();
  for (std::size_t p = 0; p < model.size(); ++p)
    REQUIRE(std::abs(var[p] - qinv(static_cast<long>(p), static_cast<long>(p))) <
            1e-8);

  // Scalar Gaussian: a single unconnected pixel has variance exactly 1/tau.
  GmrfParams params;
  params.tau = 250.0;
  GmrfModel single = build_gmrf(flat_rgb(1, 1, 0.2, 0.2, 0.2),
                                Grid<double>(1, 1, 0.3), BitMask(1, 1, 1),
                                params);
  std::vector<double> v = posterior_variance_exact(single, {0});
  REQUIRE(v[0] == 1.0 / params.tau);

  // tau -> infinity drives the variance at observed pixels to zero.
  GmrfParams strong;
  strong.tau = 1e8;
  GmrfModel pinned = build_gmrf(flat_rgb(4, 4, 0.5, 0.5, 0.5),
                                Grid<double>(4, 4, 0.1), BitMask(4, 4, 1),
                                strong);
  Grid<double> pv = posterior_variance_exact(pinned);
  for (std::size_t p = 0; p < pinned.size(); ++p) REQUIRE(pv[p] < 1e-6);

  std::vector<std::size_t> bad = {model.size()};
  REQUIRE_THROWS_AS(posterior_variance_exact(model, bad), Error);
}

TEST_CASE("irls holds consistent observations") {
  RgbImage img = flat_rgb(6, 6, 0.4, 0.4, 0.4);
  Grid<double> d(6, 6, 0.37);
  GmrfModel model = build_gmrf(img, d, BitMask(6, 6, 1), GmrfParams{});
  GmrfModel out = robust_reweight(model, 10, 1e-6);
  for (std::size_t p = 0; p < out.size(); ++p) {
    REQUIRE(out.rho[p] > 1.0 - 1e-9);
    REQUIRE(out.mask[p] == 1);
  }
}

TEST_CASE("irls matches a scripted fixed-point oracle on a 5x5 grid") {
  // Smooth ramp observed everywhere, center displaced by ten observation
  // scales; uniform edge weights so the oracle is easy to assemble.
  const int n = 5;
  GmrfParams params;
  params.rho_reject = 0.0;  // compare the soft fixed point itself
  RgbImage img = flat_rgb(n, n, 0.5, 0.5, 0.5);
  Grid<double> d(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) d(x, y) = -0.5 + 0.18 * x + 0.12 * y;
  const std::size_t center = d.index(2, 2);
  d[center] += 10.0 / std::sqrt(params.tau);
  GmrfModel model = build_gmrf(img, d, BitMask(n, n, 1), params);

  // Scripted oracle: dense exact solves + the same weight update.
  Eigen::MatrixXd prior = dense_precision(model);
  for (std::size_t p = 0; p < model.size(); ++p)
    prior(static_cast<long>(p), static_cast<long>(p)) -= model.obs_precision[p];
  Eigen::VectorXd dv(static_cast<long>(model.size()));
  for (std::size_t p = 0; p < model.size(); ++p) dv[static_cast<long>(p)] = d[p];
  std::vector<double> rho_oracle(model.size(), 1.0);
  for (int it = 0; it < 60; ++it) {
    Eigen::MatrixXd q = prior;
    Eigen::VectorXd rhs(static_cast<long>(model.size()));
    for (std::size_t p = 0; p < model.size(); ++p) {
      double c = params.tau * rho_oracle[p];
      q(static_cast<long>(p), static_cast<long>(p)) += c;
      rhs[static_cast<long>(p)] = c * d[p];
    }
    Eigen::VectorXd mu = q.llt().solve(rhs);
    for (std::size_t p = 0; p < model.size(); ++p) {
      double r = d[p] - mu[static_cast<long>(p)];
      double rt = model.leverage_gain[p] * r;
      rho_oracle[p] = params.nu / (params.nu + params.tau * rt * rt);
    }
  }

  GmrfModel out = robust_reweight(model, 60, 1e-12);
  for (std::size_t p = 0; p < out.size(); ++p)
    REQUIRE(std::abs(out.rho[p] - rho_oracle[p]) < 1e-5);
  REQUIRE(out.rho[center] < 0.1);
  REQUIRE(rho_oracle[center] < 0.1);
}

TEST_CASE("irls is a no-op at zero iterations") {
  Rng rng(41);
  GmrfModel model = random_model(7, 5, rng);
  GmrfModel out = robust_reweight(model, 0, 1e-4);
  REQUIRE(out.rho == model.rho);
  REQUIRE(out.obs_precision == model.obs_precision);
  for (std::size_t p = 0; p < model.size(); ++p)
    REQUIRE(out.mask[p] == model.mask[p]);
}

TEST_CASE("irls decreases the robust objective") {
  Rng rng(53);
  for (int trial = 0; trial < 3; ++trial) {
    RgbImage img = random_rgb(8, 8, rng);
    Grid<double> d(8, 8);
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] = 0.4 * rng.uniform01() + (rng.uniform01() < 0.1 ? 0.8 : 0.0);
    GmrfParams params;
    params.rho_reject = 0.0;  // track the soft iteration only
    GmrfModel model = build_gmrf(img, d, BitMask(8, 8, 1), params);
    double prev = robust_objective(model, posterior_mean_exact(model));
    for (int k = 1; k <= 5; ++k) {
      GmrfModel out = robust_reweight(model, k, 1e-14);
      double j = robust_objective(model, posterior_mean_exact(out));
      REQUIRE(j <= prev + 1e-9 * (1.0 + std::abs(prev)));
      prev = j;
    }
  }
}

TEST_CASE("rejection turns gross outliers into missing observations") {
  const int n = 8;
  GmrfParams params;
  params.rho_reject = 0.8;
  RgbImage img = flat_rgb(n, n, 0.5, 0.5, 0.5);
  Grid<double> d(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) d(x, y) = 0.02 * x + 0.015 * y;
  std::vector<std::size_t> bad = {d.index(2, 2), d.index(5, 3), d.index(6, 6)};
  d[bad[0]] += 0.5;
  d[bad[1]] -= 0.4;
  d[bad[2]] += 0.6;
  GmrfModel model = build_gmrf(img, d, BitMask(n, n, 1), params);
  GmrfModel out = robust_reweight(model, 20, 1e-8);

  for (std::size_t p = 0; p < out.size(); ++p) {
    bool is_bad = std::find(bad.begin(), bad.end(), p) != bad.end();
    if (is_bad) {
      REQUIRE(out.mask[p] == 0);
      REQUIRE(out.obs_precision[p] == 0.0);
      REQUIRE(out.rho[p] < params.rho_reject);
    } else {
      REQUIRE(out.mask[p] == 1);
      REQUIRE(out.obs_precision[p] > 0.0);
      REQUIRE(out.rho[p] >= params.rho_reject);
    }
  }
}

TEST_CASE("rejection never empties the conditioning set") {
  // Alternating gross displacements: every observation looks like an
  // outlier, so nothing clears the cut and the soft weights must stand.
  const int n = 4;
  GmrfParams params;
  params.rho_reject = 0.8;
  RgbImage img = flat_rgb(n, n, 0.5, 0.5, 0.5);
  Grid<double> d(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) d(x, y) = ((x + y) % 2 == 0) ? 5.0 : -5.0;
  GmrfModel model = build_gmrf(img, d, BitMask(n, n, 1), params);
  GmrfModel out = robust_reweight(model, 20, 1e-8);
  for (std::size_t p = 0; p < out.size(); ++p) {
    REQUIRE(out.mask[p] == 1);
    REQUIRE(out.obs_precision[p] > 0.0);
    REQUIRE(out.rho[p] < params.rho_reject);
  }
}

TEST_CASE("missing and zero-weight observations are interchangeable") {
  Rng rng(61);
  RgbImage img = random_rgb(8, 8, rng);
  Grid<double> d(8, 8);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = rng.uniform01();
  const std::size_t p0 = d.index(3, 4);

  BitMask holed(8, 8, 1);
  holed[p0] = 0;
  GmrfModel missing = build_gmrf(img, d, holed, GmrfParams{});

  GmrfModel zeroed = build_gmrf(img, d, BitMask(8, 8, 1), GmrfParams{});
  zeroed.rho[p0] = 0.0;
  zeroed.obs_precision[p0] = 0.0;

  Grid<double> va = posterior_variance_exact(missing);
  Grid<double> vb = posterior_variance_exact(zeroed);
  for (std::size_t p = 0; p < va.size(); ++p) REQUIRE(va[p] == vb[p]);
}

TEST_CASE("zero perturbations recover the posterior mean") {
  Rng rng(71);
  GmrfModel model = random_model(6, 7, rng);
  std::vector<double> eh(model.w_h.size(), 0.0);
  std::vector<double> ev(model.w_v.size(), 0.0);
  std::vector<double> eo(model.size(), 0.0);
  Grid<double> sample = sample_posterior_perturbed(model, eh, ev, eo);
  Grid<double> mu = posterior_mean_exact(model);
  for (std::size_t p = 0; p < model.size(); ++p) REQUIRE(sample[p] == mu[p]);

  REQUIRE_THROWS_AS(
      sample_posterior_perturbed(model, std::vector<double>(1, 0.0), ev, eo),
      Error);
}

TEST_CASE("unperturbed chain interpolates its neighbors") {
  RgbImage img = flat_rgb(1, 3, 0.5, 0.5, 0.5);
  Grid<double> d = Grid<double>::from_values(1, 3, {0.2, 0.0, 0.6});
  BitMask m = BitMask::from_values(1, 3, {1, 0, 1});
  GmrfModel chain = build_gmrf(img, d, m, GmrfParams{});
  std::vector<double> eh(chain.w_h.size(), 0.0);
  std::vector<double> ev(chain.w_v.size(), 0.0);
  std::vector<double> eo(chain.size(), 0.0);
  Grid<double> s = sample_posterior_perturbed(chain, eh, ev, eo);
  REQUIRE(std::abs(s[1] - 0.5 * (s[0] + s[2])) < 1e-12);
}

TEST_CASE("samples pin to observations in the strong-likelihood limit") {
  Rng rng(83);
  RgbImage img = random_rgb(6, 6, rng);
  Grid<double> d(6, 6);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = 2.0 * rng.uniform01() - 1.0;
  GmrfParams strong;
  strong.tau = 1e8;
  GmrfModel model = build_gmrf(img, d, BitMask(6, 6, 1), strong);
  Grid<double> s = sample_posterior(model, 12345);
  for (std::size_t i = 0; i < d.size(); ++i) REQUIRE(std::abs(s[i] - d[i]) < 1e-3);
}

TEST_CASE("sampling is deterministic per seed") {
  Rng rng(91);
  GmrfModel model = random_model(6, 6, rng);
  Grid<double> a = sample_posterior(model, 77);
  Grid<double> b = sample_posterior(model, 77);
  Grid<double> c = sample_posterior(model, 78);
  REQUIRE(a.values() == b.values());
  REQUIRE(a.values() != c.values());
}

TEST_CASE("perturb-and-map sampling matches the exact posterior") {
  Rng rng(103);
  GmrfModel model = random_model(8, 8, rng);
  Grid<double> mean_exact = posterior_mean_exact(model);
  Grid<double> var_exact = posterior_variance_exact(model);

  const int n_samples = 4000;
  Grid<double> mean_mc(8, 8);
  Grid<double> m2(8, 8);
  for (int i = 0; i < n_samples; ++i) {
    Grid<double> s = sample_posterior(model, derive_seed(9000, i));
    for (std::size_t p = 0; p < s.size(); ++p) {
      double delta = s[p] - mean_mc[p];
      mean_mc[p] += delta / (i + 1);
      m2[p] += delta * (s[p] - mean_mc[p]);
    }
  }
  for (std::size_t p = 0; p < model.size(); ++p) {
    double var_mc = m2[p] / n_samples;
    double se_mean = std::sqrt(var_exact[p] / n_samples);
    REQUIRE(std::abs(mean_mc[p] - mean_exact[p]) < 4.0 * se_mean);
    REQUIRE(var_mc / var_exact[p] > 0.85);
    REQUIRE(var_mc / var_exact[p] < 1.15);
  }
}

TEST_CASE("ensemble stats reduce samples to mean and variance") {
  Grid<double> a = Grid<double>::from_values(1, 2, {0.0, 1.0});
  Grid<double> b = Grid<double>::from_values(1, 2, {2.0, 1.0});
  EnsembleStats st = ensemble_stats({a, b});
  REQUIRE(st.n_samples == 2);
  REQUIRE(st.mu_hat[0] == 1.0);
  REQUIRE(st.sigma2_hat[0] == 1.0);  // population convention: (1+1)/2
  REQUIRE(st.mu_hat[1] == 1.0);
  REQUIRE(st.sigma2_hat[1] == 0.0);

  EnsembleStats same = ensemble_stats({a, a, a});
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(same.mu_hat[i] == a[i]);
    REQUIRE(same.sigma2_hat[i] == 0.0);
  }

  EnsembleStats one = ensemble_stats({b});
  REQUIRE(one.mu_hat.values() == b.values());
  for (std::size_t i = 0; i < b.size(); ++i) REQUIRE(one.sigma2_hat[i] == 0.0);

  Grid<double> c = Grid<double>::from_values(1, 2, {-1.0, 0.5});
  EnsembleStats fwd = ensemble_stats({a, b, c});
  EnsembleStats rev = ensemble_stats({c, b, a});
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(fwd.mu_hat[i] == rev.mu_hat[i]);
    REQUIRE(fwd.sigma2_hat[i] == Catch::Approx(rev.sigma2_hat[i]).margin(1e-15));
  }

  try {
    ensemble_stats({});
    FAIL("empty ensemble accepted");
  } catch (const Error& e) {
    REQUIRE(e.code() == errc::empty_ensemble);
  }
  REQUIRE_THROWS_AS(ensemble_stats({a, Grid<double>(2, 1)}), Error);
}

TEST_CASE("estimate is deterministic and flags corrupted pixels") {
  // Smooth image: edge weights stay strong everywhere, so every observation
  // is cross-validated by its neighborhood.
  const int n = 24;
  RgbImage img;
  img.r = Grid<double>(n, n);
  img.g = Grid<double>(n, n);
  img.b = Grid<double>(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      img.r(x, y) = 0.4 + 0.01 * x;
      img.g(x, y) = 0.5 + 0.008 * y;
      img.b(x, y) = 0.3 + 0.005 * (x + y);
    }
  Grid<double> clean(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      clean(x, y) = -0.6 + 0.04 * x + 0.03 * y;
  BitMask m(n, n, 1);
  GmrfParams params;

  EnsembleStats s1 = estimate(img, clean, m, 8, 42, params);
  EnsembleStats s2 = estimate(img, clean, m, 8, 42, params);
  REQUIRE(s1.mu_hat.values() == s2.mu_hat.values());
  REQUIRE(s1.sigma2_hat.values() == s2.sigma2_hat.values());

  // Displace a handful of observations grossly; their ensemble variance must
  // exceed the clean-run variance at every one of them, and on average the
  // corrupted pixels must sit above the clean ones.
  Grid<double> corrupted = clean;
  std::vector<std::size_t> bad;
  for (int i = 0; i < 10; ++i) {
    std::size_t p = corrupted.index(2 + (i * 5) % (n - 4), 2 + (i * 7) % (n - 4));
    corrupted[p] += (i % 2 == 0) ? 0.8 : -0.8;
    bad.push_back(p);
  }
  EnsembleStats sc = estimate(img, corrupted, m, 8, 42, params);

  std::vector<double> clean_var;
  for (std::size_t p = 0; p < sc.sigma2_hat.size(); ++p)
    if (std::find(bad.begin(), bad.end(), p) == bad.end())
      clean_var.push_back(sc.sigma2_hat[p]);
  std::nth_element(clean_var.begin(), clean_var.begin() + clean_var.size() / 2,
                   clean_var.end());
  double clean_median = clean_var[clean_var.size() / 2];

  double mean_bad = 0.0, mean_clean = 0.0;
  for (std::size_t p : bad) mean_bad += sc.sigma2_hat[p];
  mean_bad /= static_cast<double>(bad.size());
  for (double v : clean_var) mean_clean += v;
  mean_clean /= static_cast<double>(clean_var.size());

  for (std::size_t p : bad) REQUIRE(sc.sigma2_hat[p] > clean_median);
  REQUIRE(mean_bad > mean_clean);

  REQUIRE_THROWS_AS(estimate(img, clean, m, 0, 42, params), Error);
}
