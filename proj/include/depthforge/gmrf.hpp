#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "depth.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "rng.hpp"

namespace depthforge {

// ---------------------------------------------------------------------------
// Image-guided Gaussian Markov random field over the pixel grid
// (4-connectivity). The posterior combines
//   prior:       sum_{pq in E} w_pq (x_p - x_q)^2,  w_pq = lambda*exp(-beta*|I_p-I_q|^2)
//   likelihood:  sum_p c_p (x_p - d_p)^2,           c_p = tau * m_p * rho_p
// giving precision Q = L(w) + diag(c), which is SPD whenever at least one
// observation precision is positive (edge weights are strictly positive).
// Robust weights rho_p in (0,1] come from iteratively reweighted least
// squares with a Student-t style weight function.
// ---------------------------------------------------------------------------

struct GmrfParams {
  double lambda = 1.0;  // prior strength
  double beta = 20.0;   // image-contrast sensitivity of edge weights
  double tau = 400.0;   // observation precision (normalized units^-2)
  double nu = 4.0;      // Student-t degrees of freedom for robust weights
  double rho_reject = 0.92;  // converged rho below this drops the observation
  int irls_max_iters = 10;
  double irls_tol = 1e-4;
  double cg_tol = 1e-8;
  int cg_max_iters = 20000;

  void validate() const {
    require(lambda > 0.0 && beta >= 0.0 && tau > 0.0 && nu > 0.0,
            errc::invalid_config,
            "gmrf parameters must satisfy lambda>0, beta>=0, tau>0, nu>0");
    require(rho_reject >= 0.0 && rho_reject < 1.0, errc::invalid_config,
            "rho_reject must lie in [0,1)");
    require(irls_max_iters >= 0 && irls_tol > 0.0 && cg_tol > 0.0 &&
                cg_max_iters > 0,
            errc::invalid_config, "gmrf solver limits must be positive");
  }
};

struct GmrfModel {
  int height = 0, width = 0;
  GmrfParams params;
  // Horizontal edge (x,y)-(x+1,y) at index y*(width-1)+x;
  // vertical edge (x,y)-(x,y+1) at index y*width+x.
  std::vector<double> w_h, w_v;
  std::vector<double> obs_value;      // conditioned depth, 0 where unobserved
  std::vector<double> obs_precision;  // tau * m_p * rho_p
  std::vector<double> rho;            // robust weights, 1 where unobserved
  // Frozen leverage gain (tau + kappa_p)/kappa_p with kappa_p the local
  // prior strength; converts raw residuals into self-excluded ones.
  std::vector<double> leverage_gain;
  BitMask mask;

  std::size_t size() const { return static_cast<std::size_t>(height) * width; }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }

  // Local prior strength: diagonal of the weighted Laplacian.
  double kappa(int x, int y) const {
    double k = 0.0;
    if (x > 0) k += w_h[static_cast<std::size_t>(y) * (width - 1) + x - 1];
    if (x + 1 < width) k += w_h[static_cast<std::size_t>(y) * (width - 1) + x];
    if (y > 0) k += w_v[static_cast<std::size_t>(y - 1) * width + x];
    if (y + 1 < height) k += w_v[static_cast<std::size_t>(y) * width + x];
    return k;
  }

  // y_out = Q x.
  void apply(const std::vector<double>& x, std::vector<double>& y_out) const {
    for (std::size_t p = 0; p < size(); ++p)
      y_out[p] = obs_precision[p] * x[p];
    for (int y = 0; y < height; ++y) {
      for (int x0 = 0; x0 + 1 < width; ++x0) {
        std::size_t e = static_cast<std::size_t>(y) * (width - 1) + x0;
        std::size_t p = index(x0, y), q = index(x0 + 1, y);
        double d = w_h[e] * (x[p] - x[q]);
        y_out[p] += d;
        y_out[q] -= d;
      }
    }
    for (int y = 0; y + 1 < height; ++y) {
      for (int x0 = 0; x0 < width; ++x0) {
        std::size_t e = static_cast<std::size_t>(y) * width + x0;
        std::size_t p = index(x0, y), q = index(x0, y + 1);
        double d = w_v[e] * (x[p] - x[q]);
        y_out[p] += d;
        y_out[q] -= d;
      }
    }
  }

  std::vector<double> diagonal() const {
    std::vector<double> d(size());
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        d[index(x, y)] = obs_precision[index(x, y)] + kappa(x, y);
    return d;
  }
};

// ---------------------------------------------------------------------------
// Sparse SPD solve: Jacobi-preconditioned conjugate gradients.
// ---------------------------------------------------------------------------

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

template <typename ApplyFn>
std::vector<double> conjugate_gradient(ApplyFn&& apply,
                                       const std::vector<double>& jacobi_diag,
                                       const std::vector<double>& b, double tol,
                                       int max_iters) {
  const std::size_t n = b.size();
  std::vector<double> x(n, 0.0);
  double b_norm2 = detail::dot(b, b);
  if (b_norm2 == 0.0) return x;
  const double stop2 = tol * tol * b_norm2;

  std::vector<double> r = b, z(n), p(n), ap(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / jacobi_diag[i];
  p = z;
  double rz = detail::dot(r, z);
  for (int it = 0; it < max_iters; ++it) {
    apply(p, ap);
    double alpha = rz / detail::dot(p, ap);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    if (detail::dot(r, r) <= stop2) return x;
    for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / jacobi_diag[i];
    double rz_new = detail::dot(r, z);
    double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  fail(errc::solver_divergence,
       "conjugate gradients exhausted max_iters without reaching tolerance");
}

inline std::vector<double> solve_spd(const GmrfModel& model,
                                     const std::vector<double>& rhs,
                                     double tol, int max_iters) {
  require(rhs.size() == model.size(), errc::dimension_mismatch,
          "solve_spd rhs size mismatch");
  return conjugate_gradient(
      [&model](const std::vector<double>& v, std::vector<double>& out) {
        model.apply(v, out);
      },
      model.diagonal(), rhs, tol, max_iters);
}

inline std::vector<double> solve_spd(const GmrfModel& model,
                                     const std::vector<double>& rhs) {
  return solve_spd(model, rhs, model.params.cg_tol, model.params.cg_max_iters);
}

// ---------------------------------------------------------------------------
// Model construction and robust reweighting.
// ---------------------------------------------------------------------------

inline GmrfModel build_gmrf(const RgbImage& rgb, const Grid<double>& d_cond,
                            const BitMask& m, const GmrfParams& params) {
  params.validate();
  require(rgb.r.same_shape_as(d_cond) && d_cond.same_shape_as(m),
          errc::dimension_mismatch, "build_gmrf input shape mismatch");
  bool any_obs = false;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) {
      any_obs = true;
      break;
    }
  require(any_obs, errc::empty_conditioning,
          "conditioning mask selects no pixels");

  GmrfModel model;
  model.height = d_cond.height();
  model.width = d_cond.width();
  model.params = params;
  model.mask = m;

  const int w = model.width, h = model.height;
  auto contrast = [&rgb](int x0, int y0, int x1, int y1) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) {
      double d = rgb.channel(c)(x0, y0) - rgb.channel(c)(x1, y1);
      s += d * d;
    }
    return s;
  };
  model.w_h.resize(static_cast<std::size_t>(h) * (w - 1));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + 1 < w; ++x)
      model.w_h[static_cast<std::size_t>(y) * (w - 1) + x] =
          params.lambda * std::exp(-params.beta * contrast(x, y, x + 1, y));
  model.w_v.resize(static_cast<std::size_t>(h - 1) * w);
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x < w; ++x)
      model.w_v[static_cast<std::size_t>(y) * w + x] =
          params.lambda * std::exp(-params.beta * contrast(x, y, x, y + 1));

  model.obs_value.resize(model.size());
  model.obs_precision.resize(model.size());
  model.rho.assign(model.size(), 1.0);
  model.leverage_gain.assign(model.size(), 1.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::size_t p = model.index(x, y);
      model.obs_value[p] = m[p] ? d_cond[p] : 0.0;
      model.obs_precision[p] = m[p] ? params.tau : 0.0;
      if (m[p]) {
        // Credit every pixel with at least one nominal edge of coupling:
        // as kappa -> 0 the uncapped gain diverges and the reweighting
        // would reject exactly the observations that have no neighbors
        // able to dispute them.
        double k = std::max(model.kappa(x, y), params.lambda);
        model.leverage_gain[p] = (params.tau + k) / k;
      }
    }
  }
  return model;
}

inline Grid<double> posterior_mean_exact(const GmrfModel& model) {
  std::vector<double> rhs(model.size());
  for (std::size_t p = 0; p < model.size(); ++p)
    rhs[p] = model.obs_precision[p] * model.obs_value[p];
  return Grid<double>::from_values(model.height, model.width,
                                   solve_spd(model, rhs));
}

// Marginal posterior variances at the requested pixel indices: column p of
// Q^{-1} evaluated at p, one SPD solve per pixel.
inline std::vector<double> posterior_variance_exact(
    const GmrfModel& model, const std::vector<std::size_t>& pixels) {
  std::vector<double> out;
  out.reserve(pixels.size());
  std::vector<double> e(model.size(), 0.0);
  for (std::size_t p : pixels) {
    require(p < model.size(), errc::dimension_mismatch,
            "pixel index out of range");
    e[p] = 1.0;
    out.push_back(solve_spd(model, e)[p]);
    e[p] = 0.0;
  }
  return out;
}

inline Grid<double> posterior_variance_exact(const GmrfModel& model) {
  std::vector<std::size_t> all(model.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return Grid<double>::from_values(model.height, model.width,
                                   posterior_variance_exact(model, all));
}

// The robust data loss whose IRLS weights are rho: a Student-t style
// penalty of the leverage-corrected residual,
//   J(x) = sum_E w_pq (x_p-x_q)^2
//        + sum_obs (nu / g_p^2) log(1 + g_p^2 tau (x_p-d_p)^2 / nu).
// Each reweighted solve minimizes a convex quadratic majorizer of J, so J
// decreases monotonically across IRLS iterations.
inline double robust_objective(const GmrfModel& model,
                               const Grid<double>& x) {
  require(x.size() == model.size(), errc::dimension_mismatch,
          "robust_objective input size mismatch");
  const int w = model.width, h = model.height;
  double j = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x0 = 0; x0 + 1 < w; ++x0) {
      double d = x[model.index(x0, y)] - x[model.index(x0 + 1, y)];
      j += model.w_h[static_cast<std::size_t>(y) * (w - 1) + x0] * d * d;
    }
  for (int y = 0; y + 1 < h; ++y)
    for (int x0 = 0; x0 < w; ++x0) {
      double d = x[model.index(x0, y)] - x[model.index(x0, y + 1)];
      j += model.w_v[static_cast<std::size_t>(y) * w + x0] * d * d;
    }
  const double nu = model.params.nu, tau = model.params.tau;
  for (std::size_t p = 0; p < model.size(); ++p) {
    if (!model.mask[p]) continue;
    double g2 = model.leverage_gain[p] * model.leverage_gain[p];
    double r = x[p] - model.obs_value[p];
    j += nu / g2 * std::log1p(g2 * tau * r * r / nu);
  }
  return j;
}

// Iteratively reweighted least squares. Residuals are measured against the
// current posterior mean and studentized by the frozen leverage gain
// (a raw residual underestimates an observation's error by exactly the
// weight that observation has in its own posterior mean; without the
// correction a strong outlier pulls the mean onto itself and is never
// downweighted). Weights follow rho = nu / (nu + (g r / s)^2), s = 1/sqrt(tau).
inline GmrfModel robust_reweight(const GmrfModel& model, int max_iters,
                                 double tol) {
  require(max_iters >= 0 && tol > 0.0, errc::invalid_config,
          "robust_reweight limits must be positive");
  GmrfModel out = model;
  const double nu = out.params.nu, tau = out.params.tau;
  for (int it = 0; it < max_iters; ++it) {
    Grid<double> mu = posterior_mean_exact(out);
    double max_delta = 0.0;
    for (std::size_t p = 0; p < out.size(); ++p) {
      if (!out.mask[p]) continue;
      double r = out.obs_value[p] - mu[p];
      double rt = out.leverage_gain[p] * r;
      double u = tau * rt * rt;  // (rt/s)^2 with s^2 = 1/tau
      double rho_new = nu / (nu + u);
      max_delta = std::max(max_delta, std::abs(rho_new - out.rho[p]));
      out.rho[p] = rho_new;
      out.obs_precision[p] = tau * rho_new;
    }
    if (max_delta < tol) break;
  }
  // Observations whose converged weight stayed below the rejection cut are
  // treated as missing outright: with zero precision they contribute nothing
  // to the posterior, so the pixel regains the unconditioned variance there.
  // Skipped when it would empty the conditioning set entirely.
  if (max_iters > 0 && out.params.rho_reject > 0.0) {
    std::size_t kept = 0;
    for (std::size_t p = 0; p < out.size(); ++p)
      if (out.mask[p] && out.rho[p] >= out.params.rho_reject) ++kept;
    if (kept > 0) {
      for (std::size_t p = 0; p < out.size(); ++p) {
        if (out.mask[p] && out.rho[p] < out.params.rho_reject) {
          out.mask[p] = 0;
          out.obs_precision[p] = 0.0;
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Perturb-and-MAP sampling: exact draws from N(mu, Q^{-1}).
// Perturb each potential at its own noise level and solve the MAP problem
//   min sum_E w_pq (x_p - x_q - eps_pq)^2 + sum_obs c_p (x_p - d_p - eps_p)^2
// with eps_pq ~ N(0, 1/w_pq), eps_p ~ N(0, 1/c_p). The stationarity system
// is Q x = C(d + eps_obs) + B^T W eps_edge whose solution has mean
// Q^{-1} C d and covariance exactly Q^{-1}.
// ---------------------------------------------------------------------------

// Test hook: solve the perturbed MAP problem for explicit perturbations
// (in epsilon units). All-zero perturbations recover the posterior mean.
inline Grid<double> sample_posterior_perturbed(
    const GmrfModel& model, const std::vector<double>& eps_h,
    const std::vector<double>& eps_v, const std::vector<double>& eps_obs) {
  require(eps_h.size() == model.w_h.size() && eps_v.size() == model.w_v.size() &&
              eps_obs.size() == model.size(),
          errc::dimension_mismatch, "perturbation vector size mismatch");
  std::vector<double> rhs(model.size());
  for (std::size_t p = 0; p < model.size(); ++p)
    rhs[p] = model.obs_precision[p] * (model.obs_value[p] + eps_obs[p]);
  const int w = model.width, h = model.height;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + 1 < w; ++x) {
      std::size_t e = static_cast<std::size_t>(y) * (w - 1) + x;
      double c = model.w_h[e] * eps_h[e];
      rhs[model.index(x, y)] += c;
      rhs[model.index(x + 1, y)] -= c;
    }
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::size_t e = static_cast<std::size_t>(y) * w + x;
      double c = model.w_v[e] * eps_v[e];
      rhs[model.index(x, y)] += c;
      rhs[model.index(x, y + 1)] -= c;
    }
  return Grid<double>::from_values(model.height, model.width,
                                   solve_spd(model, rhs));
}

inline Grid<double> sample_posterior(const GmrfModel& model,
                                     std::uint64_t seed) {
  Rng rng(seed);
  // Draw order is fixed (horizontal edges, vertical edges, observations,
  // each row-major) so samples are bit-reproducible. The rhs contribution
  // of a perturbation is w*eps = sqrt(w)*xi, computed directly to stay
  // finite as precisions approach zero.
  std::vector<double> rhs(model.size());
  const int w = model.width, h = model.height;
  std::vector<double> edge_contrib_h(model.w_h.size());
  for (std::size_t e = 0; e < model.w_h.size(); ++e)
    edge_contrib_h[e] = std::sqrt(model.w_h[e]) * rng.normal();
  std::vector<double> edge_contrib_v(model.w_v.size());
  for (std::size_t e = 0; e < model.w_v.size(); ++e)
    edge_contrib_v[e] = std::sqrt(model.w_v[e]) * rng.normal();
  for (std::size_t p = 0; p < model.size(); ++p) {
    double c = model.obs_precision[p];
    rhs[p] = c * model.obs_value[p];
    if (c > 0.0) rhs[p] += std::sqrt(c) * rng.normal();
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + 1 < w; ++x) {
      std::size_t e = static_cast<std::size_t>(y) * (w - 1) + x;
      rhs[model.index(x, y)] += edge_contrib_h[e];
      rhs[model.index(x + 1, y)] -= edge_contrib_h[e];
    }
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::size_t e = static_cast<std::size_t>(y) * w + x;
      rhs[model.index(x, y)] += edge_contrib_v[e];
      rhs[model.index(x, y + 1)] -= edge_contrib_v[e];
    }
  return Grid<double>::from_values(model.height, model.width,
                                   solve_spd(model, rhs));
}

// ---------------------------------------------------------------------------
// Ensemble statistics and the stage-1 driver.
// ---------------------------------------------------------------------------

struct EnsembleStats {
  Grid<double> mu_hat;     // per-pixel ensemble mean (normalized units)
  Grid<double> sigma2_hat; // per-pixel population variance (1/N convention)
  int n_samples = 0;
};

inline EnsembleStats ensemble_stats(const std::vector<Grid<double>>& samples) {
  require(!samples.empty(), errc::empty_ensemble,
          "ensemble_stats needs at least one sample");
  for (const auto& s : samples)
    require(s.same_shape_as(samples.front()), errc::dimension_mismatch,
            "ensemble samples must share dimensions");
  const auto n = static_cast<double>(samples.size());
  EnsembleStats st;
  st.n_samples = static_cast<int>(samples.size());
  st.mu_hat = Grid<double>(samples.front().height(), samples.front().width());
  st.sigma2_hat = Grid<double>(st.mu_hat.height(), st.mu_hat.width());
  for (const auto& s : samples)
    for (std::size_t i = 0; i < s.size(); ++i) st.mu_hat[i] += s[i];
  for (std::size_t i = 0; i < st.mu_hat.size(); ++i) st.mu_hat[i] /= n;
  for (const auto& s : samples)
    for (std::size_t i = 0; i < s.size(); ++i) {
      double d = s[i] - st.mu_hat[i];
      st.sigma2_hat[i] += d * d;
    }
  for (std::size_t i = 0; i < st.sigma2_hat.size(); ++i) st.sigma2_hat[i] /= n;
  return st;
}

// Stage 1: fit the robust model to the (normalized) conditioned depth and
// summarize an ensemble of posterior draws. Member i uses the declared
// derived seed, so results do not depend on sampling order.
inline EnsembleStats estimate(const RgbImage& rgb, const Grid<double>& d_cond,
                              const BitMask& m, int n_samples,
                              std::uint64_t seed, const GmrfParams& params) {
  require(n_samples >= 1, errc::invalid_config,
          "ensemble size must be at least 1");
  GmrfModel model = build_gmrf(rgb, d_cond, m, params);
  model = robust_reweight(model, params.irls_max_iters, params.irls_tol);
  std::vector<Grid<double>> samples;
  samples.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i)
    samples.push_back(
        sample_posterior(model, derive_seed(seed, static_cast<std::uint64_t>(i))));
  return ensemble_stats(samples);
}

}  // namespace depthforge
