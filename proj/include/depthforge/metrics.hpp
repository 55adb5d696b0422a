#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"

namespace depthforge {

namespace detail {

inline void check_eval_inputs(const Grid<double>& d_hat,
                              const Grid<double>& d_true, const BitMask& m) {
  require(d_hat.same_shape_as(d_true) && d_hat.same_shape_as(m),
          errc::dimension_mismatch, "metric inputs must share dimensions");
  bool any = false;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) {
      any = true;
      break;
    }
  require(any, errc::empty_mask, "metric mask selects no pixels");
}

// Counts strict inversions of v via bottom-up merge sort.
inline std::uint64_t merge_count_inversions(std::vector<double>& v) {
  std::uint64_t swaps = 0;
  std::vector<double> buf(v.size());
  for (std::size_t run = 1; run < v.size(); run *= 2) {
    for (std::size_t lo = 0; lo + run < v.size(); lo += 2 * run) {
      std::size_t mid = lo + run;
      std::size_t hi = std::min(lo + 2 * run, v.size());
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (v[j] < v[i]) {
          swaps += mid - i;  // v[i..mid) all exceed v[j]
          buf[k++] = v[j++];
        } else {
          buf[k++] = v[i++];
        }
      }
      while (i < mid) buf[k++] = v[i++];
      while (j < hi) buf[k++] = v[j++];
      std::copy(buf.begin() + lo, buf.begin() + hi, v.begin() + lo);
    }
  }
  return swaps;
}

inline std::uint64_t tie_pair_count(const std::vector<double>& sorted_keys) {
  std::uint64_t ties = 0;
  std::size_t i = 0;
  while (i < sorted_keys.size()) {
    std::size_t j = i;
    while (j < sorted_keys.size() && sorted_keys[j] == sorted_keys[i]) ++j;
    std::uint64_t t = j - i;
    ties += t * (t - 1) / 2;
    i = j;
  }
  return ties;
}

}  // namespace detail

// Root-mean-square error over masked pixels: sqrt(mean((d_hat - d_true)^2)).
inline double rmse(const Grid<double>& d_hat, const Grid<double>& d_true,
                   const BitMask& m) {
  detail::check_eval_inputs(d_hat, d_true, m);
  double acc = 0.0;
  long n = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i]) continue;
    double e = d_hat[i] - d_true[i];
    acc += e * e;
    ++n;
  }
  return std::sqrt(acc / static_cast<double>(n));
}

// Threshold accuracy: fraction of masked pixels with
// max(d_hat/d_true, d_true/d_hat) < k (strict). Requires positive depths.
inline double delta_k(const Grid<double>& d_hat, const Grid<double>& d_true,
                      const BitMask& m, double k) {
  detail::check_eval_inputs(d_hat, d_true, m);
  require(k > 1.0, errc::invalid_config, "delta_k threshold must exceed 1");
  long n = 0, hits = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i]) continue;
    require(d_hat[i] > 0.0 && d_true[i] > 0.0, errc::non_positive_depth,
            "delta_k requires strictly positive depths on masked pixels");
    double ratio = std::max(d_hat[i] / d_true[i], d_true[i] / d_hat[i]);
    if (ratio < k) ++hits;
    ++n;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

// Kendall tau-a over masked pixels: (concordant - discordant) / C(n,2),
// ties counting toward neither. Knight's O(n log n) scheme: sort by
// (truth, prediction), then discordant pairs are exactly the strict
// inversions of the prediction sequence.
inline double kendall_tau(const Grid<double>& d_hat, const Grid<double>& d_true,
                          const BitMask& m) {
  detail::check_eval_inputs(d_hat, d_true, m);
  std::vector<std::pair<double, double>> pairs;  // (truth, prediction)
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) pairs.emplace_back(d_true[i], d_hat[i]);
  require(pairs.size() >= 2, errc::insufficient_pairs,
          "kendall_tau needs at least two masked pixels");
  std::sort(pairs.begin(), pairs.end());

  std::uint64_t n = pairs.size();
  std::uint64_t n0 = n * (n - 1) / 2;

  // Pairs tied in truth, and tied in both.
  std::uint64_t ties_x = 0, ties_xy = 0;
  {
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j < n && pairs[j].first == pairs[i].first) ++j;
      std::uint64_t t = j - i;
      ties_x += t * (t - 1) / 2;
      std::size_t a = i;
      while (a < j) {
        std::size_t b = a;
        while (b < j && pairs[b].second == pairs[a].second) ++b;
        std::uint64_t u = b - a;
        ties_xy += u * (u - 1) / 2;
        a = b;
      }
      i = j;
    }
  }

  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = pairs[i].second;
  std::uint64_t discordant = detail::merge_count_inversions(y);
  // y is now sorted; count pairs tied in prediction.
  std::uint64_t ties_y = detail::tie_pair_count(y);

  // Pairs strictly ordered in both coordinates, split into concordant
  // and discordant; everything else is a tie and counts toward neither.
  std::int64_t strict = static_cast<std::int64_t>(n0) -
                        static_cast<std::int64_t>(ties_x) -
                        static_cast<std::int64_t>(ties_y) +
                        static_cast<std::int64_t>(ties_xy);
  std::int64_t num = strict - 2 * static_cast<std::int64_t>(discordant);
  return static_cast<double>(num) / static_cast<double>(n0);
}

struct EvalReport {
  double rmse = 0.0;
  std::map<double, double> delta;  // threshold -> accuracy
  double kendall = 0.0;
  long n_pixels = 0;
};

inline EvalReport evaluate(const Grid<double>& d_hat,
                           const Grid<double>& d_true, const BitMask& m,
                           const std::vector<double>& ks = {1.25}) {
  EvalReport r;
  r.rmse = rmse(d_hat, d_true, m);
  for (double k : ks) r.delta[k] = delta_k(d_hat, d_true, m, k);
  r.kendall = kendall_tau(d_hat, d_true, m);
  r.n_pixels = 0;
  for (std::size_t i = 0; i < m.size(); ++i) r.n_pixels += m[i] ? 1 : 0;
  return r;
}

}  // namespace depthforge
