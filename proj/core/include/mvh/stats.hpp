#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace mvh {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

inline MeanSe mean_se(std::span<const double> xs) {
  MeanSe out;
  out.n = xs.size();
  if (xs.empty()) return out;
  double s = 0.0;
  for (double v : xs) s += v;
  out.mean = s / static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double q = 0.0;
  for (double v : xs) {
    const double d = v - out.mean;
    q += d * d;
  }
  out.se = std::sqrt(q / (static_cast<double>(xs.size() - 1) *
                          static_cast<double>(xs.size())));
  return out;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

// Weighted ordinary least squares of y against x.
inline LineFit weighted_line_fit(std::span<const double> x,
                                 std::span<const double> y,
                                 std::span<const double> w) {
  if (x.size() != y.size() || x.size() != w.size() || x.size() < 2)
    throw std::invalid_argument("weighted_line_fit: need >= 2 matched points");
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
    sxx += w[i] * x[i] * x[i];
    sxy += w[i] * x[i] * y[i];
  }
  const double det = sw * sxx - sx * sx;
  if (det == 0.0) throw std::invalid_argument("weighted_line_fit: degenerate x");
  LineFit out;
  out.slope = (sw * sxy - sx * sy) / det;
  out.intercept = (sxx * sy - sx * sxy) / det;
  return out;
}

inline LineFit line_fit(std::span<const double> x, std::span<const double> y) {
  std::vector<double> w(x.size(), 1.0);
  return weighted_line_fit(x, y, w);
}

}  // namespace mvh
