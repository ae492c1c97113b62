#include "mvh/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mvh/rng.hpp"

namespace mvh {

double quadrature(const Ensemble& ens, const std::function<double(PointView)>& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < ens.count(); ++i) {
    const double v = f(ens.particle(i));
    if (!std::isfinite(v))
      throw std::runtime_error("quadrature: non-finite integrand value");
    acc += v;
  }
  return acc / static_cast<double>(ens.count());
}

std::vector<double> quadrature_vec(const Ensemble& ens, std::size_t dim_out,
                                   const std::function<void(PointView, MutView)>& f) {
  std::vector<double> acc(dim_out, 0.0);
  std::vector<double> buf(dim_out);
  for (std::size_t i = 0; i < ens.count(); ++i) {
    f(ens.particle(i), buf);
    for (std::size_t k = 0; k < dim_out; ++k) {
      if (!std::isfinite(buf[k]))
        throw std::runtime_error("quadrature_vec: non-finite integrand value");
      acc[k] += buf[k];
    }
  }
  for (auto& v : acc) v /= static_cast<double>(ens.count());
  return acc;
}

double wasserstein2_sq_1d(std::vector<double> xs, std::vector<double> ys) {
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  const std::size_t n = xs.size(), m = ys.size();
  if (n == m) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = xs[i] - ys[i];
      s += d * d;
    }
    return s / static_cast<double>(n);
  }
  // Quantile-function formula: integrate |F_x^{-1} - F_y^{-1}|^2 over (0,1),
  // splitting at the breakpoints i/n and j/m.
  double s = 0.0;
  std::size_t i = 0, j = 0;
  double u = 0.0;
  while (i < n && j < m) {
    const double ui = static_cast<double>(i + 1) / static_cast<double>(n);
    const double uj = static_cast<double>(j + 1) / static_cast<double>(m);
    const double next = std::min(ui, uj);
    const double d = xs[i] - ys[j];
    s += d * d * (next - u);
    u = next;
    if (ui <= next) ++i;
    if (uj <= next) ++j;
  }
  return s;
}

namespace {

double sq_dist(PointView a, PointView b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

// Hungarian algorithm with potentials, O(n^3), minimizing total cost of a
// perfect matching on the square matrix cost[n][n].
double assignment_cost(const std::vector<double>& cost, std::size_t n) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0);  // match[col] = row (1-based)
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    std::vector<std::size_t> way(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j)
    total += cost[(match[j] - 1) * n + (j - 1)];
  return total;
}

double w2_exact1d(const Ensemble& a, const Ensemble& b) {
  if (a.dim() != 1)
    throw std::invalid_argument("wasserstein2: exact1d requires dim 1");
  if (a.count() != b.count())
    throw std::invalid_argument("wasserstein2: exact1d requires equal counts");
  std::vector<double> xs(a.data().begin(), a.data().end());
  std::vector<double> ys(b.data().begin(), b.data().end());
  return std::sqrt(wasserstein2_sq_1d(std::move(xs), std::move(ys)));
}

double w2_exact_assignment(const Ensemble& a, const Ensemble& b) {
  const std::size_t n = a.count(), m = b.count();
  if (n * m > 10000)
    throw std::invalid_argument("wasserstein2: exact_assignment needs N*M <= 1e4");
  if (n != m)
    throw std::invalid_argument(
        "wasserstein2: exact_assignment requires equal counts "
        "(unequal-weight transport is not a matching)");
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      cost[i * n + j] = sq_dist(a.particle(i), b.particle(j));
  return std::sqrt(assignment_cost(cost, n) / static_cast<double>(n));
}

double w2_sliced(const Ensemble& a, const Ensemble& b, const SlicedOptions& opts) {
  if (opts.directions <= 0)
    throw std::invalid_argument("wasserstein2: sliced needs directions >= 1");
  const std::size_t d = a.dim();
  NoiseSource noise(opts.seed, NoiseDomain::Sliced);
  std::vector<double> dir(d);
  double acc = 0.0;
  for (int q = 0; q < opts.directions; ++q) {
    noise.normals(static_cast<std::uint64_t>(q), 0, dir);
    double norm = 0.0;
    for (double v : dir) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    std::vector<double> xs(a.count()), ys(b.count());
    for (std::size_t i = 0; i < a.count(); ++i) {
      double s = 0.0;
      const auto z = a.particle(i);
      for (std::size_t k = 0; k < d; ++k) s += z[k] * dir[k];
      xs[i] = s / norm;
    }
    for (std::size_t i = 0; i < b.count(); ++i) {
      double s = 0.0;
      const auto z = b.particle(i);
      for (std::size_t k = 0; k < d; ++k) s += z[k] * dir[k];
      ys[i] = s / norm;
    }
    acc += wasserstein2_sq_1d(std::move(xs), std::move(ys));
  }
  return std::sqrt(acc / opts.directions);
}

}  // namespace

double wasserstein2(const Ensemble& a, const Ensemble& b, W2Method method,
                    const SlicedOptions& sliced) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("wasserstein2: dimension mismatch");
  switch (method) {
    case W2Method::Exact1D:
      return w2_exact1d(a, b);
    case W2Method::ExactAssignment:
      return w2_exact_assignment(a, b);
    case W2Method::Sliced:
      return w2_sliced(a, b, sliced);
  }
  throw std::logic_error("wasserstein2: unknown method");
}

std::vector<double> lions_derivative(const std::function<double(const Ensemble&)>& phi,
                                     const Ensemble& ens, std::size_t index,
                                     const LionsOptions& opts) {
  if (index >= ens.count())
    throw std::invalid_argument("lions_derivative: particle index out of range");
  const double h = opts.step > 0.0 ? opts.step : 1e-4 * (1.0 + ens.rms_norm());
  const double n = static_cast<double>(ens.count());
  std::vector<double> out(ens.dim());
  const double base = opts.central ? 0.0 : phi(ens);
  if (!opts.central && !std::isfinite(base))
    throw std::runtime_error("lions_derivative: non-finite observable");
  for (std::size_t k = 0; k < ens.dim(); ++k) {
    double g;
    if (opts.central) {
      const double up = phi(ens.with_shifted(index, k, h));
      const double dn = phi(ens.with_shifted(index, k, -h));
      g = n * (up - dn) / (2.0 * h);
    } else {
      const double up = phi(ens.with_shifted(index, k, h));
      g = n * (up - base) / h;
    }
    if (!std::isfinite(g))
      throw std::runtime_error("lions_derivative: non-finite observable on perturbed ensemble");
    out[k] = g;
  }
  return out;
}

std::vector<double> empirical_moment(const Ensemble& ens, int order) {
  if (order == 1) return ens.mean();
  if (order == 2) return ens.second_moment();
  throw std::invalid_argument("empirical_moment: order must be 1 or 2");
}

namespace {

Ensemble resample(const Ensemble& ens, const NoiseSource& noise,
                  std::uint64_t stream) {
  Ensemble out(ens.count(), ens.dim());
  for (std::size_t i = 0; i < ens.count(); ++i) {
    const double u = noise.uniform(stream, i);
    auto idx = static_cast<std::size_t>(u * static_cast<double>(ens.count()));
    if (idx >= ens.count()) idx = ens.count() - 1;
    const auto src = ens.particle(idx);
    std::copy(src.begin(), src.end(), out.mutable_particle(i).begin());
  }
  return out;
}

}  // namespace

double bootstrap_se(const Ensemble& ens,
                    const std::function<double(const Ensemble&)>& stat,
                    int resamples, std::uint64_t seed) {
  if (resamples < 2)
    throw std::invalid_argument("bootstrap_se: need at least 2 resamples");
  NoiseSource noise(seed, NoiseDomain::Bootstrap);
  double sum = 0.0, sumsq = 0.0;
  for (int b = 0; b < resamples; ++b) {
    const double v = stat(resample(ens, noise, static_cast<std::uint64_t>(b)));
    sum += v;
    sumsq += v * v;
  }
  const double n = resamples;
  const double var = std::max(0.0, (sumsq - sum * sum / n) / (n - 1.0));
  return std::sqrt(var);
}

W2NoiseFloor w2_noise_floor(const Ensemble& ens, W2Method method, int resamples,
                            std::uint64_t seed) {
  if (resamples < 2)
    throw std::invalid_argument("w2_noise_floor: need at least 2 resamples");
  NoiseSource noise(seed, NoiseDomain::Bootstrap);
  double sum = 0.0, sumsq = 0.0;
  for (int b = 0; b < resamples; ++b) {
    const Ensemble x = resample(ens, noise, 2 * static_cast<std::uint64_t>(b));
    const Ensemble y = resample(ens, noise, 2 * static_cast<std::uint64_t>(b) + 1);
    const double v = wasserstein2(x, y, method);
    sum += v;
    sumsq += v * v;
  }
  const double n = resamples;
  W2NoiseFloor out;
  out.mean = sum / n;
  out.sd = std::sqrt(std::max(0.0, (sumsq - sum * sum / n) / (n - 1.0)));
  return out;
}

}  // namespace mvh
