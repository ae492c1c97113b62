#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mvh/ensemble.hpp"

namespace mvh {

class NoiseSource;

// <f, nu> = (1/N) sum f(z_i). Summation runs in particle index order.
double quadrature(const Ensemble& ens, const std::function<double(PointView)>& f);

// Vector-valued quadrature; f writes its value into out (size dim_out).
std::vector<double> quadrature_vec(const Ensemble& ens, std::size_t dim_out,
                                   const std::function<void(PointView, MutView)>& f);

enum class W2Method {
  Exact1D,          // sorted-sample formula; dim 1, equal counts
  ExactAssignment,  // optimal matching (Hungarian); equal counts, N*M <= 1e4
  Sliced,           // seeded random projections; diagnostic lower-bound proxy
};

struct SlicedOptions {
  int directions = 64;
  std::uint64_t seed = 0;
};

double wasserstein2(const Ensemble& a, const Ensemble& b, W2Method method,
                    const SlicedOptions& sliced = {});

// Exact squared W2 between 1-d empirical measures with arbitrary counts
// (quantile-function formula). Used by the sliced estimator and diagnostics.
double wasserstein2_sq_1d(std::vector<double> xs, std::vector<double> ys);

// Empirical-projection finite difference of the Lions derivative:
// component k is N * (phi(nu with z_i += h e_k) - phi(nu)) / h.
// Central differences evaluate at z_i +- h e_k instead (twice the cost).
struct LionsOptions {
  double step = 0.0;  // 0 -> 1e-4 * (1 + rms norm)
  bool central = false;
};

std::vector<double> lions_derivative(const std::function<double(const Ensemble&)>& phi,
                                     const Ensemble& ens, std::size_t index,
                                     const LionsOptions& opts = {});

// k = 1: mean vector; k = 2: second-moment matrix (row-major).
std::vector<double> empirical_moment(const Ensemble& ens, int order);

// Bootstrap standard error of a statistic of the ensemble (resampling
// particles with replacement, seeded).
double bootstrap_se(const Ensemble& ens,
                    const std::function<double(const Ensemble&)>& stat,
                    int resamples, std::uint64_t seed);

// Noise floor of the W2 estimator at this sample size: mean and sd of
// W2 between independent bootstrap resamples of ens against itself.
struct W2NoiseFloor {
  double mean = 0.0;
  double sd = 0.0;
};
W2NoiseFloor w2_noise_floor(const Ensemble& ens, W2Method method, int resamples,
                            std::uint64_t seed);

}  // namespace mvh
