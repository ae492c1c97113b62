#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mvh {

class NoiseSource;

using PointView = std::span<const double>;
using MutView = std::span<double>;

// Equal-weight empirical measure on R^d: nu = (1/N) sum of Dirac masses at
// the particle locations. Particle order carries no meaning but is preserved
// so that reductions and serialization are deterministic.
//
// The mean is memoized: mean-field coefficients read it once per step instead
// of rescanning the ensemble for every particle. Concurrent const readers are
// safe; mutation (non-const particle access) must be exclusive, which the
// integrators guarantee by writing only into unpublished buffers.
class Ensemble {
 public:
  Ensemble() = default;
  Ensemble(std::size_t count, std::size_t dim);
  Ensemble(std::vector<double> data, std::size_t dim);
  ~Ensemble();

  Ensemble(const Ensemble& other);
  Ensemble(Ensemble&& other) noexcept;
  Ensemble& operator=(const Ensemble& other);
  Ensemble& operator=(Ensemble&& other) noexcept;

  static Ensemble from_point(PointView z, std::size_t count);
  static Ensemble from_points(std::initializer_list<double> values);  // dim 1

  std::size_t count() const { return count_; }
  std::size_t dim() const { return dim_; }
  bool empty() const { return count_ == 0; }

  PointView particle(std::size_t i) const {
    return PointView(data_.data() + i * dim_, dim_);
  }
  // Mutating access invalidates the memoized mean; callers must hold the
  // buffer exclusively.
  MutView mutable_particle(std::size_t i) {
    invalidate_cache();
    return MutView(data_.data() + i * dim_, dim_);
  }
  std::span<const double> data() const { return data_; }
  std::span<double> mutable_data() {
    invalidate_cache();
    return data_;
  }

  double value(std::size_t i, std::size_t k) const { return data_[i * dim_ + k]; }

  // Copy with particle i shifted by delta along coordinate k.
  Ensemble with_shifted(std::size_t i, std::size_t k, double delta) const;

  std::vector<double> mean() const;
  // Memoized mean; safe under concurrent const access.
  const std::vector<double>& cached_mean() const;
  // Second moment matrix (1/N) sum z z^T, row-major dim x dim.
  std::vector<double> second_moment() const;
  // sqrt((1/(N d)) sum |z_i|^2); scale used for finite-difference steps.
  double rms_norm() const;

  bool all_finite() const;
  void require_finite(const std::string& what) const;

  std::uint64_t content_hash() const;

 private:
  void invalidate_cache();

  std::vector<double> data_;
  std::size_t count_ = 0;
  std::size_t dim_ = 0;
  mutable std::atomic<const std::vector<double>*> mean_cache_{nullptr};
};

}  // namespace mvh
