#include "mvh/ensemble.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "mvh/rng.hpp"

namespace mvh {

Ensemble::Ensemble(std::size_t count, std::size_t dim)
    : data_(count * dim, 0.0), count_(count), dim_(dim) {
  if (count == 0 || dim == 0)
    throw std::invalid_argument("Ensemble: count and dim must be positive");
}

Ensemble::Ensemble(std::vector<double> data, std::size_t dim)
    : data_(std::move(data)), dim_(dim) {
  if (dim == 0 || data_.empty() || data_.size() % dim != 0)
    throw std::invalid_argument("Ensemble: data size must be a positive multiple of dim");
  count_ = data_.size() / dim;
}

Ensemble::~Ensemble() { delete mean_cache_.load(std::memory_order_acquire); }

Ensemble::Ensemble(const Ensemble& other)
    : data_(other.data_), count_(other.count_), dim_(other.dim_) {}

Ensemble::Ensemble(Ensemble&& other) noexcept
    : data_(std::move(other.data_)), count_(other.count_), dim_(other.dim_) {
  mean_cache_.store(other.mean_cache_.exchange(nullptr, std::memory_order_acq_rel),
                    std::memory_order_release);
  other.count_ = 0;
  other.dim_ = 0;
}

Ensemble& Ensemble::operator=(const Ensemble& other) {
  if (this == &other) return *this;
  data_ = other.data_;
  count_ = other.count_;
  dim_ = other.dim_;
  invalidate_cache();
  return *this;
}

Ensemble& Ensemble::operator=(Ensemble&& other) noexcept {
  if (this == &other) return *this;
  data_ = std::move(other.data_);
  count_ = other.count_;
  dim_ = other.dim_;
  delete mean_cache_.exchange(
      other.mean_cache_.exchange(nullptr, std::memory_order_acq_rel),
      std::memory_order_acq_rel);
  other.count_ = 0;
  other.dim_ = 0;
  return *this;
}

void Ensemble::invalidate_cache() {
  delete mean_cache_.exchange(nullptr, std::memory_order_acq_rel);
}

const std::vector<double>& Ensemble::cached_mean() const {
  const std::vector<double>* cached = mean_cache_.load(std::memory_order_acquire);
  if (cached) return *cached;
  auto* fresh = new std::vector<double>(mean());
  const std::vector<double>* expected = nullptr;
  if (mean_cache_.compare_exchange_strong(expected, fresh,
                                          std::memory_order_acq_rel)) {
    return *fresh;
  }
  delete fresh;
  return *expected;
}

Ensemble Ensemble::from_point(PointView z, std::size_t count) {
  Ensemble e(count, z.size());
  for (std::size_t i = 0; i < count; ++i)
    std::memcpy(e.mutable_particle(i).data(), z.data(), z.size() * sizeof(double));
  return e;
}

Ensemble Ensemble::from_points(std::initializer_list<double> values) {
  return Ensemble(std::vector<double>(values), 1);
}

Ensemble Ensemble::with_shifted(std::size_t i, std::size_t k, double delta) const {
  if (i >= count_ || k >= dim_)
    throw std::invalid_argument("Ensemble::with_shifted: index out of range");
  Ensemble out = *this;
  out.data_[i * dim_ + k] += delta;
  return out;
}

std::vector<double> Ensemble::mean() const {
  std::vector<double> m(dim_, 0.0);
  for (std::size_t i = 0; i < count_; ++i)
    for (std::size_t k = 0; k < dim_; ++k) m[k] += data_[i * dim_ + k];
  for (auto& v : m) v /= static_cast<double>(count_);
  return m;
}

std::vector<double> Ensemble::second_moment() const {
  std::vector<double> m(dim_ * dim_, 0.0);
  for (std::size_t i = 0; i < count_; ++i) {
    const double* z = data_.data() + i * dim_;
    for (std::size_t r = 0; r < dim_; ++r)
      for (std::size_t c = 0; c < dim_; ++c) m[r * dim_ + c] += z[r] * z[c];
  }
  for (auto& v : m) v /= static_cast<double>(count_);
  return m;
}

double Ensemble::rms_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s / static_cast<double>(data_.size()));
}

bool Ensemble::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Ensemble::require_finite(const std::string& what) const {
  if (!all_finite())
    throw std::runtime_error("non-finite ensemble entry in " + what);
}

std::uint64_t Ensemble::content_hash() const {
  // FNV-1a over the raw particle bytes plus the shape.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto eat = [&h](const void* p, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  eat(&count_, sizeof(count_));
  eat(&dim_, sizeof(dim_));
  eat(data_.data(), data_.size() * sizeof(double));
  return h;
}

}  // namespace mvh
