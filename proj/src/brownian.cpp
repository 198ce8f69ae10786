#include "polar/brownian.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include "polar/error.hpp"

namespace polar {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

double bridge_normal(std::uint64_t key, unsigned level, std::uint64_t index) noexcept {
  const std::uint64_t a = splitmix64(key ^ splitmix64((static_cast<std::uint64_t>(level) << 56) ^ index));
  const std::uint64_t b = splitmix64(a);
  const double u1 = (static_cast<double>(a >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64(splitmix64(splitmix64(master) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

BrownianPath::BrownianPath(std::uint64_t seed, double step, double horizon)
    : seed_(seed), step_(step) {
  if (!(step > 0.0) || !(horizon > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "Brownian path needs positive step and horizon");
  }
  const auto n = static_cast<std::size_t>(std::ceil(horizon / step - 1e-9));
  std::vector<double> inc(n);
  std::mt19937_64 rng(derive_seed(seed, 0x5eed));
  std::normal_distribution<double> normal(0.0, std::sqrt(step));
  for (auto& x : inc) x = normal(rng);
  increments_ = std::make_shared<const std::vector<double>>(std::move(inc));
}

double BrownianPath::value_at(std::size_t n) const {
  if (n > size()) throw Error(ErrorKind::PathExhausted, "grid index beyond path horizon");
  double w = 0.0;
  for (std::size_t i = 0; i < n; ++i) w += (*increments_)[i];
  return w;
}

std::size_t BrownianPath::grid_index(double t) const {
  const double x = t / step_;
  const double n = std::round(x);
  if (std::abs(x - n) > 1e-9 * std::max(1.0, n) || n < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "time is not a grid point of the path");
  }
  return static_cast<std::size_t>(n);
}

std::uint64_t BrownianPath::interval_key(std::size_t i) const noexcept {
  return derive_seed(seed_, i, 0xb41d9e);
}

std::uint64_t BrownianPath::fingerprint() const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double x : *increments_) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &x, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace polar
