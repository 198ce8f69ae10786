#pragma once

#include <cstddef>
#include <cstdint>
#include <cmath>
#include <memory>
#include <span>
#include <vector>

namespace polar {

/// Mixes a master seed with stream coordinates into an independent 64-bit seed.
/// Used so that every replicate owns its own RNG stream regardless of the order
/// in which replicates are run.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) noexcept;

/// Standard normal attached to node (level, index) of the dyadic refinement
/// tree of the interval identified by `key`. Pure function of its arguments.
double bridge_normal(std::uint64_t key, unsigned level, std::uint64_t index) noexcept;

/// One realization of a standard Brownian motion sampled on a uniform grid.
/// Immutable; copies share the increment buffer.
class BrownianPath {
 public:
  BrownianPath(std::uint64_t seed, double step, double horizon);

  std::uint64_t seed() const noexcept { return seed_; }
  double step() const noexcept { return step_; }
  /// Grid horizon, size() * step().
  double horizon() const noexcept { return step_ * static_cast<double>(size()); }
  std::size_t size() const noexcept { return increments_->size(); }

  double increment(std::size_t i) const { return (*increments_)[i]; }
  std::span<const double> increments() const noexcept { return *increments_; }

  /// W at grid point n (prefix sum of the first n increments).
  double value_at(std::size_t n) const;

  /// Grid index of time t, which must lie on the grid (to within 1e-9 steps).
  std::size_t grid_index(double t) const;

  /// Key of the Brownian bridge filling grid interval i.
  std::uint64_t interval_key(std::size_t i) const noexcept;

  /// FNV-1a hash of the increment bytes; identifies the realization in metadata.
  std::uint64_t fingerprint() const noexcept;

 private:
  std::uint64_t seed_;
  double step_;
  std::shared_ptr<const std::vector<double>> increments_;
};

/// Brownian increment over one grid interval together with the key of the
/// bridge that fills it in.
struct NoiseInterval {
  double span = 0.0;
  double dW = 0.0;
  std::uint64_t key = 0;
};

inline NoiseInterval noise_interval(const BrownianPath& path, std::size_t i) {
  return {path.step(), path.increment(i), path.interval_key(i)};
}

/// Visits the dyadic bridge cells of `noise` covering [from, to] in time order.
/// A cell of length len is split while split(len) holds and depth < max_depth;
/// leaf(lo, hi, slope) gets the clipped cell and the Brownian slope on it and
/// returns false to stop the walk.
template <class Split, class Leaf>
bool walk_bridge(const NoiseInterval& noise, double from, double to, unsigned max_depth,
                 Split&& split, Leaf&& leaf) {
  struct Walker {
    const NoiseInterval& noise;
    double from, to;
    unsigned max_depth;
    Split& split;
    Leaf& leaf;

    bool go(double a, double b, double wa, double wb, unsigned level, std::uint64_t index) {
      if (b <= from || a >= to) return true;
      const double len = b - a;
      if (level >= max_depth || !split(len)) {
        return leaf(a < from ? from : a, b > to ? to : b, (wb - wa) / len);
      }
      const double m = 0.5 * (a + b);
      const double wm = 0.5 * (wa + wb) + 0.5 * std::sqrt(len) * bridge_normal(noise.key, level, index);
      return go(a, m, wa, wm, level + 1, 2 * index) && go(m, b, wm, wb, level + 1, 2 * index + 1);
    }
  };
  Walker w{noise, from, to, max_depth, split, leaf};
  return w.go(0.0, noise.span, 0.0, noise.dW, 0, 0);
}

}  // namespace polar
