#ifndef DSRGAN_RNG_HPP
#define DSRGAN_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace dsrgan {

// Stateless 64-bit mixer used to derive independent sub-seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream,
                              std::uint64_t index = 0) {
  return splitmix64(splitmix64(base ^ splitmix64(stream)) + index);
}

// mt19937_64 with hand-rolled distributions. The standard distribution
// classes are implementation-defined, so sampling through them would not
// reproduce across toolchains; everything random in this project goes
// through this wrapper.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of precision.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform on [-1, 1); the latent-prior range.
  double uniform_pm1() { return 2.0 * uniform01() - 1.0; }

  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

  // Box-Muller, one spare cached.
  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return mean + stddev * r * std::cos(a);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dsrgan

#endif
