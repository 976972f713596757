#ifndef RDMC_RNG_HPP_
#define RDMC_RNG_HPP_

#include <cmath>
#include <cstdint>

namespace rdmc {

// Counter-based generator: every output is a pure function of (key, counter),
// so substreams derived from the same seed are independent of thread
// scheduling and evaluation order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ kKeyTweak)) {}

  // Derives an independent stream. Substreams of substreams are fine;
  // distinct id paths give distinct keys.
  Rng substream(std::uint64_t id) const {
    Rng r;
    r.key_ = mix(key_ ^ mix(id + kStreamTweak));
    return r;
  }

  std::uint64_t next_u64() { return mix(key_ + (++ctr_) * kGolden); }

  // Uniform on (0, 1].
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller (cosine branch only, no cached state).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  Rng() = default;
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;
  static constexpr std::uint64_t kKeyTweak = 0x7f4a7c15f39cc060ull;
  static constexpr std::uint64_t kStreamTweak = 0xd1b54a32d192ed03ull;
  static constexpr double kPi = 3.141592653589793238462643383279502884;

  std::uint64_t key_ = 0;
  std::uint64_t ctr_ = 0;
};

}  // namespace rdmc

#endif  // RDMC_RNG_HPP_
