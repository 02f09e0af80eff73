#pragma once

// Counter-based random streams. Every draw is a pure function of
// (seed, stream, counter), so particles and replicas can be simulated in any
// order, on any number of threads, and still reproduce bit for bit.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace hawkes {

// Philox4x32-10 (Salmon et al., SC'11).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr std::uint32_t kMulA = 0xD2511F53u;
  static constexpr std::uint32_t kMulB = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeylA = 0x9E3779B9u;
  static constexpr std::uint32_t kWeylB = 0xBB67AE85u;

  static constexpr Counter generate(Counter ctr, Key key) noexcept {
    for (int r = 0; r < 10; ++r) {
      const std::uint64_t p0 = std::uint64_t{kMulA} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMulB} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
             static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
             static_cast<std::uint32_t>(p0)};
      key[0] += kWeylA;
      key[1] += kWeylB;
    }
    return ctr;
  }
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Seed of the index-th child (replica, meta-run, ...) of a parent seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ull));
}

// Maps 64 random bits to a double in the open interval (0, 1).
constexpr double to_open_unit(std::uint64_t bits) noexcept {
  // 52 bits keep the largest value, 1 - 2^-53, exactly representable.
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

namespace detail {

constexpr std::array<std::uint64_t, 2> philox_words(std::uint64_t seed, std::uint64_t stream,
                                                    std::uint64_t index) noexcept {
  const Philox4x32::Key key{static_cast<std::uint32_t>(seed),
                            static_cast<std::uint32_t>(seed >> 32)};
  const Philox4x32::Counter ctr{static_cast<std::uint32_t>(index),
                                static_cast<std::uint32_t>(index >> 32),
                                static_cast<std::uint32_t>(stream),
                                static_cast<std::uint32_t>(stream >> 32)};
  const auto out = Philox4x32::generate(ctr, key);
  return {(std::uint64_t{out[0]} << 32) | out[1], (std::uint64_t{out[2]} << 32) | out[3]};
}

inline double box_muller(double u1, double u2) noexcept {
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

// Standard Gaussian addressed directly by (seed, stream, index).
inline double gaussian_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept {
  const auto w = detail::philox_words(seed, stream, index);
  return detail::box_muller(to_open_unit(w[0]), to_open_unit(w[1]));
}

// Sequential view of one (seed, stream) sub-stream. Each Philox block yields two
// uniforms; draws are consumed strictly in order, so the k-th draw of a stream
// never depends on how other streams were used.
class MarkStream {
 public:
  MarkStream() = default;
  MarkStream(std::uint64_t seed, std::uint64_t stream) noexcept : seed_(seed), stream_(stream) {}

  double uniform() noexcept {
    if (slot_ == 2) {
      block_ = detail::philox_words(seed_, stream_, counter_++);
      slot_ = 0;
    }
    return to_open_unit(block_[slot_++]);
  }

  double exponential() noexcept { return -std::log(uniform()); }

  double gaussian() noexcept {
    const double u1 = uniform();
    const double u2 = uniform();
    return detail::box_muller(u1, u2);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  // Number of uniforms consumed so far.
  std::uint64_t position() const noexcept { return 2 * counter_ - (2 - slot_); }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> block_{};
  int slot_ = 2;
};

}  // namespace hawkes
