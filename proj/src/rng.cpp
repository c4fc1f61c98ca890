#include "gmc/rng.hpp"

#include <cmath>

namespace gmc::rng {
namespace {

constexpr std::uint64_t kM0 = 0xD2E7470EE14C6C93ULL;
constexpr std::uint64_t kM1 = 0xCA5A826395121157ULL;
constexpr std::uint64_t kW0 = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kW1 = 0xBB67AE8584CAA73BULL;

inline std::uint64_t mulhi(std::uint64_t a, std::uint64_t b) {
  return static_cast<std::uint64_t>(
      (static_cast<__uint128_t>(a) * static_cast<__uint128_t>(b)) >> 64);
}

}  // namespace

std::array<std::uint64_t, 4> Philox4x64::operator()(
    std::array<std::uint64_t, 4> ctr) const {
  std::uint64_t k0 = key[0], k1 = key[1];
  for (int round = 0; round < 10; ++round) {
    if (round) {
      k0 += kW0;
      k1 += kW1;
    }
    const std::uint64_t hi0 = mulhi(kM0, ctr[0]), lo0 = kM0 * ctr[0];
    const std::uint64_t hi1 = mulhi(kM1, ctr[2]), lo1 = kM1 * ctr[2];
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
  }
  return ctr;
}

Stream::Stream(std::uint64_t seed, std::uint64_t stream_id)
    : cipher_{{seed, stream_id}}, seed_(seed), stream_id_(stream_id) {}

void Stream::refill() {
  buf_ = cipher_(ctr_);
  for (int i = 0; i < 4; ++i) {
    if (++ctr_[static_cast<std::size_t>(i)] != 0) break;
  }
  pos_ = 0;
}

std::uint64_t Stream::next_u64() {
  if (pos_ == 4) refill();
  return buf_[static_cast<std::size_t>(pos_++)];
}

double Stream::next_uniform() {
  // top 52 bits, centered in the cell: never exactly 0 or 1
  return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1p-52;
}

double Stream::next_normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = next_uniform();
  const double u2 = next_uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 6.283185307179586476925286766559 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t derive_stream(std::string_view tag, std::uint64_t index) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (const char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = h ^ (index * 0x9E3779B97F4A7C15ULL);
  z ^= z >> 30;  // splitmix64 finalizer
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

}  // namespace gmc::rng
