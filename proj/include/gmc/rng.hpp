#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace gmc::rng {

/// Philox4x64-10 counter-based block cipher (Salmon et al. constants,
/// matching the reference implementation's known-answer vectors).
/// Stateless: output block is a pure function of (counter, key).
struct Philox4x64 {
  std::array<std::uint64_t, 2> key;

  std::array<std::uint64_t, 4> operator()(std::array<std::uint64_t, 4> ctr) const;
};

/// Sequential view over a Philox stream: key = (seed, stream_id), counter
/// starts at zero and increments little-endian. Draw order is fixed, so a
/// stream is byte-reproducible from its two key words alone.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64();
  double next_uniform();  // strictly inside (0,1), 52 effective bits
  double next_normal();   // Box-Muller, one cached spare

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  void refill();

  Philox4x64 cipher_;
  std::uint64_t seed_, stream_id_;
  std::array<std::uint64_t, 4> ctr_{};
  std::array<std::uint64_t, 4> buf_{};
  int pos_ = 4;  // empty
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Stable 64-bit stream id for (tag, index): FNV-1a of the tag mixed with a
/// Weyl multiple of the index through the splitmix64 finalizer. Injective in
/// index for a fixed tag; used to key one stream per (experiment, replica).
std::uint64_t derive_stream(std::string_view tag, std::uint64_t index);

}  // namespace gmc::rng
