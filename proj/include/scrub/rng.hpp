#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace scrub {

// Counter-based generator: draw n of a stream is a pure function of
// (key, n). Streams are derived from a master seed and a label, so adding or
// reordering unrelated streams never perturbs an existing one. All draws use
// integer arithmetic and exact double scaling; no std:: distributions, whose
// output is implementation-defined.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t key) : key_(key) {}

  static RandomStream derive(std::uint64_t master_seed, std::string_view label);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, bound), unbiased (bound > 0).
  std::uint64_t below(std::uint64_t bound);

  std::uint64_t key() const { return key_; }
  std::uint64_t position() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t value);
std::uint64_t derive_stream_key(std::uint64_t master_seed, std::string_view label);

// Exactly k distinct positions from [0, n) by partial Fisher-Yates, returned
// in ascending order.
std::vector<std::size_t> sample_without_replacement(RandomStream& stream, std::size_t n, std::size_t k);

}  // namespace scrub
