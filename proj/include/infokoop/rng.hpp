#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Dense>

namespace infokoop {

// Philox4x32-10 counter-based generator. A (seed, stream) pair names an
// independent sequence; draws depend only on the counter, so any stream can
// be replayed without touching the others.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // Uniform on the open interval (0, 1).
  double uniform();
  // Standard normal via Box-Muller; platform independent given libm.
  double normal();

  Eigen::VectorXd normal_vector(Eigen::Index n);
  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int cursor_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Raw Philox4x32-10 block function, exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

}  // namespace infokoop
