#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace filterstab {

/// Independent sub-streams of one Monte Carlo path.
enum class NoiseStream : std::uint32_t { Initial = 0, State = 1, Measurement = 2, Auxiliary = 3 };

/// Engine keyed by (seed, path index, stream). Paths generated in any order, on any
/// number of workers, see the same numbers.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t path, NoiseStream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32),
                    static_cast<std::uint32_t>(stream), 0x9e3779b9u};
  return std::mt19937_64(seq);
}

inline Eigen::VectorXd standard_normal(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(rng);
  return z;
}

}  // namespace filterstab
