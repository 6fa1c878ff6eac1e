#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace wclab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Deterministic summation: same result for any thread count, since the
// reduction tree depends only on the element count.
double pairwise_sum(std::span<const double> values);
double pairwise_mean(std::span<const double> values);

// splitmix64; used to derive independent RNG streams from (seed, key...).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key);

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

// Shortest round-trip decimal form (std::to_chars). All CSV/JSON output
// goes through this so reruns are byte-identical.
std::string format_double(double x);

// FNV-1a over raw bytes.
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL);
std::uint64_t hash_matrix(const Matrix& m, std::uint64_t h = 1469598103934665603ULL);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);
double median(std::vector<double> values);

// Process-wide cap for parallel_for workers (CLI --threads). 0 = hardware.
void set_max_threads(int n);
int max_threads();

// Runs fn(i) for i in [0, n). Work items must be independent; results are
// written to caller-owned slots so the outcome does not depend on the
// thread count. Exceptions are captured and rethrown (first one wins).
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace wclab
