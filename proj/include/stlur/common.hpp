#pragma once

#include <Eigen/Dense>

#include <span>
#include <stdexcept>
#include <string>

namespace stlur {

inline constexpr const char* kVersion = "0.1.0";

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base exception for all library failures. Messages are single-line so the
/// CLI can forward them verbatim.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sum in a fixed pairwise tree order. The result depends only on the input
/// sequence, never on how the terms were produced.
double pairwise_sum(std::span<const double> values);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);

/// 64-bit FNV-1a, used for config and model fingerprints in sidecars.
std::uint64_t fnv1a64(std::string_view data);

std::string hex64(std::uint64_t value);

}  // namespace stlur
