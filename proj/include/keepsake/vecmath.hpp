#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace keepsake {

using Embedding = std::vector<double>;

inline constexpr double kUnitNormTolerance = 1e-6;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline bool is_unit(std::span<const double> v, double tol = kUnitNormTolerance) {
  return std::abs(l2_norm(v) - 1.0) <= tol;
}

// Returns false (and leaves v untouched) when the norm is below min_norm.
inline bool normalize_in_place(std::vector<double>& v, double min_norm = 1e-9) {
  const double n = l2_norm(v);
  if (!(n >= min_norm)) return false;
  for (auto& x : v) x /= n;
  return true;
}

// Cosine of two unit vectors is their dot product; inputs are validated at
// the module boundaries so the hot path does not renormalize.
inline double cosine_unit(std::span<const double> a, std::span<const double> b) {
  return dot(a, b);
}

}  // namespace keepsake
