#ifndef RXTRIAGE_STATS_HPP
#define RXTRIAGE_STATS_HPP

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace rxtriage {

/// Fraction expressed as parts per ten thousand, so percentile ranks are
/// computed in integer arithmetic (0.99 * 100 is not 99 in binary floating
/// point).
struct PerTenThousand {
  std::uint64_t value;
};

inline constexpr PerTenThousand kP01{100};
inline constexpr PerTenThousand kP50{5000};
inline constexpr PerTenThousand kP99{9900};
inline constexpr PerTenThousand kP999{9990};

/// Zero-based index of the nearest-rank percentile in a sorted sample of size n.
constexpr std::size_t nearest_rank_index(PerTenThousand p, std::size_t n) {
  const std::uint64_t rank = (p.value * n + 9999) / 10000;
  return rank == 0 ? 0 : static_cast<std::size_t>(rank - 1);
}

/// Nearest-rank percentile over an already sorted, non-empty sample.
inline double nearest_rank(std::span<const double> sorted, PerTenThousand p) {
  return sorted[nearest_rank_index(p, sorted.size())];
}

}  // namespace rxtriage

#endif  // RXTRIAGE_STATS_HPP
