#include "cascadecnn/ceu.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cascadecnn {

void CeuConfig::validate(std::size_t class_count) const {
  if (m < 1 || n < m || static_cast<std::size_t>(n) > class_count) {
    throw std::invalid_argument("CEU config requires 1 <= m <= n <= class count (m=" + std::to_string(m) +
                                ", n=" + std::to_string(n) + ", classes=" + std::to_string(class_count) + ")");
  }
  if (std::isnan(th)) throw std::invalid_argument("CEU threshold is NaN");
}

double gbvsb(std::span<const double> p, int m, int n) {
  if (m < 1 || n < m || static_cast<std::size_t>(n) > p.size()) {
    throw std::invalid_argument("gbvsb: need 1 <= m <= n <= |p| (m=" + std::to_string(m) +
                                ", n=" + std::to_string(n) + ", |p|=" + std::to_string(p.size()) + ")");
  }
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-6) {
    throw std::invalid_argument("gbvsb: probabilities sum to " + std::to_string(total));
  }
  std::vector<double> sorted(p.begin(), p.end());
  std::partial_sort(sorted.begin(), sorted.begin() + n, sorted.end(), std::greater<>());
  double value = 0.0;
  for (int i = 0; i < m; ++i) value += sorted[static_cast<std::size_t>(i)];
  for (int i = m; i < n; ++i) value -= sorted[static_cast<std::size_t>(i)];
  return value;
}

bool is_confident(std::span<const double> p, const CeuConfig& cfg) {
  return gbvsb(p, cfg.m, cfg.n) >= cfg.th;
}

GateStats gate_stats(std::span<const std::uint8_t> keep, std::span<const std::uint8_t> lpu_correct,
                     std::span<const std::uint8_t> reference_correct) {
  if (keep.size() != lpu_correct.size() || keep.size() != reference_correct.size()) {
    throw std::invalid_argument("gate_stats: inputs differ in length");
  }
  if (keep.empty()) throw std::invalid_argument("gate_stats: no samples");
  std::size_t kept = 0, induced = 0, false_neg = 0;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) {
      ++kept;
      if (!lpu_correct[i] && reference_correct[i]) ++induced;
    } else if (lpu_correct[i]) {
      ++false_neg;
    }
  }
  const double n = static_cast<double>(keep.size());
  GateStats s;
  s.kept_fraction = static_cast<double>(kept) / n;
  s.forwarded_fraction = static_cast<double>(keep.size() - kept) / n;
  s.induced_error = static_cast<double>(induced) / n;
  s.false_negative_fraction = static_cast<double>(false_neg) / n;
  return s;
}

namespace {

struct Candidate {
  std::size_t kept = 0;
  std::size_t induced = 0;
  CeuConfig cfg;
};

// Strict "a is preferred over b".
bool better(const Candidate& a, const Candidate& b) {
  if (a.kept != b.kept) return a.kept > b.kept;
  if (a.induced != b.induced) return a.induced < b.induced;
  if (a.cfg.m != b.cfg.m) return a.cfg.m < b.cfg.m;
  if (a.cfg.n != b.cfg.n) return a.cfg.n < b.cfg.n;
  return a.cfg.th < b.cfg.th;
}

}  // namespace

TuneResult tune(const std::vector<std::vector<double>>& lpu_probabilities, std::span<const std::uint8_t> lpu_correct,
                std::span<const std::uint8_t> reference_correct, double error_tolerance, const CeuGrid& grid) {
  const std::size_t count = lpu_probabilities.size();
  if (count == 0) throw std::invalid_argument("tune: no samples");
  if (lpu_correct.size() != count || reference_correct.size() != count) {
    throw std::invalid_argument("tune: predictions and correctness flags are not aligned");
  }
  if (!(error_tolerance >= 0.0)) throw std::invalid_argument("tune: tolerance must be >= 0");
  const std::size_t classes = lpu_probabilities.front().size();
  for (const auto& p : lpu_probabilities) {
    if (p.size() != classes) throw std::invalid_argument("tune: inconsistent class counts");
  }
  const double allowed = error_tolerance * static_cast<double>(count) + 1e-9;

  bool found = false;
  Candidate best;
  std::vector<double> g(count);
  std::vector<std::size_t> order(count);
  const int m_top = std::min<int>(grid.m_max, static_cast<int>(classes));
  for (int m = 1; m <= m_top; ++m) {
    const int n_top = std::min<int>(grid.n_max, static_cast<int>(classes));
    for (int n = m; n <= n_top; ++n) {
      for (std::size_t i = 0; i < count; ++i) g[i] = gbvsb(lpu_probabilities[i], m, n);
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return g[a] > g[b]; });

      // Lower the threshold through the observed values; each step keeps every
      // sample whose score equals the new threshold.
      std::size_t kept = 0, induced = 0, pos = 0;
      auto consider = [&](double th) {
        Candidate c{kept, induced, {m, n, th}};
        if (static_cast<double>(induced) <= allowed && (!found || better(c, best))) {
          best = c;
          found = true;
        }
      };
      while (pos < count) {
        const double th = g[order[pos]];
        while (pos < count && g[order[pos]] == th) {
          const std::size_t i = order[pos++];
          ++kept;
          if (!lpu_correct[i] && reference_correct[i]) ++induced;
        }
        consider(th);
      }
      if (g[order.back()] > -1.0) consider(-1.0);
    }
  }

  TuneResult result;
  if (!found) {
    result.feasible = false;
    result.config = {1, std::min<int>(2, static_cast<int>(classes)), std::numeric_limits<double>::infinity()};
  } else {
    result.config = best.cfg;
  }
  Flags keep(count);
  for (std::size_t i = 0; i < count; ++i) keep[i] = is_confident(lpu_probabilities[i], result.config);
  result.stats = gate_stats(keep, lpu_correct, reference_correct);
  return result;
}

}  // namespace cascadecnn
