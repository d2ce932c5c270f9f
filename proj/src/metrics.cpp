#include "essayfb/metrics.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "essayfb/errors.hpp"

namespace essayfb::metrics {

double qwk(const RatingVector& a, const RatingVector& b) {
  if (a.values.size() != b.values.size()) {
    throw MetricError("qwk: length mismatch (" + std::to_string(a.values.size()) + " vs " +
                      std::to_string(b.values.size()) + ")");
  }
  if (a.values.size() < 2) throw MetricError("qwk: need at least two ratings");
  if (a.category_min != b.category_min || a.category_max != b.category_max) {
    throw MetricError("qwk: rating vectors declare different category ranges");
  }
  const int lo = a.category_min;
  const int k = a.category_max - lo + 1;
  if (k < 2) throw MetricError("qwk: need at least two categories");

  // Integer accumulation keeps the result exactly symmetric in its arguments
  // and invariant under reordering. The 1/(K-1)^2 weight scale and the 1/N
  // normalisation of E cancel into the final ratio.
  std::vector<std::int64_t> observed(static_cast<std::size_t>(k * k), 0);
  std::vector<std::int64_t> hist_a(k, 0), hist_b(k, 0);
  for (std::size_t n = 0; n < a.values.size(); ++n) {
    const int i = a.values[n] - lo;
    const int j = b.values[n] - lo;
    if (i < 0 || i >= k || j < 0 || j >= k) {
      throw MetricError("qwk: rating outside declared category range");
    }
    observed[i * k + j] += 1;
    hist_a[i] += 1;
    hist_b[j] += 1;
  }

  const auto total = static_cast<std::int64_t>(a.values.size());
  std::int64_t num = 0;
  std::int64_t den = 0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const std::int64_t w = static_cast<std::int64_t>(i - j) * (i - j);
      num += w * observed[i * k + j];
      den += w * hist_a[i] * hist_b[j];
    }
  }
  if (den == 0) return 1.0;
  return 1.0 - static_cast<double>(num * total) / static_cast<double>(den);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw MetricError("pearson: length mismatch");
  if (x.size() < 2) throw MetricError("pearson: need at least two observations");
  // Welford-style co-moment accumulation.
  double mean_x = 0.0, mean_y = 0.0, m2x = 0.0, m2y = 0.0, cxy = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double count = static_cast<double>(n + 1);
    const double dx = x[n] - mean_x;
    const double dy = y[n] - mean_y;
    mean_x += dx / count;
    mean_y += dy / count;
    m2x += dx * (x[n] - mean_x);
    m2y += dy * (y[n] - mean_y);
    cxy += dx * (y[n] - mean_y);
  }
  if (m2x <= 0.0 || m2y <= 0.0) throw MetricError("pearson: correlation undefined for zero variance");
  return cxy / std::sqrt(m2x * m2y);
}

double krippendorff_alpha_interval(const ReliabilityMatrix& m) {
  if (m.rows.size() < 2) throw MetricError("krippendorff alpha: need at least two annotators");
  std::size_t items = 0;
  for (const auto& row : m.rows) items = std::max(items, row.size());

  // Coincidence matrix over the distinct values.
  std::map<double, std::map<double, double>> coincidence;
  for (std::size_t u = 0; u < items; ++u) {
    std::vector<double> values;
    for (const auto& row : m.rows) {
      if (u < row.size() && row[u]) values.push_back(*row[u]);
    }
    if (values.size() < 2) continue;
    const double weight = 1.0 / static_cast<double>(values.size() - 1);
    for (std::size_t i = 0; i < values.size(); ++i) {
      for (std::size_t j = 0; j < values.size(); ++j) {
        if (i != j) coincidence[values[i]][values[j]] += weight;
      }
    }
  }
  if (coincidence.empty()) throw MetricError("krippendorff alpha: no pairable values");

  std::map<double, double> marginals;
  double n = 0.0;
  for (const auto& [c, row] : coincidence) {
    for (const auto& [k, o] : row) {
      marginals[c] += o;
      n += o;
    }
  }
  double observed = 0.0;
  for (const auto& [c, row] : coincidence) {
    for (const auto& [k, o] : row) observed += o * (c - k) * (c - k);
  }
  double expected = 0.0;
  for (const auto& [c, nc] : marginals) {
    for (const auto& [k, nk] : marginals) expected += nc * nk * (c - k) * (c - k);
  }
  if (observed == 0.0) return 1.0;
  return 1.0 - (n - 1.0) * observed / expected;
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw MetricError("mean_std: no values");
  double mean = 0.0, m2 = 0.0;
  for (std::size_t n = 0; n < values.size(); ++n) {
    const double delta = values[n] - mean;
    mean += delta / static_cast<double>(n + 1);
    m2 += delta * (values[n] - mean);
  }
  return {mean, std::sqrt(std::max(0.0, m2) / static_cast<double>(values.size()))};
}

}  // namespace essayfb::metrics
