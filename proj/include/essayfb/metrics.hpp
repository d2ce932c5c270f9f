#pragma once

#include <optional>
#include <span>
#include <vector>

namespace essayfb::metrics {

/// Integer category labels over a declared inclusive range.
struct RatingVector {
  std::vector<int> values;
  int category_min = 0;
  int category_max = 0;
};

/// Annotators x items; missing judgments are std::nullopt.
struct ReliabilityMatrix {
  std::vector<std::vector<std::optional<double>>> rows;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Quadratic weighted kappa. Categories span the full declared range, so
/// unobserved categories get zero marginals. Returns 1.0 when the expected
/// disagreement is zero.
double qwk(const RatingVector& a, const RatingVector& b);

/// Pearson product-moment correlation; throws MetricError on zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// Krippendorff's alpha with the interval metric (squared difference).
double krippendorff_alpha_interval(const ReliabilityMatrix& m);

/// Arithmetic mean and population standard deviation.
MeanStd mean_std(std::span<const double> values);

}  // namespace essayfb::metrics
