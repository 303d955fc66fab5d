#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace nhdiff::stats {

struct Moments {
  double mean = 0.0;
  double variance = 0.0;        // Bessel-corrected
  double mean_stderr = 0.0;     // batch means
  double variance_stderr = 0.0; // sqrt((m4 - s^4) / n)
  long n = 0;
};

// Sample moments with a batch-means standard error on the mean.
Moments moments(std::span<const double> x, int batches = 20);

// Unbiased sample covariance of two equally long samples.
double covariance(std::span<const double> x, std::span<const double> y);

// Least-squares slope of log(err) against log(h).
double observed_order(std::span<const double> h, std::span<const double> err);

}  // namespace nhdiff::stats
