#include "nhdiff/stats.hpp"

#include <stdexcept>

namespace nhdiff::stats {

Moments moments(std::span<const double> x, int batches) {
  Moments m;
  m.n = static_cast<long>(x.size());
  if (m.n < 2) throw std::invalid_argument("moments: need at least two samples");
  double s = 0.0;
  for (double v : x) s += v;
  m.mean = s / m.n;
  double s2 = 0.0, s4 = 0.0;
  for (double v : x) {
    const double d = v - m.mean;
    s2 += d * d;
    s4 += d * d * d * d;
  }
  m.variance = s2 / (m.n - 1);
  const double m2 = s2 / m.n, m4 = s4 / m.n;
  m.variance_stderr = std::sqrt(std::max(m4 - m2 * m2, 0.0) / m.n);
  batches = std::max(2, std::min<int>(batches, static_cast<int>(m.n)));
  const long per = m.n / batches;
  double bs = 0.0, bs2 = 0.0;
  for (int b = 0; b < batches; ++b) {
    double acc = 0.0;
    for (long i = b * per; i < (b + 1) * per; ++i) acc += x[i];
    const double bm = acc / per;
    bs += bm;
    bs2 += bm * bm;
  }
  const double bmean = bs / batches;
  const double bvar = (bs2 - batches * bmean * bmean) / (batches - 1);
  m.mean_stderr = std::sqrt(std::max(bvar, 0.0) / batches);
  return m;
}

double covariance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("covariance: bad sample sizes");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double c = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) c += (x[i] - mx) * (y[i] - my);
  return c / (n - 1);
}

double observed_order(std::span<const double> h, std::span<const double> err) {
  const std::size_t n = h.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lx = std::log(h[i]), ly = std::log(err[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace nhdiff::stats
