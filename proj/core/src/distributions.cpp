#include "gnice/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>

#include "gnice/rng.hpp"

namespace gnice {

double expit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -INFINITY;
    if (p == 1.0) return INFINITY;
    throw std::domain_error("normal_quantile: p outside [0,1]");
  }
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

namespace {

double upper_tail_quantile(double q) { return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q); }

}  // namespace

double truncated_normal_inverse(double mu, double sigma, double a, double b, double u) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::domain_error("truncated normal: sigma must be > 0");
  if (!(a <= b)) throw std::domain_error("truncated normal: requires a <= b");
  if (!std::isfinite(mu)) throw std::domain_error("truncated normal: mu must be finite");
  if (a == b) return a;

  const double alpha = (a - mu) / sigma;
  const double beta = (b - mu) / sigma;
  if (alpha > kTruncatedNormalTailLimit) return a;
  if (beta < -kTruncatedNormalTailLimit) return b;

  double z;
  if (alpha >= 0.0) {
    // Right tail: interpolate survival probabilities, which keep full precision.
    const double qa = normal_sf(alpha);
    const double qb = normal_sf(beta);
    z = upper_tail_quantile(u * qb + (1.0 - u) * qa);
  } else {
    const double pa = normal_cdf(alpha);
    const double pb = normal_cdf(beta);
    z = normal_quantile(u * pb + (1.0 - u) * pa);
  }
  return std::clamp(mu + sigma * z, a, b);
}

double sample_truncated_normal(double mu, double sigma, double a, double b, RngStream& rng) {
  const double u = rng.uniform();
  return truncated_normal_inverse(mu, sigma, a, b, u);
}

}  // namespace gnice
