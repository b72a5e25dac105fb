#pragma once

namespace gnice {

class RngStream;

/// Logistic function, evaluated without overflow for any finite x; expit(-inf) = 0.
double expit(double x);
double logit(double p);
/// log(1 + e^x) without overflow.
double softplus(double x);

double normal_cdf(double x);
/// Upper tail 1 - Phi(x), accurate far into the right tail.
double normal_sf(double x);
double normal_quantile(double p);

/// Standardized bounds beyond which the sampler returns the nearer bound. The
/// survival-side inversion stays exact up to here; past about 37 the tail mass
/// underflows a double.
inline constexpr double kTruncatedNormalTailLimit = 35.0;

/// Draws from Normal(mu, sigma) conditioned on [a, b] by inversion. The right or
/// left tail is inverted through the survival function so that intervals many
/// sigmas from mu stay accurate; when both standardized bounds exceed the tail
/// limit on the same side the nearer bound is returned. Consumes exactly one
/// uniform per call. Throws std::domain_error for sigma <= 0 or a > b.
double sample_truncated_normal(double mu, double sigma, double a, double b, RngStream& rng);

/// The deterministic inverse map used by sample_truncated_normal, exposed for tests.
double truncated_normal_inverse(double mu, double sigma, double a, double b, double u);

}  // namespace gnice
