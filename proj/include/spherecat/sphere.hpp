#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace spherecat {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

// y += c * x
inline void axpy(std::span<double> y, double c, std::span<const double> x) {
  if (y.size() != x.size()) throw std::invalid_argument("axpy: dimension mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += c * x[i];
}

inline void normalize(std::span<double> a) {
  double n = norm(a);
  if (n < 1e-300) throw std::invalid_argument("normalize: zero vector");
  for (double& x : a) x /= n;
}

// Projection of a Euclidean gradient onto the tangent space at theta:
// (I - theta theta^T) g. The result is orthogonal to theta.
inline Vec project_tangent(std::span<const double> grad, std::span<const double> theta) {
  double c = dot(grad, theta);
  Vec out(grad.begin(), grad.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= c * theta[i];
  return out;
}

// Take a step from theta and pull the result back onto the unit sphere.
inline Vec retract(std::span<const double> theta, std::span<const double> step) {
  if (theta.size() != step.size()) throw std::invalid_argument("retract: dimension mismatch");
  Vec out(theta.begin(), theta.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += step[i];
  double n = norm(out);
  if (n < 1e-12) throw std::invalid_argument("retract: step lands on the origin");
  for (double& x : out) x /= n;
  return out;
}

// Unnormalized log density of vMF(mu, kappa) at x. The normalizing constant
// cancels in every objective this code base optimizes, so it is never needed.
inline double vmf_log_kernel(std::span<const double> x, std::span<const double> mu, double kappa) {
  if (kappa <= 0.0) throw std::invalid_argument("vmf_log_kernel: kappa must be positive");
  return kappa * dot(x, mu);
}

inline Vec random_unit_vector(std::size_t dim, std::mt19937_64& rng) {
  if (dim < 2) throw std::invalid_argument("random_unit_vector: dim must be >= 2");
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec v(dim);
  for (;;) {
    for (double& x : v) x = gauss(rng);
    double n = norm(v);
    if (n > 1e-12) {
      for (double& x : v) x /= n;
      return v;
    }
  }
}

namespace detail {

// Cosine between a vMF draw and its mean direction, by the Ulrich/Wood
// rejection scheme. The envelope parameter is
//   b = (-2k + sqrt(4k^2 + (p-1)^2)) / (p-1).
inline double sample_vmf_cosine(double kappa, std::size_t dim, std::mt19937_64& rng) {
  const double d = static_cast<double>(dim) - 1.0;
  const double b = (-2.0 * kappa + std::sqrt(4.0 * kappa * kappa + d * d)) / d;
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + d * std::log(1.0 - x0 * x0);
  std::gamma_distribution<double> gamma(d / 2.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (;;) {
    double g1 = gamma(rng);
    double g2 = gamma(rng);
    double z = g1 / (g1 + g2);  // Beta((p-1)/2, (p-1)/2)
    double w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
    double u = unif(rng);
    if (kappa * w + d * std::log(1.0 - x0 * w) - c >= std::log(u)) return w;
  }
}

}  // namespace detail

// Draw from vMF(mu, kappa) by tangent-normal decomposition: sample the cosine
// w, pick a uniform direction v orthogonal to mu, return w*mu + sqrt(1-w^2)*v.
inline Vec sample_vmf(std::span<const double> mu, double kappa, std::mt19937_64& rng) {
  if (mu.size() < 2) throw std::invalid_argument("sample_vmf: dim must be >= 2");
  if (kappa <= 0.0) throw std::invalid_argument("sample_vmf: kappa must be positive");
  double w = detail::sample_vmf_cosine(kappa, mu.size(), rng);
  Vec v(mu.size());
  for (;;) {
    Vec g = random_unit_vector(mu.size(), rng);
    double c = dot(g, mu);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = g[i] - c * mu[i];
    double n = norm(v);
    if (n > 1e-9) {
      for (double& x : v) x /= n;
      break;
    }
  }
  double s = std::sqrt(std::max(0.0, 1.0 - w * w));
  Vec out(mu.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = w * mu[i] + s * v[i];
  normalize(out);
  return out;
}

}  // namespace spherecat
