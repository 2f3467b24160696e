#ifndef OPC_DENSITY_HPP_
#define OPC_DENSITY_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "opc/rng.hpp"

namespace opc {

// Diagonal-covariance Gaussian mixture over state space.
struct GmmDensity {
  std::size_t dim = 0;
  std::size_t components = 0;
  std::vector<double> weights;    // [c], sums to 1
  std::vector<double> means;      // [c, dim]
  std::vector<double> variances;  // [c, dim], floored

  double log_pdf(std::span<const double> x) const;
  void log_pdf_batch(std::span<const double> points, std::size_t n,
                     std::span<double> out) const;
  void sample(Rng& rng, std::span<double> out) const;

  // Uniform mixture of mixtures (still a GMM).
  static GmmDensity merge(std::span<const GmmDensity> parts);
};

constexpr double kVarianceFloor = 1e-6;
constexpr double kWeightFloor = 1e-8;

struct GmmFitReport {
  std::size_t iterations = 0;
  std::size_t reseeded_components = 0;
  std::vector<double> log_likelihoods;  // mean per-point, one entry per iteration
};

// EM with greedy farthest-point (k-means++ style) seeding: the first
// center is the particle nearest the data mean, each next one maximizes
// its distance to the chosen set, ties broken by index. Seeding therefore
// depends only on the empirical distribution; the rng is used solely to
// re-seed degenerate components.
GmmDensity fit_gmm(std::span<const double> particles, std::size_t n, std::size_t dim,
                   std::size_t n_components, std::uint64_t seed,
                   GmmFitReport* report = nullptr);

// Monte-Carlo estimators over particles drawn from `model` / `model_p`.
double mc_entropy(const GmmDensity& model, std::span<const double> particles,
                  std::size_t n);
double mc_kl(const GmmDensity& model_p, const GmmDensity& model_q,
             std::span<const double> particles, std::size_t n);

std::vector<double> sample_particles(const GmmDensity& model, std::size_t n,
                                     std::uint64_t seed);

// Exact discrete distributions, used where identities must hold to
// round-off rather than Monte-Carlo error.
struct DiscreteDist {
  std::vector<double> p;
};
double entropy(const DiscreteDist& d);
double kl(const DiscreteDist& p, const DiscreteDist& q);
DiscreteDist uniform_mixture(std::span<const DiscreteDist> parts);

}  // namespace opc

#endif  // OPC_DENSITY_HPP_
