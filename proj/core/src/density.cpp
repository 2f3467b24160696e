#include "opc/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "opc/error.hpp"

namespace opc {

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp_span(std::span<const double> v) {
  double mx = kNegInf;
  for (double x : v) mx = std::max(mx, x);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}
}  // namespace

double GmmDensity::log_pdf(std::span<const double> x) const {
  double out;
  log_pdf_batch(x, 1, std::span<double>(&out, 1));
  return out;
}

void GmmDensity::log_pdf_batch(std::span<const double> points, std::size_t n,
                               std::span<double> out) const {
  std::vector<double> comp_const(components);  // log w_c - 0.5 sum log(2 pi var)
  for (std::size_t c = 0; c < components; ++c) {
    double lc = std::log(weights[c]);
    for (std::size_t d = 0; d < dim; ++d) {
      lc -= kHalfLog2Pi + 0.5 * std::log(variances[c * dim + d]);
    }
    comp_const[c] = lc;
  }
  std::vector<double> comp_log(components);
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = points.data() + i * dim;
    for (std::size_t c = 0; c < components; ++c) {
      double q = 0.0;
      const double* mu = means.data() + c * dim;
      const double* var = variances.data() + c * dim;
      for (std::size_t d = 0; d < dim; ++d) {
        double r = x[d] - mu[d];
        q += r * r / var[d];
      }
      comp_log[c] = comp_const[c] - 0.5 * q;
    }
    out[i] = logsumexp_span(comp_log);
  }
}

void GmmDensity::sample(Rng& rng, std::span<double> out) const {
  double u = rng.uniform();
  std::size_t c = components - 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < components; ++i) {
    acc += weights[i];
    if (u < acc) {
      c = i;
      break;
    }
  }
  for (std::size_t d = 0; d < dim; ++d) {
    out[d] = means[c * dim + d] + std::sqrt(variances[c * dim + d]) * rng.normal();
  }
}

GmmDensity GmmDensity::merge(std::span<const GmmDensity> parts) {
  if (parts.empty()) fail_numeric("gmm merge: empty part list");
  GmmDensity out;
  out.dim = parts[0].dim;
  double share = 1.0 / static_cast<double>(parts.size());
  for (const GmmDensity& g : parts) {
    if (g.dim != out.dim) fail_numeric("gmm merge: dimension mismatch");
    out.components += g.components;
    for (double w : g.weights) out.weights.push_back(w * share);
    out.means.insert(out.means.end(), g.means.begin(), g.means.end());
    out.variances.insert(out.variances.end(), g.variances.begin(), g.variances.end());
  }
  return out;
}

GmmDensity fit_gmm(std::span<const double> particles, std::size_t n, std::size_t dim,
                   std::size_t n_components, std::uint64_t seed, GmmFitReport* report) {
  if (n < n_components) {
    fail_numeric("fit_gmm: " + std::to_string(n) + " particles for " +
                 std::to_string(n_components) + " components");
  }
  if (n_components == 0) fail_numeric("fit_gmm: zero components");
  Rng rng(seed);

  // data mean and per-dim variance (used for init and re-seeding)
  std::vector<double> data_mean(dim, 0.0), data_var(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dim; ++d) data_mean[d] += particles[i * dim + d];
  }
  for (double& m : data_mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      double r = particles[i * dim + d] - data_mean[d];
      data_var[d] += r * r;
    }
  }
  for (double& v : data_var) v = std::max(v / static_cast<double>(n), kVarianceFloor);

  GmmDensity g;
  g.dim = dim;
  g.components = n_components;
  g.weights.assign(n_components, 1.0 / static_cast<double>(n_components));
  g.means.assign(n_components * dim, 0.0);
  g.variances.assign(n_components * dim, 0.0);

  // greedy seeding
  auto sq_dist = [&](std::size_t i, const double* center) {
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      double r = particles[i * dim + d] - center[d];
      s += r * r;
    }
    return s;
  };
  std::size_t first = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double s = sq_dist(i, data_mean.data());
    if (s < best) {
      best = s;
      first = i;
    }
  }
  std::copy_n(particles.data() + first * dim, dim, g.means.data());
  std::vector<double> min_dist(n);
  for (std::size_t i = 0; i < n; ++i) min_dist[i] = sq_dist(i, g.means.data());
  for (std::size_t c = 1; c < n_components; ++c) {
    std::size_t pick = 0;
    double far = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (min_dist[i] > far) {
        far = min_dist[i];
        pick = i;
      }
    }
    std::copy_n(particles.data() + pick * dim, dim, g.means.data() + c * dim);
    for (std::size_t i = 0; i < n; ++i) {
      min_dist[i] = std::min(min_dist[i], sq_dist(i, g.means.data() + c * dim));
    }
  }
  for (std::size_t c = 0; c < n_components; ++c) {
    std::copy(data_var.begin(), data_var.end(), g.variances.begin() + c * dim);
  }

  // EM
  std::vector<double> resp(n * n_components);
  std::vector<double> comp_log(n_components);
  double prev_ll = -std::numeric_limits<double>::infinity();
  std::size_t reseeds = 0;
  std::size_t iter = 0;
  for (; iter < 200; ++iter) {
    // E step
    double ll = 0.0;
    std::vector<double> comp_const(n_components);
    for (std::size_t c = 0; c < n_components; ++c) {
      double lc = std::log(g.weights[c]);
      for (std::size_t d = 0; d < dim; ++d) {
        lc -= kHalfLog2Pi + 0.5 * std::log(g.variances[c * dim + d]);
      }
      comp_const[c] = lc;
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < n_components; ++c) {
        double q = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
          double r = particles[i * dim + d] - g.means[c * dim + d];
          q += r * r / g.variances[c * dim + d];
        }
        comp_log[c] = comp_const[c] - 0.5 * q;
      }
      double lse = logsumexp_span(comp_log);
      ll += lse;
      for (std::size_t c = 0; c < n_components; ++c) {
        resp[i * n_components + c] = std::exp(comp_log[c] - lse);
      }
    }
    ll /= static_cast<double>(n);
    if (report) report->log_likelihoods.push_back(ll);
    if (ll - prev_ll < 1e-4 && iter > 0) {
      ++iter;
      break;
    }
    prev_ll = ll;

    // M step
    for (std::size_t c = 0; c < n_components; ++c) {
      double nk = 0.0;
      for (std::size_t i = 0; i < n; ++i) nk += resp[i * n_components + c];
      if (nk / static_cast<double>(n) < kWeightFloor) {
        // degenerate component: re-seed from a random particle
        std::size_t pick = rng.index(n);
        std::copy_n(particles.data() + pick * dim, dim, g.means.data() + c * dim);
        std::copy(data_var.begin(), data_var.end(), g.variances.begin() + c * dim);
        g.weights[c] = 1.0 / static_cast<double>(n);
        ++reseeds;
        continue;
      }
      g.weights[c] = nk / static_cast<double>(n);
      for (std::size_t d = 0; d < dim; ++d) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          m += resp[i * n_components + c] * particles[i * dim + d];
        }
        m /= nk;
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          double r = particles[i * dim + d] - m;
          v += resp[i * n_components + c] * r * r;
        }
        g.means[c * dim + d] = m;
        g.variances[c * dim + d] = std::max(v / nk, kVarianceFloor);
      }
    }
    // keep weights on the simplex after any re-seeding
    double wsum = 0.0;
    for (double w : g.weights) wsum += w;
    for (double& w : g.weights) w /= wsum;
  }
  if (report) {
    report->iterations = iter;
    report->reseeded_components = reseeds;
  }
  return g;
}

double mc_entropy(const GmmDensity& model, std::span<const double> particles,
                  std::size_t n) {
  std::vector<double> lp(n);
  model.log_pdf_batch(particles, n, lp);
  double s = 0.0;
  for (double v : lp) s += v;
  return -s / static_cast<double>(n);
}

double mc_kl(const GmmDensity& model_p, const GmmDensity& model_q,
             std::span<const double> particles, std::size_t n) {
  std::vector<double> lp(n), lq(n);
  model_p.log_pdf_batch(particles, n, lp);
  model_q.log_pdf_batch(particles, n, lq);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += lp[i] - lq[i];
  return s / static_cast<double>(n);
}

std::vector<double> sample_particles(const GmmDensity& model, std::size_t n,
                                     std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out(n * model.dim);
  for (std::size_t i = 0; i < n; ++i) {
    model.sample(rng, std::span<double>(out.data() + i * model.dim, model.dim));
  }
  return out;
}

double entropy(const DiscreteDist& d) {
  double h = 0.0;
  for (double p : d.p) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double kl(const DiscreteDist& p, const DiscreteDist& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.p.size(); ++i) {
    if (p.p[i] > 0.0) s += p.p[i] * std::log(p.p[i] / q.p[i]);
  }
  return s;
}

DiscreteDist uniform_mixture(std::span<const DiscreteDist> parts) {
  DiscreteDist m;
  m.p.assign(parts[0].p.size(), 0.0);
  for (const DiscreteDist& d : parts) {
    for (std::size_t i = 0; i < m.p.size(); ++i) m.p[i] += d.p[i];
  }
  for (double& p : m.p) p /= static_cast<double>(parts.size());
  return m;
}

}  // namespace opc
