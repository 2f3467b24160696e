#ifndef OPC_ADAM_HPP_
#define OPC_ADAM_HPP_

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace opc {

// Adam with bias correction. One instance per parameter vector; the caller
// owns the step counter so several groups can share it.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;

  explicit AdamState(std::size_t n, double b1 = 0.9, double b2 = 0.999,
                     double eps = 1e-8)
      : beta1(b1), beta2(b2), epsilon(eps), m(n, 0.0), v(n, 0.0) {}

  // params -= lr * update for gradient-descent; pass the ascent direction
  // (negated gradient) to maximize.
  void apply(std::span<double> params, std::span<const double> grad, double lr) {
    ++step;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      params[i] -= lr * mhat / (std::sqrt(vhat) + epsilon);
    }
  }
};

}  // namespace opc

#endif  // OPC_ADAM_HPP_
