#include "opc/rng.hpp"

#include <cmath>

namespace opc {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller on (0,1] uniforms; u > 0 guaranteed by the +1 offset
  double u = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  double v = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  double r = std::sqrt(-2.0 * std::log(u));
  double a = 6.283185307179586476925286766559 * v;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

}  // namespace opc
