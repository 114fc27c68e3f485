#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "matte/types.hpp"

namespace matte {

struct GradCheckReport {
  double max_rel_err = 0.0;
  Index failing_coordinate = -1;  // coordinate of the worst disagreement
};

// Central-difference audit of an analytic gradient. Relative error uses the
// symmetric denominator max(|a|, |b|, 1e-12).
inline GradCheckReport grad_check(const std::function<double(const Vector&)>& f,
                                  const std::function<Vector(const Vector&)>& grad_f,
                                  const Vector& at, double step) {
  if (step <= 0.0) throw ValidationError("grad_check: step must be > 0");
  const Vector analytic = grad_f(at);
  if (analytic.size() != at.size())
    throw ValidationError("grad_check: gradient size does not match point size");
  GradCheckReport rep;
  Vector x = at;
  for (Index i = 0; i < at.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + step;
    const double fp = f(x);
    x[i] = keep - step;
    const double fm = f(x);
    x[i] = keep;
    const double numeric = (fp - fm) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-12});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.failing_coordinate = i;
    }
  }
  return rep;
}

}  // namespace matte
