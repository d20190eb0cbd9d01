#pragma once

// Central-difference gradient checking shared by the unit and acceptance
// suites. Coordinates whose perturbed evaluations pass near a relu kink
// are skipped and counted.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "bgn/rng.hpp"
#include "bgn/tensor.hpp"

namespace bgn::testing {

struct GradCheckResult {
  int checked = 0;
  int skipped_kink = 0;
  double max_rel_err = 0.0;
  std::string worst;  // "param#/coord analytic=... fd=..."
};

// forward() must rebuild the graph from the parameters' current values and
// return the scalar loss. Checks up to max_coords_per_param coordinates of
// each parameter (all when the cap is not hit), sampling with coord_rng
// when given, striding deterministically otherwise.
inline GradCheckResult gradcheck(const std::function<Tensor()>& forward,
                                 const std::vector<Tensor>& params,
                                 double step = 1e-6,
                                 double kink_radius = 1e-3,
                                 int max_coords_per_param = 1 << 30,
                                 Rng* coord_rng = nullptr) {
  GradCheckResult result;

  for (const Tensor& p : params) const_cast<Tensor&>(p).zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = forward();
    backward(loss);
  }
  for (const Tensor& p : params) {
    analytic.push_back(p.has_grad()
                           ? p.grad()
                           : std::vector<double>(p.numel(), 0.0));
  }

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = const_cast<Tensor&>(params[pi]);
    const std::size_t n = p.numel();
    std::vector<std::size_t> coords;
    if (static_cast<int>(n) <= max_coords_per_param) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    } else if (coord_rng) {
      for (int i = 0; i < max_coords_per_param; ++i)
        coords.push_back(coord_rng->uniform_int(n));
    } else {
      const std::size_t stride = n / max_coords_per_param + 1;
      for (std::size_t i = 0; i < n; i += stride) coords.push_back(i);
    }

    for (std::size_t ci : coords) {
      double* slot = p.data() + ci;
      const double saved = *slot;
      bool kink = false;
      double f_plus, f_minus;
      {
        *slot = saved + step;
        KinkWatch watch;
        f_plus = forward().data()[0];
        kink |= watch.min_abs() < kink_radius;
      }
      {
        *slot = saved - step;
        KinkWatch watch;
        f_minus = forward().data()[0];
        kink |= watch.min_abs() < kink_radius;
      }
      *slot = saved;
      if (kink) {
        ++result.skipped_kink;
        continue;
      }
      const double fd = (f_plus - f_minus) / (2.0 * step);
      const double a = analytic[pi][ci];
      const double rel =
          std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1e-3});
      ++result.checked;
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst = "param" + std::to_string(pi) + "/" +
                       std::to_string(ci) + " analytic=" + std::to_string(a) +
                       " fd=" + std::to_string(fd);
      }
    }
  }
  return result;
}

}  // namespace bgn::testing
