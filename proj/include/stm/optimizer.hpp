#pragma once

#include "stm/types.hpp"

namespace stm {

struct AdamMoments {
  MatX m;
  MatX v;
  int step = 0;

  static AdamMoments zeros(Eigen::Index rows, Eigen::Index cols);
  static AdamMoments zeros_like(const MatX& params);
};

// Standard bias-corrected Adam. Elements with non-finite gradients are
// flagged (return value counts them) and skipped for this step, leaving
// their parameters and moments untouched.
int adam_step(Eigen::Ref<MatX> params, const Eigen::Ref<const MatX>& grads,
              AdamMoments& moments, Scalar lr, Scalar beta1 = 0.9,
              Scalar beta2 = 0.999, Scalar eps = 1e-8);

// Exponential decay: start * (end/start)^(iteration/total).
Scalar lr_at(int iteration, Scalar start, Scalar end, int total);

}  // namespace stm
