#include "stm/optimizer.hpp"

#include <cmath>

namespace stm {

AdamMoments AdamMoments::zeros(Eigen::Index rows, Eigen::Index cols) {
  AdamMoments a;
  a.m = MatX::Zero(rows, cols);
  a.v = MatX::Zero(rows, cols);
  return a;
}

AdamMoments AdamMoments::zeros_like(const MatX& params) {
  return zeros(params.rows(), params.cols());
}

int adam_step(Eigen::Ref<MatX> params, const Eigen::Ref<const MatX>& grads,
              AdamMoments& moments, Scalar lr, Scalar beta1, Scalar beta2,
              Scalar eps) {
  if (params.rows() != grads.rows() || params.cols() != grads.cols() ||
      params.rows() != moments.m.rows() || params.cols() != moments.m.cols())
    throw ShapeMismatchError("adam_step: shape mismatch");
  moments.step += 1;
  const Scalar bc1 = 1.0 - std::pow(beta1, moments.step);
  const Scalar bc2 = 1.0 - std::pow(beta2, moments.step);
  int skipped = 0;
  for (Eigen::Index c = 0; c < params.cols(); ++c)
    for (Eigen::Index r = 0; r < params.rows(); ++r) {
      const Scalar g = grads(r, c);
      if (!std::isfinite(g)) {
        ++skipped;
        continue;
      }
      Scalar& m = moments.m(r, c);
      Scalar& v = moments.v(r, c);
      m = beta1 * m + (1.0 - beta1) * g;
      v = beta2 * v + (1.0 - beta2) * g * g;
      const Scalar m_hat = m / bc1;
      const Scalar v_hat = v / bc2;
      params(r, c) -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  return skipped;
}

Scalar lr_at(int iteration, Scalar start, Scalar end, int total) {
  if (total <= 0) return start;
  const Scalar t = Scalar(iteration) / Scalar(total);
  return start * std::pow(end / start, t);
}

}  // namespace stm
