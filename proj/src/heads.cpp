#include "stm/heads.hpp"

#include <cmath>

namespace stm {

Mlp Mlp::create(int in, int hidden, int out, std::mt19937_64& rng) {
  Mlp m = zeros(in, hidden, out);
  const Scalar half = 1.0 / std::sqrt(Scalar(in));
  std::uniform_real_distribution<Scalar> uni(-half, half);
  for (Eigen::Index i = 0; i < m.w1.rows(); ++i)
    for (Eigen::Index j = 0; j < m.w1.cols(); ++j) m.w1(i, j) = uni(rng);
  for (Eigen::Index i = 0; i < m.b1.size(); ++i) m.b1(i) = uni(rng);
  return m;
}

Mlp Mlp::zeros(int in, int hidden, int out) {
  Mlp m;
  m.w1 = MatX::Zero(hidden, in);
  m.b1 = VecX::Zero(hidden);
  m.w2 = MatX::Zero(out, hidden);
  m.b2 = VecX::Zero(out);
  return m;
}

MatX Mlp::forward(const MatX& x) const {
  if (x.cols() != w1.cols())
    throw ConfigError("mlp: input width mismatch");
  MatX h = (x * w1.transpose()).rowwise() + b1.transpose();
  h = h.cwiseMax(0.0);
  return (h * w2.transpose()).rowwise() + b2.transpose();
}

MatX Mlp::backward(const MatX& x, const MatX& d_out, Mlp& grad) const {
  const MatX pre = (x * w1.transpose()).rowwise() + b1.transpose();
  const MatX h = pre.cwiseMax(0.0);
  grad.w2 += d_out.transpose() * h;
  grad.b2 += d_out.colwise().sum().transpose();
  MatX d_h = d_out * w2;
  d_h = d_h.array() * (pre.array() > 0.0).cast<Scalar>();
  grad.w1 += d_h.transpose() * x;
  grad.b1 += d_h.colwise().sum().transpose();
  return d_h * w1;
}

DeformationHeads DeformationHeads::create(int feature_dim, int sh_basis,
                                          int joint_count, int hidden,
                                          std::mt19937_64& rng) {
  DeformationHeads h;
  h.sh_basis = sh_basis;
  h.joint_count = joint_count;
  h.offset = Mlp::create(feature_dim, hidden, 3, rng);
  h.appearance = Mlp::create(feature_dim, hidden, 3 * sh_basis + 1, rng);
  h.transform = Mlp::create(feature_dim, hidden, 4 + 3 + joint_count, rng);
  return h;
}

void DeformationHeads::validate(int feature_dim) const {
  if (offset.input_dim() != feature_dim || appearance.input_dim() != feature_dim ||
      transform.input_dim() != feature_dim)
    throw ConfigError("heads: feature width does not match");
  if (appearance.output_dim() != 3 * sh_basis + 1)
    throw ConfigError("heads: appearance output width mismatch");
  if (transform.output_dim() != 7 + joint_count)
    throw ConfigError("heads: transform output width mismatch");
}

HeadOutputs run_heads(const DeformationHeads& heads, const MatX& features) {
  heads.validate(int(features.cols()));
  HeadOutputs out;
  out.delta_position = heads.offset.forward(features);
  const MatX app = heads.appearance.forward(features);
  out.sh = app.leftCols(3 * heads.sh_basis);
  out.opacity_logit = app.col(3 * heads.sh_basis);
  const MatX tr = heads.transform.forward(features);
  out.rotation = tr.leftCols(4);
  out.log_scale = tr.middleCols(4, 3);
  out.lbs_logits = tr.rightCols(heads.joint_count);
  return out;
}

HeadGrads HeadGrads::zeros(const DeformationHeads& heads) {
  HeadGrads g;
  g.offset = Mlp::zeros(heads.offset.input_dim(), heads.offset.hidden_dim(),
                        heads.offset.output_dim());
  g.appearance = Mlp::zeros(heads.appearance.input_dim(), heads.appearance.hidden_dim(),
                            heads.appearance.output_dim());
  g.transform = Mlp::zeros(heads.transform.input_dim(), heads.transform.hidden_dim(),
                           heads.transform.output_dim());
  return g;
}

void HeadGrads::add(const HeadGrads& other) {
  offset.w1 += other.offset.w1; offset.b1 += other.offset.b1;
  offset.w2 += other.offset.w2; offset.b2 += other.offset.b2;
  appearance.w1 += other.appearance.w1; appearance.b1 += other.appearance.b1;
  appearance.w2 += other.appearance.w2; appearance.b2 += other.appearance.b2;
  transform.w1 += other.transform.w1; transform.b1 += other.transform.b1;
  transform.w2 += other.transform.w2; transform.b2 += other.transform.b2;
}

MatX run_heads_backward(const DeformationHeads& heads, const MatX& features,
                        const HeadOutputs& d_outputs, HeadGrads& grads) {
  const Eigen::Index n = features.rows();
  MatX d_features = heads.offset.backward(features, d_outputs.delta_position, grads.offset);

  MatX d_app(n, heads.appearance.output_dim());
  d_app.leftCols(3 * heads.sh_basis) = d_outputs.sh;
  d_app.col(3 * heads.sh_basis) = d_outputs.opacity_logit;
  d_features += heads.appearance.backward(features, d_app, grads.appearance);

  MatX d_tr(n, heads.transform.output_dim());
  d_tr.leftCols(4) = d_outputs.rotation;
  d_tr.middleCols(4, 3) = d_outputs.log_scale;
  d_tr.rightCols(heads.joint_count) = d_outputs.lbs_logits;
  d_features += heads.transform.backward(features, d_tr, grads.transform);
  return d_features;
}

MatX softmax_rows(const MatX& logits) {
  MatX out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar m = logits.row(i).maxCoeff();
    VecX e = (logits.row(i).array() - m).exp().transpose();
    out.row(i) = (e / e.sum()).transpose();
  }
  return out;
}

MatX softmax_rows_backward(const MatX& softmaxed, const MatX& d_out) {
  MatX d_logits(softmaxed.rows(), softmaxed.cols());
  for (Eigen::Index i = 0; i < softmaxed.rows(); ++i) {
    const Scalar dot = softmaxed.row(i).dot(d_out.row(i));
    d_logits.row(i) =
        (softmaxed.row(i).array() * (d_out.row(i).array() - dot)).matrix();
  }
  return d_logits;
}

}  // namespace stm
