#pragma once

#include <random>

#include "stm/types.hpp"

namespace stm {

// Two affine layers with a ReLU between. Batched rows.
struct Mlp {
  MatX w1;  // hidden x in
  VecX b1;
  MatX w2;  // out x hidden
  VecX b2;

  int input_dim() const { return int(w1.cols()); }
  int hidden_dim() const { return int(w1.rows()); }
  int output_dim() const { return int(w2.rows()); }

  // First layer uniform in +-1/sqrt(in), second layer zero, so the network
  // outputs exactly zero until the second layer moves.
  static Mlp create(int in, int hidden, int out, std::mt19937_64& rng);
  static Mlp zeros(int in, int hidden, int out);

  MatX forward(const MatX& x) const;  // N x in -> N x out
  // Returns d_x and accumulates parameter gradients.
  MatX backward(const MatX& x, const MatX& d_out, Mlp& grad) const;
};

// The three deformation modules. Grouping: geometry offset / appearance /
// transform+skinning.
struct DeformationHeads {
  Mlp offset;      // feature -> delta position (3)
  Mlp appearance;  // feature -> sh (3B) + opacity logit (1)
  Mlp transform;   // feature -> rotation (4) + log scale (3) + lbs logits (K)
  int sh_basis = 0;
  int joint_count = 0;

  static DeformationHeads create(int feature_dim, int sh_basis, int joint_count,
                                 int hidden, std::mt19937_64& rng);
  void validate(int feature_dim) const;
};

struct HeadOutputs {
  MatX3 delta_position;   // N x 3
  MatX sh;                // N x 3B
  VecX opacity_logit;     // N
  MatX4 rotation;         // N x 4
  MatX3 log_scale;        // N x 3
  MatX lbs_logits;        // N x K
};

struct HeadGrads {
  Mlp offset, appearance, transform;
  static HeadGrads zeros(const DeformationHeads& heads);
  void add(const HeadGrads& other);
};

HeadOutputs run_heads(const DeformationHeads& heads, const MatX& features);

// d_features returned; parameter gradients accumulate into `grads`.
MatX run_heads_backward(const DeformationHeads& heads, const MatX& features,
                        const HeadOutputs& d_outputs, HeadGrads& grads);

// softmax over each row.
MatX softmax_rows(const MatX& logits);
MatX softmax_rows_backward(const MatX& softmaxed, const MatX& d_out);

}  // namespace stm
