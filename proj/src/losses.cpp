#include "stm/losses.hpp"

#include <cmath>
#include <iostream>
#include <vector>

namespace stm {

namespace {

constexpr int kWindow = 11;
constexpr Scalar kC1 = 0.01 * 0.01;
constexpr Scalar kC2 = 0.03 * 0.03;

const std::vector<Scalar>& gaussian_window() {
  static const std::vector<Scalar> taps = [] {
    std::vector<Scalar> w(kWindow);
    const Scalar sigma = 1.5;
    Scalar sum = 0;
    for (int i = 0; i < kWindow; ++i) {
      const Scalar d = i - (kWindow - 1) / 2.0;
      w[size_t(i)] = std::exp(-d * d / (2 * sigma * sigma));
      sum += w[size_t(i)];
    }
    for (auto& v : w) v /= sum;
    return w;
  }();
  return taps;
}

struct WindowStats {
  Scalar mu_x, mu_y, var_x, var_y, cov;
};

// Full window pass shared between value and gradient: fn(wy, wx, c, stats).
template <typename Fn>
void for_each_window(const Image& x, const Image& y, Fn&& fn) {
  require_same_shape(x, y, "ssim");
  if (x.height < kWindow || x.width < kWindow)
    throw ShapeMismatchError("ssim: image smaller than the 11x11 window");
  const auto& w = gaussian_window();
  for (int c = 0; c < x.channels; ++c)
    for (int wy = 0; wy + kWindow <= x.height; ++wy)
      for (int wx = 0; wx + kWindow <= x.width; ++wx) {
        WindowStats s{0, 0, 0, 0, 0};
        for (int dy = 0; dy < kWindow; ++dy)
          for (int dx = 0; dx < kWindow; ++dx) {
            const Scalar weight = w[size_t(dy)] * w[size_t(dx)];
            const Scalar xv = x.at(wy + dy, wx + dx, c);
            const Scalar yv = y.at(wy + dy, wx + dx, c);
            s.mu_x += weight * xv;
            s.mu_y += weight * yv;
            s.var_x += weight * xv * xv;
            s.var_y += weight * yv * yv;
            s.cov += weight * xv * yv;
          }
        s.var_x -= s.mu_x * s.mu_x;
        s.var_y -= s.mu_y * s.mu_y;
        s.cov -= s.mu_x * s.mu_y;
        fn(wy, wx, c, s);
      }
}

int window_count(const Image& x) {
  return x.channels * (x.height - kWindow + 1) * (x.width - kWindow + 1);
}

struct PearsonStats {
  std::vector<std::pair<int, int>> pixels;
  Scalar mean_x = 0, mean_y = 0, sxx = 0, syy = 0, sxy = 0;
};

PearsonStats pearson_stats(const Image& x, const Image& y, const Image* mask) {
  require_same_shape(x, y, "pearson_depth");
  if (x.channels != 1) throw ShapeMismatchError("pearson_depth: expects depth maps");
  if (mask && (mask->width != x.width || mask->height != x.height))
    throw ShapeMismatchError("pearson_depth: mask shape mismatch");
  PearsonStats s;
  for (int py = 0; py < x.height; ++py)
    for (int px = 0; px < x.width; ++px) {
      if (mask && mask->at(py, px) <= 0.5) continue;
      s.pixels.push_back({py, px});
      s.mean_x += x.at(py, px);
      s.mean_y += y.at(py, px);
    }
  const size_t n = s.pixels.size();
  if (n < 2) throw DegenerateDepthError("pearson_depth: fewer than 2 valid pixels");
  s.mean_x /= Scalar(n);
  s.mean_y /= Scalar(n);
  for (const auto& [py, px] : s.pixels) {
    const Scalar cx = x.at(py, px) - s.mean_x;
    const Scalar cy = y.at(py, px) - s.mean_y;
    s.sxx += cx * cx;
    s.syy += cy * cy;
    s.sxy += cx * cy;
  }
  if (s.sxx <= 1e-12 || s.syy <= 1e-12)
    throw DegenerateDepthError("pearson_depth: zero variance depth map");
  return s;
}

}  // namespace

Scalar LossReport::weighted_sum(const LossWeights& w) const {
  return w.rgb * (rgb_full + rgb_avatar) + w.ssim * (ssim_full + ssim_avatar) +
         w.lpips * (lpips_full + lpips_avatar) + w.lbs * lbs + w.depth * depth;
}

Scalar rgb_l1(const Image& rendered, const Image& target) {
  require_same_shape(rendered, target, "rgb_l1");
  Scalar sum = 0;
  for (size_t i = 0; i < rendered.data.size(); ++i)
    sum += std::abs(rendered.data[i] - target.data[i]);
  return sum / Scalar(rendered.data.size());
}

Image rgb_l1_backward(const Image& rendered, const Image& target, Scalar upstream) {
  require_same_shape(rendered, target, "rgb_l1");
  Image g(rendered.width, rendered.height, rendered.channels);
  const Scalar scale = upstream / Scalar(rendered.data.size());
  for (size_t i = 0; i < rendered.data.size(); ++i) {
    const Scalar d = rendered.data[i] - target.data[i];
    g.data[i] = d > 0 ? scale : (d < 0 ? -scale : 0.0);
  }
  return g;
}

Scalar ssim(const Image& rendered, const Image& target) {
  Scalar sum = 0;
  for_each_window(rendered, target, [&](int, int, int, const WindowStats& s) {
    const Scalar a1 = 2 * s.mu_x * s.mu_y + kC1;
    const Scalar a2 = 2 * s.cov + kC2;
    const Scalar b1 = s.mu_x * s.mu_x + s.mu_y * s.mu_y + kC1;
    const Scalar b2 = s.var_x + s.var_y + kC2;
    sum += (a1 * a2) / (b1 * b2);
  });
  return sum / window_count(rendered);
}

Image ssim_backward(const Image& rendered, const Image& target, Scalar upstream) {
  Image g(rendered.width, rendered.height, rendered.channels);
  const auto& w = gaussian_window();
  const Scalar norm = upstream / window_count(rendered);
  for_each_window(rendered, target, [&](int wy, int wx, int c, const WindowStats& s) {
    const Scalar a1 = 2 * s.mu_x * s.mu_y + kC1;
    const Scalar a2 = 2 * s.cov + kC2;
    const Scalar b1 = s.mu_x * s.mu_x + s.mu_y * s.mu_y + kC1;
    const Scalar b2 = s.var_x + s.var_y + kC2;
    const Scalar value = (a1 * a2) / (b1 * b2);
    const Scalar d_a1 = a2 / (b1 * b2);
    const Scalar d_a2 = a1 / (b1 * b2);
    const Scalar d_b1 = -value / b1;
    const Scalar d_b2 = -value / b2;
    const Scalar d_mu_x = d_a1 * 2 * s.mu_y + d_b1 * 2 * s.mu_x;
    const Scalar d_var_x = d_b2;
    const Scalar d_cov = d_a2 * 2;
    for (int dy = 0; dy < kWindow; ++dy)
      for (int dx = 0; dx < kWindow; ++dx) {
        const Scalar weight = w[size_t(dy)] * w[size_t(dx)];
        const Scalar xv = rendered.at(wy + dy, wx + dx, c);
        const Scalar yv = target.at(wy + dy, wx + dx, c);
        g.at(wy + dy, wx + dx, c) +=
            norm * weight *
            (d_mu_x + d_var_x * 2 * (xv - s.mu_x) + d_cov * (yv - s.mu_y));
      }
  });
  return g;
}

Scalar pearson_depth(const Image& rendered_depth, const Image& estimated_depth,
                     const Image* mask) {
  const PearsonStats s = pearson_stats(rendered_depth, estimated_depth, mask);
  return 1.0 - s.sxy / std::sqrt(s.sxx * s.syy);
}

Image pearson_depth_backward(const Image& rendered_depth, const Image& estimated_depth,
                             const Image* mask, Scalar upstream) {
  const PearsonStats s = pearson_stats(rendered_depth, estimated_depth, mask);
  const Scalar denom = std::sqrt(s.sxx * s.syy);
  const Scalar r = s.sxy / denom;
  Image g(rendered_depth.width, rendered_depth.height, 1);
  for (const auto& [py, px] : s.pixels) {
    const Scalar cx = rendered_depth.at(py, px) - s.mean_x;
    const Scalar cy = estimated_depth.at(py, px) - s.mean_y;
    // d(1 - r)/dx_i = -(cy_i / denom - r * cx_i / sxx)
    g.at(py, px) = -upstream * (cy / denom - r * cx / s.sxx);
  }
  return g;
}

Scalar lbs_loss(const MatX& weights, const MatX& prior, bool normalize) {
  if (weights.rows() != prior.rows() || weights.cols() != prior.cols())
    throw ShapeMismatchError("lbs_loss: shape mismatch");
  const Scalar sum = (weights - prior).squaredNorm();
  return normalize && weights.rows() > 0 ? sum / Scalar(weights.rows()) : sum;
}

MatX lbs_loss_backward(const MatX& weights, const MatX& prior, bool normalize,
                       Scalar upstream) {
  if (weights.rows() != prior.rows() || weights.cols() != prior.cols())
    throw ShapeMismatchError("lbs_loss: shape mismatch");
  const Scalar scale =
      normalize && weights.rows() > 0 ? upstream * 2.0 / Scalar(weights.rows())
                                      : upstream * 2.0;
  return scale * (weights - prior);
}

Image alpha_validity_mask(const Image& alpha, Scalar threshold) {
  Image mask(alpha.width, alpha.height, 1);
  for (size_t i = 0; i < alpha.data.size(); ++i)
    mask.data[i] = alpha.data[i] > threshold ? 1.0 : 0.0;
  return mask;
}

LossReport total_loss(const TotalLossInputs& in, const LossWeights& weights,
                      const PerceptualScorer* lpips, bool lbs_normalize) {
  if (!in.full || !in.avatar || !in.target || !in.avatar_target || !in.depth_est ||
      !in.lbs_weights || !in.lbs_prior)
    throw ConfigError("total_loss: missing inputs");

  LossReport r;
  r.rgb_full = rgb_l1(in.full->color, *in.target);
  r.ssim_full = 1.0 - ssim(in.full->color, *in.target);
  r.rgb_avatar = rgb_l1(in.avatar->color, *in.avatar_target);
  r.ssim_avatar = 1.0 - ssim(in.avatar->color, *in.avatar_target);
  if (lpips) {
    r.lpips_full = lpips->score(in.full->color, *in.target);
    r.lpips_avatar = lpips->score(in.avatar->color, *in.avatar_target);
  }
  r.lbs = lbs_loss(*in.lbs_weights, *in.lbs_prior, lbs_normalize);
  if (weights.depth > 0) {
    const Image valid = alpha_validity_mask(in.full->alpha);
    try {
      r.depth = pearson_depth(in.full->depth, *in.depth_est, &valid);
    } catch (const DegenerateDepthError& e) {
      std::cerr << "warning: depth term skipped (" << e.what() << ")\n";
      r.depth = 0;
      r.depth_skipped = true;
    }
  }
  r.total = r.weighted_sum(weights);
  return r;
}

}  // namespace stm
