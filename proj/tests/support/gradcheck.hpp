#pragma once

// Central finite-difference check of the hand-written ViT gradients.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "hwvit/random.hpp"
#include "hwvit/vit.hpp"

namespace gradcheck {

using hwvit::Matrix;

struct Batch {
  std::vector<Matrix> tokens;
  std::vector<int> labels;
  std::vector<Matrix> teacher;
};

inline Batch random_batch(const hwvit::ModelMeta& meta, int n, std::uint64_t seed) {
  hwvit::Rng rng(seed);
  Batch b;
  for (int i = 0; i < n; ++i) {
    Matrix x(meta.tokens, meta.token_dim);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = hwvit::normal(rng);
    Matrix t(1, meta.num_classes);
    for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = hwvit::normal(rng, 2.0);
    b.tokens.push_back(x);
    b.labels.push_back(i % meta.num_classes);
    b.teacher.push_back(t);
  }
  return b;
}

inline double batch_loss(const hwvit::ViTParams& p, const hwvit::QuantOptions& q, const Batch& b,
                         const hwvit::KdConfig& kd) {
  const auto w = hwvit::prepare_weights(p, q);
  double loss = 0.0;
  for (std::size_t i = 0; i < b.tokens.size(); ++i) {
    const Matrix z = hwvit::forward_sample(p, w, q, b.tokens[i]);
    loss += hwvit::kd_loss(z, b.labels[i], kd, &b.teacher[i]).loss;
  }
  return loss;
}

inline hwvit::ViTParams batch_grads(const hwvit::ViTParams& p, const hwvit::QuantOptions& q,
                                     const Batch& b, const hwvit::KdConfig& kd) {
  const auto w = hwvit::prepare_weights(p, q);
  auto g = p.zeros_like();
  for (std::size_t i = 0; i < b.tokens.size(); ++i) {
    hwvit::ForwardCache c;
    const Matrix z = hwvit::forward_sample(p, w, q, b.tokens[i], &c);
    hwvit::backward_sample(p, w, c, hwvit::kd_loss(z, b.labels[i], kd, &b.teacher[i]).dlogits, g);
  }
  hwvit::apply_ste_masks(w, g);
  return g;
}

// Parameter class of a dotted parameter name.
inline std::string param_class(const std::string& name) {
  for (const char* k : {"qkv", "proj", "mlp", "sls", "ln", "norm", "head", "embed"})
    if (name.find(k) != std::string::npos) return k == std::string("norm") ? "ln" : k;
  return name;
}

struct Result {
  std::map<std::string, double> max_rel;  // per parameter class
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::size_t masked_nonzero = 0;  // out-of-clamp entries with a nonzero gradient
};

// Relative error |a - n| / max(|a|, |n|), with differences below `abs_floor`
// treated as exact (finite-difference noise on vanishing gradients).
inline double rel_error(double a, double n, double abs_floor = 1e-12) {
  const double d = std::abs(a - n);
  if (d <= abs_floor) return 0.0;
  return d / std::max(std::abs(a), std::abs(n));
}

// Quantization off: analytic gradients vs central differences of the same
// model. With `ste`, weights are fake-quantized in the analytic pass and the
// finite differences are taken on the unquantized model evaluated at the
// quantized weights; only in-clamp entries are compared.
inline Result check(const hwvit::ViTParams& params, const Batch& batch, const hwvit::KdConfig& kd,
                    bool ste, double weight_clip = 1.0, double h = 1e-5) {
  hwvit::QuantOptions q = hwvit::QuantOptions::off();
  if (ste) {
    q.weights = true;
    q.weight_clip = weight_clip;
  }
  const auto analytic = batch_grads(params, q, batch, kd);
  const auto prepared = hwvit::prepare_weights(params, q);

  // The point at which finite differences are taken.
  hwvit::ViTParams at = params;
  std::map<std::string, const Matrix*> masks;
  if (ste) {
    for (std::size_t i = 0; i < at.blocks.size(); ++i) {
      at.blocks[i].w_qkv = prepared.blocks[i].qkv;
      at.blocks[i].w_proj = prepared.blocks[i].proj;
      at.blocks[i].w_mlp1 = prepared.blocks[i].mlp1;
      at.blocks[i].w_mlp2 = prepared.blocks[i].mlp2;
      const std::string pre = "blocks." + std::to_string(i) + ".";
      masks[pre + "qkv"] = &prepared.blocks[i].mask_qkv;
      masks[pre + "proj"] = &prepared.blocks[i].mask_proj;
      masks[pre + "mlp1"] = &prepared.blocks[i].mask_mlp1;
      masks[pre + "mlp2"] = &prepared.blocks[i].mask_mlp2;
    }
  }
  const auto off = hwvit::QuantOptions::off();

  std::map<std::string, const Matrix*> grads;
  hwvit::for_each_param(analytic, [&](const std::string& n, const Matrix& m) { grads[n] = &m; });

  Result r;
  hwvit::ViTParams probe = at;
  hwvit::for_each_param(probe, [&](const std::string& name, Matrix& m) {
    const Matrix* mask = masks.count(name) ? masks.at(name) : nullptr;
    const std::string cls = param_class(name);
    double& worst = r.max_rel[cls];
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      const double a = grads.at(name)->data()[k];
      if (mask && mask->data()[k] == 0.0) {
        ++r.skipped;
        if (a != 0.0) ++r.masked_nonzero;
        continue;
      }
      const double orig = m.data()[k];
      m.data()[k] = orig + h;
      const double lp = batch_loss(probe, off, batch, kd);
      m.data()[k] = orig - h;
      const double lm = batch_loss(probe, off, batch, kd);
      m.data()[k] = orig;
      worst = std::max(worst, rel_error(a, (lp - lm) / (2 * h)));
      ++r.checked;
    }
  });
  return r;
}

}  // namespace gradcheck
