#include "hwvit/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "hwvit/random.hpp"

namespace hwvit {

Dataset make_dataset(const DatasetConfig& cfg) {
  const auto& m = cfg.meta;
  if (cfg.num_samples < 2 * m.num_classes) throw std::invalid_argument("too few samples");
  if (!(cfg.noise > 0.0)) throw std::invalid_argument("noise must be positive");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
    throw std::invalid_argument("train fraction must lie in (0, 1)");

  Dataset d;
  d.config = cfg;
  Rng proto_rng(derive_seed(cfg.seed, 0));
  const double min_dist = cfg.min_separation * cfg.noise;
  for (int c = 0; c < m.num_classes; ++c) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 1000) throw Error("cannot place separated class prototypes");
      Matrix p(m.tokens, m.token_dim);
      for (Eigen::Index k = 0; k < p.size(); ++k) p.data()[k] = normal(proto_rng);
      const bool ok = std::all_of(d.prototypes.begin(), d.prototypes.end(),
                                  [&](const Matrix& q) { return (p - q).norm() >= min_dist; });
      if (ok) {
        d.prototypes.push_back(std::move(p));
        break;
      }
    }
  }

  Rng noise_rng(derive_seed(cfg.seed, 1));
  std::vector<std::vector<std::size_t>> per_class(std::size_t(m.num_classes));
  for (int i = 0; i < cfg.num_samples; ++i) {
    const int label = i % m.num_classes;
    Matrix x = d.prototypes[std::size_t(label)];
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] += normal(noise_rng, cfg.noise);
    d.samples.push_back(std::move(x));
    d.labels.push_back(label);
    per_class[std::size_t(label)].push_back(std::size_t(i));
  }
  for (const auto& idx : per_class) {
    const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * double(idx.size())));
    d.train.insert(d.train.end(), idx.begin(), idx.begin() + std::ptrdiff_t(n_train));
    d.val.insert(d.val.end(), idx.begin() + std::ptrdiff_t(n_train), idx.end());
  }
  std::sort(d.train.begin(), d.train.end());
  std::sort(d.val.begin(), d.val.end());
  return d;
}

void TrainConfig::validate() const {
  if (epochs < 0 || batch_size < 1) throw std::invalid_argument("invalid epochs or batch size");
  if (!(lr > 0.0) || min_lr < 0.0 || min_lr > lr) throw std::invalid_argument("invalid learning rate");
  kd.validate();
}

BatchGradients batch_gradients(const ViTParams& p, const Dataset& data,
                               const std::vector<std::size_t>& indices, const QuantOptions& q,
                               const KdConfig& kd, const TeacherLogits* teacher) {
  if (indices.empty()) throw std::invalid_argument("empty batch");
  if (kd.alpha > 0.0 && (teacher == nullptr || teacher->size() != data.samples.size()))
    throw Error("distillation requires teacher logits for every sample");
  const auto w = prepare_weights(p, q);
  BatchGradients out{0.0, p.zeros_like()};
  const double inv = 1.0 / static_cast<double>(indices.size());
  ForwardCache cache;
  for (std::size_t i : indices) {
    const Matrix z = forward_sample(p, w, q, data.samples[i], &cache);
    const auto l = kd_loss(z, data.labels[i], kd, teacher ? &(*teacher)[i] : nullptr);
    out.loss += l.loss * inv;
    backward_sample(p, w, cache, l.dlogits * inv, out.grads);
  }
  apply_ste_masks(w, out.grads);
  return out;
}

double clip_global_norm(ViTParams& g, double max_norm) {
  double sq = 0.0;
  for_each_param(g, [&](const std::string&, Matrix& m) { sq += m.squaredNorm(); });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for_each_param(g, [&](const std::string&, Matrix& m) { m *= s; });
  }
  return norm;
}

void sgd_step(ViTParams& p, const ViTParams& g, double lr) {
  std::vector<const Matrix*> grads;
  for_each_param(g, [&](const std::string&, const Matrix& m) { grads.push_back(&m); });
  std::size_t k = 0;
  for_each_param(p, [&](const std::string&, Matrix& m) { m -= lr * *grads[k++]; });
}

double cosine_lr(double base, double min_lr, std::int64_t step, std::int64_t total_steps) {
  if (total_steps <= 1) return base;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps - 1);
  return min_lr + 0.5 * (base - min_lr) * (1.0 + std::cos(std::numbers::pi * t));
}

std::vector<std::vector<std::size_t>> epoch_batches(const Dataset& data, int batch_size,
                                                    std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order = data.train;
  Rng rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t s = 0; s < order.size(); s += std::size_t(batch_size)) {
    const auto e = std::min(order.size(), s + std::size_t(batch_size));
    batches.emplace_back(order.begin() + std::ptrdiff_t(s), order.begin() + std::ptrdiff_t(e));
  }
  return batches;
}

double evaluate(const ViTParams& p, const Dataset& data, const std::vector<std::size_t>& split,
                const QuantOptions& q) {
  if (split.empty()) return 0.0;
  const auto w = prepare_weights(p, q);
  std::size_t correct = 0;
  for (std::size_t i : split) {
    const Matrix z = forward_sample(p, w, q, data.samples[i]);
    Eigen::Index arg = 0;
    z.row(0).maxCoeff(&arg);
    correct += arg == data.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

TeacherLogits predict_logits(const ViTParams& p, const Dataset& data, const QuantOptions& q) {
  const auto w = prepare_weights(p, q);
  TeacherLogits out;
  out.reserve(data.samples.size());
  for (const auto& x : data.samples) out.push_back(forward_sample(p, w, q, x));
  return out;
}

void train_model(ViTParams& p, const Dataset& data, const TrainConfig& cfg,
                 const TeacherLogits* teacher,
                 const std::function<void(const EpochReport&)>& on_epoch) {
  cfg.validate();
  const auto per_epoch = static_cast<std::int64_t>(
      (data.train.size() + std::size_t(cfg.batch_size) - 1) / std::size_t(cfg.batch_size));
  const std::int64_t total = per_epoch * cfg.epochs;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochReport rep{epoch, 0.0, 0.0};
    const auto batches = epoch_batches(data, cfg.batch_size, cfg.seed, epoch);
    for (const auto& batch : batches) {
      auto bg = batch_gradients(p, data, batch, cfg.quant, cfg.kd, teacher);
      if (!std::isfinite(bg.loss)) {
        std::ostringstream os;
        os << "training diverged at epoch " << epoch << " step " << step << ": loss " << bg.loss;
        throw Error(os.str());
      }
      clip_global_norm(bg.grads, cfg.grad_clip);
      rep.lr = cosine_lr(cfg.lr, cfg.min_lr, step++, total);
      sgd_step(p, bg.grads, rep.lr);
      rep.loss += bg.loss / static_cast<double>(batches.size());
    }
    if (on_epoch) on_epoch(rep);
  }
}

}  // namespace hwvit
