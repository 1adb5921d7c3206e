#include "hwvit/supernet.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "hwvit/common.hpp"
#include "hwvit/json_io.hpp"
#include "hwvit/qvt.hpp"
#include "hwvit/random.hpp"

namespace hwvit {

namespace {

Matrix gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng, stddev);
  return m;
}

constexpr int kCheckpointVersion = 1;

}  // namespace

EntangledLayer::EntangledLayer(int d_max, double rho_max, int cols, bool with_sls)
    : d_max_(d_max), zone_rows_(w8_row_count(d_max, rho_max)) {
  if (d_max < 1 || cols < 1) throw std::invalid_argument("entangled layer dims must be positive");
  latent_ = Matrix::Zero(super_rows(), cols);
  tags_.assign(std::size_t(super_rows()), Precision::W4);
  std::fill(tags_.begin(), tags_.begin() + zone_rows_, Precision::W8);
  if (with_sls) sls_ = Matrix::Zero(1, super_rows());
}

WindowSelection EntangledLayer::select(int d, double rho) const {
  const int w8 = w8_row_count(d, rho);
  if (d < 1 || d > d_max_ || w8 > zone_rows_) throw std::out_of_range("window outside latent rows");
  return WindowSelection{zone_rows_ - w8, d, w8, static_cast<double>(w8) / d};
}

WindowView extract_window(EntangledLayer& layer, int d, double rho, int col_offset, int cols) {
  const auto sel = layer.select(d, rho);
  if (col_offset < 0 || cols < 1 || col_offset + cols > layer.cols())
    throw std::out_of_range("column window outside latent columns");
  WindowView v{layer.latent().block(sel.offset, col_offset, d, cols),
               {layer.tags().begin() + sel.offset, layer.tags().begin() + sel.offset + d},
               std::nullopt,
               sel};
  if (layer.has_sls()) v.sls.emplace(layer.sls().block(0, sel.offset, 1, d));
  return v;
}

Supernet::Supernet(const SearchSpace& space, const ModelMeta& meta, std::uint64_t seed,
                   double sls_init)
    : space_(space), meta_(meta) {
  space_.validate();
  const int e = space_.max_embed();
  const int h = space_.max_hidden();
  const int m = space_.max_mlp();
  const double rho = space_.max_ratio();
  Rng rng(seed);

  w_embed_ = gaussian(rng, e, meta.token_dim, 1.0 / std::sqrt(meta.token_dim));
  b_embed_ = Matrix::Zero(1, e);
  for (int i = 0; i < space_.max_depth(); ++i) {
    SupernetBlock b;
    b.q = EntangledLayer(h, rho, e, false);
    b.k = EntangledLayer(h, rho, e, false);
    b.v = EntangledLayer(h, rho, e, false);
    b.proj = EntangledLayer(e, rho, b.v.super_rows(), true);
    b.mlp1 = EntangledLayer(m, rho, e, false);
    b.mlp2 = EntangledLayer(e, rho, b.mlp1.super_rows(), true);
    for (auto* l : {&b.q, &b.k, &b.v, &b.mlp1})
      l->latent() = gaussian(rng, l->super_rows(), e, 1.0 / std::sqrt(e));
    b.proj.latent() = gaussian(rng, b.proj.super_rows(), b.proj.cols(), 1.0 / std::sqrt(h));
    b.mlp2.latent() = gaussian(rng, b.mlp2.super_rows(), b.mlp2.cols(), 1.0 / std::sqrt(m));
    b.proj.sls().setConstant(sls_init);
    b.mlp2.sls().setConstant(sls_init);
    b.ln1_g = Matrix::Ones(1, e);
    b.ln1_b = Matrix::Zero(1, e);
    b.ln2_g = Matrix::Ones(1, e);
    b.ln2_b = Matrix::Zero(1, e);
    blocks_.push_back(std::move(b));
  }
  norm_g_ = Matrix::Ones(1, e);
  norm_b_ = Matrix::Zero(1, e);
  w_head_ = gaussian(rng, meta.num_classes, e, 1.0 / std::sqrt(e));
  b_head_ = Matrix::Zero(1, meta.num_classes);
}

void Supernet::for_each_tensor(
    const std::function<void(const std::string&, Matrix&, const std::vector<Precision>*)>& fn) {
  fn("embed.w", w_embed_, nullptr);
  fn("embed.b", b_embed_, nullptr);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    auto& b = blocks_[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    fn(p + "ln1.g", b.ln1_g, nullptr);
    fn(p + "ln1.b", b.ln1_b, nullptr);
    fn(p + "q", b.q.latent(), &b.q.tags());
    fn(p + "k", b.k.latent(), &b.k.tags());
    fn(p + "v", b.v.latent(), &b.v.tags());
    fn(p + "proj", b.proj.latent(), &b.proj.tags());
    fn(p + "proj.sls", b.proj.sls(), nullptr);
    fn(p + "ln2.g", b.ln2_g, nullptr);
    fn(p + "ln2.b", b.ln2_b, nullptr);
    fn(p + "mlp1", b.mlp1.latent(), &b.mlp1.tags());
    fn(p + "mlp2", b.mlp2.latent(), &b.mlp2.tags());
    fn(p + "mlp2.sls", b.mlp2.sls(), nullptr);
  }
  fn("norm.g", norm_g_, nullptr);
  fn("norm.b", norm_b_, nullptr);
  fn("head.w", w_head_, nullptr);
  fn("head.b", b_head_, nullptr);
}

void Supernet::for_each_tensor(
    const std::function<void(const std::string&, const Matrix&, const std::vector<Precision>*)>& fn)
    const {
  const_cast<Supernet*>(this)->for_each_tensor(
      [&](const std::string& n, Matrix& m, const std::vector<Precision>* t) { fn(n, m, t); });
}

// Maps rows of dense subnet tensors onto supernet regions.
struct Supernet::Windows {
  struct Binding {
    std::string dense;
    int dense_row0 = 0;
    Region region;
  };
  std::vector<Binding> bindings;
};

Supernet::Windows Supernet::windows(const SubnetConfig& cfg) const {
  if (!in_space(cfg, space_)) throw std::invalid_argument("subnet not in the search space: " + cfg.key());
  const int e = cfg.embed_dim;
  Windows w;
  auto bind = [&](std::string dense, int dense_row0, std::string tensor, int r0, int rows, int c0,
                  int cols) {
    w.bindings.push_back({std::move(dense), dense_row0, Region{std::move(tensor), r0, rows, c0, cols}});
  };
  bind("embed.w", 0, "embed.w", 0, e, 0, meta_.token_dim);
  bind("embed.b", 0, "embed.b", 0, 1, 0, e);
  for (int i = 0; i < cfg.depth(); ++i) {
    const auto& l = cfg.layers[std::size_t(i)];
    const auto& b = blocks_[std::size_t(i)];
    const int h = l.hidden_dim;
    const int m = l.mlp_dim(e);
    const std::string d = "blocks." + std::to_string(i) + ".";
    const auto sq = b.q.select(h, l.mixed_ratio);
    const auto sp = b.proj.select(e, l.mixed_ratio);
    const auto s1 = b.mlp1.select(m, l.mixed_ratio);
    const auto s2 = b.mlp2.select(e, l.mixed_ratio);
    bind(d + "ln1.g", 0, d + "ln1.g", 0, 1, 0, e);
    bind(d + "ln1.b", 0, d + "ln1.b", 0, 1, 0, e);
    bind(d + "qkv", 0, d + "q", sq.offset, h, 0, e);
    bind(d + "qkv", h, d + "k", sq.offset, h, 0, e);
    bind(d + "qkv", 2 * h, d + "v", sq.offset, h, 0, e);
    bind(d + "proj", 0, d + "proj", sp.offset, e, sq.offset, h);
    bind(d + "sls_msa", 0, d + "proj.sls", 0, 1, sp.offset, e);
    bind(d + "ln2.g", 0, d + "ln2.g", 0, 1, 0, e);
    bind(d + "ln2.b", 0, d + "ln2.b", 0, 1, 0, e);
    bind(d + "mlp1", 0, d + "mlp1", s1.offset, m, 0, e);
    bind(d + "mlp2", 0, d + "mlp2", s2.offset, e, s1.offset, m);
    bind(d + "sls_mlp", 0, d + "mlp2.sls", 0, 1, s2.offset, e);
  }
  bind("norm.g", 0, "norm.g", 0, 1, 0, e);
  bind("norm.b", 0, "norm.b", 0, 1, 0, e);
  bind("head.w", 0, "head.w", 0, meta_.num_classes, 0, e);
  bind("head.b", 0, "head.b", 0, 1, 0, meta_.num_classes);
  return w;
}

std::vector<Region> Supernet::regions(const SubnetConfig& cfg) const {
  std::vector<Region> out;
  for (const auto& b : windows(cfg).bindings) out.push_back(b.region);
  return out;
}

ViTParams Supernet::extract(const SubnetConfig& cfg) const {
  const int e = cfg.embed_dim;
  ViTParams p;
  p.heads = space_.heads;
  p.w_embed.resize(e, meta_.token_dim);
  p.b_embed.resize(1, e);
  for (int i = 0; i < cfg.depth(); ++i) {
    const auto& l = cfg.layers[std::size_t(i)];
    const auto& sb = blocks_[std::size_t(i)];
    const int h = l.hidden_dim;
    const int m = l.mlp_dim(e);
    BlockParams b;
    b.w_qkv.resize(3 * h, e);
    b.w_proj.resize(e, h);
    b.w_mlp1.resize(m, e);
    b.w_mlp2.resize(e, m);
    for (Matrix* v : {&b.ln1_g, &b.ln1_b, &b.ln2_g, &b.ln2_b, &b.sls_msa, &b.sls_mlp}) v->resize(1, e);
    auto window_tags = [](const EntangledLayer& layer, int d, double rho) {
      const auto s = layer.select(d, rho);
      return std::vector<Precision>(layer.tags().begin() + s.offset,
                                    layer.tags().begin() + s.offset + d);
    };
    for (const auto* layer : {&sb.q, &sb.k, &sb.v}) {
      const auto t = window_tags(*layer, h, l.mixed_ratio);
      b.tags_qkv.insert(b.tags_qkv.end(), t.begin(), t.end());
    }
    b.tags_proj = window_tags(sb.proj, e, l.mixed_ratio);
    b.tags_mlp1 = window_tags(sb.mlp1, m, l.mixed_ratio);
    b.tags_mlp2 = window_tags(sb.mlp2, e, l.mixed_ratio);
    p.blocks.push_back(std::move(b));
  }
  p.norm_g.resize(1, e);
  p.norm_b.resize(1, e);
  p.w_head.resize(meta_.num_classes, e);
  p.b_head.resize(1, meta_.num_classes);

  std::map<std::string, const Matrix*> src;
  for_each_tensor([&](const std::string& n, const Matrix& m, const std::vector<Precision>*) { src[n] = &m; });
  std::map<std::string, Matrix*> dst;
  for_each_param(p, [&](const std::string& n, Matrix& m) { dst[n] = &m; });
  for (const auto& b : windows(cfg).bindings) {
    const auto& r = b.region;
    dst.at(b.dense)->middleRows(b.dense_row0, r.rows) = src.at(r.tensor)->block(r.row0, r.col0, r.rows, r.cols);
  }
  p.validate();
  return p;
}

void Supernet::scatter_add(const SubnetConfig& cfg, const ViTParams& delta) {
  std::map<std::string, Matrix*> dst;
  for_each_tensor([&](const std::string& n, Matrix& m, const std::vector<Precision>*) { dst[n] = &m; });
  std::map<std::string, const Matrix*> src;
  for_each_param(delta, [&](const std::string& n, const Matrix& m) { src[n] = &m; });
  for (const auto& b : windows(cfg).bindings) {
    const auto& r = b.region;
    const Matrix& d = *src.at(b.dense);
    if (d.cols() != r.cols || d.rows() < b.dense_row0 + r.rows)
      throw std::invalid_argument("update does not match the subnet shape");
    dst.at(r.tensor)->block(r.row0, r.col0, r.rows, r.cols) += d.middleRows(b.dense_row0, r.rows);
  }
}

void Supernet::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  Json tensors = Json::array();
  for_each_tensor([&](const std::string& name, const Matrix& m, const std::vector<Precision>* tags) {
    auto t = qvt::from_matrix(m);
    if (tags) t.tags = *tags;
    const std::string file = name + ".qvt";
    qvt::write_file(dir / file, t);
    tensors.push_back({{"name", name}, {"file", file}});
  });
  const Json manifest{{"format", "hwvit-supernet"},
                      {"version", kCheckpointVersion},
                      {"space", space_},
                      {"meta", meta_},
                      {"tensors", tensors}};
  write_json_file(dir / "manifest.json", manifest);
}

Supernet Supernet::load(const std::filesystem::path& dir) {
  const Json manifest = read_json_file(dir / "manifest.json");
  if (manifest.value("format", "") != "hwvit-supernet" ||
      manifest.value("version", 0) != kCheckpointVersion)
    throw Error("not a supernet checkpoint: " + dir.string());
  Supernet net(manifest.at("space").get<SearchSpace>(), manifest.at("meta").get<ModelMeta>(), 0);
  std::map<std::string, std::string> files;
  for (const auto& t : manifest.at("tensors")) files[t.at("name").get<std::string>()] = t.at("file");
  net.for_each_tensor([&](const std::string& name, Matrix& m, const std::vector<Precision>* tags) {
    const auto it = files.find(name);
    if (it == files.end()) throw Error("checkpoint is missing tensor " + name);
    const auto t = qvt::read_file(dir / it->second);
    Matrix loaded = qvt::to_matrix(t);
    if (loaded.rows() != m.rows() || loaded.cols() != m.cols())
      throw Error("checkpoint tensor has the wrong shape: " + name);
    if (tags && (!t.tags || *t.tags != *tags))
      throw Error("checkpoint precision zones differ from the search space: " + name);
    m = std::move(loaded);
  });
  return net;
}

SubnetConfig step_subnet(const SearchSpace& space, std::uint64_t seed, std::int64_t step) {
  return sample_subnet(space, derive_seed(seed, 0x5EED0000ull + static_cast<std::uint64_t>(step)));
}

SupernetStep supernet_train_step(Supernet& net, const Dataset& data,
                                 const std::vector<std::size_t>& batch, const TrainConfig& cfg,
                                 std::int64_t step, double lr, const TeacherLogits* teacher) {
  SupernetStep out;
  out.step = step;
  out.lr = lr;
  out.subnet = step_subnet(net.space(), cfg.seed, step);
  const ViTParams p = net.extract(out.subnet);
  auto bg = batch_gradients(p, data, batch, cfg.quant, cfg.kd, teacher);
  out.loss = bg.loss;
  if (!std::isfinite(bg.loss))
    throw Error("supernet training diverged at step " + std::to_string(step) + " on subnet " +
                out.subnet.key());
  clip_global_norm(bg.grads, cfg.grad_clip);
  for_each_param(bg.grads, [&](const std::string&, Matrix& m) { m *= -lr; });
  net.scatter_add(out.subnet, bg.grads);
  return out;
}

void train_supernet(Supernet& net, const Dataset& data, const SupernetTrainConfig& cfg,
                    const TeacherLogits* teacher,
                    const std::function<void(const SupernetStep&)>& on_report) {
  const auto& tc = cfg.train;
  tc.validate();
  const auto per_epoch = static_cast<std::int64_t>(
      (data.train.size() + std::size_t(tc.batch_size) - 1) / std::size_t(tc.batch_size));
  const std::int64_t total = per_epoch * tc.epochs;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    double loss = 0.0;
    std::int64_t count = 0;
    SupernetStep last;
    for (const auto& batch : epoch_batches(data, tc.batch_size, tc.seed, epoch)) {
      last = supernet_train_step(net, data, batch, tc, step, cosine_lr(tc.lr, tc.min_lr, step, total),
                                 teacher);
      last.epoch = epoch;
      loss += last.loss;
      ++count;
      ++step;
      if (on_report && cfg.report_every > 0 && step % cfg.report_every == 0) on_report(last);
    }
    if (on_report && cfg.report_every == 0) {
      last.loss = loss / static_cast<double>(std::max<std::int64_t>(count, 1));
      on_report(last);
    }
  }
}

double subnet_accuracy(const Supernet& net, const SubnetConfig& cfg, const Dataset& data,
                       const std::vector<std::size_t>& split, const QuantOptions& q) {
  return evaluate(net.extract(cfg), data, split, q);
}

}  // namespace hwvit
