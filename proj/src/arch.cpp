#include "hwvit/arch.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "hwvit/quant.hpp"

namespace hwvit {

namespace {

constexpr double kIntegralTol = 1e-9;

int checked_integral(double v, const char* what) {
  const double r = std::round(v);
  if (std::abs(v - r) > kIntegralTol) throw std::invalid_argument(what);
  return static_cast<int>(r);
}

template <typename T>
void require_nonempty(const std::vector<T>& v, const char* name) {
  if (v.empty()) throw std::invalid_argument(std::string("search space list is empty: ") + name);
}

template <typename T>
bool contains(const std::vector<T>& v, T x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

int w8_row_count(int dim, double rho) {
  return checked_integral(rho * dim, "infeasible ratio/dim pair");
}

int LayerGenes::mlp_dim(int embed_dim) const {
  return checked_integral(expansion_ratio * embed_dim, "non-integral MLP width");
}

void SearchSpace::validate() const {
  require_nonempty(embed_dims, "embed_dims");
  require_nonempty(hidden_dims, "hidden_dims");
  require_nonempty(mixed_ratios, "mixed_ratios");
  require_nonempty(expansion_ratios, "expansion_ratios");
  require_nonempty(depths, "depths");
  if (heads < 1) throw std::invalid_argument("heads must be positive");
  for (int d : embed_dims)
    if (d < 1) throw std::invalid_argument("embed dims must be positive");
  for (int d : depths)
    if (d < 1) throw std::invalid_argument("depths must be positive");
  for (int h : hidden_dims)
    if (h < 1 || h % heads != 0)
      throw std::invalid_argument("hidden dims must be positive multiples of the head count");
  for (double r : mixed_ratios)
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("mixed ratios must lie in [0, 1]");
  for (double e : expansion_ratios)
    if (!(e > 0.0)) throw std::invalid_argument("expansion ratios must be positive");

  for (double r : mixed_ratios) {
    for (int e : embed_dims) {
      w8_row_count(e, r);
      for (double x : expansion_ratios) w8_row_count(LayerGenes{0, x, r}.mlp_dim(e), r);
    }
    for (int h : hidden_dims) w8_row_count(h, r);
  }
}

int SearchSpace::max_embed() const { return *std::max_element(embed_dims.begin(), embed_dims.end()); }
int SearchSpace::max_hidden() const {
  return *std::max_element(hidden_dims.begin(), hidden_dims.end());
}
int SearchSpace::max_mlp() const {
  int best = 0;
  for (int e : embed_dims)
    for (double x : expansion_ratios) best = std::max(best, LayerGenes{0, x, 0}.mlp_dim(e));
  return best;
}
int SearchSpace::max_depth() const { return *std::max_element(depths.begin(), depths.end()); }
double SearchSpace::max_ratio() const {
  return *std::max_element(mixed_ratios.begin(), mixed_ratios.end());
}
std::size_t SearchSpace::layer_choice_count() const {
  return hidden_dims.size() * expansion_ratios.size() * mixed_ratios.size();
}

std::string SubnetConfig::key() const {
  std::ostringstream os;
  os << "e" << embed_dim << "|d" << depth();
  for (const auto& l : layers)
    os << "|" << l.hidden_dim << "," << l.expansion_ratio << "," << l.mixed_ratio;
  return os.str();
}

bool in_space(const SubnetConfig& c, const SearchSpace& space) {
  if (!contains(space.embed_dims, c.embed_dim) || !contains(space.depths, c.depth())) return false;
  return std::all_of(c.layers.begin(), c.layers.end(), [&](const LayerGenes& l) {
    return contains(space.hidden_dims, l.hidden_dim) &&
           contains(space.expansion_ratios, l.expansion_ratio) &&
           contains(space.mixed_ratios, l.mixed_ratio);
  });
}

LayerGenes sample_layer(const SearchSpace& space, Rng& rng) {
  LayerGenes l;
  l.hidden_dim = space.hidden_dims[uniform_index(rng, space.hidden_dims.size())];
  l.expansion_ratio = space.expansion_ratios[uniform_index(rng, space.expansion_ratios.size())];
  l.mixed_ratio = space.mixed_ratios[uniform_index(rng, space.mixed_ratios.size())];
  return l;
}

SubnetConfig sample_subnet(const SearchSpace& space, Rng& rng) {
  SubnetConfig c;
  c.embed_dim = space.embed_dims[uniform_index(rng, space.embed_dims.size())];
  const int depth = space.depths[uniform_index(rng, space.depths.size())];
  c.layers.resize(static_cast<std::size_t>(depth));
  for (auto& l : c.layers) l = sample_layer(space, rng);
  return c;
}

SubnetConfig sample_subnet(const SearchSpace& space, std::uint64_t seed) {
  Rng rng(seed);
  return sample_subnet(space, rng);
}

SubnetConfig largest_subnet(const SearchSpace& space) {
  SubnetConfig c;
  c.embed_dim = space.max_embed();
  const double max_exp = *std::max_element(space.expansion_ratios.begin(), space.expansion_ratios.end());
  c.layers.assign(static_cast<std::size_t>(space.max_depth()),
                  LayerGenes{space.max_hidden(), max_exp, space.max_ratio()});
  return c;
}

ModelStats model_stats(const SubnetConfig& c, const ModelMeta& meta, int act_bits) {
  ModelStats s;
  const double e = c.embed_dim;
  const double f = meta.tokens;
  auto add = [&](double params, double macs, double rho) {
    s.params += params;
    s.macs += macs;
    s.w8_params += rho * params;
    s.w8_macs += rho * macs;
  };
  // Token embedding (weights + bias), per-token.
  add(meta.token_dim * e + e, f * meta.token_dim * e, 1.0);
  for (const auto& l : c.layers) {
    const double h = l.hidden_dim;
    const double m = l.mlp_dim(c.embed_dim);
    add(3 * h * e, f * 3 * h * e, l.mixed_ratio);  // qkv
    add(e * h, f * e * h, l.mixed_ratio);          // proj
    add(m * e, f * m * e, l.mixed_ratio);          // mlp1
    add(e * m, f * e * m, l.mixed_ratio);          // mlp2
    add(0, 2 * f * f * h, 1.0);                    // attention scores and values
    add(4 * e + 2 * e, 0, 1.0);                    // two layer norms, two layer scales
  }
  add(2 * e, 0, 1.0);                                                    // final norm
  add(meta.num_classes * e + meta.num_classes, meta.num_classes * e, 1.0);  // classifier
  s.mixed_ratio = s.params > 0 ? s.w8_params / s.params : 0.0;
  s.size_bytes = model_size_bytes(s.params, s.mixed_ratio);
  s.bops = bops(s.macs, s.macs > 0 ? s.w8_macs / s.macs : 0.0, act_bits);
  return s;
}

}  // namespace hwvit
