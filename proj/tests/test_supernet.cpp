#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "hwvit/supernet.hpp"
#include "support/toy.hpp"

using namespace hwvit;

namespace {

using Snapshot = std::map<std::string, Matrix>;

Snapshot snapshot(const Supernet& net) {
  Snapshot s;
  net.for_each_tensor([&](const std::string& n, const Matrix& m, const std::vector<Precision>*) { s[n] = m; });
  return s;
}

std::map<std::string, std::vector<Precision>> all_tags(const Supernet& net) {
  std::map<std::string, std::vector<Precision>> out;
  net.for_each_tensor([&](const std::string& n, const Matrix&, const std::vector<Precision>* t) {
    if (t) out[n] = *t;
  });
  return out;
}

using Entry = std::tuple<std::string, int, int>;

std::set<Entry> covered(const std::vector<Region>& regions) {
  std::set<Entry> out;
  for (const auto& r : regions)
    for (int i = 0; i < r.rows; ++i)
      for (int j = 0; j < r.cols; ++j) out.emplace(r.tensor, r.row0 + i, r.col0 + j);
  return out;
}

std::set<Entry> changed(const Snapshot& a, const Snapshot& b) {
  std::set<Entry> out;
  for (const auto& [name, m] : a) {
    const Matrix& n = b.at(name);
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j)
        if (std::memcmp(&m(i, j), &n(i, j), sizeof(double)) != 0) out.emplace(name, i, j);
  }
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

Dataset small_data() {
  DatasetConfig dc;
  dc.num_samples = 200;
  return make_dataset(dc);
}

}  // namespace

TEST_CASE("window offset follows the 8-bit overlap") {
  EntangledLayer layer(32, 0.5, 4, true);
  CHECK(layer.zone_rows() == 16);
  CHECK(layer.super_rows() == 48);

  const auto s = layer.select(16, 0.25);
  CHECK(s.offset == 12);
  CHECK(s.length == 16);
  CHECK(s.w8_rows == 4);
  CHECK(s.achieved_ratio == 0.25);
  auto v = extract_window(layer, 16, 0.25, 0, 4);
  for (int i = 0; i < 16; ++i) CHECK(v.tags[std::size_t(i)] == (i < 4 ? Precision::W8 : Precision::W4));

  const auto zero = layer.select(20, 0.0);
  CHECK(zero.offset == 16);
  CHECK(zero.w8_rows == 0);

  const auto full = layer.select(32, 0.5);
  CHECK(full.offset == 0);
  CHECK(full.w8_rows == 16);

  CHECK_THROWS_WITH(layer.select(10, 0.25), "infeasible ratio/dim pair");
  CHECK_THROWS_AS(layer.select(33, 0.0), std::out_of_range);
  CHECK_THROWS_AS(extract_window(layer, 16, 0.0, 2, 4), std::out_of_range);
}

TEST_CASE("window views alias supernet storage") {
  EntangledLayer layer(8, 0.5, 3, true);
  auto v = extract_window(layer, 4, 0.5, 1, 2);
  v.weights(0, 0) = 7.0;
  v.sls->coeffRef(0, 1) = -2.0;
  CHECK(layer.latent()(v.selection.offset, 1) == 7.0);
  CHECK(layer.sls()(0, v.selection.offset + 1) == -2.0);
}

TEST_CASE("extract reads the selected windows") {
  const auto space = toy::space();
  Supernet net(space, {}, 5);
  const SubnetConfig cfg{24, {{16, 2.0, 0.25}, {32, 4.0, 0.5}}};
  const auto p = net.extract(cfg);
  CHECK_NOTHROW(p.validate());
  CHECK(p.heads == 2);
  const auto& b = net.blocks()[0];
  const int off = b.q.select(16, 0.25).offset;
  CHECK(p.blocks[0].w_qkv.topRows(16) == b.q.latent().block(off, 0, 16, 24));
  CHECK(p.blocks[0].w_qkv.bottomRows(16) == b.v.latent().block(off, 0, 16, 24));
  const int poff = b.proj.select(24, 0.25).offset;
  CHECK(p.blocks[0].w_proj == b.proj.latent().block(poff, off, 24, 16));
  CHECK(p.blocks[0].sls_msa == b.proj.sls().middleCols(poff, 24));
  CHECK(p.blocks[0].tags_qkv == ratio_tags(16, 0.25, 3));
  CHECK(p.blocks[1].tags_mlp1 == ratio_tags(96, 0.5));
  CHECK(p.blocks[1].tags_mlp2 == ratio_tags(24, 0.5));

  CHECK_THROWS(net.extract(SubnetConfig{20, {{16, 2.0, 0.0}}}));
}

TEST_CASE("scatter_add inverts extract on the windows") {
  Supernet net(toy::space(), {}, 5);
  const SubnetConfig cfg{16, {{32, 2.0, 0.5}}};
  const auto before = net.extract(cfg);
  auto delta = before.zeros_like();
  for_each_param(delta, [](const std::string&, Matrix& m) { m.setConstant(0.5); });
  net.scatter_add(cfg, delta);
  const auto after = net.extract(cfg);
  std::vector<const Matrix*> a;
  for_each_param(after, [&](const std::string&, const Matrix& m) { a.push_back(&m); });
  std::size_t k = 0;
  for_each_param(before, [&](const std::string& name, const Matrix& m) {
    INFO(name);
    CHECK(((*a[k++] - m).array() - 0.5).abs().maxCoeff() < 1e-12);
  });
}

TEST_CASE("one training step changes exactly the sampled windows") {
  const auto data = small_data();
  Supernet net(toy::space(), {}, 9);
  TrainConfig tc;
  tc.seed = 4;
  for (std::int64_t step = 0; step < 6; ++step) {
    const auto before = snapshot(net);
    const auto st = supernet_train_step(net, data, {0, 1, 2, 3, 4, 5, 6, 7}, tc, step, 0.05, nullptr);
    const auto diff = changed(before, snapshot(net));
    const auto window = covered(net.regions(st.subnet));
    INFO(st.subnet.key());
    CHECK(std::includes(window.begin(), window.end(), diff.begin(), diff.end()));
    CHECK(diff == window);
  }
}

TEST_CASE("precision zones survive training and checkpoints") {
  const auto data = small_data();
  Supernet net(toy::space(), {}, 2);
  const auto tags = all_tags(net);
  SupernetTrainConfig cfg;
  cfg.train.epochs = 2;
  cfg.train.seed = 1;
  train_supernet(net, data, cfg);
  CHECK(all_tags(net) == tags);

  const auto dir = std::filesystem::temp_directory_path() / "hwvit_test_supernet_ckpt";
  std::filesystem::remove_all(dir);
  net.save(dir);
  const auto loaded = Supernet::load(dir);
  CHECK(all_tags(loaded) == tags);
  const auto a = snapshot(net);
  const auto b = snapshot(loaded);
  for (const auto& [name, m] : a) {
    INFO(name);
    CHECK((m - b.at(name)).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, m.cwiseAbs().maxCoeff()));
  }
  const auto dir2 = dir.string() + "_again";
  std::filesystem::remove_all(dir2);
  loaded.save(dir2);
  for (const auto& e : std::filesystem::directory_iterator(dir))
    CHECK(slurp(e.path()) == slurp(std::filesystem::path(dir2) / e.path().filename()));
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("supernet training is deterministic") {
  const auto data = small_data();
  SupernetTrainConfig cfg;
  cfg.train.epochs = 1;
  cfg.train.seed = 8;
  Supernet a(toy::space(), {}, 3), b(toy::space(), {}, 3);
  train_supernet(a, data, cfg);
  train_supernet(b, data, cfg);
  CHECK(changed(snapshot(a), snapshot(b)).empty());
  const auto cfg0 = largest_subnet(toy::space());
  CHECK(subnet_accuracy(a, cfg0, data, data.val) == subnet_accuracy(a, cfg0, data, data.val));
}

TEST_CASE("subnet sampling is uniform and reproducible") {
  const auto space = toy::space();
  std::map<double, int> ratio_counts;
  int deep = 0;
  Rng rng(123);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto c = sample_subnet(space, rng);
    CHECK(in_space(c, space));
    ratio_counts[c.layers[0].expansion_ratio]++;
    deep += c.layers[0].hidden_dim == 32;
  }
  CHECK(std::abs(ratio_counts[2.0] / double(n) - 0.5) <= 0.02);
  CHECK(std::abs(deep / double(n) - 0.5) <= 0.02);

  CHECK(sample_subnet(space, 42) == sample_subnet(space, 42));
  CHECK(step_subnet(space, 1, 10) == step_subnet(space, 1, 10));
  CHECK_FALSE(sample_subnet(space, 1) == sample_subnet(space, 2));

  SearchSpace single;
  single.embed_dims = {16};
  single.hidden_dims = {8};
  single.mixed_ratios = {0.25};
  single.expansion_ratios = {2.0};
  single.depths = {2};
  single.heads = 2;
  const SubnetConfig only{16, {{8, 2.0, 0.25}, {8, 2.0, 0.25}}};
  for (std::uint64_t s = 0; s < 5; ++s) CHECK(sample_subnet(single, s) == only);
}
