#include "hwvit/json_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "hwvit/common.hpp"

namespace hwvit {

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

void write_json_file(const std::filesystem::path& path, const Json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << dump_json(j);
}

void require_known_keys(const Json& j, std::initializer_list<const char*> allowed,
                        const char* context) {
  if (!j.is_object()) throw std::invalid_argument(std::string(context) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw std::invalid_argument(std::string("unknown key '") + key + "' in " + context);
  }
}

void to_json(Json& j, const SearchSpace& s) {
  j = Json{{"embed_dims", s.embed_dims},     {"hidden_dims", s.hidden_dims},
           {"mixed_ratios", s.mixed_ratios}, {"expansion_ratios", s.expansion_ratios},
           {"depths", s.depths},             {"heads", s.heads}};
}

void from_json(const Json& j, SearchSpace& s) {
  require_known_keys(j,
                     {"embed_dims", "hidden_dims", "mixed_ratios", "expansion_ratios", "depths",
                      "heads"},
                     "search space");
  j.at("embed_dims").get_to(s.embed_dims);
  j.at("hidden_dims").get_to(s.hidden_dims);
  if (j.contains("mixed_ratios")) j.at("mixed_ratios").get_to(s.mixed_ratios);
  j.at("expansion_ratios").get_to(s.expansion_ratios);
  j.at("depths").get_to(s.depths);
  if (j.contains("heads")) j.at("heads").get_to(s.heads);
  s.validate();
}

void to_json(Json& j, const LayerGenes& g) {
  j = Json{{"hidden_dim", g.hidden_dim},
           {"expansion_ratio", g.expansion_ratio},
           {"mixed_ratio", g.mixed_ratio}};
}

void from_json(const Json& j, LayerGenes& g) {
  require_known_keys(j, {"hidden_dim", "expansion_ratio", "mixed_ratio"}, "layer genes");
  j.at("hidden_dim").get_to(g.hidden_dim);
  j.at("expansion_ratio").get_to(g.expansion_ratio);
  j.at("mixed_ratio").get_to(g.mixed_ratio);
}

void to_json(Json& j, const SubnetConfig& c) {
  j = Json{{"embed_dim", c.embed_dim}, {"layers", c.layers}};
}

void from_json(const Json& j, SubnetConfig& c) {
  require_known_keys(j, {"embed_dim", "layers", "depth"}, "subnet config");
  j.at("embed_dim").get_to(c.embed_dim);
  j.at("layers").get_to(c.layers);
  if (j.contains("depth") && j.at("depth").get<int>() != c.depth())
    throw std::invalid_argument("subnet depth does not match its layer list");
}

void to_json(Json& j, const ModelMeta& m) {
  j = Json{{"tokens", m.tokens}, {"token_dim", m.token_dim}, {"num_classes", m.num_classes}};
}

void from_json(const Json& j, ModelMeta& m) {
  require_known_keys(j, {"tokens", "token_dim", "num_classes"}, "model meta");
  if (j.contains("tokens")) j.at("tokens").get_to(m.tokens);
  if (j.contains("token_dim")) j.at("token_dim").get_to(m.token_dim);
  if (j.contains("num_classes")) j.at("num_classes").get_to(m.num_classes);
  if (m.tokens < 1 || m.token_dim < 1 || m.num_classes < 2)
    throw std::invalid_argument("invalid model meta");
}

void to_json(Json& j, const ModelStats& s) {
  j = Json{{"params", s.params},           {"macs", s.macs},
           {"mixed_ratio", s.mixed_ratio}, {"model_size_bytes", s.size_bytes},
           {"bops", s.bops}};
}

namespace hw {

void to_json(Json& j, const HardwareProfile& p) {
  j = Json{{"s_dsp", p.s_dsp},         {"s_lut", p.s_lut},     {"gamma_dsp", p.gamma_dsp},
           {"gamma_lut", p.gamma_lut}, {"axi_in", p.axi_in},   {"axi_wgt", p.axi_wgt},
           {"axi_out", p.axi_out},     {"d_act", p.d_act},     {"d_wgt", p.d_wgt},
           {"freq_hz", p.freq_hz}};
}

void from_json(const Json& j, HardwareProfile& p) {
  require_known_keys(j,
                     {"name", "s_dsp", "s_lut", "gamma_dsp", "gamma_lut", "axi_in", "axi_wgt",
                      "axi_out", "d_act", "d_wgt", "freq_hz"},
                     "hardware profile");
  j.at("s_dsp").get_to(p.s_dsp);
  j.at("s_lut").get_to(p.s_lut);
  if (j.contains("gamma_dsp")) j.at("gamma_dsp").get_to(p.gamma_dsp);
  if (j.contains("gamma_lut")) j.at("gamma_lut").get_to(p.gamma_lut);
  j.at("axi_in").get_to(p.axi_in);
  j.at("axi_wgt").get_to(p.axi_wgt);
  j.at("axi_out").get_to(p.axi_out);
  j.at("d_act").get_to(p.d_act);
  j.at("d_wgt").get_to(p.d_wgt);
  j.at("freq_hz").get_to(p.freq_hz);
  p.validate();
}

namespace {
constexpr QuantMode kModes[] = {QuantMode::W4A6, QuantMode::W8A6, QuantMode::W8A6Direct};
constexpr Impl kImpls[] = {Impl::Lut, Impl::Pack3, Impl::Pack4};
}  // namespace

void to_json(Json& j, const CostTable& c) {
  j = Json::object();
  for (auto m : kModes)
    for (auto i : kImpls) {
      const auto& u = c.at(m, i);
      j[std::string(to_string(m))][std::string(to_string(i))] = {{"c_lut", u.c_lut},
                                                                 {"c_dsp", u.c_dsp}};
    }
}

void from_json(const Json& j, CostTable& c) {
  require_known_keys(j, {"W4A6", "W8A6", "W8A6-direct"}, "cost table");
  for (auto m : kModes) {
    const std::string mk(to_string(m));
    if (!j.contains(mk)) continue;
    require_known_keys(j.at(mk), {"lut", "pack3", "pack4"}, "cost table mode");
    for (auto i : kImpls) {
      const std::string ik(to_string(i));
      if (!j.at(mk).contains(ik)) continue;
      const auto& e = j.at(mk).at(ik);
      require_known_keys(e, {"c_lut", "c_dsp"}, "cost table entry");
      auto& u = c.at(m, i);
      if (e.contains("c_lut")) e.at("c_lut").get_to(u.c_lut);
      if (e.contains("c_dsp")) e.at("c_dsp").get_to(u.c_dsp);
    }
  }
  c.validate();
}

void to_json(Json& j, const ComputePlan& p) {
  j = Json{{"strategy", std::string(to_string(p.strategy))},
           {"situation", p.situation},
           {"mode", std::string(to_string(p.mode))},
           {"n_dsp", p.n_dsp},
           {"n_lut", p.n_lut},
           {"n_tot", p.n_tot}};
}

void to_json(Json& j, const ResourceUsage& r) {
  j = Json{{"dsp_used", r.dsp_used},
           {"lut_used", r.lut_used},
           {"dsp_utilization", r.dsp_fraction},
           {"lut_utilization", r.lut_fraction}};
}

void to_json(Json& j, const LayerShape& s) {
  j = Json{{"m", s.m}, {"n", s.n}, {"f", s.f}, {"n_h", s.n_h}};
}

void from_json(const Json& j, LayerShape& s) {
  require_known_keys(j, {"name", "m", "n", "f", "n_h", "mixed_ratio"}, "layer");
  j.at("m").get_to(s.m);
  j.at("n").get_to(s.n);
  j.at("f").get_to(s.f);
  s.n_h = j.value("n_h", std::int64_t{1});
  s.validate();
}

void to_json(Json& j, const TileConfig& t) { j = Json{{"t_n", t.t_n}, {"t_m", t.t_m}, {"p_f", t.p_f}}; }

void from_json(const Json& j, TileConfig& t) {
  require_known_keys(j, {"t_n", "t_m", "p_f"}, "tile");
  j.at("t_n").get_to(t.t_n);
  j.at("t_m").get_to(t.t_m);
  j.at("p_f").get_to(t.p_f);
  if (t.t_n < 1 || t.t_m < 1 || t.p_f < 1) throw std::invalid_argument("tile sizes must be positive");
}

void to_json(Json& j, const FpsEstimate& e) {
  Json layers = Json::array();
  for (const auto& l : e.layers) {
    layers.push_back({{"name", l.name},
                      {"shape", l.shape},
                      {"tile", l.tile},
                      {"l_in", l.cycles.tile.l_in},
                      {"l_wgt", l.cycles.tile.l_wgt},
                      {"l_out", l.cycles.tile.l_out},
                      {"l_cmpt", l.cycles.tile.l_cmpt},
                      {"l1", l.cycles.l1},
                      {"l2", l.cycles.l2},
                      {"cycles", l.cycles.total}});
  }
  j = Json{{"fps", e.fps},
           {"total_cycles", e.total_cycles},
           {"plan", e.plan},
           {"resources", e.resources},
           {"layers", layers}};
}

}  // namespace hw

}  // namespace hwvit
