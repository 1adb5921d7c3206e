#include "hwvit/cli.hpp"

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>

#include "hwvit/arch.hpp"
#include "hwvit/common.hpp"
#include "hwvit/dsp.hpp"
#include "hwvit/evo.hpp"
#include "hwvit/hw_model.hpp"
#include "hwvit/json_io.hpp"
#include "hwvit/manifest.hpp"
#include "hwvit/quant.hpp"
#include "hwvit/qvt.hpp"
#include "hwvit/supernet.hpp"
#include "hwvit/train.hpp"
#include "hwvit/vit.hpp"

namespace fs = std::filesystem;

namespace hwvit::cli {

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitError = 2;

struct DataOptions {
  std::uint64_t seed = 7;
  int samples = 1000;
  double noise = 1.5;

  void add_to(CLI::App& app) {
    app.add_option("--data-seed", seed, "Synthetic dataset seed")->capture_default_str();
    app.add_option("--samples", samples, "Synthetic dataset size")->capture_default_str();
    app.add_option("--noise", noise, "Synthetic dataset noise std")->capture_default_str();
  }

  Dataset make() const {
    DatasetConfig c;
    c.seed = seed;
    c.num_samples = samples;
    c.noise = noise;
    return make_dataset(c);
  }

  Json to_json() const { return {{"seed", seed}, {"samples", samples}, {"noise", noise}}; }
};

struct HwOptions {
  std::string profile;
  std::string costs;
  std::string tiles;
  bool auto_tile = false;
  std::string rule = "verbatim";

  void add_to(CLI::App& app) {
    app.add_option("--hw-profile", profile, "Hardware profile JSON")->required()->check(CLI::ExistingFile);
    app.add_option("--costs", costs, "Cost table JSON overriding the defaults")->check(CLI::ExistingFile);
    app.add_option("--tiles", tiles, "Tile plan JSON")->check(CLI::ExistingFile);
    app.add_flag("--auto-tile", auto_tile, "Search the tile grid for every layer");
    app.add_option("--rule", rule, "Situation-2 strategy rule")
        ->check(CLI::IsMember({"verbatim", "derived"}))
        ->capture_default_str();
  }

  void record(RunManifest& m) const {
    m.add_input("hw_profile", profile);
    if (!costs.empty()) m.add_input("costs", costs);
    if (!tiles.empty()) m.add_input("tiles", tiles);
  }

  hw::HardwareProfile load_profile() const { return read_json_file(profile).get<hw::HardwareProfile>(); }

  hw::CostTable load_costs() const {
    auto c = hw::CostTable::defaults();
    if (!costs.empty()) hw::from_json(read_json_file(costs), c);
    c.validate();
    return c;
  }

  hw::TilePlan load_tiles() const {
    hw::TilePlan plan;
    plan.auto_tune = auto_tile;
    if (tiles.empty()) return plan;
    const Json j = read_json_file(tiles);
    require_known_keys(j, {"default", "layers"}, "tile plan");
    if (j.contains("default")) plan.default_tile = j.at("default").get<hw::TileConfig>();
    if (j.contains("layers"))
      for (const auto& [name, t] : j.at("layers").items()) plan.per_layer[name] = t.get<hw::TileConfig>();
    return plan;
  }

  evo::HwContext context(const ModelMeta& meta, int heads) const {
    evo::HwContext ctx;
    ctx.profile = load_profile();
    ctx.costs = load_costs();
    ctx.tiles = load_tiles();
    ctx.rule = hw::strategy_rule_from_string(rule);
    ctx.meta = meta;
    ctx.heads = heads;
    return ctx;
  }
};

fs::path manifest_path(const fs::path& out) { return fs::path(out.string() + ".run.json"); }

void finish_manifest(RunManifest& m, const fs::path& out) {
  m.finished_at = utc_timestamp();
  write_json_file(manifest_path(out), m.to_json());
  spdlog::info("wrote {}", manifest_path(out).string());
}

RunManifest start_manifest(const std::string& command, const std::vector<std::string>& args) {
  RunManifest m;
  m.command = command;
  m.args = args;
  m.started_at = utc_timestamp();
  return m;
}

void write_matrix(const fs::path& path, const Matrix& m) { qvt::write_file(path, qvt::from_matrix(m)); }

Json model_report(const SubnetConfig& cfg, const ModelMeta& meta) {
  return Json(model_stats(cfg, meta, 6));
}

Json estimate_report(const hw::FpsEstimate& est) {
  Json j = est;
  return j;
}

// ---------------------------------------------------------------- pack-verify

struct PackVerify {
  std::string mode = "pack";
  int jobs = 1;
  int pack3_lane = 11;
  int pack4_lane = 10;
  std::string out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("pack-verify", "Exhaustive DSP packing equivalence sweeps");
    c->add_option("--mode", mode, "pack: pack3 and pack4 lanes; w8: 8-bit decomposition; all")
        ->check(CLI::IsMember({"pack", "w8", "all"}))
        ->capture_default_str();
    c->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    c->add_option("--pack3-lane-width", pack3_lane, "Override the pack3 lane width")->group("Test hooks");
    c->add_option("--pack4-lane-width", pack4_lane, "Override the pack4 lane width")->group("Test hooks");
    c->add_option("--out", out, "Report JSON");
  }

  int run(const std::vector<std::string>& args, std::ostream& os) const {
    auto manifest = start_manifest("pack-verify", args);
    std::vector<dsp::SweepReport> reports;
    if (mode != "w8") {
      reports.push_back(dsp::sweep_pack3(pack3_lane, jobs));
      reports.push_back(dsp::sweep_pack4(pack4_lane, jobs));
    }
    if (mode != "pack") reports.push_back(dsp::sweep_w8(pack3_lane, jobs));
    bool ok = true;
    std::string line;
    Json j = Json::array();
    for (const auto& r : reports) {
      const std::string what = r.name == "w8" ? "w8 decomposition" : r.name;
      if (!line.empty()) line += ", ";
      if (r.failures == 0) {
        line += std::to_string(r.cases) + " " + what + " cases OK";
      } else {
        ok = false;
        line += std::to_string(r.failures) + " of " + std::to_string(r.cases) + " " + what +
                " cases FAILED (first: " + r.first_failure.value_or("?") + ")";
      }
      j.push_back({{"name", r.name},
                   {"cases", r.cases},
                   {"failures", r.failures},
                   {"first_failure", r.first_failure ? Json(*r.first_failure) : Json(nullptr)}});
    }
    os << line << "\n";
    if (!out.empty()) {
      write_json_file(out, Json{{"sweeps", j}, {"ok", ok}});
      manifest.add_output("report", out);
      manifest.summary = {{"ok", ok}};
      finish_manifest(manifest, out);
    }
    return ok ? 0 : kExitCheckFailed;
  }
};

// ------------------------------------------------------------------- estimate

struct Estimate {
  std::string config;
  std::string layers;
  std::string meta;
  int heads = 4;
  HwOptions hw;
  std::string out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("estimate", "Latency, FPS and resource estimate for one model");
    auto* cfg = c->add_option("--config", config, "Subnet config JSON")->check(CLI::ExistingFile);
    auto* lay = c->add_option("--layers", layers, "Explicit GEMM layer list JSON")->check(CLI::ExistingFile);
    cfg->excludes(lay);
    c->add_option("--meta", meta, "Model input geometry JSON")->check(CLI::ExistingFile);
    c->add_option("--heads", heads, "Attention heads")->check(CLI::PositiveNumber)->capture_default_str();
    hw.add_to(*c);
    c->add_option("--out", out, "Report JSON (stdout when omitted)");
  }

  int run(const std::vector<std::string>& args, std::ostream& os) const {
    if (config.empty() == layers.empty()) throw std::invalid_argument("exactly one of --config or --layers is required");
    auto manifest = start_manifest("estimate", args);
    const ModelMeta m = meta.empty() ? ModelMeta{} : read_json_file(meta).get<ModelMeta>();
    std::vector<hw::HwLayer> hw_layers;
    Json report;
    if (!config.empty()) {
      manifest.add_input("config", config);
      const auto cfg = read_json_file(config).get<SubnetConfig>();
      hw_layers = hw::expand_layers(cfg, m, heads);
      report["model"] = model_report(cfg, m);
      report["config"] = cfg;
    } else {
      manifest.add_input("layers", layers);
      const Json j = read_json_file(layers);
      require_known_keys(j, {"layers"}, "layer list");
      int i = 0;
      for (const auto& l : j.at("layers")) {
        hw_layers.push_back({l.value("name", "layer" + std::to_string(i)), l.get<hw::LayerShape>()});
        ++i;
      }
    }
    if (!meta.empty()) manifest.add_input("meta", meta);
    hw.record(manifest);
    const auto est = hw::estimate_fps(hw_layers, hw.load_profile(), hw.load_costs(), hw.load_tiles(),
                                      hw::strategy_rule_from_string(hw.rule));
    report["estimate"] = estimate_report(est);
    if (out.empty()) {
      os << dump_json(report);
      return 0;
    }
    write_json_file(out, report);
    manifest.add_output("report", out);
    manifest.summary = {{"fps", est.fps}, {"total_cycles", est.total_cycles}};
    finish_manifest(manifest, out);
    os << "fps " << est.fps << " (" << est.total_cycles << " cycles)\n";
    return 0;
  }
};

// -------------------------------------------------------------- train-teacher

SubnetConfig default_teacher() { return SubnetConfig{48, {{48, 4.0, 0.0}, {48, 4.0, 0.0}}}; }

struct TrainTeacher {
  std::uint64_t seed = 0;
  std::string config;
  int heads = 4;
  int epochs = 20;
  double lr = 0.1;
  int batch = 32;
  DataOptions data;
  std::string out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train-teacher", "Train a full-precision teacher and export its logits");
    c->add_option("--seed", seed, "Initialization and shuffling seed")->required();
    c->add_option("--config", config, "Teacher architecture JSON")->check(CLI::ExistingFile);
    c->add_option("--heads", heads, "Attention heads")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--epochs", epochs)->check(CLI::NonNegativeNumber)->capture_default_str();
    c->add_option("--lr", lr)->capture_default_str();
    c->add_option("--batch", batch)->check(CLI::PositiveNumber)->capture_default_str();
    data.add_to(*c);
    c->add_option("--out", out, "Teacher logits QVT file (samples x classes)")->required();
  }

  int run(const std::vector<std::string>& args, std::ostream& os) const {
    auto manifest = start_manifest("train-teacher", args);
    manifest.seeds = {{"seed", seed}, {"data_seed", data.seed}};
    SubnetConfig cfg = default_teacher();
    if (!config.empty()) {
      manifest.add_input("config", config);
      cfg = read_json_file(config).get<SubnetConfig>();
    }
    const auto d = data.make();
    auto p = init_vit(cfg, d.config.meta, heads, derive_seed(seed, 1));
    TrainConfig tc;
    tc.epochs = epochs;
    tc.lr = lr;
    tc.batch_size = batch;
    tc.seed = seed;
    tc.quant = QuantOptions::off();
    train_model(p, d, tc, nullptr, [](const EpochReport& r) {
      spdlog::info("teacher epoch {} loss {:.6f} lr {:.6f}", r.epoch, r.loss, r.lr);
    });
    const auto logits = predict_logits(p, d, tc.quant);
    Matrix all(static_cast<Eigen::Index>(logits.size()), d.config.meta.num_classes);
    for (std::size_t i = 0; i < logits.size(); ++i) all.row(Eigen::Index(i)) = logits[i].row(0);
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    write_matrix(out, all);
    const double train_acc = evaluate(p, d, d.train, tc.quant);
    const double val_acc = evaluate(p, d, d.val, tc.quant);
    manifest.add_output("teacher_logits", out);
    manifest.summary = {{"config", cfg}, {"data", data.to_json()}, {"train_accuracy", train_acc},
                        {"val_accuracy", val_acc}};
    finish_manifest(manifest, out);
    os << "teacher val accuracy " << val_acc << "\n";
    return 0;
  }
};

// ------------------------------------------------------------- train-supernet

TeacherLogits load_teacher(const fs::path& path, const Dataset& d) {
  const Matrix m = qvt::to_matrix(qvt::read_file(path));
  if (m.rows() != Eigen::Index(d.samples.size()) || m.cols() != d.config.meta.num_classes)
    throw Error("teacher logits shape does not match the dataset: " + path.string());
  TeacherLogits t;
  for (Eigen::Index i = 0; i < m.rows(); ++i) t.push_back(m.row(i));
  return t;
}

struct TrainSupernet {
  std::string space;
  std::uint64_t seed = 0;
  int epochs = 20;
  double lr = 0.1;
  double min_lr = 0.0;
  int batch = 32;
  std::string teacher;
  double alpha = 0.5;
  double tau = 1.0;
  CLI::Option* alpha_opt = nullptr;
  DataOptions data;
  std::string out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train-supernet", "Train a weight-entangled mixed-precision supernet");
    c->add_option("--space", space, "Search space JSON")->required()->check(CLI::ExistingFile);
    c->add_option("--seed", seed, "Initialization and sampling seed")->required();
    c->add_option("--epochs", epochs)->check(CLI::NonNegativeNumber)->capture_default_str();
    c->add_option("--lr", lr)->capture_default_str();
    c->add_option("--min-lr", min_lr)->capture_default_str();
    c->add_option("--batch", batch)->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--kd-teacher", teacher, "Teacher logits QVT file")->check(CLI::ExistingFile);
    alpha_opt = c->add_option("--alpha", alpha, "Distillation weight (with --kd-teacher)")->capture_default_str();
    c->add_option("--tau", tau, "Distillation temperature")->capture_default_str();
    data.add_to(*c);
    c->add_option("--out", out, "Checkpoint directory")->required();
  }

  int run(const std::vector<std::string>& args, std::ostream& os) const {
    auto manifest = start_manifest("train-supernet", args);
    manifest.seeds = {{"seed", seed}, {"data_seed", data.seed}};
    manifest.add_input("space", space);
    const auto s = read_json_file(space).get<SearchSpace>();
    const auto d = data.make();
    SupernetTrainConfig cfg;
    cfg.train.epochs = epochs;
    cfg.train.lr = lr;
    cfg.train.min_lr = min_lr;
    cfg.train.batch_size = batch;
    cfg.train.seed = seed;
    cfg.train.kd.tau = tau;
    std::optional<TeacherLogits> logits;
    if (!teacher.empty()) {
      manifest.add_input("teacher_logits", teacher);
      logits = load_teacher(teacher, d);
      cfg.train.kd.alpha = alpha;
    } else if (alpha_opt->count() > 0 && alpha > 0.0) {
      throw std::invalid_argument("--alpha requires --kd-teacher");
    }

    Supernet net(s, d.config.meta, derive_seed(seed, 1));
    Json epochs_log = Json::array();
    train_supernet(net, d, cfg, logits ? &*logits : nullptr, [&](const SupernetStep& st) {
      spdlog::info("supernet epoch {} loss {:.6f} lr {:.6f}", st.epoch, st.loss, st.lr);
      epochs_log.push_back({{"epoch", st.epoch}, {"loss", st.loss}});
    });
    const auto largest = largest_subnet(s);
    const double acc = subnet_accuracy(net, largest, d, d.val);
    net.save(out);
    write_json_file(fs::path(out) / "report.json",
                    Json{{"data", data.to_json()},
                         {"train", {{"epochs", epochs}, {"lr", lr}, {"min_lr", min_lr}, {"batch", batch},
                                    {"alpha", cfg.train.kd.alpha}, {"tau", tau}, {"seed", seed}}},
                         {"epochs", epochs_log},
                         {"largest", {{"config", largest}, {"val_accuracy", acc}}}});
    manifest.add_output("checkpoint", out);
    manifest.summary = {{"largest_val_accuracy", acc}};
    finish_manifest(manifest, out);
    os << "largest subnet val accuracy " << acc << "\n";
    return 0;
  }
};

// --------------------------------------------------------------------- search

bool sub_space(const SearchSpace& inner, const SearchSpace& outer) {
  auto subset = [](const auto& a, const auto& b) {
    return std::all_of(a.begin(), a.end(), [&](const auto& x) { return std::find(b.begin(), b.end(), x) != b.end(); });
  };
  return inner.heads == outer.heads && subset(inner.embed_dims, outer.embed_dims) &&
         subset(inner.hidden_dims, outer.hidden_dims) && subset(inner.mixed_ratios, outer.mixed_ratios) &&
         subset(inner.expansion_ratios, outer.expansion_ratios) && subset(inner.depths, outer.depths);
}

Json candidate_json(const evo::Candidate& c, std::size_t rank, const evo::HwContext& ctx) {
  const auto est = hw::estimate_fps(hw::expand_layers(c.config, ctx.meta, ctx.heads), ctx.profile, ctx.costs,
                                    ctx.tiles, ctx.rule);
  Json layers = Json::array();
  for (const auto& l : est.layers) layers.push_back({{"name", l.name}, {"cycles", l.cycles.total}});
  return {{"rank", rank},
          {"key", c.config.key()},
          {"config", c.config},
          {"fitness", c.fitness},
          {"fps", c.fps},
          {"feasible", c.feasible},
          {"total_cycles", est.total_cycles},
          {"layers", layers},
          {"model", model_report(c.config, ctx.meta)}};
}

struct Search {
  std::string space;
  std::string supernet;
  HwOptions hw;
  double target_fps = 0.0;
  std::uint64_t seed = 0;
  evo::EvoParams params;
  DataOptions data;
  std::string out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("search", "Hardware-constrained evolutionary search over a trained supernet");
    c->add_option("--space", space, "Search space JSON (defaults to the supernet's)")->check(CLI::ExistingFile);
    c->add_option("--supernet", supernet, "Supernet checkpoint directory")->required()->check(CLI::ExistingDirectory);
    hw.add_to(*c);
    c->add_option("--target-fps", target_fps, "Minimum FPS")->capture_default_str();
    c->add_option("--seed", seed, "Search seed")->required();
    c->add_option("--population", params.population_size)->capture_default_str();
    c->add_option("--generations", params.generations)->capture_default_str();
    c->add_option("--top-k", params.top_k)->capture_default_str();
    c->add_option("--p-d", params.p_d, "Depth mutation probability")->capture_default_str();
    c->add_option("--p-m", params.p_m, "Per-block mutation probability")->capture_default_str();
    c->add_option("--jobs", params.jobs, "Parallel fitness evaluations")->check(CLI::PositiveNumber);
    data.add_to(*c);
    c->add_option("--out", out, "Results JSON")->required();
  }

  int run(const std::vector<std::string>& args, std::ostream& os) const {
    auto manifest = start_manifest("search", args);
    manifest.seeds = {{"seed", seed}, {"data_seed", data.seed}};
    manifest.add_input("supernet", supernet);
    hw.record(manifest);
    const auto net = Supernet::load(supernet);
    SearchSpace s = net.space();
    if (!space.empty()) {
      manifest.add_input("space", space);
      s = read_json_file(space).get<SearchSpace>();
      if (!sub_space(s, net.space())) throw Error("search space is not covered by the supernet");
    }
    const auto d = data.make();
    if (d.config.meta.tokens != net.meta().tokens || d.config.meta.token_dim != net.meta().token_dim ||
        d.config.meta.num_classes != net.meta().num_classes)
      throw Error("dataset geometry does not match the supernet");
    const auto ctx = hw.context(net.meta(), s.heads);
    auto p = params;
    p.target_fps = target_fps;
    p.seed = seed;
    const auto result = evo::evolve(
        s, p, [&](const SubnetConfig& c) { return subnet_accuracy(net, c, d, d.val); }, evo::hardware_fn(ctx));

    Json candidates = Json::array();
    for (std::size_t i = 0; i < result.population.size(); ++i)
      candidates.push_back(candidate_json(result.population[i], i, ctx));
    Json history = Json::array();
    for (const auto& h : result.history)
      history.push_back({{"generation", h.generation},
                         {"best_fitness", h.best_fitness},
                         {"best_fps", h.best_fps},
                         {"best_key", h.best_key},
                         {"mean_fitness", h.mean_fitness},
                         {"evaluated", h.evaluated},
                         {"rejected", h.rejected}});
    const Json results{{"target_fps", target_fps},
                       {"seed", seed},
                       {"params",
                        {{"population", p.population_size},
                         {"generations", p.generations},
                         {"top_k", p.top_k},
                         {"p_d", p.p_d},
                         {"p_m", p.p_m}}},
                       {"data", data.to_json()},
                       {"evaluations", result.evaluations},
                       {"candidates", candidates},
                       {"history", history}};
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    write_json_file(out, results);
    manifest.add_output("results", out);
    const auto& best = result.population.front();
    manifest.summary = {{"best_key", best.config.key()}, {"best_fitness", best.fitness}, {"best_fps", best.fps}};
    finish_manifest(manifest, out);
    os << "best " << best.config.key() << " accuracy " << best.fitness << " fps " << best.fps << "\n";
    return 0;
  }
};

// ------------------------------------------------------------------- quantize

struct Quantize {
  std::string in;
  std::string out;
  double ratio = -1.0;
  int groups = 1;
  CLI::Option* ratio_opt = nullptr;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("quantize", "Row-wise mixed-precision quantization of one QVT tensor");
    c->add_option("--in", in, "f32 QVT tensor")->required()->check(CLI::ExistingFile);
    ratio_opt = c->add_option("--ratio", ratio, "8-bit row fraction (otherwise the tensor's own tags)");
    c->add_option("--groups", groups, "Equal row groups sharing the ratio")->check(CLI::PositiveNumber);
    c->add_option("--out", out, "Quantized i8 QVT tensor")->required();
  }

  int run(const std::vector<std::string>& args, std::ostream& os) const {
    auto manifest = start_manifest("quantize", args);
    manifest.add_input("tensor", in);
    const auto t = qvt::read_file(in);
    const Matrix w = qvt::to_matrix(t);
    std::vector<Precision> tags;
    if (ratio_opt->count() > 0) {
      if (w.rows() % groups != 0) throw std::invalid_argument("rows are not divisible by --groups");
      tags = ratio_tags(int(w.rows() / groups), ratio, groups);
    } else if (t.tags) {
      tags = *t.tags;
    } else {
      throw std::invalid_argument("tensor has no precision tags; pass --ratio");
    }
    const auto q = quantize_rows(w, tags);
    qvt::write_file(out, qvt::from_quantized(q));
    const Matrix back = dequantize(q);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      worst = std::max(worst, (w.row(i) - back.row(i)).cwiseAbs().maxCoeff() / q.scales()[std::size_t(i)]);
    const Json summary{{"rows", w.rows()},
                       {"cols", w.cols()},
                       {"w8_rows", q.w8_rows()},
                       {"mixed_ratio", q.mixed_ratio()},
                       {"size_bytes", model_size_bytes(double(w.size()), q.mixed_ratio())},
                       {"max_error_in_scales", worst}};
    manifest.add_output("tensor", out);
    manifest.summary = summary;
    finish_manifest(manifest, out);
    os << dump_json(summary);
    return 0;
  }
};

// --------------------------------------------------------------------- export

bool is_block_linear(const std::string& name) {
  for (const char* suffix : {".qkv", ".proj", ".mlp1", ".mlp2"}) {
    const std::string s(suffix);
    if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) return true;
  }
  return false;
}

const std::vector<Precision>& block_tags(const ViTParams& p, const std::string& name) {
  const auto dot = name.find('.', 7);
  const auto& b = p.blocks.at(std::stoul(name.substr(7, dot - 7)));
  const auto kind = name.substr(dot + 1);
  if (kind == "qkv") return b.tags_qkv;
  if (kind == "proj") return b.tags_proj;
  if (kind == "mlp1") return b.tags_mlp1;
  return b.tags_mlp2;
}

struct Export {
  std::string supernet;
  std::string config;
  std::string results;
  std::size_t rank = 0;
  HwOptions hw;
  std::string out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("export", "Extract, quantize and estimate one subnet");
    c->add_option("--supernet", supernet, "Supernet checkpoint directory")->required()->check(CLI::ExistingDirectory);
    auto* cfg = c->add_option("--config", config, "Subnet config JSON")->check(CLI::ExistingFile);
    auto* res = c->add_option("--results", results, "Search results JSON")->check(CLI::ExistingFile);
    cfg->excludes(res);
    c->add_option("--rank", rank, "Candidate rank within --results")->capture_default_str();
    hw.add_to(*c);
    c->add_option("--out", out, "Export directory")->required();
  }

  int run(const std::vector<std::string>& args, std::ostream& os) const {
    if (config.empty() == results.empty()) throw std::invalid_argument("exactly one of --config or --results is required");
    auto manifest = start_manifest("export", args);
    manifest.add_input("supernet", supernet);
    SubnetConfig cfg;
    if (!config.empty()) {
      manifest.add_input("config", config);
      cfg = read_json_file(config).get<SubnetConfig>();
    } else {
      manifest.add_input("results", results);
      const Json doc = read_json_file(results);
      const auto& cands = doc.at("candidates");
      if (rank >= cands.size()) throw std::out_of_range("--rank beyond the result list");
      cfg = cands.at(rank).at("config").get<SubnetConfig>();
    }
    hw.record(manifest);
    const auto net = Supernet::load(supernet);
    const auto p = net.extract(cfg);

    const fs::path dir(out);
    fs::remove_all(dir / "weights");
    fs::create_directories(dir / "weights");
    Json tensors = Json::array();
    for_each_param(p, [&](const std::string& name, const Matrix& m) {
      const std::string file = "weights/" + name + ".qvt";
      if (is_block_linear(name)) {
        qvt::write_file(dir / file, qvt::from_quantized(quantize_rows(m, block_tags(p, name))));
        tensors.push_back({{"name", name}, {"file", file}, {"dtype", "i8"}});
      } else {
        write_matrix(dir / file, m);
        tensors.push_back({{"name", name}, {"file", file}, {"dtype", "f32"}});
      }
    });
    write_json_file(dir / "config.json", cfg);
    write_json_file(dir / "model.json",
                    Json{{"config", cfg}, {"heads", p.heads}, {"meta", net.meta()}, {"tensors", tensors}});

    const auto ctx = hw.context(net.meta(), p.heads);
    const auto est = hw::estimate_fps(hw::expand_layers(cfg, ctx.meta, ctx.heads), ctx.profile, ctx.costs,
                                      ctx.tiles, ctx.rule);
    write_json_file(dir / "estimate.json",
                    Json{{"config", cfg}, {"model", model_report(cfg, ctx.meta)}, {"estimate", estimate_report(est)}});
    manifest.add_output("export", dir);
    manifest.summary = {{"key", cfg.key()}, {"fps", est.fps}};
    finish_manifest(manifest, dir);
    os << "exported " << cfg.key() << " fps " << est.fps << "\n";
    return 0;
  }
};

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  sink->set_pattern("[%l] %v");
  auto logger = std::make_shared<spdlog::logger>("hwvit", sink);
  const char* env = std::getenv("HWVIT_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") logger->set_level(spdlog::level::err);
  else if (level == "info") logger->set_level(spdlog::level::info);
  else if (level == "debug") logger->set_level(spdlog::level::debug);
  else throw std::invalid_argument("HWVIT_LOG must be one of error, info, debug");
  return logger;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixed-precision ViT supernet, DSP packing and FPGA estimation toolkit", "hwvit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(tool_version()));
  PackVerify pack_verify;
  Estimate estimate;
  TrainTeacher train_teacher;
  TrainSupernet train_supernet_cmd;
  Search search;
  Quantize quantize;
  Export export_cmd;
  pack_verify.add(app);
  estimate.add(app);
  train_teacher.add(app);
  train_supernet_cmd.add(app);
  search.add(app);
  quantize.add(app);
  export_cmd.add(app);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kExitError;
  }

  try {
    const auto logger = make_logger(err);
    const auto previous = spdlog::default_logger();
    spdlog::set_default_logger(logger);
    struct Restore {
      std::shared_ptr<spdlog::logger> prev;
      ~Restore() { spdlog::set_default_logger(prev); }
    } restore{previous};

    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    spdlog::debug("running {}", name);
    if (name == "pack-verify") return pack_verify.run(args, out);
    if (name == "estimate") return estimate.run(args, out);
    if (name == "train-teacher") return train_teacher.run(args, out);
    if (name == "train-supernet") return train_supernet_cmd.run(args, out);
    if (name == "search") return search.run(args, out);
    if (name == "quantize") return quantize.run(args, out);
    if (name == "export") return export_cmd.run(args, out);
    throw std::logic_error("unhandled command " + name);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace hwvit::cli
