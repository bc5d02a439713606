#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fuselab/error.hpp"
#include "fuselab/eval.hpp"
#include "fuselab/experiment.hpp"
#include "fuselab/geometry.hpp"
#include "fuselab/io.hpp"
#include "fuselab/objective.hpp"
#include "fuselab/train.hpp"

using namespace fuselab;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitNumerical = 4;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigError:
    case ErrorKind::InvalidArgument:
    case ErrorKind::InvalidTemperature:
    case ErrorKind::WrongModelKind:
    case ErrorKind::ShapeError:
    case ErrorKind::DegenerateRig:
    case ErrorKind::BehindCamera:
    case ErrorKind::SceneGenFailure:
    case ErrorKind::NoTasks:
      return kExitConfig;
    case ErrorKind::MissingCheckpoint:
    case ErrorKind::MissingWorld:
    case ErrorKind::MissingPairParams:
    case ErrorKind::IoError:
      return kExitMissing;
    case ErrorKind::NumericalOverflow:
    case ErrorKind::IllConditioned:
    case ErrorKind::EpipoleDegenerate:
    case ErrorKind::InsufficientViews:
      return kExitNumerical;
  }
  return 1;
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool first_order = false;
};

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = load_experiment_config(c.config);
  if (c.seed) cfg.set_seed(*c.seed);
  if (c.first_order) cfg.train.first_order = true;
  return cfg;
}

fs::path out_or(const Common& c, const std::string& fallback) { return c.out.empty() ? fs::path(fallback) : fs::path(c.out); }

int max_k(const ExperimentConfig& cfg) { return *std::max_element(cfg.eval.k_list.begin(), cfg.eval.k_list.end()); }

// ---- world directory

// Everything the generated data depends on; train settings are not part of it.
Json world_identity(const ExperimentConfig& cfg) {
  const EvalConfig& e = cfg.eval;
  return {{"world", to_json(cfg.world)},
          {"heldout_pairs", e.heldout_pairs},
          {"max_k", max_k(cfg)},
          {"test_samples", e.test_samples},
          {"pretrain_samples", e.pretrain_samples},
          {"full_samples", e.full_samples},
          {"test_occl_rate", e.test_occl_rate}};
}

std::string pair_file(int i, const char* split) { return "data/pair" + std::to_string(i) + "_" + split + ".json"; }

struct LoadedWorld {
  BaselineData data;
  std::string manifest_sha;
};

LoadedWorld load_world(const fs::path& dir, const ExperimentConfig& cfg, bool with_data) {
  const fs::path manifest_path = dir / "manifest.json";
  require(fs::exists(manifest_path), ErrorKind::MissingWorld,
          "no world at " + dir.string() + "; run gen-world first");
  const Json manifest = read_json(manifest_path, ErrorKind::MissingWorld);
  require(manifest.value("identity", Json()) == world_identity(cfg), ErrorKind::MissingWorld,
          "world at " + dir.string() + " was generated from a different config; rerun gen-world");
  for (const auto& [name, sha] : manifest.at("files").items()) {
    require(sha256_file(dir / name, ErrorKind::MissingWorld) == sha.get<std::string>(), ErrorKind::MissingWorld,
            "world file " + name + " does not match its manifest hash");
  }
  LoadedWorld w;
  w.manifest_sha = sha256_file(manifest_path);
  w.data.rig = rig_from_json(read_json(dir / "rig.json", ErrorKind::MissingWorld));
  if (with_data) {
    w.data.pretrain = load_samples(dir / "data/pretrain.json");
    for (const Json& p : manifest.at("heldout")) {
      HeldoutPair hp;
      const int i = p.at("index").get<int>();
      hp.cam_a = p.at("cameras")[0].get<int>();
      hp.cam_b = p.at("cameras")[1].get<int>();
      hp.train = load_samples(dir / pair_file(i, "train"));
      hp.test = load_samples(dir / pair_file(i, "test"));
      hp.full = load_samples(dir / pair_file(i, "full"));
      w.data.pairs.push_back(std::move(hp));
    }
  }
  return w;
}

int cmd_gen_world(const Common& c) {
  const ExperimentConfig cfg = load_config(c);
  const fs::path dir = out_or(c, cfg.paths.world_dir);
  const BaselineData data = make_baseline_data(cfg);
  const double sigma = cfg.world.heatmap_sigma;

  std::vector<std::string> files;
  write_json(dir / "rig.json", to_json(data.rig));
  files.push_back("rig.json");
  auto save = [&](const std::string& name, const std::vector<MultiViewSample>& s) {
    save_samples(dir / name, s, sigma);
    files.push_back(name);
    files.push_back(fs::path(name).replace_extension(".bin").string());
  };
  save("data/pretrain.json", data.pretrain);
  Json heldout = Json::array();
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    const HeldoutPair& hp = data.pairs[i];
    save(pair_file(static_cast<int>(i), "train"), hp.train);
    save(pair_file(static_cast<int>(i), "test"), hp.test);
    save(pair_file(static_cast<int>(i), "full"), hp.full);
    heldout.push_back({{"index", i}, {"cameras", {hp.cam_a, hp.cam_b}}});
  }

  Json pairs = Json::array();
  for (const ViewPair& p : ordered_pairs(training_cameras(cfg.world))) pairs.push_back({p.target, p.source});
  Json hashes = Json::object();
  for (const std::string& f : files) hashes[f] = sha256_file(dir / f);

  const Json manifest{{"identity", world_identity(cfg)},
                      {"training_cameras", cfg.world.n_cams},
                      {"ordered_pairs", pairs},
                      {"heldout", heldout},
                      {"files", hashes}};
  write_json(dir / "manifest.json", manifest);
  std::cout << "world: " << dir.string() << "\n"
            << "training cameras: " << cfg.world.n_cams << " (" << pairs.size() << " ordered pairs)\n"
            << "held-out pairs: " << heldout.size() << "\n"
            << "manifest sha256: " << sha256_file(dir / "manifest.json") << "\n";
  return 0;
}

// ---- meta-training

const char* kLogHeader = "iteration,task_id,target,source,train_loss,test_loss";

int cmd_meta_train(const Common& c, bool resume, std::optional<int> stop_at) {
  const ExperimentConfig cfg = load_config(c);
  const LoadedWorld world = load_world(cfg.paths.world_dir, cfg, false);
  const fs::path dir = out_or(c, cfg.paths.checkpoint_dir);
  const fs::path sidecar = dir / "meta_state.json";
  const fs::path log_path = dir / "meta_log.csv";
  const std::string fingerprint = config_fingerprint(cfg);
  const Json chain{{"config_fingerprint", fingerprint}, {"world_manifest", world.manifest_sha}};

  const std::vector<Task> tasks = make_meta_tasks(world.data.rig, cfg);
  MetaTrainState state;
  std::vector<std::string> log_lines;
  if (resume && fs::exists(sidecar)) {
    const auto [manifest, blob] = load_tensors(sidecar, ErrorKind::MissingCheckpoint);
    require(manifest.value("config_fingerprint", "") == fingerprint &&
                manifest.value("world_manifest", "") == world.manifest_sha,
            ErrorKind::ConfigError, "optimizer state at " + sidecar.string() + " belongs to a different run");
    state = load_meta_state(sidecar);
    std::ifstream in(log_path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line) && static_cast<int>(log_lines.size()) < state.iteration) log_lines.push_back(line);
    require(static_cast<int>(log_lines.size()) == state.iteration, ErrorKind::MissingCheckpoint,
            "training log " + log_path.string() + " is shorter than the saved state");
  } else {
    state = meta_train_start(initial_meta_params(cfg), cfg.train);
  }

  const int total = cfg.train.meta_iterations;
  const int until = stop_at ? std::clamp(*stop_at, state.iteration, total) : total;
  char buf[256];
  auto log = [&](const MetaLogRow& r) {
    const ViewPair& p = tasks[r.task_id].pair;
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%.9e,%.9e", r.iteration, r.task_id, p.target, p.source, r.train_loss,
                  r.test_loss);
    log_lines.emplace_back(buf);
    if (r.iteration % 100 == 0) std::cerr << "iteration " << r.iteration << " test loss " << r.test_loss << "\n";
  };
  auto save_progress = [&] {
    std::string text = std::string(kLogHeader) + "\n";
    for (const std::string& l : log_lines) text += l + "\n";
    write_file(log_path, text);
    save_meta_state(sidecar, state, chain);
  };
  try {
    meta_train_run(state, tasks, cfg.train, until, log);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NumericalOverflow) save_progress();
    throw;
  }
  save_progress();

  if (state.iteration < total) {
    std::cout << "stopped at iteration " << state.iteration << " of " << total << "; continue with --resume\n";
    return 0;
  }
  FactorizedFusionParams final_params = state.params;
  final_params.base_frozen = true;
  Json extra = chain;
  extra["meta_trained"] = true;
  extra["iterations"] = total;
  const fs::path ckpt = dir / "meta.json";
  save_model(ckpt, final_params, extra);
  std::cout << "checkpoint: " << ckpt.string() << "\n"
            << "blob sha256: " << sha256_file(dir / "meta.bin") << "\n";
  return 0;
}

// ---- checkpoints shared by finetune / eval

struct LoadedModel {
  FactorizedFusionParams params;
  Json manifest;
};

LoadedModel load_factorized(const fs::path& path, bool allow_raw) {
  auto [params, manifest] = load_model_with_manifest(path);
  require(kind_of(params) == FusionKind::Factorized, ErrorKind::WrongModelKind,
          path.string() + " holds a dense model; only factorized checkpoints adapt");
  require(allow_raw || manifest.value("meta_trained", false), ErrorKind::WrongModelKind,
          path.string() + " is not meta-trained; pass --allow-raw to adapt it anyway");
  return {std::get<FactorizedFusionParams>(std::move(params)), std::move(manifest)};
}

void check_chain(const LoadedModel& m, const LoadedWorld& w, const fs::path& path) {
  if (!m.manifest.contains("world_manifest")) return;
  require(m.manifest["world_manifest"].get<std::string>() == w.manifest_sha, ErrorKind::MissingCheckpoint,
          path.string() + " was trained on a different world; retrain it");
}

const HeldoutPair& pick_pair(const BaselineData& data, int pair_id) {
  require(pair_id >= 0 && pair_id < static_cast<int>(data.pairs.size()), ErrorKind::InvalidArgument,
          "unknown pair_id " + std::to_string(pair_id) + " (world has " + std::to_string(data.pairs.size()) +
              " held-out pairs)");
  return data.pairs[pair_id];
}

int cmd_finetune(const Common& c, std::string checkpoint, int pair_id, std::optional<int> k_opt, bool allow_raw) {
  ExperimentConfig cfg = load_config(c);
  if (checkpoint.empty()) checkpoint = (fs::path(cfg.paths.checkpoint_dir) / "meta.json").string();
  const LoadedModel model = load_factorized(checkpoint, allow_raw);
  const LoadedWorld world = load_world(cfg.paths.world_dir, cfg, true);
  check_chain(model, world, checkpoint);
  const HeldoutPair& hp = pick_pair(world.data, pair_id);
  const int k = k_opt.value_or(cfg.eval.k_list.front());
  require(k >= 0 && k <= static_cast<int>(hp.train.size()), ErrorKind::InvalidArgument,
          "--k must lie in [0, " + std::to_string(hp.train.size()) + "]");

  const std::vector<MultiViewSample> kdata(hp.train.begin(), hp.train.begin() + k);
  const LossConfig loss = cfg.train.loss();
  const StackedBatch test = stack_batch(hp.test);
  const double before = loss_value(model.params, test, loss);
  const FactorizedFusionParams adapted = finetune(model.params, kdata, cfg.train);
  const double after = loss_value(adapted, test, loss);

  const std::int64_t per_pair = finetune_param_count(cfg.world.grid);
  std::cout << "pair " << pair_id << ": cameras " << hp.cam_a << ", " << hp.cam_b << "; K = " << k << "\n"
            << "learnable parameters: " << per_pair << " per direction, " << 2 * per_pair << " total\n";
  std::printf("test loss before: %.9e\ntest loss after:  %.9e\n", before, after);

  Json extra = model.manifest;
  for (const char* key : {"t", "blob", "kind", "grid", "pairs", "base_frozen"}) extra.erase(key);
  extra["finetuned"] = {{"pair", pair_id}, {"cameras", {hp.cam_a, hp.cam_b}}, {"k", k},
                        {"source_sha256", sha256_file(checkpoint)}};
  const fs::path out = out_or(c, cfg.paths.checkpoint_dir) /
                       ("finetuned_pair" + std::to_string(pair_id) + "_k" + std::to_string(k) + ".json");
  save_model(out, adapted, extra);
  std::cout << "checkpoint: " << out.string() << "\n";
  return 0;
}

// ---- weight dumps

// Gray weights with the cells crossed by the oracle epipolar line in red.
std::string to_ppm_overlay(const Heatmap& w, const Line2& line) {
  const double peak = std::max(w.cwiseAbs().maxCoeff(), 1e-300);
  std::string out = "P6\n" + std::to_string(w.cols()) + " " + std::to_string(w.rows()) + "\n255\n";
  const GridShape grid{static_cast<int>(w.rows()), static_cast<int>(w.cols())};
  for (int i = 0; i < grid.cells(); ++i) {
    const auto g = static_cast<unsigned char>(std::lround(255.0 * std::abs(w.data()[i]) / peak));
    const bool on_line = point_line_distance(line, cell_center(grid, i)) < 0.5;
    out += static_cast<char>(on_line ? 255 : g);
    out += static_cast<char>(on_line ? g / 2 : g);
    out += static_cast<char>(on_line ? g / 2 : g);
  }
  return out;
}

// One PGM per stride-th target cell, plus line overlays when cameras are known.
int dump_pair_weights(const FusionParams& params, const ViewPair& pair, const std::vector<Camera>* cameras,
                      int stride, const fs::path& dir) {
  const GridShape grid = grid_of(params);
  const Eigen::MatrixXd w = materialize(params, pair);
  std::optional<FundamentalMatrix> f;
  if (cameras) f = fundamental_from_cameras((*cameras)[pair.target], (*cameras)[pair.source]);
  const std::string stem = "w_" + std::to_string(pair.target) + "-" + std::to_string(pair.source) + "_cell";
  int n = 0;
  for (int i = 0; i < grid.cells(); i += stride, ++n) {
    Heatmap row(grid.h, grid.w);
    for (int j = 0; j < grid.cells(); ++j) row.data()[j] = w(i, j);
    write_file(dir / (stem + std::to_string(i) + ".pgm"), to_pgm(row));
    if (f) {
      const Line2 line = epipolar_line(*f, cell_center(grid, i));
      write_file(dir / (stem + std::to_string(i) + "_line.ppm"), to_ppm_overlay(row, line));
    }
  }
  if (f) {
    const MassScore ms = epipolar_mass_score(w, grid, *f, 3.0, stride);
    std::printf("pair %d-%d: epipolar mass score %.4f over %d cells\n", pair.target, pair.source, ms.score, ms.scored);
  }
  return n;
}

ViewPair parse_pair(const std::string& s) {
  ViewPair p;
  char dash = 0;
  std::istringstream in(s);
  require(static_cast<bool>(in >> p.target >> dash >> p.source) && dash == '-' && in.eof(),
          ErrorKind::InvalidArgument, "--pair expects TARGET-SOURCE camera ids, got \"" + s + "\"");
  return p;
}

int cmd_inspect_weights(const Common& c, const std::string& checkpoint, const std::string& pair_s, int stride) {
  require(stride >= 1, ErrorKind::InvalidArgument, "--stride must be >= 1");
  const auto [params, manifest] = load_model_with_manifest(checkpoint);
  std::optional<Rig> rig;
  if (!c.config.empty()) {
    const ExperimentConfig cfg = load_config(c);
    rig = load_world(cfg.paths.world_dir, cfg, false).data.rig;
  }
  const fs::path dir = out_or(c, "inspect");
  std::vector<ViewPair> pairs;
  if (!pair_s.empty()) {
    pairs.push_back(parse_pair(pair_s));
  } else if (const auto* d = std::get_if<DenseFusionParams>(&params)) {
    for (const auto& kv : d->weights) pairs.push_back(kv.first);
  } else {
    for (const auto& kv : std::get<FactorizedFusionParams>(params).thetas) pairs.push_back(kv.first);
  }
  if (const auto* fac = std::get_if<FactorizedFusionParams>(&params)) {
    write_file(dir / "base.pgm", to_pgm(fac->base));
  }
  require(!pairs.empty() || kind_of(params) == FusionKind::Factorized, ErrorKind::InvalidArgument,
          "checkpoint has no pairs; pass --pair");
  for (const ViewPair& p : pairs) {
    if (rig) {
      const int n = static_cast<int>(rig->cameras.size());
      require(p.target >= 0 && p.target < n && p.source >= 0 && p.source < n, ErrorKind::InvalidArgument,
              "camera id out of range for this world");
    }
    const int n = dump_pair_weights(params, p, rig ? &rig->cameras : nullptr, stride, dir);
    std::cout << "pair " << p.target << "-" << p.source << ": " << n << " weight maps\n";
  }
  std::cout << "output: " << dir.string() << "\n";
  return 0;
}

// ---- eval

int cmd_eval(const Common& c, std::string checkpoint, std::optional<int> k, std::optional<int> inspect, int stride) {
  const ExperimentConfig cfg = load_config(c);
  if (checkpoint.empty()) checkpoint = (fs::path(cfg.paths.checkpoint_dir) / "meta.json").string();
  const LoadedModel meta = load_factorized(checkpoint, false);
  const LoadedWorld world = load_world(cfg.paths.world_dir, cfg, true);
  check_chain(meta, world, checkpoint);
  if (inspect) pick_pair(world.data, *inspect);

  BaselineSelection sel;
  if (k) sel.k_list = {*k};
  const EvalReport report = run_baselines(world.data, &meta.params, cfg, sel);
  const fs::path dir = out_or(c, cfg.paths.report_dir);
  write_file(dir / "report.csv", report_csv(report));
  write_json(dir / "report.json", to_json(report));

  std::printf("%-16s %5s %9s %9s %9s %9s\n", "baseline", "K", "JDR", "occluded", "MPJPE", "loss");
  const std::vector<int> ks = sel.k_list.empty() ? cfg.eval.k_list : sel.k_list;
  for (int kk : ks) {
    for (Baseline b : kAllBaselines) {
      std::printf("%-16s %5d %9.2f %9.2f %9.4f %9.3e\n", std::string(to_string(b)).c_str(), kk,
                  median_over_pairs(report, b, kk, [](const ModelScore& s) { return s.jdr.all; }),
                  median_over_pairs(report, b, kk, [](const ModelScore& s) { return s.jdr.occluded; }),
                  median_over_pairs(report, b, kk, [](const ModelScore& s) { return s.mpjpe; }),
                  median_over_pairs(report, b, kk, [](const ModelScore& s) { return s.test_loss; }));
    }
  }
  std::cout << "report: " << (dir / "report.csv").string() << "\n";

  if (inspect) {
    const HeldoutPair& hp = world.data.pairs[*inspect];
    const int kk = ks.back();
    const std::vector<MultiViewSample> kdata(hp.train.begin(), hp.train.begin() + kk);
    const FusionParams adapted = finetune(meta.params, kdata, cfg.train);
    const fs::path idir = dir / ("inspect_pair" + std::to_string(*inspect));
    for (const ViewPair& p : ordered_pairs({hp.cam_a, hp.cam_b})) {
      dump_pair_weights(adapted, p, &world.data.rig.cameras, stride, idir);
    }
    write_file(idir / "base.pgm", to_pgm(meta.params.base));
    std::cout << "weight maps: " << idir.string() << "\n";
  }
  return 0;
}

void add_common(CLI::App* sub, Common& c, bool config_required = true) {
  auto* opt = sub->add_option("--config", c.config, "experiment config JSON");
  if (config_required) opt->required();
  sub->add_option("--seed", c.seed, "overrides world.seed and train.seed");
  sub->add_option("--out", c.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot multi-view heatmap fusion experiments"};
  app.require_subcommand(1);
  Common c;
  bool resume = false, allow_raw = false;
  std::optional<int> stop_at, k, inspect;
  int pair_id = -1, stride = 16;
  std::string checkpoint, pair_s;

  auto* gen = app.add_subcommand("gen-world", "generate the camera rig and datasets");
  add_common(gen, c);

  auto* meta = app.add_subcommand("meta-train", "meta-train the factorized fusion initialization");
  add_common(meta, c);
  meta->add_flag("--first-order", c.first_order, "drop second-order terms of the meta-gradient");
  meta->add_flag("--resume", resume, "continue from the optimizer sidecar");
  meta->add_option("--stop-at", stop_at, "stop after this many iterations");

  auto* ft = app.add_subcommand("finetune", "adapt a checkpoint to one held-out pair");
  add_common(ft, c);
  ft->add_option("--checkpoint", checkpoint, "factorized checkpoint (default: checkpoint_dir/meta.json)");
  ft->add_option("--pair", pair_id, "held-out pair index")->required();
  ft->add_option("--k", k, "number of finetuning samples");
  ft->add_flag("--allow-raw", allow_raw, "accept a checkpoint that was not meta-trained");

  auto* ev = app.add_subcommand("eval", "run the baseline table");
  add_common(ev, c);
  ev->add_option("--checkpoint", checkpoint, "meta-trained checkpoint (default: checkpoint_dir/meta.json)");
  ev->add_option("--k", k, "evaluate this K only");
  ev->add_option("--inspect", inspect, "dump weight maps for this held-out pair");
  ev->add_option("--stride", stride, "dump every stride-th target cell")->check(CLI::PositiveNumber);

  auto* iw = app.add_subcommand("inspect-weights", "dump weight maps of a checkpoint as images");
  add_common(iw, c, false);
  iw->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  iw->add_option("--pair", pair_s, "ordered camera pair TARGET-SOURCE");
  iw->add_option("--stride", stride, "dump every stride-th target cell")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  if (const char* env = std::getenv("FUSELAB_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1) {
      std::cerr << "error: FUSELAB_THREADS must be a positive integer\n";
      return kExitConfig;
    }
  }

  try {
    if (gen->parsed()) return cmd_gen_world(c);
    if (meta->parsed()) return cmd_meta_train(c, resume, stop_at);
    if (ft->parsed()) return cmd_finetune(c, checkpoint, pair_id, k, allow_raw);
    if (ev->parsed()) return cmd_eval(c, checkpoint, k, inspect, stride);
    if (iw->parsed()) return cmd_inspect_weights(c, checkpoint, pair_s, stride);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
