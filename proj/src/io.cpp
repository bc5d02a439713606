#include "fuselab/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <openssl/evp.h>

namespace fuselab {

static_assert(std::endian::native == std::endian::little, "blob I/O assumes a little-endian host");

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  require(EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) == 1, ErrorKind::IoError,
          "SHA-256 failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return out.str();
}

std::string sha256_file(const fs::path& path, ErrorKind missing) { return sha256_hex(read_file(path, missing)); }

std::string read_file(const fs::path& path, ErrorKind missing) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), missing, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  require(!ec, ErrorKind::IoError, "cannot create directory " + path.parent_path().string() + ": " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  require(out.good(), ErrorKind::IoError, "write failed for " + path.string());
}

Json read_json(const fs::path& path, ErrorKind missing) {
  const std::string text = read_file(path, missing);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail(missing == ErrorKind::ConfigError ? ErrorKind::ConfigError : ErrorKind::IoError,
         path.string() + ": invalid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) { write_file(path, j.dump(2) + "\n"); }

// ---- configs

namespace {

/// Reads the fields of one JSON object, tracking which keys were consumed so
/// that leftovers can be reported by path.
class Fields {
 public:
  Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    require(j_.is_object(), ErrorKind::ConfigError, where() + ": expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json* find(const std::string& key, bool required) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) {
      require(!required, ErrorKind::ConfigError, "missing required field " + field(key));
      return nullptr;
    }
    return &*it;
  }

  void get(const std::string& key, double& out, bool required = false) {
    if (const Json* v = find(key, required)) {
      require(v->is_number(), ErrorKind::ConfigError, field(key) + ": expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, int& out, bool required = false) {
    if (const Json* v = find(key, required)) {
      require(v->is_number_integer(), ErrorKind::ConfigError, field(key) + ": expected an integer");
      out = v->get<int>();
    }
  }
  void get(const std::string& key, std::uint64_t& out, bool required = false) {
    if (const Json* v = find(key, required)) {
      require(v->is_number_unsigned(), ErrorKind::ConfigError, field(key) + ": expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& key, bool& out, bool required = false) {
    if (const Json* v = find(key, required)) {
      require(v->is_boolean(), ErrorKind::ConfigError, field(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out, bool required = false) {
    if (const Json* v = find(key, required)) {
      require(v->is_string(), ErrorKind::ConfigError, field(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, std::vector<int>& out, bool required = false) {
    if (const Json* v = find(key, required)) {
      require(v->is_array(), ErrorKind::ConfigError, field(key) + ": expected an array of integers");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        require((*v)[i].is_number_integer(), ErrorKind::ConfigError,
                field(key) + "[" + std::to_string(i) + "]: expected an integer");
        out.push_back((*v)[i].get<int>());
      }
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      require(seen_.count(key) != 0, ErrorKind::ConfigError, "unknown field " + field(key));
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string to_string(PairSampling s) { return s == PairSampling::Random ? "random" : "exhaustive"; }

void read_world(const Json& j, WorldConfig& w) {
  Fields f(j, "world");
  f.get("n_cams", w.n_cams, true);
  f.get("n_test_cams", w.n_test_cams);
  f.get("radius", w.radius, true);
  if (const Json* g = f.find("grid", true)) {
    Fields gf(*g, "world.grid");
    gf.get("h", w.grid.h, true);
    gf.get("w", w.grid.w, true);
    gf.finish();
  }
  f.get("n_joints", w.n_joints, true);
  f.get("occl_rate", w.occl_rate, true);
  if (const Json* n = f.find("noise", true)) {
    Fields nf(*n, "world.noise");
    nf.get("jitter", w.noise.jitter, true);
    nf.get("confusion", w.noise.confusion, true);
    nf.get("distractor_amp", w.noise.distractor_amp, true);
    nf.get("occluded_amp", w.noise.occluded_amp);
    nf.get("occluded_jitter", w.noise.occluded_jitter);
    nf.get("clutter_rate", w.noise.clutter_rate);
    nf.get("clutter_amp", w.noise.clutter_amp);
    nf.get("floor", w.noise.floor);
    nf.finish();
  }
  f.get("seed", w.seed, true);
  f.get("volume_extent", w.volume_extent);
  f.get("focal", w.focal);
  f.get("heatmap_sigma", w.heatmap_sigma);
  f.get("min_elevation_deg", w.min_elevation_deg);
  f.get("max_elevation_deg", w.max_elevation_deg);
  f.finish();
}

bool read_train(const Json& j, TrainConfig& t) {
  Fields f(j, "train");
  f.get("inner_lr", t.inner_lr);
  f.get("outer_lr", t.outer_lr);
  f.get("finetune_lr", t.finetune_lr);
  f.get("supervised_lr", t.supervised_lr);
  f.get("epochs", t.epochs);
  f.get("meta_iterations", t.meta_iterations);
  f.get("meta_batch", t.meta_batch);
  f.get("k", t.k);
  f.get("n_tasks", t.n_tasks);
  std::string sampling = to_string(t.sampling);
  f.get("sampling", sampling);
  require(sampling == "random" || sampling == "exhaustive", ErrorKind::ConfigError,
          "train.sampling: expected \"random\" or \"exhaustive\"");
  t.sampling = sampling == "random" ? PairSampling::Random : PairSampling::Exhaustive;
  f.get("batch_size", t.batch_size);
  f.get("finetune_steps", t.finetune_steps);
  f.get("first_order", t.first_order);
  f.get("loss_on_softmax", t.loss_on_softmax);
  f.get("temperature", t.temperature);
  const bool has_seed = f.find("seed", false) != nullptr;
  f.get("seed", t.seed);
  f.finish();
  return has_seed;
}

void read_eval(const Json& j, EvalConfig& e) {
  Fields f(j, "eval");
  f.get("jdr_threshold", e.jdr_threshold);
  f.get("band", e.band);
  f.get("k_list", e.k_list);
  f.get("heldout_pairs", e.heldout_pairs);
  f.get("test_samples", e.test_samples);
  f.get("pretrain_samples", e.pretrain_samples);
  f.get("pretrain_epochs", e.pretrain_epochs);
  f.get("full_samples", e.full_samples);
  f.get("full_epochs", e.full_epochs);
  f.get("test_occl_rate", e.test_occl_rate);
  f.finish();
}

void read_paths(const Json& j, ExperimentPaths& p) {
  Fields f(j, "paths");
  f.get("world_dir", p.world_dir);
  f.get("checkpoint_dir", p.checkpoint_dir);
  f.get("report_dir", p.report_dir);
  f.finish();
}

}  // namespace

Json to_json(const WorldConfig& w) {
  return Json{{"n_cams", w.n_cams},
              {"n_test_cams", w.n_test_cams},
              {"radius", w.radius},
              {"grid", {{"h", w.grid.h}, {"w", w.grid.w}}},
              {"n_joints", w.n_joints},
              {"occl_rate", w.occl_rate},
              {"noise",
               {{"jitter", w.noise.jitter},
                {"confusion", w.noise.confusion},
                {"distractor_amp", w.noise.distractor_amp},
                {"occluded_amp", w.noise.occluded_amp},
                {"occluded_jitter", w.noise.occluded_jitter},
                {"clutter_rate", w.noise.clutter_rate},
                {"clutter_amp", w.noise.clutter_amp},
                {"floor", w.noise.floor}}},
              {"seed", w.seed},
              {"volume_extent", w.volume_extent},
              {"focal", w.focal},
              {"heatmap_sigma", w.heatmap_sigma},
              {"min_elevation_deg", w.min_elevation_deg},
              {"max_elevation_deg", w.max_elevation_deg}};
}

Json to_json(const TrainConfig& t) {
  return Json{{"inner_lr", t.inner_lr},
              {"outer_lr", t.outer_lr},
              {"finetune_lr", t.finetune_lr},
              {"supervised_lr", t.supervised_lr},
              {"epochs", t.epochs},
              {"meta_iterations", t.meta_iterations},
              {"meta_batch", t.meta_batch},
              {"k", t.k},
              {"n_tasks", t.n_tasks},
              {"sampling", to_string(t.sampling)},
              {"batch_size", t.batch_size},
              {"finetune_steps", t.finetune_steps},
              {"first_order", t.first_order},
              {"loss_on_softmax", t.loss_on_softmax},
              {"temperature", t.temperature},
              {"seed", t.seed}};
}

Json to_json(const EvalConfig& e) {
  return Json{{"jdr_threshold", e.jdr_threshold},
              {"band", e.band},
              {"k_list", e.k_list},
              {"heldout_pairs", e.heldout_pairs},
              {"test_samples", e.test_samples},
              {"pretrain_samples", e.pretrain_samples},
              {"pretrain_epochs", e.pretrain_epochs},
              {"full_samples", e.full_samples},
              {"full_epochs", e.full_epochs},
              {"test_occl_rate", e.test_occl_rate}};
}

Json to_json(const ExperimentConfig& cfg) {
  return Json{{"world", to_json(cfg.world)},
              {"train", to_json(cfg.train)},
              {"eval", to_json(cfg.eval)},
              {"paths",
               {{"world_dir", cfg.paths.world_dir},
                {"checkpoint_dir", cfg.paths.checkpoint_dir},
                {"report_dir", cfg.paths.report_dir}}}};
}

ExperimentConfig experiment_from_json(const Json& j) {
  ExperimentConfig cfg;
  Fields top(j, "");
  const Json* world = top.find("world", true);
  read_world(*world, cfg.world);
  bool train_seed = false;
  if (const Json* t = top.find("train", false)) train_seed = read_train(*t, cfg.train);
  if (!train_seed) cfg.train.seed = cfg.world.seed;
  if (const Json* e = top.find("eval", false)) read_eval(*e, cfg.eval);
  if (const Json* p = top.find("paths", false)) read_paths(*p, cfg.paths);
  top.finish();
  validate(cfg);
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  return experiment_from_json(read_json(path, ErrorKind::ConfigError));
}

std::string config_fingerprint(const ExperimentConfig& cfg) { return sha256_hex(to_json(cfg).dump()); }

// ---- cameras

Json to_json(const Camera& cam) {
  Json rot = Json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rot.push_back(cam.rotation(r, c));
  }
  return Json{{"focal", cam.focal},
              {"principal_point", {cam.principal_point.x(), cam.principal_point.y()}},
              {"rotation", rot},
              {"center", {cam.center.x(), cam.center.y(), cam.center.z()}}};
}

Camera camera_from_json(const Json& j) {
  try {
    Camera cam;
    cam.focal = j.at("focal").get<double>();
    const auto pp = j.at("principal_point").get<std::vector<double>>();
    const auto rot = j.at("rotation").get<std::vector<double>>();
    const auto c = j.at("center").get<std::vector<double>>();
    require(pp.size() == 2 && rot.size() == 9 && c.size() == 3, ErrorKind::IoError, "camera arrays have wrong length");
    cam.principal_point = {pp[0], pp[1]};
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) cam.rotation(r, k) = rot[r * 3 + k];
    }
    cam.center = {c[0], c[1], c[2]};
    return cam;
  } catch (const Json::exception& e) {
    fail(ErrorKind::IoError, std::string("malformed camera: ") + e.what());
  }
}

Json to_json(const Rig& rig) {
  Json cams = Json::array();
  for (const Camera& c : rig.cameras) cams.push_back(to_json(c));
  return Json{{"id", rig.id}, {"cameras", cams}};
}

Rig rig_from_json(const Json& j) {
  Rig rig;
  try {
    rig.id = j.at("id").get<std::string>();
    for (const Json& c : j.at("cameras")) rig.cameras.push_back(camera_from_json(c));
  } catch (const Json::exception& e) {
    fail(ErrorKind::IoError, std::string("malformed rig: ") + e.what());
  }
  return rig;
}

// ---- tensor blobs

namespace {

std::string to_string(DType d) { return d == DType::F32 ? "f32" : "f64"; }

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (std::int64_t s : shape) n *= s;
  return n;
}

std::size_t element_size(DType d) { return d == DType::F32 ? 4 : 8; }

}  // namespace

void TensorBlob::add(const std::string& name, const double* data, std::vector<std::int64_t> shape) {
  require(index_.count(name) == 0, ErrorKind::InvalidArgument, "duplicate tensor " + name);
  const std::int64_t n = element_count(shape);
  Entry e{name, dtype_, std::move(shape), static_cast<std::int64_t>(bytes_.size())};
  const std::size_t start = bytes_.size();
  bytes_.resize(start + n * element_size(dtype_));
  char* out = bytes_.data() + start;
  for (std::int64_t i = 0; i < n; ++i) {
    if (dtype_ == DType::F32) {
      const float v = static_cast<float>(data[i]);
      std::memcpy(out + 4 * i, &v, 4);
    } else {
      std::memcpy(out + 8 * i, &data[i], 8);
    }
  }
  index_[name] = entries_.size();
  entries_.push_back(std::move(e));
}

void TensorBlob::add_matrix(const std::string& name, const Eigen::MatrixXd& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  add(name, rm.data(), {rm.rows(), rm.cols()});
}

const TensorBlob::Entry& TensorBlob::entry(const std::string& name) const {
  auto it = index_.find(name);
  require(it != index_.end(), ErrorKind::IoError, "tensor " + name + " not in blob");
  return entries_[it->second];
}

const std::vector<std::int64_t>& TensorBlob::shape(const std::string& name) const { return entry(name).shape; }

std::vector<double> TensorBlob::values(const std::string& name) const {
  const Entry& e = entry(name);
  const std::int64_t n = element_count(e.shape);
  std::vector<double> out(n);
  const char* in = bytes_.data() + e.offset;
  for (std::int64_t i = 0; i < n; ++i) {
    if (e.dtype == DType::F32) {
      float v;
      std::memcpy(&v, in + 4 * i, 4);
      out[i] = v;
    } else {
      std::memcpy(&out[i], in + 8 * i, 8);
    }
  }
  return out;
}

Eigen::MatrixXd TensorBlob::matrix(const std::string& name) const {
  const auto& s = shape(name);
  require(s.size() == 2, ErrorKind::IoError, "tensor " + name + " is not a matrix");
  const std::vector<double> v = values(name);
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), s[0],
                                                                                                  s[1]);
}

Json TensorBlob::header() const {
  Json t = Json::array();
  for (const Entry& e : entries_) {
    t.push_back({{"name", e.name}, {"dtype", to_string(e.dtype)}, {"shape", e.shape}, {"offset", e.offset}});
  }
  return t;
}

TensorBlob TensorBlob::parse(const Json& header, std::string bytes) {
  TensorBlob blob;
  try {
    for (const Json& t : header) {
      Entry e;
      e.name = t.at("name").get<std::string>();
      const std::string dt = t.at("dtype").get<std::string>();
      require(dt == "f32" || dt == "f64", ErrorKind::IoError, "unknown dtype " + dt);
      e.dtype = dt == "f32" ? DType::F32 : DType::F64;
      e.shape = t.at("shape").get<std::vector<std::int64_t>>();
      e.offset = t.at("offset").get<std::int64_t>();
      const std::int64_t end = e.offset + element_count(e.shape) * static_cast<std::int64_t>(element_size(e.dtype));
      require(e.offset >= 0 && end <= static_cast<std::int64_t>(bytes.size()), ErrorKind::IoError,
              "tensor " + e.name + " exceeds the blob");
      blob.index_[e.name] = blob.entries_.size();
      blob.entries_.push_back(std::move(e));
    }
  } catch (const Json::exception& e) {
    fail(ErrorKind::IoError, std::string("malformed tensor header: ") + e.what());
  }
  blob.bytes_ = std::move(bytes);
  return blob;
}

void save_tensors(const fs::path& path, Json manifest, const TensorBlob& blob) {
  const fs::path bin = path.parent_path() / (path.stem().string() + ".bin");
  manifest["t"] = blob.header();
  manifest["blob"] = {{"file", bin.filename().string()}, {"sha256", sha256_hex(blob.bytes())}};
  write_file(bin, blob.bytes());
  write_json(path, manifest);
}

std::pair<Json, TensorBlob> load_tensors(const fs::path& path, ErrorKind missing) {
  Json manifest = read_json(path, missing);
  std::string file, hash;
  try {
    file = manifest.at("blob").at("file").get<std::string>();
    hash = manifest.at("blob").at("sha256").get<std::string>();
  } catch (const Json::exception&) {
    fail(ErrorKind::IoError, path.string() + ": manifest lacks a blob reference");
  }
  std::string bytes = read_file(path.parent_path() / file, missing);
  require(sha256_hex(bytes) == hash, ErrorKind::IoError, path.string() + ": blob hash mismatch (stale artifact?)");
  TensorBlob blob = TensorBlob::parse(manifest.at("t"), std::move(bytes));
  return {std::move(manifest), std::move(blob)};
}

// ---- models

namespace {

std::string pair_name(const ViewPair& p) { return std::to_string(p.target) + "-" + std::to_string(p.source); }

Json grid_json(const GridShape& g) { return {{"h", g.h}, {"w", g.w}}; }

std::pair<Json, TensorBlob> model_blob(const FusionParams& params, DType dtype) {
  TensorBlob blob(dtype);
  Json m;
  Json pairs = Json::array();
  if (const auto* d = std::get_if<DenseFusionParams>(&params)) {
    m["kind"] = "dense";
    m["grid"] = grid_json(d->grid);
    for (const auto& [pair, w] : d->weights) {
      pairs.push_back({pair.target, pair.source});
      blob.add_matrix("w/" + pair_name(pair), w);
    }
  } else {
    const auto& f = std::get<FactorizedFusionParams>(params);
    m["kind"] = "factorized";
    m["grid"] = grid_json(f.grid);
    m["base_frozen"] = f.base_frozen;
    blob.add_matrix("base", f.base);
    if (f.init_thetas.size() > 0) blob.add_matrix("init_thetas", f.init_thetas);
    for (const auto& [pair, t] : f.thetas) {
      pairs.push_back({pair.target, pair.source});
      blob.add_matrix("theta/" + pair_name(pair), t);
    }
  }
  m["pairs"] = pairs;
  return {m, std::move(blob)};
}

FusionParams model_from_blob(const Json& m, const TensorBlob& blob) {
  try {
    GridShape g{m.at("grid").at("h").get<int>(), m.at("grid").at("w").get<int>()};
    std::vector<ViewPair> pairs;
    for (const Json& p : m.at("pairs")) pairs.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    const std::string kind = m.at("kind").get<std::string>();
    if (kind == "dense") {
      DenseFusionParams d;
      d.grid = g;
      for (const ViewPair& p : pairs) d.weights[p] = blob.matrix("w/" + pair_name(p));
      return d;
    }
    require(kind == "factorized", ErrorKind::IoError, "unknown model kind " + kind);
    FactorizedFusionParams f;
    f.grid = g;
    f.base = blob.matrix("base");
    if (blob.contains("init_thetas")) f.init_thetas = blob.matrix("init_thetas");
    for (const ViewPair& p : pairs) f.thetas[p] = blob.matrix("theta/" + pair_name(p));
    f.base_frozen = m.value("base_frozen", false);
    return f;
  } catch (const Json::exception& e) {
    fail(ErrorKind::IoError, std::string("malformed model manifest: ") + e.what());
  }
}

}  // namespace

void save_model(const fs::path& path, const FusionParams& params, const Json& extra, DType dtype) {
  auto [m, blob] = model_blob(params, dtype);
  for (const auto& [k, v] : extra.items()) m[k] = v;
  save_tensors(path, m, blob);
}

std::pair<FusionParams, Json> load_model_with_manifest(const fs::path& path) {
  auto [m, blob] = load_tensors(path, ErrorKind::MissingCheckpoint);
  FusionParams p = model_from_blob(m, blob);
  return {std::move(p), std::move(m)};
}

FusionParams load_model(const fs::path& path) { return load_model_with_manifest(path).first; }

void save_meta_state(const fs::path& path, const MetaTrainState& state, const Json& extra) {
  auto [m, blob] = model_blob(FusionParams{state.params}, DType::F64);
  for (const auto& [k, v] : extra.items()) m[k] = v;
  const OptimState& o = state.optim;
  m["iteration"] = state.iteration;
  m["optim"] = {{"kind", o.kind == OptimKind::Adam ? "adam" : "sgd"},
                {"lr", o.lr},
                {"beta1", o.beta1},
                {"beta2", o.beta2},
                {"eps", o.eps},
                {"step", o.step}};
  blob.add("adam/m", o.m.data(), {o.m.size()});
  blob.add("adam/v", o.v.data(), {o.v.size()});
  save_tensors(path, m, blob);
}

MetaTrainState load_meta_state(const fs::path& path) {
  auto [m, blob] = load_tensors(path, ErrorKind::MissingCheckpoint);
  MetaTrainState s;
  FusionParams p = model_from_blob(m, blob);
  require(std::holds_alternative<FactorizedFusionParams>(p), ErrorKind::WrongModelKind,
          "optimizer state must hold a factorized model");
  s.params = std::get<FactorizedFusionParams>(std::move(p));
  try {
    s.iteration = m.at("iteration").get<int>();
    const Json& o = m.at("optim");
    s.optim.kind = o.at("kind").get<std::string>() == "adam" ? OptimKind::Adam : OptimKind::Sgd;
    s.optim.lr = o.at("lr").get<double>();
    s.optim.beta1 = o.at("beta1").get<double>();
    s.optim.beta2 = o.at("beta2").get<double>();
    s.optim.eps = o.at("eps").get<double>();
    s.optim.step = o.at("step").get<std::int64_t>();
  } catch (const Json::exception& e) {
    fail(ErrorKind::IoError, std::string("malformed optimizer state: ") + e.what());
  }
  const auto mv = blob.values("adam/m");
  const auto vv = blob.values("adam/v");
  s.optim.m = Eigen::Map<const Eigen::VectorXd>(mv.data(), static_cast<Eigen::Index>(mv.size()));
  s.optim.v = Eigen::Map<const Eigen::VectorXd>(vv.data(), static_cast<Eigen::Index>(vv.size()));
  return s;
}

// ---- datasets

void save_samples(const fs::path& path, const std::vector<MultiViewSample>& samples, double heatmap_sigma) {
  require(!samples.empty(), ErrorKind::InvalidArgument, "no samples to save");
  const MultiViewSample& first = samples.front();
  const int n = static_cast<int>(samples.size());
  const int v = first.num_views();
  const int j = first.num_joints();
  const int z = first.grid.cells();
  std::vector<double> views, pixels, vis, joints;
  views.reserve(static_cast<std::size_t>(n) * v * z * j);
  for (const MultiViewSample& s : samples) {
    require(s.cameras == first.cameras && s.grid == first.grid && s.num_joints() == j, ErrorKind::InvalidArgument,
            "samples of one dataset must share cameras, grid and joints");
    for (int a = 0; a < v; ++a) {
      for (int c = 0; c < z; ++c) {
        for (int k = 0; k < j; ++k) views.push_back(s.views[a](c, k));
      }
      for (int k = 0; k < j; ++k) {
        pixels.push_back(s.gt_pixels[a][k].x());
        pixels.push_back(s.gt_pixels[a][k].y());
        vis.push_back(s.visibility(a, k) ? 1.0 : 0.0);
      }
    }
    for (int k = 0; k < j; ++k) {
      for (int d = 0; d < 3; ++d) joints.push_back(s.joints[k](d));
    }
  }
  TensorBlob blob(DType::F32);
  blob.add("views", views.data(), {n, v, z, j});
  blob.add("gt_pixels", pixels.data(), {n, v, j, 2});
  blob.add("visibility", vis.data(), {n, v, j});
  blob.add("joints", joints.data(), {n, j, 3});
  Json m{{"count", n},           {"v", v}, {"j", j}, {"h", first.grid.h}, {"w", first.grid.w},
         {"cameras", first.cameras}, {"heatmap_sigma", heatmap_sigma}};
  save_tensors(path, m, blob);
}

std::vector<MultiViewSample> load_samples(const fs::path& path) {
  auto [m, blob] = load_tensors(path, ErrorKind::MissingWorld);
  int n = 0, v = 0, j = 0;
  GridShape grid;
  std::vector<int> cameras;
  double sigma = 0.0;
  try {
    n = m.at("count").get<int>();
    v = m.at("v").get<int>();
    j = m.at("j").get<int>();
    grid = {m.at("h").get<int>(), m.at("w").get<int>()};
    cameras = m.at("cameras").get<std::vector<int>>();
    sigma = m.at("heatmap_sigma").get<double>();
  } catch (const Json::exception& e) {
    fail(ErrorKind::IoError, std::string("malformed dataset header: ") + e.what());
  }
  const int z = grid.cells();
  const auto views = blob.values("views");
  const auto pixels = blob.values("gt_pixels");
  const auto vis = blob.values("visibility");
  const auto joints = blob.values("joints");
  require(views.size() == static_cast<std::size_t>(n) * v * z * j, ErrorKind::IoError, "dataset size mismatch");
  std::vector<MultiViewSample> out(n);
  std::size_t iv = 0, ip = 0, ivis = 0, ij = 0;
  for (MultiViewSample& s : out) {
    s.grid = grid;
    s.cameras = cameras;
    s.visibility.resize(v, j);
    s.gt_pixels.assign(v, std::vector<Pixel>(j));
    for (int a = 0; a < v; ++a) {
      HeatmapStack st(z, j);
      for (int c = 0; c < z; ++c) {
        for (int k = 0; k < j; ++k) st(c, k) = views[iv++];
      }
      s.views.push_back(std::move(st));
      HeatmapStack gt(z, j);
      for (int k = 0; k < j; ++k) {
        s.gt_pixels[a][k] = {pixels[ip], pixels[ip + 1]};
        ip += 2;
        s.visibility(a, k) = vis[ivis++] > 0.5;
        set_channel(gt, k, render_gaussian(s.gt_pixels[a][k], grid, sigma));
      }
      s.gt_heatmaps.push_back(std::move(gt));
    }
    for (int k = 0; k < j; ++k) {
      s.joints.emplace_back(joints[ij], joints[ij + 1], joints[ij + 2]);
      ij += 3;
    }
  }
  return out;
}

// ---- reports

Json to_json(const EvalReport& report) {
  Json rows = Json::array();
  std::vector<std::pair<Baseline, int>> keys;
  for (const ReportRow& r : report.rows) {
    const ModelScore& s = r.score;
    rows.push_back({{"baseline", std::string(to_string(r.baseline))},
                    {"k", r.k},
                    {"pair", r.pair_index},
                    {"cameras", {r.cam_a, r.cam_b}},
                    {"jdr", {{"all", s.jdr.all}, {"visible", s.jdr.visible}, {"occluded", s.jdr.occluded}}},
                    {"n_visible", s.jdr.n_visible},
                    {"n_occluded", s.jdr.n_occluded},
                    {"per_joint_jdr", s.jdr.per_joint},
                    {"mpjpe", s.mpjpe},
                    {"test_loss", s.test_loss}});
    if (std::find(keys.begin(), keys.end(), std::make_pair(r.baseline, r.k)) == keys.end()) {
      keys.emplace_back(r.baseline, r.k);
    }
  }
  Json summary = Json::array();
  for (const auto& [b, k] : keys) {
    summary.push_back(
        {{"baseline", std::string(to_string(b))},
         {"k", k},
         {"jdr_all", median_over_pairs(report, b, k, [](const ModelScore& s) { return s.jdr.all; })},
         {"jdr_visible", median_over_pairs(report, b, k, [](const ModelScore& s) { return s.jdr.visible; })},
         {"jdr_occluded", median_over_pairs(report, b, k, [](const ModelScore& s) { return s.jdr.occluded; })},
         {"mpjpe", median_over_pairs(report, b, k, [](const ModelScore& s) { return s.mpjpe; })},
         {"test_loss", median_over_pairs(report, b, k, [](const ModelScore& s) { return s.test_loss; })}});
  }
  return {{"fingerprint", report.fingerprint}, {"seed", report.seed}, {"rows", rows}, {"median_over_pairs", summary}};
}

// ---- images

std::string to_pgm(const Heatmap& map) {
  const double peak = map.cwiseAbs().maxCoeff();
  std::string out = "P5\n" + std::to_string(map.cols()) + " " + std::to_string(map.rows()) + "\n255\n";
  for (Eigen::Index r = 0; r < map.rows(); ++r) {
    for (Eigen::Index c = 0; c < map.cols(); ++c) {
      const double x = peak > 0.0 ? std::abs(map(r, c)) / peak : 0.0;
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * x))));
    }
  }
  return out;
}

}  // namespace fuselab
