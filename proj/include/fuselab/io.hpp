#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuselab/error.hpp"
#include "fuselab/experiment.hpp"
#include "fuselab/fusion.hpp"
#include "fuselab/synthworld.hpp"
#include "fuselab/train.hpp"

namespace fuselab {

using Json = nlohmann::json;
namespace fs = std::filesystem;

std::string sha256_hex(std::string_view bytes);
/// Hash of a file's bytes; `missing` is the error kind when it cannot be read.
std::string sha256_file(const fs::path& path, ErrorKind missing = ErrorKind::IoError);

std::string read_file(const fs::path& path, ErrorKind missing = ErrorKind::IoError);
/// Creates parent directories; IoError on failure.
void write_file(const fs::path& path, std::string_view bytes);
Json read_json(const fs::path& path, ErrorKind missing = ErrorKind::IoError);
/// Pretty-printed with a trailing newline.
void write_json(const fs::path& path, const Json& j);

// ---- configs

Json to_json(const WorldConfig& cfg);
Json to_json(const TrainConfig& cfg);
Json to_json(const EvalConfig& cfg);
Json to_json(const ExperimentConfig& cfg);

/// Missing sections fall back to defaults; inside "world" the fields n_cams,
/// radius, grid, n_joints, occl_rate, noise and seed are required. Unknown or
/// ill-typed fields throw ConfigError naming the path, e.g. "world.grid.h".
ExperimentConfig experiment_from_json(const Json& j);
ExperimentConfig load_experiment_config(const fs::path& path);
/// Hex SHA-256 of the canonical (compact) config JSON.
std::string config_fingerprint(const ExperimentConfig& cfg);

// ---- cameras

Json to_json(const Camera& cam);
Camera camera_from_json(const Json& j);
Json to_json(const Rig& rig);
Rig rig_from_json(const Json& j);

// ---- tensor blobs

enum class DType { F32, F64 };

/// Named row-major tensors packed into one little-endian byte string. The
/// header lists {name, dtype, shape, offset} per tensor.
class TensorBlob {
 public:
  explicit TensorBlob(DType dtype = DType::F32) : dtype_(dtype) {}

  void add(const std::string& name, const double* data, std::vector<std::int64_t> shape);
  /// Stored row-major whatever the Eigen storage order.
  void add_matrix(const std::string& name, const Eigen::MatrixXd& m);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<std::int64_t>& shape(const std::string& name) const;
  std::vector<double> values(const std::string& name) const;
  Eigen::MatrixXd matrix(const std::string& name) const;

  Json header() const;
  const std::string& bytes() const { return bytes_; }
  static TensorBlob parse(const Json& header, std::string bytes);

 private:
  struct Entry {
    std::string name;
    DType dtype = DType::F32;
    std::vector<std::int64_t> shape;
    std::int64_t offset = 0;
  };
  const Entry& entry(const std::string& name) const;

  DType dtype_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  std::string bytes_;
};

/// Writes `manifest` (plus "t" and "blob") to `path` and the tensor bytes to
/// the sibling file named by path.stem() + ".bin".
void save_tensors(const fs::path& path, Json manifest, const TensorBlob& blob);
/// Returns the manifest and its tensors; `missing` is the error kind when the
/// manifest or blob is absent.
std::pair<Json, TensorBlob> load_tensors(const fs::path& path, ErrorKind missing);

// ---- models and checkpoints

/// Model file: manifest {kind, grid, pairs, base_frozen, t} plus blob.
void save_model(const fs::path& path, const FusionParams& params, const Json& extra = Json::object(),
                DType dtype = DType::F32);
FusionParams load_model(const fs::path& path);
/// Model plus the manifest it was stored with.
std::pair<FusionParams, Json> load_model_with_manifest(const fs::path& path);

/// Optimizer sidecar: full-precision parameters, Adam moments and counters,
/// enough to resume meta-training bitwise.
void save_meta_state(const fs::path& path, const MetaTrainState& state, const Json& extra = Json::object());
MetaTrainState load_meta_state(const fs::path& path);

// ---- datasets

/// Detections, ground-truth pixels, visibility and joints as f32; ground-truth
/// heatmaps are re-rendered from the pixels on load.
void save_samples(const fs::path& path, const std::vector<MultiViewSample>& samples, double heatmap_sigma);
std::vector<MultiViewSample> load_samples(const fs::path& path);

// ---- reports

/// Rows with per-joint JDR, plus medians over pairs per (baseline, K).
Json to_json(const EvalReport& report);

// ---- images

/// 8-bit binary PGM, |x| scaled so the maximum maps to 255.
std::string to_pgm(const Heatmap& map);

}  // namespace fuselab
