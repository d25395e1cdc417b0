#pragma once

// Shared domain types. Units: millimetres for every 3D quantity, pixels and
// voxels for grid quantities, images in [0,1].

#include "fgmae/errors.hpp"
#include "fgmae/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fgmae {

using Keypoints = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Image = Matrix<float>;  // (H*W) x C, row-major pixel order

enum class Domain { source, target, unconstrained };
std::string to_string(Domain d);
Domain domain_from_string(const std::string& s);

// Orthographic camera: u = u0 + scale * x, v = v0 + scale * y (x right, y down, z away).
struct Camera {
  double scale = 1.0;  // px per mm
  double u0 = 0.0;
  double v0 = 0.0;
  Eigen::Vector2d project(const Eigen::Vector3d& p) const { return {u0 + scale * p.x(), v0 + scale * p.y()}; }
};

// Metric bounding cube of a heatmap volume.
struct Cube {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double side = 1.0;
  bool operator==(const Cube& o) const { return center == o.center && side == o.side; }
};

struct ImageSample {
  int height = 0;
  int width = 0;
  Image pixels;                  // (H*W) x 3
  std::optional<Image> mask;     // (H*W) x 1, foreground probability
  std::optional<Keypoints> keypoints;
  std::optional<Cube> cube;
  std::optional<Camera> camera;
  Domain domain = Domain::source;
  std::string sample_id;
  std::uint64_t rng_seed = 0;
};

// Throws InvalidShape / InvalidParam when an invariant is broken.
void validate(const ImageSample& s, int patch_size, int joints);

template <typename T>
struct TokenBatch {
  Matrix<T> tokens;                   // M x d
  std::vector<Index> index_map;       // original patch index of each non-class row
  std::vector<std::uint8_t> binary_mask;  // N entries, 1 = masked
  bool has_cls = false;
};

template <typename T>
void validate(const TokenBatch<T>& b);

struct PatchWeights {
  Eigen::VectorXd ratios;   // w*, foreground ratio per patch
  Eigen::VectorXd weights;  // w, normalised to sum N
  double alpha = 4.0;
};

void validate(const PatchWeights& w);

// K x D x H x W volume, flattened with x fastest.
template <typename T>
struct Heatmap3D {
  int joints = 0;
  int size = 0;  // D = H = W
  Vector<T> volume;
  Cube cube;
  double sigma = 2.0;

  Index index(int k, int z, int y, int x) const {
    return ((Index(k) * size + z) * size + y) * size + x;
  }
  T& at(int k, int z, int y, int x) { return volume(index(k, z, y, x)); }
  T at(int k, int z, int y, int x) const { return volume(index(k, z, y, x)); }
  double voxel_mm() const { return cube.side / size; }
};

template <typename T>
void validate(const Heatmap3D<T>& h, int num_patches);

template <typename T>
struct AttentionStack {
  Matrix<T> rows;  // L x N
};

template <typename T>
void validate(const AttentionStack<T>& a, int blocks, int num_patches);

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class TargetMaskSource { learned, oracle, none };
enum class FinetuneMode { alternating, combined };

struct StageConfig {
  double lr = 1e-3;
  double min_lr = 0.0;
  double weight_decay = 0.05;
  int steps = 100;
  int warmup = 10;
  int batch = 16;
};

struct AugmentConfig {
  double rotation_deg = 10.0;
  double translate_frac = 0.05;
  double scale_min = 0.9;
  double scale_max = 1.1;
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;

  static AugmentConfig none() { return {0, 0, 1, 1, 0, 0, 0}; }
};

struct SegmenterConfig {
  int levels = 3;
  int channels = 16;
  StageConfig train{2e-3, 0.0, 1e-4, 300, 20, 8};
  double val_fraction = 0.1;
  int eval_every = 50;
};

struct ModelConfig {
  int image_size = 64;
  int patch_size = 8;
  int embed_dim = 64;
  int depth = 4;
  int heads = 4;
  int mlp_ratio = 4;
  int decoder_dim = 32;
  int decoder_heads = 4;

  int joints = 8;
  int root_joint = 0;
  int head_channels = 32;
  double heatmap_sigma = 2.0;
  double cube_side_mm = 720.0;

  double mask_ratio = 0.75;
  double alpha = 4.0;
  double lambda_attn = 100.0;
  bool normalize_kpt_loss = false;

  // ablation switches
  bool fcr = true;
  bool ar = true;
  bool bg_aug = true;
  TargetMaskSource target_mask_source = TargetMaskSource::learned;

  double bg_swap_prob = 0.5;
  double mask_threshold = 0.5;
  FinetuneMode finetune_mode = FinetuneMode::alternating;
  double target_batch_ratio = 1.0;

  StageConfig pretrain{2.4e-3, 0.0, 0.05, 500, 50, 32};
  StageConfig finetune{5e-4, 0.0, 0.05, 1000, 50, 32};
  AugmentConfig augment;
  bool augment_finetune = true;
  SegmenterConfig segmenter;

  bool epe_root_align = false;
  int snapshot_every = 100;
  std::uint64_t seed = 0;

  int grid() const { return image_size / patch_size; }
  int num_patches() const { return grid() * grid(); }
  int patch_dim() const { return patch_size * patch_size * 3; }
  int heatmap_size() const { return 4 * grid(); }
  double effective_lambda() const { return ar ? lambda_attn : 0.0; }

  static ModelConfig toy();
  static ModelConfig paper();
};

void validate(const ModelConfig& c);

nlohmann::json config_to_json(const ModelConfig& c);
// Overlays `overrides` on `base`; unknown keys raise InvalidParam.
ModelConfig merge_config(const ModelConfig& base, const nlohmann::json& overrides);

}  // namespace fgmae
