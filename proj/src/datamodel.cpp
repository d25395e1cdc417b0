#include "fgmae/datamodel.hpp"

#include <cmath>
#include <set>

namespace fgmae {

NLOHMANN_JSON_SERIALIZE_ENUM(TargetMaskSource, {{TargetMaskSource::learned, "learned"},
                                                {TargetMaskSource::oracle, "oracle"},
                                                {TargetMaskSource::none, "none"}})
NLOHMANN_JSON_SERIALIZE_ENUM(FinetuneMode, {{FinetuneMode::alternating, "alternating"},
                                            {FinetuneMode::combined, "combined"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(StageConfig, lr, min_lr, weight_decay, steps, warmup, batch)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AugmentConfig, rotation_deg, translate_frac, scale_min, scale_max,
                                                brightness, contrast, saturation)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SegmenterConfig, levels, channels, train, val_fraction, eval_every)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ModelConfig, image_size, patch_size, embed_dim, depth, heads,
                                                mlp_ratio, decoder_dim, decoder_heads, joints, root_joint,
                                                head_channels, heatmap_sigma, cube_side_mm, mask_ratio, alpha,
                                                lambda_attn, normalize_kpt_loss, fcr, ar, bg_aug,
                                                target_mask_source, bg_swap_prob, mask_threshold, finetune_mode,
                                                target_batch_ratio, pretrain, finetune, augment, augment_finetune,
                                                segmenter, epe_root_align, snapshot_every, seed)

std::string to_string(Domain d) {
  switch (d) {
    case Domain::source: return "source";
    case Domain::target: return "target";
    case Domain::unconstrained: return "unconstrained";
  }
  return "unknown";
}

Domain domain_from_string(const std::string& s) {
  if (s == "source") return Domain::source;
  if (s == "target") return Domain::target;
  if (s == "unconstrained") return Domain::unconstrained;
  throw InvalidParam("unknown domain '" + s + "'");
}

void validate(const ImageSample& s, int patch_size, int joints) {
  if (s.height <= 0 || s.width <= 0 || s.height % patch_size != 0 || s.width % patch_size != 0)
    throw InvalidShape("image " + s.sample_id + " is " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                       ", not a positive multiple of patch size " + std::to_string(patch_size));
  const Index n = Index(s.height) * s.width;
  if (s.pixels.rows() != n || s.pixels.cols() != 3) throw InvalidShape("pixels must be (H*W) x 3");
  if (s.pixels.size() > 0 && (s.pixels.minCoeff() < 0.f || s.pixels.maxCoeff() > 1.f))
    throw InvalidParam("pixel values outside [0,1] in " + s.sample_id);
  if (s.mask) {
    if (s.mask->rows() != n || s.mask->cols() != 1) throw InvalidShape("mask must be (H*W) x 1");
    if (s.mask->minCoeff() < 0.f || s.mask->maxCoeff() > 1.f)
      throw InvalidParam("mask values outside [0,1] in " + s.sample_id);
  }
  if (s.keypoints && s.keypoints->rows() != joints)
    throw InvalidShape("expected " + std::to_string(joints) + " keypoints, got " +
                       std::to_string(s.keypoints->rows()));
  if (s.cube && !(s.cube->side > 0)) throw InvalidParam("cube side must be positive");
}

template <typename T>
void validate(const TokenBatch<T>& b) {
  const Index n = static_cast<Index>(b.binary_mask.size());
  std::set<Index> seen;
  for (Index i : b.index_map) {
    if (i < 0 || i >= n) throw InvalidShape("index_map entry out of range");
    if (!seen.insert(i).second) throw InvalidShape("index_map entries must be distinct");
  }
  Index kept = 0;
  for (auto m : b.binary_mask) {
    if (m > 1) throw InvalidParam("binary mask entries must be 0 or 1");
    kept += (m == 0);
  }
  if (b.tokens.rows() != kept + (b.has_cls ? 1 : 0)) throw InvalidShape("token count != unmasked count (+cls)");
  if (static_cast<Index>(b.index_map.size()) != kept) throw InvalidShape("index_map length != unmasked count");
}

void validate(const PatchWeights& w) {
  const Index n = w.weights.size();
  if (n == 0 || w.ratios.size() != n) throw InvalidShape("patch weights and ratios must be non-empty and aligned");
  if ((w.weights.array() <= 0).any()) throw InvalidParam("patch weights must be strictly positive");
  if (std::abs(w.weights.sum() - double(n)) > 1e-6 * double(n)) throw InvalidParam("patch weights must sum to N");
  if ((w.ratios.array() < 0).any() || (w.ratios.array() > 1).any()) throw InvalidParam("ratios outside [0,1]");
}

template <typename T>
void validate(const Heatmap3D<T>& h, int num_patches) {
  const int side = static_cast<int>(std::lround(std::sqrt(double(num_patches))));
  if (h.size != 4 * side) throw InvalidShape("heatmap side must be 4*sqrt(N)");
  if (h.volume.size() != Index(h.joints) * h.size * h.size * h.size) throw InvalidShape("heatmap volume size");
  if (h.volume.size() > 0 && h.volume.minCoeff() < T(0)) throw InvalidParam("heatmap voxels must be >= 0");
}

template <typename T>
void validate(const AttentionStack<T>& a, int blocks, int num_patches) {
  if (a.rows.rows() != blocks || a.rows.cols() != num_patches) throw InvalidShape("attention stack must be L x N");
  for (Index l = 0; l < a.rows.rows(); ++l) {
    const T s = a.rows.row(l).sum();
    if (!(s > T(0) && s <= T(1) + T(1e-6))) throw InvalidParam("attention stack row sum outside (0,1]");
    if ((a.rows.row(l).array() < T(0)).any()) throw InvalidParam("negative attention");
  }
}

template void validate<float>(const TokenBatch<float>&);
template void validate<double>(const TokenBatch<double>&);
template void validate<float>(const Heatmap3D<float>&, int);
template void validate<double>(const Heatmap3D<double>&, int);
template void validate<float>(const AttentionStack<float>&, int, int);
template void validate<double>(const AttentionStack<double>&, int, int);

ModelConfig ModelConfig::toy() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.image_size = 256;
  c.patch_size = 16;
  c.embed_dim = 768;
  c.depth = 12;
  c.heads = 12;
  c.decoder_dim = 512;
  c.decoder_heads = 16;
  c.joints = 21;
  c.head_channels = 256;
  c.pretrain = {2.4e-3, 0.0, 0.05, 800, 40, 4096};
  c.finetune = {5e-4, 0.0, 0.05, 50, 5, 128};
  c.segmenter.levels = 5;
  c.segmenter.channels = 64;
  return c;
}

void validate(const ModelConfig& c) {
  auto fail = [](const std::string& m) { throw InvalidParam(m); };
  if (c.patch_size <= 0 || c.image_size <= 0 || c.image_size % c.patch_size != 0)
    fail("image_size must be a positive multiple of patch_size");
  if (c.embed_dim <= 0 || c.heads <= 0 || c.embed_dim % c.heads != 0) fail("heads must divide embed_dim");
  if (c.decoder_dim <= 0 || c.decoder_heads <= 0 || c.decoder_dim % c.decoder_heads != 0)
    fail("decoder_heads must divide decoder_dim");
  if (c.depth <= 0) fail("depth must be positive");
  if (!(c.mask_ratio >= 0.0 && c.mask_ratio < 1.0)) fail("mask_ratio must lie in [0,1)");
  if (!std::isfinite(c.alpha)) fail("alpha must be finite");
  if (!(c.lambda_attn >= 0.0)) fail("lambda_attn must be >= 0");
  if (c.joints <= 0 || c.root_joint < 0 || c.root_joint >= c.joints) fail("root_joint must index a joint");
  if (!(c.heatmap_sigma > 0.0)) fail("heatmap_sigma must be positive");
  if (!(c.cube_side_mm > 0.0)) fail("cube_side_mm must be positive");
  for (const StageConfig* s : {&c.pretrain, &c.finetune, &c.segmenter.train})
    if (s->warmup < 0 || s->warmup >= s->steps || s->batch <= 0) fail("stage needs 0 <= warmup < steps, batch > 0");
  if (c.image_size % (1 << c.segmenter.levels) != 0) fail("image_size must be divisible by 2^segmenter.levels");
  if (!(c.augment.scale_min > 0.0 && c.augment.scale_max >= c.augment.scale_min)) fail("augment scale range");
}

nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json j = c;
  return j;
}

namespace {

void check_known_keys(const nlohmann::json& known, const nlohmann::json& given, const std::string& prefix) {
  for (auto it = given.begin(); it != given.end(); ++it) {
    if (!known.contains(it.key())) throw InvalidParam("unknown config key '" + prefix + it.key() + "'");
    if (it.value().is_object() && known[it.key()].is_object())
      check_known_keys(known[it.key()], it.value(), prefix + it.key() + ".");
  }
}

}  // namespace

ModelConfig merge_config(const ModelConfig& base, const nlohmann::json& overrides) {
  nlohmann::json j = config_to_json(base);
  if (!overrides.is_object()) throw InvalidParam("config must be a JSON object");
  check_known_keys(j, overrides, "");
  j.merge_patch(overrides);
  ModelConfig out;
  try {
    out = j.get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidParam(std::string("config: ") + e.what());
  }
  validate(out);
  return out;
}

}  // namespace fgmae
