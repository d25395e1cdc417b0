#pragma once

// Two-stage procedure: masked-autoencoder pre-training with the
// foreground-weighted reconstruction loss, then fine-tuning with the keypoint
// loss on source images and attention regularisation on target images.

#include "fgmae/datamodel.hpp"
#include "fgmae/keypoint_head.hpp"
#include "fgmae/vit.hpp"

#include <filesystem>
#include <functional>
#include <vector>

namespace fgmae {

struct TrainData {
  std::vector<ImageSample> source;         // images, masks, keypoints
  std::vector<ImageSample> target;         // images; masks as provided by the mask-source mode
  std::vector<ImageSample> unconstrained;  // background bank
};

// Prepares target masks for `mode`: oracle keeps them, none drops them,
// learned replaces them with `predicted` (one per sample, required).
void assign_target_masks(std::vector<ImageSample>& target, TargetMaskSource mode,
                         const std::vector<Image>* predicted = nullptr);

struct PretrainResult {
  Encoder<float> encoder;
  Decoder<float> decoder;
  std::vector<double> loss;  // per step
};

struct FinetuneResult {
  Encoder<float> encoder;
  KeypointHead<float> head;
  std::vector<double> kpt_loss;   // per step
  std::vector<double> attn_loss;  // per step (0 when the target pass is skipped)
  bool frozen_unchanged = true;   // frozen copy identical before and after
};

// Optional hook called after every step with (stage, step, losses json).
using StepHook = std::function<void(const nlohmann::json&)>;

// run_dir (may be empty) receives metrics.jsonl, reconstruction snapshots and
// the final checkpoint.
PretrainResult pretrain(const ModelConfig& c, const TrainData& data, const std::filesystem::path& run_dir = {},
                        const StepHook& hook = {});

// `pretrained` == nullptr trains from a random encoder.
FinetuneResult finetune(const ModelConfig& c, const TrainData& data, const Encoder<float>* pretrained,
                        const std::filesystem::path& run_dir = {}, const StepHook& hook = {});

// Root-relative cube used for targets and decoding.
Cube pose_cube(const ImageSample& s, const ModelConfig& c);

// Head-layout Gaussian targets of one sample.
Matrix<float> heatmap_targets(const ImageSample& s, const ModelConfig& c);

// Evaluation-mode prediction in millimetres; the cube comes from pose_cube.
std::vector<Keypoints> predict_keypoints(Encoder<float>& enc, KeypointHead<float>& head, const ModelConfig& c,
                                         const std::vector<ImageSample>& samples, int batch = 32);

}  // namespace fgmae
