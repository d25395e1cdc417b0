#pragma once

// Evaluation, attention probing and the experiment pipeline shared by the CLI
// and the acceptance suite.

#include "fgmae/datamodel.hpp"
#include "fgmae/keypoint_head.hpp"
#include "fgmae/training.hpp"
#include "fgmae/vit.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fgmae {

struct SampleMetrics {
  std::string sample_id;
  std::string domain;
  double epe = 0.0;
  double mpjpe = 0.0;
  double pa_mpjpe = 0.0;
};

struct DomainMetrics {
  double epe = 0.0;
  double mpjpe = 0.0;
  double pa_mpjpe = 0.0;
  int n_samples = 0;
};

struct EvalReport {
  std::map<std::string, DomainMetrics> domains;
  std::vector<SampleMetrics> samples;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// Scores predictions against ground truth; EPE is root-aligned when
// c.epe_root_align is set.
EvalReport score(const std::vector<ImageSample>& samples, const std::vector<Keypoints>& preds, const ModelConfig& c);

EvalReport evaluate(Encoder<float>& enc, KeypointHead<float>& head, const ModelConfig& c,
                    const std::vector<ImageSample>& samples);

// report.json + samples.csv
void write_report(const EvalReport& r, const std::filesystem::path& dir);

struct AttentionProbe {
  Image map;  // (H*W) x 1, block-mean class attention upsampled bilinearly
  double foreground_mass = 0.0;  // sum(map * mask) / sum(map); NaN without a mask
};

AttentionProbe probe_attention(Encoder<float>& enc, const ModelConfig& c, const ImageSample& s);

// Bilinear upsampling of a g x g grid (row-major) to h x w pixel centres.
Image upsample_grid(const Eigen::VectorXd& grid_values, int g, int h, int w);

// 0.5 * image + 0.5 * jet(map / max(map)).
Image heat_overlay(const Image& pixels, const Image& map);

// Writes <dir>/<sample_id>.png overlays for the first `max_images` samples and
// attention.csv with the foreground mass of every sample; returns the mean
// mass over samples that have masks.
double probe_directory(Encoder<float>& enc, const ModelConfig& c, const std::vector<ImageSample>& samples,
                       const std::filesystem::path& dir, int max_images = 16);

// ---------------------------------------------------------------------------
// Experiment pipeline
// ---------------------------------------------------------------------------

struct Dataset {
  TrainData train;
  std::vector<ImageSample> test_source;
  std::vector<ImageSample> test_target;
};

Dataset load_dataset(const std::filesystem::path& root);

struct Variant {
  std::string name;
  std::string slug;  // directory name
  ModelConfig config;
  bool scratch = false;  // skip pre-training
};

// The full method and the ablation rows derived from `base`.
std::vector<Variant> ablation_variants(const ModelConfig& base);

struct RunResult {
  std::string name;
  EvalReport report;
  double foreground_mass = 0.0;
  std::vector<double> pretrain_loss;
  std::vector<double> kpt_loss;
  std::vector<double> attn_loss;
  bool frozen_unchanged = true;
};

// Memoises segmenter predictions and pre-trained encoders across variants
// that share them.
struct PipelineCache {
  std::map<std::string, std::vector<Image>> target_masks;
  std::map<std::string, PretrainResult> pretrained;
};

// Segmenter (learned mode) -> pre-training -> fine-tuning -> evaluation on
// test/target and test/source -> attention probe. run_dir receives the
// resolved config, metrics, checkpoints, report and overlays.
RunResult run_variant(const Variant& v, const Dataset& data, const std::filesystem::path& run_dir,
                      PipelineCache* cache = nullptr, bool verbose = false);

// Segmenter predictions for the target training images.
std::vector<Image> predict_target_masks(const ModelConfig& c, const Dataset& data, const std::filesystem::path& run_dir,
                                        double* source_iou = nullptr, double* target_iou = nullptr);

struct AblationRow {
  std::string name;
  std::vector<RunResult> runs;  // one per seed
  double median_target_epe() const;
  double median_foreground_mass() const;
};

std::vector<AblationRow> run_ablation(const ModelConfig& base, const Dataset& data, const std::vector<std::string>& names,
                                      const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out_dir,
                                      bool verbose = false);

std::string ablation_table(const std::vector<AblationRow>& rows);

double median(std::vector<double> v);

}  // namespace fgmae
