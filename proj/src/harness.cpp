#include "fgmae/harness.hpp"

#include "fgmae/checkpoint.hpp"
#include "fgmae/dataset.hpp"
#include "fgmae/image_io.hpp"
#include "fgmae/metrics.hpp"
#include "fgmae/patching.hpp"
#include "fgmae/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

namespace fgmae {

namespace fs = std::filesystem;

namespace {

double finite_mean(const std::vector<double>& v) {
  double sum = 0.0;
  int n = 0;
  for (double x : v)
    if (std::isfinite(x)) sum += x, ++n;
  return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, m] : domains)
    j[name] = {{"epe", m.epe}, {"mpjpe", m.mpjpe}, {"pa_mpjpe", m.pa_mpjpe}, {"n_samples", m.n_samples}};
  return j;
}

std::string EvalReport::to_csv() const {
  std::string out = "sample_id,domain,epe,mpjpe,pa_mpjpe\n";
  for (const auto& s : samples)
    out += s.sample_id + "," + s.domain + "," + fmt(s.epe) + "," + fmt(s.mpjpe) + "," + fmt(s.pa_mpjpe) + "\n";
  return out;
}

EvalReport score(const std::vector<ImageSample>& samples, const std::vector<Keypoints>& preds, const ModelConfig& c) {
  if (samples.size() != preds.size()) throw InvalidShape("score: one prediction per sample required");
  EvalReport r;
  std::map<std::string, std::vector<SampleMetrics>> by_domain;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (!s.keypoints) throw MissingAnnotation("evaluation sample " + s.sample_id + " has no keypoints");
    SampleMetrics m;
    m.sample_id = s.sample_id;
    m.domain = to_string(s.domain);
    const Keypoints& gt = *s.keypoints;
    if (c.epe_root_align) {
      const Keypoints p = preds[i].rowwise() - preds[i].row(c.root_joint);
      const Keypoints g = gt.rowwise() - gt.row(c.root_joint);
      m.epe = epe(p, g);
    } else {
      m.epe = epe(preds[i], gt);
    }
    m.mpjpe = mpjpe(preds[i], gt, c.root_joint);
    try {
      m.pa_mpjpe = pa_mpjpe(preds[i], gt);
    } catch (const DegeneratePose&) {
      m.pa_mpjpe = std::numeric_limits<double>::quiet_NaN();
    }
    r.samples.push_back(m);
    by_domain[m.domain].push_back(m);
  }
  for (const auto& [name, ms] : by_domain) {
    std::vector<double> e, mp, pa;
    for (const auto& m : ms) e.push_back(m.epe), mp.push_back(m.mpjpe), pa.push_back(m.pa_mpjpe);
    r.domains[name] = {finite_mean(e), finite_mean(mp), finite_mean(pa), static_cast<int>(ms.size())};
  }
  return r;
}

EvalReport evaluate(Encoder<float>& enc, KeypointHead<float>& head, const ModelConfig& c,
                    const std::vector<ImageSample>& samples) {
  for (const auto& s : samples)
    if (!s.keypoints) throw MissingAnnotation("evaluation sample " + s.sample_id + " has no keypoints");
  return score(samples, predict_keypoints(enc, head, c, samples), c);
}

void write_report(const EvalReport& r, const fs::path& dir) {
  fs::create_directories(dir);
  write_text(dir / "report.json", r.to_json().dump(2) + "\n");
  write_text(dir / "samples.csv", r.to_csv());
}

Image upsample_grid(const Eigen::VectorXd& v, int g, int h, int w) {
  if (v.size() != Index(g) * g) throw InvalidShape("upsample_grid: expected g*g values");
  Image out(Index(h) * w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double sy = std::clamp((y + 0.5) * g / h - 0.5, 0.0, g - 1.0);
      const double sx = std::clamp((x + 0.5) * g / w - 0.5, 0.0, g - 1.0);
      const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
      const int y1 = std::min(y0 + 1, g - 1), x1 = std::min(x0 + 1, g - 1);
      const double ay = sy - y0, ax = sx - x0;
      const double val = (1 - ay) * ((1 - ax) * v(y0 * g + x0) + ax * v(y0 * g + x1)) +
                         ay * ((1 - ax) * v(y1 * g + x0) + ax * v(y1 * g + x1));
      out(Index(y) * w + x, 0) = static_cast<float>(val);
    }
  return out;
}

AttentionProbe probe_attention(Encoder<float>& enc, const ModelConfig& c, const ImageSample& s) {
  const auto spec = PatchGridSpec::make(s.height, s.width, c.patch_size);
  if (spec.rows() != spec.cols()) throw InvalidShape("probe_attention: square patch grid required");
  const auto r = encode_image(enc, s.pixels, spec);
  const Eigen::VectorXd mean = r.stack.rows.cast<double>().colwise().mean().transpose();
  AttentionProbe p;
  p.map = upsample_grid(mean, spec.rows(), s.height, s.width);
  if (s.mask) {
    const double total = p.map.cast<double>().sum();
    p.foreground_mass = p.map.cast<double>().cwiseProduct(s.mask->cast<double>()).sum() / total;
  } else {
    p.foreground_mass = std::numeric_limits<double>::quiet_NaN();
  }
  return p;
}

Image heat_overlay(const Image& pixels, const Image& map) {
  if (map.rows() != pixels.rows()) throw InvalidShape("heat_overlay: map and image differ in size");
  const float mx = map.maxCoeff();
  Image out(pixels.rows(), 3);
  for (Index i = 0; i < pixels.rows(); ++i) {
    const float v = mx > 0.0f ? map(i, 0) / mx : 0.0f;
    const float r = std::clamp(1.5f - std::abs(4.0f * v - 3.0f), 0.0f, 1.0f);
    const float g = std::clamp(1.5f - std::abs(4.0f * v - 2.0f), 0.0f, 1.0f);
    const float b = std::clamp(1.5f - std::abs(4.0f * v - 1.0f), 0.0f, 1.0f);
    for (int ch = 0; ch < 3; ++ch) out(i, ch) = 0.5f * pixels(i, ch % pixels.cols()) + 0.5f * (ch == 0 ? r : ch == 1 ? g : b);
  }
  return out;
}

double probe_directory(Encoder<float>& enc, const ModelConfig& c, const std::vector<ImageSample>& samples,
                       const fs::path& dir, int max_images) {
  fs::create_directories(dir);
  std::string csv = "sample_id,foreground_mass\n";
  std::vector<double> masses;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const AttentionProbe p = probe_attention(enc, c, s);
    if (int(i) < max_images) write_png(dir / (s.sample_id + ".png"), heat_overlay(s.pixels, p.map), s.height, s.width);
    csv += s.sample_id + "," + fmt(p.foreground_mass) + "\n";
    masses.push_back(p.foreground_mass);
  }
  write_text(dir / "attention.csv", csv);
  return finite_mean(masses);
}

Dataset load_dataset(const fs::path& root) {
  Dataset d;
  d.train.source = read_split(root, "train", Domain::source);
  d.train.target = read_split(root, "train", Domain::target);
  if (fs::exists(split_dir(root, "train", Domain::unconstrained)))
    d.train.unconstrained = read_split(root, "train", Domain::unconstrained);
  if (fs::exists(split_dir(root, "test", Domain::source))) d.test_source = read_split(root, "test", Domain::source);
  d.test_target = read_split(root, "test", Domain::target);
  return d;
}

std::vector<Variant> ablation_variants(const ModelConfig& base) {
  std::vector<Variant> v;
  auto add = [&v, &base](const std::string& name, const std::string& slug, auto edit, bool scratch = false) {
    Variant x{name, slug, base, scratch};
    edit(x.config);
    v.push_back(x);
  };
  add("full", "full", [](ModelConfig&) {});
  add("w/o FCR", "no_fcr", [](ModelConfig& c) { c.fcr = false; });
  add("w/o AR", "no_ar", [](ModelConfig& c) { c.ar = false; });
  add("w/o FCR, AR", "no_fcr_ar", [](ModelConfig& c) { c.fcr = false, c.ar = false; });
  add("w/o S_T", "no_st", [](ModelConfig& c) { c.target_mask_source = TargetMaskSource::none; });
  add("w/o X_C", "no_xc", [](ModelConfig& c) { c.bg_aug = false; });
  add("scratch", "scratch", [](ModelConfig& c) { c.ar = false; }, true);
  return v;
}

namespace {

std::string segmenter_key(const ModelConfig& c) {
  nlohmann::json j = config_to_json(c);
  return nlohmann::json{{"seed", c.seed}, {"segmenter", j["segmenter"]}, {"bg_swap_prob", c.bg_swap_prob}}.dump();
}

std::string pretrain_key(const ModelConfig& c) {
  nlohmann::json j = config_to_json(c);
  for (const char* k : {"ar", "lambda_attn", "finetune", "finetune_mode", "target_batch_ratio", "augment_finetune",
                        "epe_root_align", "normalize_kpt_loss", "head_channels", "heatmap_sigma", "cube_side_mm",
                        "snapshot_every"})
    j.erase(k);
  return j.dump();
}

StepHook progress(const std::string& name, bool verbose) {
  if (!verbose) return {};
  return [name](const nlohmann::json& j) {
    const int step = j.value("step", 0);
    if (step % 50 != 0) return;
    std::cerr << "[" << name << "] " << j.dump() << std::endl;
  };
}

}  // namespace

std::vector<Image> predict_target_masks(const ModelConfig& c, const Dataset& data, const fs::path& run_dir,
                                        double* source_iou, double* target_iou) {
  SegmenterTrainLog log;
  Segmenter<float> seg = train_segmenter(data.train.source, data.train.unconstrained, c.segmenter,
                                         mix_seed(c.seed, 5), c.bg_swap_prob, &log);
  std::vector<Image> masks;
  for (const auto& s : data.train.target) masks.push_back(quantize(segment(seg, s)));
  auto mean_iou = [&seg, &c](const std::vector<ImageSample>& xs) {
    std::vector<double> v;
    for (const auto& s : xs)
      if (s.mask) v.push_back(iou(segment(seg, s), *s.mask, float(c.mask_threshold)));
    return finite_mean(v);
  };
  if (source_iou) *source_iou = mean_iou(data.test_source);
  if (target_iou) *target_iou = mean_iou(data.test_target);
  if (!run_dir.empty()) {
    const fs::path dir = run_dir / "predicted" / "train" / to_string(Domain::target);
    write_masks(dir, data.train.target, masks);
    Checkpoint ck;
    export_model(seg, ck);
    save_checkpoint(run_dir / "segmenter.pmud", ck);
    std::string csv = "step,train_loss\n";
    for (std::size_t i = 0; i < log.train_loss.size(); ++i) csv += std::to_string(i) + "," + fmt(log.train_loss[i]) + "\n";
    write_text(run_dir / "segmenter_loss.csv", csv);
  }
  return masks;
}

RunResult run_variant(const Variant& v, const Dataset& data, const fs::path& run_dir, PipelineCache* cache,
                      bool verbose) {
  const ModelConfig& c = v.config;
  validate(c);
  fs::create_directories(run_dir);
  nlohmann::json resolved = config_to_json(c);
  resolved["variant"] = v.name;
  resolved["scratch"] = v.scratch;
  write_text(run_dir / "config.json", resolved.dump(2) + "\n");

  RunResult r;
  r.name = v.name;
  TrainData td = data.train;
  std::optional<Encoder<float>> encoder;
  if (!v.scratch) {
    if (c.target_mask_source == TargetMaskSource::learned) {
      const std::string key = segmenter_key(c);
      std::vector<Image> masks;
      if (cache && cache->target_masks.count(key)) {
        masks = cache->target_masks[key];
      } else {
        masks = predict_target_masks(c, data, run_dir, nullptr, nullptr);
        if (cache) cache->target_masks[key] = masks;
      }
      assign_target_masks(td.target, c.target_mask_source, &masks);
    } else {
      assign_target_masks(td.target, c.target_mask_source);
    }
    const std::string key = pretrain_key(c);
    if (cache && cache->pretrained.count(key)) {
      const PretrainResult& p = cache->pretrained.at(key);
      encoder = p.encoder;
      r.pretrain_loss = p.loss;
    } else {
      PretrainResult p = pretrain(c, td, run_dir / "pretrain", progress(v.name + " pretrain", verbose));
      encoder = p.encoder;
      r.pretrain_loss = p.loss;
      if (cache) cache->pretrained.emplace(key, std::move(p));
    }
  }
  FinetuneResult f = finetune(c, td, encoder ? &*encoder : nullptr, run_dir / "finetune",
                              progress(v.name + " finetune", verbose));
  r.kpt_loss = f.kpt_loss;
  r.attn_loss = f.attn_loss;
  r.frozen_unchanged = f.frozen_unchanged;
  std::vector<ImageSample> eval_set = data.test_target;
  eval_set.insert(eval_set.end(), data.test_source.begin(), data.test_source.end());
  r.report = evaluate(f.encoder, f.head, c, eval_set);
  write_report(r.report, run_dir);
  r.foreground_mass = probe_directory(f.encoder, c, data.test_target, run_dir / "attention");
  return r;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double AblationRow::median_target_epe() const {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(r.report.domains.at("target").epe);
  return median(v);
}

double AblationRow::median_foreground_mass() const {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(r.foreground_mass);
  return median(v);
}

std::vector<AblationRow> run_ablation(const ModelConfig& base, const Dataset& data, const std::vector<std::string>& names,
                                      const std::vector<std::uint64_t>& seeds, const fs::path& out_dir, bool verbose) {
  const auto variants = ablation_variants(base);
  std::vector<AblationRow> rows;
  for (const auto& name : names) {
    auto it = std::find_if(variants.begin(), variants.end(),
                           [&name](const Variant& v) { return v.name == name || v.slug == name; });
    if (it == variants.end()) throw InvalidParam("unknown ablation variant: " + name);
    rows.push_back({it->name, {}});
  }
  PipelineCache cache;
  for (std::uint64_t seed : seeds) {
    for (auto& row : rows) {
      Variant v = *std::find_if(variants.begin(), variants.end(), [&row](const Variant& x) { return x.name == row.name; });
      v.config.seed = seed;
      const fs::path dir = out_dir / v.slug / ("seed_" + std::to_string(seed));
      if (verbose) std::cerr << "running " << v.name << " seed " << seed << std::endl;
      row.runs.push_back(run_variant(v, data, dir, &cache, verbose));
    }
  }
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json runs = nlohmann::json::array();
    for (std::size_t i = 0; i < row.runs.size(); ++i)
      runs.push_back({{"seed", seeds[i]}, {"report", row.runs[i].report.to_json()},
                      {"foreground_mass", row.runs[i].foreground_mass}});
    summary.push_back({{"variant", row.name},
                       {"median_target_epe", row.median_target_epe()},
                       {"median_foreground_mass", row.median_foreground_mass()},
                       {"runs", runs}});
  }
  fs::create_directories(out_dir);
  write_text(out_dir / "ablation.json", summary.dump(2) + "\n");
  write_text(out_dir / "ablation.md", ablation_table(rows));
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "| variant | target EPE | target MPJPE | target PA-MPJPE | source EPE | fg attention | target EPE per seed |\n";
  out << "|---|---|---|---|---|---|---|\n";
  char buf[64];
  for (const auto& row : rows) {
    std::vector<double> mp, pa, src;
    std::string per_seed;
    for (const auto& r : row.runs) {
      const auto& t = r.report.domains.at("target");
      mp.push_back(t.mpjpe);
      pa.push_back(t.pa_mpjpe);
      if (r.report.domains.count("source")) src.push_back(r.report.domains.at("source").epe);
      std::snprintf(buf, sizeof buf, "%s%.2f", per_seed.empty() ? "" : " / ", t.epe);
      per_seed += buf;
    }
    std::snprintf(buf, sizeof buf, "| %s | %.2f | %.2f | %.2f | ", row.name.c_str(), row.median_target_epe(), median(mp),
                  median(pa));
    out << buf;
    std::snprintf(buf, sizeof buf, "%.2f | %.3f | ", median(src), row.median_foreground_mass());
    out << buf << per_seed << " |\n";
  }
  return out.str();
}

}  // namespace fgmae
