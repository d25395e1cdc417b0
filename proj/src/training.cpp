#include "fgmae/training.hpp"

#include "fgmae/augmentation.hpp"
#include "fgmae/checkpoint.hpp"
#include "fgmae/foreground.hpp"
#include "fgmae/image_io.hpp"
#include "fgmae/losses.hpp"
#include "fgmae/optim.hpp"
#include "fgmae/patching.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace fgmae {

namespace fs = std::filesystem;

void assign_target_masks(std::vector<ImageSample>& target, TargetMaskSource mode, const std::vector<Image>* predicted) {
  switch (mode) {
    case TargetMaskSource::oracle:
      for (const auto& s : target)
        if (!s.mask) throw MissingAnnotation("oracle target masks requested but " + s.sample_id + " has none");
      break;
    case TargetMaskSource::none:
      for (auto& s : target) s.mask.reset();
      break;
    case TargetMaskSource::learned:
      if (!predicted || predicted->size() != target.size())
        throw MissingAnnotation("learned target masks require one predicted mask per target image");
      for (std::size_t i = 0; i < target.size(); ++i) target[i].mask = (*predicted)[i];
      break;
  }
}

Cube pose_cube(const ImageSample& s, const ModelConfig& c) {
  if (s.keypoints) {
    if (c.root_joint >= s.keypoints->rows()) throw InvalidParam("root joint out of range for " + s.sample_id);
    return Cube{s.keypoints->row(c.root_joint).transpose(), c.cube_side_mm};
  }
  if (s.cube) return Cube{s.cube->center, c.cube_side_mm};
  throw MissingAnnotation("sample " + s.sample_id + " has neither keypoints nor a cube");
}

Matrix<float> heatmap_targets(const ImageSample& s, const ModelConfig& c) {
  if (!s.keypoints) throw MissingAnnotation("sample " + s.sample_id + " has no keypoints");
  return heatmap_to_head_layout(
      keypoints_to_heatmaps<float>(*s.keypoints, pose_cube(s, c), c.heatmap_size(), c.heatmap_sigma));
}

namespace {

class MetricsLog {
 public:
  MetricsLog(const fs::path& dir, const StepHook& hook) : hook_(hook) {
    if (!dir.empty()) {
      fs::create_directories(dir);
      out_.open(dir / "metrics.jsonl", std::ios::app);
      if (!out_) throw IoError("cannot write " + (dir / "metrics.jsonl").string());
    }
  }
  void write(const nlohmann::json& j) {
    if (out_.is_open()) out_ << j.dump() << '\n';
    if (hook_) hook_(j);
  }

 private:
  std::ofstream out_;
  const StepHook& hook_;
};

const ImageSample& pick(const std::vector<const ImageSample*>& pool, Rng& rng) {
  return *pool[static_cast<std::size_t>(uniform_int(rng, 0, int(pool.size()) - 1))];
}

const ImageSample& pick(const std::vector<ImageSample>& pool, Rng& rng) {
  return pool[static_cast<std::size_t>(uniform_int(rng, 0, int(pool.size()) - 1))];
}

void ensure_finite(const std::vector<Parameter<float>*>& params) {
  for (const auto* p : params)
    if (!p->value.allFinite()) throw NonFiniteGradient("parameter " + p->name + " became non-finite");
}

// original | masked input | reconstruction with visible patches pasted back
void write_reconstruction(const fs::path& path, const Matrix<float>& patches, const Matrix<float>& pred,
                          const BinaryMask& mask, const PatchGridSpec& spec) {
  Matrix<float> masked = patches, recon = pred;
  for (Index i = 0; i < patches.rows(); ++i) {
    if (mask[i]) masked.row(i).setConstant(0.5f);
    else recon.row(i) = patches.row(i);
  }
  const Image views[3] = {unpatchify(patches, spec), unpatchify(masked, spec), unpatchify(recon, spec)};
  const int h = spec.height, w = spec.width;
  Image strip(Index(h) * 3 * w, 3);
  for (int v = 0; v < 3; ++v)
    for (int y = 0; y < h; ++y) strip.middleRows(Index(y) * 3 * w + Index(v) * w, w) = views[v].middleRows(Index(y) * w, w);
  write_png(path, strip, h, 3 * w);
}

std::vector<Matrix<float>> patch_batch(const std::vector<ImageSample>& xs, const PatchGridSpec& spec) {
  std::vector<Matrix<float>> out;
  out.reserve(xs.size());
  for (const auto& x : xs) {
    if (x.height != spec.height || x.width != spec.width)
      throw InvalidShape("image " + x.sample_id + " does not match the configured size");
    out.push_back(patchify(x.pixels, spec));
  }
  return out;
}

}  // namespace

PretrainResult pretrain(const ModelConfig& c, const TrainData& data, const fs::path& run_dir, const StepHook& hook) {
  validate(c);
  const auto spec = PatchGridSpec::make(c.image_size, c.image_size, c.patch_size);
  const int n = spec.count();
  std::vector<const ImageSample*> pool;
  for (const auto& s : data.source) pool.push_back(&s);
  for (const auto& s : data.target) pool.push_back(&s);
  if (pool.empty()) throw InvalidParam("pretrain: no images");
  if (c.fcr)
    for (const auto* s : pool)
      if (!s->mask && !(s->domain == Domain::target && c.target_mask_source == TargetMaskSource::none))
        throw MissingAnnotation("pretrain: foreground weighting needs a mask for " + s->sample_id);

  Rng init_rng(mix_seed(c.seed, 1));
  PretrainResult r{Encoder<float>::init(c, init_rng), Decoder<float>::init(c, init_rng), {}};
  Rng rng(mix_seed(c.seed, 2));
  const auto& st = c.pretrain;
  AdamW<float> opt({0.9, 0.999, 1e-8, st.weight_decay});
  const Schedule sched{st.warmup, st.steps, st.lr, st.min_lr};
  const auto params = collect_parameters<float>(r.encoder, r.decoder);
  MetricsLog log(run_dir, hook);
  if (!run_dir.empty()) fs::create_directories(run_dir / "snapshots");

  for (int step = 0; step < st.steps; ++step) {
    std::vector<ImageSample> xs;
    std::vector<BinaryMask> masks;
    std::vector<PatchWeights> weights;
    for (int b = 0; b < st.batch; ++b) {
      ImageSample x = pick(pool, rng);
      if (c.bg_aug && x.mask && !data.unconstrained.empty() && uniform(rng, 0.0, 1.0) < c.bg_swap_prob)
        x.pixels = background_swap(x.pixels, *x.mask, pick(data.unconstrained, rng).pixels);
      x = standard_augment(x, rng, c.augment, c.root_joint);
      masks.push_back(generate_mask(n, c.mask_ratio, rng));
      if (c.fcr && x.mask) {
        weights.push_back(patch_weights(patch_foreground_ratio(*x.mask, spec), c.alpha));
      } else {
        weights.push_back(uniform_weights(x.mask ? patch_foreground_ratio(*x.mask, spec) : Eigen::VectorXd::Zero(n)));
      }
      xs.push_back(std::move(x));
    }
    const auto patches = patch_batch(xs, spec);
    Matrix<float> target(Index(n) * st.batch, spec.patch * spec.patch * 3);
    for (int b = 0; b < st.batch; ++b) target.middleRows(Index(b) * n, n) = patches[b];

    zero_grads(params);
    Tape<float> t;
    EncoderOutput out = encode<float>(t, r.encoder, patches, masks);
    Var pred = decode<float>(t, r.decoder, out, masks);
    Var loss = wmae_loss<float>(t, pred, target, weights, masks);
    t.backward(loss);
    const double lr = lr_at(step + 1, sched);
    opt.step(params, lr);
    ensure_finite(params);
    r.loss.push_back(t.scalar(loss));
    log.write({{"stage", "pretrain"}, {"step", step}, {"wmae_loss", r.loss.back()}, {"lr", lr}});
    if (!run_dir.empty() && c.snapshot_every > 0 && (step % c.snapshot_every == 0 || step + 1 == st.steps))
      write_reconstruction(run_dir / "snapshots" / ("recon_" + std::to_string(step) + ".png"), patches[0],
                           t.value(pred).topRows(n), masks[0], spec);
  }
  if (!run_dir.empty()) {
    Checkpoint ck;
    export_model(r.encoder, ck);
    export_model(r.decoder, ck);
    save_checkpoint(run_dir / "pretrain.pmud", ck);
  }
  return r;
}

FinetuneResult finetune(const ModelConfig& c, const TrainData& data, const Encoder<float>* pretrained,
                        const fs::path& run_dir, const StepHook& hook) {
  validate(c);
  const auto spec = PatchGridSpec::make(c.image_size, c.image_size, c.patch_size);
  if (data.source.empty()) throw InvalidParam("finetune: no labelled source images");
  for (const auto& s : data.source)
    if (!s.keypoints) throw MissingAnnotation("finetune: source sample " + s.sample_id + " has no keypoints");

  Rng init_rng(mix_seed(c.seed, 3));
  Encoder<float> random_encoder = Encoder<float>::init(c, init_rng);
  FinetuneResult r{pretrained ? *pretrained : random_encoder, KeypointHead<float>::init(c, init_rng), {}, {}, true};
  r.encoder.set_trainable(true);
  Encoder<float> frozen = r.encoder;
  frozen.set_trainable(false);
  Encoder<float> frozen_before = frozen;

  const double lambda = c.effective_lambda();
  const bool use_target = lambda > 0.0 && !data.target.empty();
  const int heads = c.heads;
  const auto& st = c.finetune;
  const int target_batch = std::max(1, static_cast<int>(std::lround(st.batch * c.target_batch_ratio)));
  AugmentConfig aug = c.augment;
  aug.scale_min = aug.scale_max = 1.0;  // keeps the pixel-to-millimetre ratio of the labels
  Rng rng(mix_seed(c.seed, 4));
  AdamW<float> opt({0.9, 0.999, 1e-8, st.weight_decay});
  const Schedule sched{st.warmup, st.steps, st.lr, st.min_lr};
  const auto encoder_params = collect_parameters<float>(r.encoder);
  const auto all_params = collect_parameters<float>(r.encoder, r.head);
  MetricsLog log(run_dir, hook);

  for (int step = 0; step < st.steps; ++step) {
    const double lr = lr_at(step + 1, sched);
    std::vector<ImageSample> xs;
    for (int b = 0; b < st.batch; ++b) {
      const ImageSample& s = pick(data.source, rng);
      xs.push_back(c.augment_finetune ? standard_augment(s, rng, aug, c.root_joint) : s);
    }
    const auto patches = patch_batch(xs, spec);
    const Index plane = Index(c.heatmap_size()) * c.heatmap_size();
    Matrix<float> targets(plane * st.batch, Index(c.heatmap_size()) * c.joints);
    for (int b = 0; b < st.batch; ++b) targets.middleRows(Index(b) * plane, plane) = heatmap_targets(xs[b], c);

    std::vector<Matrix<float>> target_patches;
    Matrix<float> frozen_stack;
    if (use_target) {
      std::vector<ImageSample> ts;
      for (int b = 0; b < target_batch; ++b) ts.push_back(pick(data.target, rng));
      target_patches = patch_batch(ts, spec);
      Tape<float> tf;
      EncoderOutput of = encode<float>(tf, frozen, target_patches);
      frozen_stack = tf.value(attention_stack(tf, of, heads));
    }

    // Alternating order: the target pass runs first so that it sees the
    // encoder of the previous iteration (equal to the frozen copy at step 0).
    const bool combined = c.finetune_mode == FinetuneMode::combined;
    double attn_value = 0.0;
    if (use_target && !combined) {
      zero_grads(encoder_params);
      Tape<float> ta;
      EncoderOutput ot = encode<float>(ta, r.encoder, target_patches);
      Var attn = attn_loss(ta, attention_stack(ta, ot, heads), frozen_stack, target_batch);
      ta.backward(scale(ta, attn, float(lambda)));
      opt.step(encoder_params, lr);
      attn_value = ta.scalar(attn);
    }
    zero_grads(all_params);
    Tape<float> t;
    EncoderOutput out = encode<float>(t, r.encoder, patches);
    Var pred = head_forward(t, r.head, patch_tokens(t, out), st.batch, true);
    Var kpt = kpt_loss(t, pred, targets, st.batch, c.normalize_kpt_loss);
    if (combined && use_target) {
      EncoderOutput ot = encode<float>(t, r.encoder, target_patches);
      Var attn = attn_loss(t, attention_stack(t, ot, heads), frozen_stack, target_batch);
      t.backward(hpe_loss(t, kpt, attn, lambda));
      attn_value = t.scalar(attn);
    } else {
      t.backward(kpt);
    }
    opt.step(all_params, lr);
    ensure_finite(all_params);
    r.kpt_loss.push_back(t.scalar(kpt));
    r.attn_loss.push_back(attn_value);
    log.write({{"stage", "finetune"}, {"step", step}, {"kpt_loss", r.kpt_loss.back()}, {"attn_loss", attn_value},
               {"lr", lr}});
  }

  auto a = collect_parameters<float>(frozen);
  auto b = collect_parameters<float>(frozen_before);
  for (std::size_t i = 0; i < a.size(); ++i) r.frozen_unchanged = r.frozen_unchanged && a[i]->value == b[i]->value;
  if (!run_dir.empty()) {
    Checkpoint ck;
    export_model(r.encoder, ck);
    export_model(r.head, ck);
    save_checkpoint(run_dir / "finetune.pmud", ck);
  }
  return r;
}

std::vector<Keypoints> predict_keypoints(Encoder<float>& enc, KeypointHead<float>& head, const ModelConfig& c,
                                         const std::vector<ImageSample>& samples, int batch) {
  const auto spec = PatchGridSpec::make(c.image_size, c.image_size, c.patch_size);
  std::vector<Keypoints> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch));
    const std::vector<ImageSample> chunk(samples.begin() + long(start), samples.begin() + long(end));
    const auto patches = patch_batch(chunk, spec);
    Tape<float> t;
    EncoderOutput o = encode<float>(t, enc, patches);
    Var pred = head_forward(t, head, patch_tokens(t, o), int(chunk.size()), false);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      const auto h = heatmap_from_head(t.value(pred), int(b), c.joints, c.heatmap_size(), pose_cube(chunk[b], c),
                                       c.heatmap_sigma);
      out.push_back(heatmaps_to_keypoints(h).joints);
    }
  }
  return out;
}

}  // namespace fgmae
