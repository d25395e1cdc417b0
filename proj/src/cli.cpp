#include "fgmae/cli.hpp"

#include "fgmae/checkpoint.hpp"
#include "fgmae/dataset.hpp"
#include "fgmae/harness.hpp"
#include "fgmae/segmenter.hpp"
#include "fgmae/synth.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fgmae {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::string profile = "toy";
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out = "runs/default";
  std::string data = "data";
};

void add_common(CLI::App* app, Common& c, bool with_data = true) {
  app->add_option("--config", c.config_path, "JSON file with ModelConfig overrides");
  app->add_option("--profile", c.profile, "base configuration")->check(CLI::IsMember({"toy", "paper"}));
  app->add_option("--set", c.sets, "override one key, e.g. --set pretrain.steps=200 (repeatable)");
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--out", c.out, "output directory");
  if (with_data) app->add_option("--data", c.data, "dataset root");
}

// "a.b=v" -> {"a": {"b": v}}, v parsed as JSON when possible.
nlohmann::json parse_set(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--set", "expected key=value, got '" + s + "'");
  const std::string key = s.substr(0, eq), raw = s.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* cur = &root;
  std::stringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) path.push_back(part);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) cur = &(*cur)[path[i]];
  (*cur)[path.back()] = value;
  return root;
}

ModelConfig resolve(const Common& c) {
  ModelConfig cfg = c.profile == "paper" ? ModelConfig::paper() : ModelConfig::toy();
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw CLI::ValidationError("--config", "cannot open config file " + c.config_path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw CLI::ValidationError("--config", c.config_path + " is not valid JSON");
    cfg = merge_config(cfg, j);
  }
  nlohmann::json sets = nlohmann::json::object();
  for (const auto& s : c.sets) sets.merge_patch(parse_set(s));
  if (!sets.empty()) cfg = merge_config(cfg, sets);
  if (c.seed) cfg.seed = *c.seed;
  validate(cfg);
  return cfg;
}

void echo_config(const ModelConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  std::ofstream f(out / "config.json");
  f << config_to_json(cfg).dump(2) << "\n";
}

Dataset load_for_training(const Common& c) { return load_dataset(c.data); }

int cmd_gen_data(const Common& c, GeneratorConfig g) {
  const ModelConfig cfg = resolve(c);
  g.image_size = cfg.image_size;
  g.joints = cfg.joints;
  g.cube_side = cfg.cube_side_mm;
  g.seed = cfg.seed;
  generate_dataset(g, c.out);
  std::cout << "wrote dataset to " << c.out << "\n";
  return 0;
}

int cmd_train_seg(const Common& c) {
  const ModelConfig cfg = resolve(c);
  echo_config(cfg, c.out);
  const Dataset d = load_for_training(c);
  double src = 0, tgt = 0;
  predict_target_masks(cfg, d, c.out, &src, &tgt);
  std::cout << "segmenter IoU@" << cfg.mask_threshold << ": source " << src << ", target " << tgt << "\n";
  return 0;
}

int cmd_pretrain(const Common& c) {
  const ModelConfig cfg = resolve(c);
  echo_config(cfg, c.out);
  const Dataset d = load_for_training(c);
  TrainData td = d.train;
  if (cfg.target_mask_source == TargetMaskSource::learned) {
    const auto masks = predict_target_masks(cfg, d, c.out);
    assign_target_masks(td.target, cfg.target_mask_source, &masks);
  } else {
    assign_target_masks(td.target, cfg.target_mask_source);
  }
  const auto r = pretrain(cfg, td, c.out);
  std::cout << "pretrain loss " << r.loss.front() << " -> " << r.loss.back() << "; checkpoint "
            << (fs::path(c.out) / "pretrain.pmud").string() << "\n";
  return 0;
}

int cmd_finetune(const Common& c, const std::string& pretrained_path) {
  const ModelConfig cfg = resolve(c);
  echo_config(cfg, c.out);
  const Dataset d = load_for_training(c);
  std::optional<Encoder<float>> enc;
  if (!pretrained_path.empty()) {
    Rng rng(0);
    enc = Encoder<float>::init(cfg, rng);
    import_model(*enc, load_checkpoint(pretrained_path));
  }
  const auto r = finetune(cfg, d.train, enc ? &*enc : nullptr, c.out);
  std::cout << "finetune kpt loss " << r.kpt_loss.front() << " -> " << r.kpt_loss.back() << "; checkpoint "
            << (fs::path(c.out) / "finetune.pmud").string() << "\n";
  return 0;
}

void load_finetuned(const ModelConfig& cfg, const std::string& path, Encoder<float>& enc, KeypointHead<float>& head) {
  Rng rng(0);
  enc = Encoder<float>::init(cfg, rng);
  head = KeypointHead<float>::init(cfg, rng);
  const Checkpoint ck = load_checkpoint(path);
  import_model(enc, ck);
  import_model(head, ck);
}

int cmd_eval(const Common& c, const std::string& ckpt, const std::string& split, const std::string& domain) {
  const ModelConfig cfg = resolve(c);
  Encoder<float> enc;
  KeypointHead<float> head;
  load_finetuned(cfg, ckpt, enc, head);
  const auto samples = read_split(c.data, split, domain_from_string(domain));
  const EvalReport r = evaluate(enc, head, cfg, samples);
  write_report(r, c.out);
  std::cout << r.to_json().dump(2) << "\n";
  return 0;
}

int cmd_probe(const Common& c, const std::string& ckpt, const std::string& split, const std::string& domain, int max_images) {
  const ModelConfig cfg = resolve(c);
  Rng rng(0);
  Encoder<float> enc = Encoder<float>::init(cfg, rng);
  import_model(enc, load_checkpoint(ckpt));
  const auto samples = read_split(c.data, split, domain_from_string(domain));
  const double mass = probe_directory(enc, cfg, samples, c.out, max_images);
  std::cout << "mean foreground attention mass " << mass << " over " << samples.size() << " images\n";
  return 0;
}

int cmd_ablate(const Common& c, const std::vector<std::uint64_t>& seeds, const std::vector<std::string>& variants,
               bool verbose) {
  const ModelConfig cfg = resolve(c);
  echo_config(cfg, c.out);
  const Dataset d = load_for_training(c);
  const auto rows = run_ablation(cfg, d, variants, seeds, c.out, verbose);
  std::cout << ablation_table(rows);
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"Foreground-weighted masked pre-training and attention-regularised fine-tuning for 3D pose"};
  app.require_subcommand(1);
  Common common;
  GeneratorConfig gen;
  std::string ckpt, pretrained, split = "test", domain = "target";
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<std::string> variants{"full", "w/o FCR", "w/o AR", "w/o FCR, AR", "w/o S_T", "w/o X_C", "scratch"};
  int max_images = 16;
  bool verbose = false;

  auto* g = app.add_subcommand("gen-data", "generate the synthetic source/target/unconstrained dataset");
  add_common(g, common, false);
  g->add_option("--source-train", gen.source_train);
  g->add_option("--source-test", gen.source_test);
  g->add_option("--target-train", gen.target_train);
  g->add_option("--target-test", gen.target_test);
  g->add_option("--unconstrained", gen.unconstrained);
  g->add_flag("--binary", gen.binary, "hard-edged figures and binary masks");
  g->add_option("--photos", gen.photo_dir, "extra PNG folder for the unconstrained set");

  auto* s = app.add_subcommand("train-seg", "train the segmenter and predict target masks");
  add_common(s, common);
  auto* p = app.add_subcommand("pretrain", "masked-autoencoder pre-training");
  add_common(p, common);
  auto* f = app.add_subcommand("finetune", "fine-tune the encoder and keypoint head");
  add_common(f, common);
  f->add_option("--pretrained", pretrained, "pretrain.pmud (omit to train from scratch)");
  auto* e = app.add_subcommand("eval", "evaluate a fine-tuned checkpoint");
  add_common(e, common);
  e->add_option("--checkpoint", ckpt, "finetune.pmud")->required();
  e->add_option("--split", split);
  e->add_option("--domain", domain);
  auto* pr = app.add_subcommand("probe-attn", "write class-attention overlays");
  add_common(pr, common);
  pr->add_option("--checkpoint", ckpt, "checkpoint with encoder weights")->required();
  pr->add_option("--split", split);
  pr->add_option("--domain", domain);
  pr->add_option("--max-images", max_images);
  auto* a = app.add_subcommand("ablate", "run the ablation grid and print the comparison table");
  add_common(a, common);
  a->add_option("--seeds", seeds)->delimiter(',');
  a->add_option("--variants", variants, "subset of variant names or slugs")->delimiter(',');
  a->add_flag("--verbose", verbose);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();  // program name
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& h) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& err) {
    std::cerr << "error: " << err.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (*g) return cmd_gen_data(common, gen);
    if (*s) return cmd_train_seg(common);
    if (*p) return cmd_pretrain(common);
    if (*f) return cmd_finetune(common, pretrained);
    if (*e) return cmd_eval(common, ckpt, split, domain);
    if (*pr) return cmd_probe(common, ckpt, split, domain, max_images);
    if (*a) return cmd_ablate(common, seeds, variants, verbose);
  } catch (const CLI::ValidationError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace fgmae
