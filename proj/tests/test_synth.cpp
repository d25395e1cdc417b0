#include "fgmae/dataset.hpp"
#include "fgmae/keypoint_head.hpp"
#include "fgmae/synth.hpp"
#include "fgmae/training.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

using namespace fgmae;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fgmae_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("skeleton: rest pose, bone lengths, determinism") {
  const auto sk = default_skeleton(8);
  const auto cam = default_camera(64);
  Rng a(1);
  PosePrior rest = PosePrior::rest();
  const Keypoints r1 = sample_skeleton(a, sk, rest, cam, 64);
  const Keypoints r2 = sample_skeleton(a, sk, rest, cam, 64);
  CHECK(r1 == r2);

  Rng c(2), d(2);
  const PosePrior prior;
  const Keypoints p = sample_skeleton(c, sk, prior, cam, 64);
  CHECK(p == sample_skeleton(d, sk, prior, cam, 64));
  for (int k = 1; k < sk.joints(); ++k)
    CHECK(std::abs((p.row(k) - p.row(sk.parents[k])).norm() - sk.lengths[k]) < 1e-9);
  for (int k = 0; k < sk.joints(); ++k) {
    const auto uv = cam.project(p.row(k).transpose());
    CHECK(uv.x() >= 2.0);
    CHECK(uv.x() <= 62.0);
    CHECK(uv.y() >= 2.0);
    CHECK(uv.y() <= 62.0);
  }
}

TEST_CASE("impossible frame raises GenerationFailure") {
  const auto sk = default_skeleton(8);
  Camera cam = default_camera(64);
  cam.scale = 10.0;
  Rng rng(3);
  CHECK_THROWS_AS(sample_skeleton(rng, sk, PosePrior{}, cam, 64, 2.0, 20), GenerationFailure);
}

TEST_CASE("rendering: flat background, binary mask and reprojection") {
  DomainSpec spec = DomainSpec::source();
  spec.backgrounds = {Background::flat};
  spec.binary = true;
  const auto sk = default_skeleton(8);
  const auto cam = default_camera(64);
  Rng rng(4);
  const Keypoints y = sample_skeleton(rng, sk, PosePrior{}, cam, 64);
  const auto s = render_sample(y, rng, spec, sk, cam, 64, 720.0);
  REQUIRE(s.mask);
  CHECK(((s.mask->array() == 0.0f) || (s.mask->array() == 1.0f)).all());
  Eigen::RowVector3f bg(-1, -1, -1);
  for (Index i = 0; i < s.pixels.rows(); ++i) {
    if ((*s.mask)(i, 0) != 0.0f) continue;
    if (bg.x() < 0) bg = s.pixels.row(i);
    CHECK(s.pixels.row(i) == bg);
  }
  // every joint's pixel is covered by the figure
  for (int k = 0; k < y.rows(); ++k) {
    const auto uv = s.camera->project(y.row(k).transpose());
    CHECK((*s.mask)(Index(uv.y()) * 64 + Index(uv.x()), 0) == 1.0f);
  }
}

TEST_CASE("stored 2D keypoints match an independent projection") {
  GeneratorConfig g;
  g.seed = 6;
  const auto samples = generate_split(g, DomainSpec::target(), 2, 5, "t");
  for (const auto& s : samples) {
    const auto j = annotation_to_json(s);
    for (int k = 0; k < 8; ++k) {
      const double x = j["keypoints"][k][0], yv = j["keypoints"][k][1];
      const double u = double(j["camera"]["u0"]) + double(j["camera"]["scale"]) * x;
      const double v = double(j["camera"]["v0"]) + double(j["camera"]["scale"]) * yv;
      CHECK(std::abs(u - double(j["keypoints_2d"][k][0])) <= 0.5);
      CHECK(std::abs(v - double(j["keypoints_2d"][k][1])) <= 0.5);
    }
  }
}

TEST_CASE("poses fit the heatmap cube") {
  GeneratorConfig g;
  g.seed = 7;
  const auto samples = generate_split(g, DomainSpec::source(), 1, 40, "s");
  const ModelConfig c = ModelConfig::toy();
  for (const auto& s : samples) {
    const Cube cube = pose_cube(s, c);
    std::vector<bool> clamped;
    const auto h = keypoints_to_heatmaps<float>(*s.keypoints, cube, c.heatmap_size(), c.heatmap_sigma, &clamped);
    for (bool b : clamped) CHECK_FALSE(b);
    const auto d = heatmaps_to_keypoints(h);
    CHECK((d.joints - *s.keypoints).cwiseAbs().maxCoeff() <= 0.5 * cube.side / c.heatmap_size());
  }
}

TEST_CASE("dataset files: counts, determinism, round trip") {
  GeneratorConfig g;
  g.seed = 8;
  g.source_train = 100;
  g.source_test = 3;
  g.target_train = 4;
  g.target_test = 5;
  g.unconstrained = 2;
  const auto a = temp_dir("gen_a"), b = temp_dir("gen_b");
  generate_dataset(g, a);
  generate_dataset(g, b);
  const auto ann = split_dir(a, "train", Domain::source) / "annotations.jsonl";
  std::ifstream in(ann);
  int lines = 0;
  for (std::string l; std::getline(in, l);) lines += !l.empty();
  CHECK(lines == 100);
  for (const auto& [split, d] : std::vector<std::pair<std::string, Domain>>{
           {"train", Domain::source}, {"train", Domain::target}, {"train", Domain::unconstrained},
           {"test", Domain::source}, {"test", Domain::target}})
    CHECK(slurp(split_dir(a, split, d) / "annotations.jsonl") == slurp(split_dir(b, split, d) / "annotations.jsonl"));

  const auto back = read_split(a, "test", Domain::target);
  REQUIRE(back.size() == 5);
  const auto again = generate_split(g, DomainSpec::target(), 5, 5, "target_test");
  CHECK(back[2].sample_id == again[2].sample_id);
  CHECK(back[2].pixels == again[2].pixels);
  CHECK(*back[2].mask == *again[2].mask);
  CHECK((*back[2].keypoints - *again[2].keypoints).cwiseAbs().maxCoeff() < 1e-9);
  const auto bank = read_split(a, "train", Domain::unconstrained);
  CHECK_FALSE(bank[0].keypoints);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("source and target background hues differ") {
  GeneratorConfig g;
  g.seed = 9;
  const auto src = generate_split(g, DomainSpec::source(), 1, 64, "s");
  const auto tgt = generate_split(g, DomainSpec::target(), 2, 64, "t");
  const int bins = 12;
  auto histogram = [&](const std::vector<ImageSample>& xs) {
    std::vector<double> h(bins, 0.0);
    for (const auto& s : xs)
      for (Index i = 0; i < s.pixels.rows(); i += 7) {
        if ((*s.mask)(i, 0) > 0.0f) continue;
        const double hue = rgb_hue(s.pixels.row(i).transpose());
        h[std::min(bins - 1, int(hue * bins))] += 1.0;
      }
    return h;
  };
  const auto hs = histogram(src), ht = histogram(tgt);
  // two-sample chi-square homogeneity test
  const double ns = std::accumulate(hs.begin(), hs.end(), 0.0), nt = std::accumulate(ht.begin(), ht.end(), 0.0);
  double chi2 = 0.0;
  int dof = -1;
  for (int i = 0; i < bins; ++i) {
    const double total = hs[i] + ht[i];
    if (total == 0.0) continue;
    ++dof;
    const double es = total * ns / (ns + nt), et = total * nt / (ns + nt);
    chi2 += (hs[i] - es) * (hs[i] - es) / es + (ht[i] - et) * (ht[i] - et) / et;
  }
  REQUIRE(dof > 0);
  const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), chi2));
  MESSAGE("chi2 " << chi2 << " dof " << dof << " p " << p);
  CHECK(p < 0.01);
}
