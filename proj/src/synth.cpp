#include "fgmae/synth.hpp"

#include "fgmae/dataset.hpp"
#include "fgmae/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

namespace fgmae {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Eigen::Matrix3d rot_x(double a) { return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitX()).toRotationMatrix(); }
Eigen::Matrix3d rot_y(double a) { return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitY()).toRotationMatrix(); }
Eigen::Matrix3d rot_z(double a) { return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix(); }

double sym(Rng& rng, double range) { return range > 0.0 ? uniform(rng, -range, range) : 0.0; }

double in_range(Rng& rng, double lo, double hi) { return hi > lo ? uniform(rng, lo, hi) : lo; }

}  // namespace

Eigen::Vector3f hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  return Eigen::Vector3f(float(r + m), float(g + m), float(b + m));
}

double rgb_hue(const Eigen::Vector3f& rgb) {
  const float mx = rgb.maxCoeff(), mn = rgb.minCoeff();
  const float d = mx - mn;
  if (d <= 0.0f) return 0.0;
  double h;
  if (mx == rgb.x()) h = std::fmod((rgb.y() - rgb.z()) / d, 6.0);
  else if (mx == rgb.y()) h = (rgb.z() - rgb.x()) / d + 2.0;
  else h = (rgb.x() - rgb.y()) / d + 4.0;
  h /= 6.0;
  return h < 0.0 ? h + 1.0 : h;
}

Skeleton default_skeleton(int joints) {
  if (joints < 2) throw InvalidParam("skeleton needs at least 2 joints");
  const Eigen::Vector3d up(0, -1, 0);
  const Eigen::Vector3d left = Eigen::Vector3d(1, 0.35, 0).normalized();
  const Eigen::Vector3d right = Eigen::Vector3d(-1, 0.35, 0).normalized();
  Skeleton s;
  s.parents = {-1, 0, 1, 2, 2, 4, 2, 6};
  s.lengths = {0, 100, 80, 50, 80, 70, 80, 70};
  s.rest = {up, up, up, up, left, left, right, right};
  s.swing_deg = {0, 15, 10, 20, 60, 70, 60, 70};
  s.twist_deg = {0, 20, 15, 25, 60, 60, 60, 60};
  s.radius_px = {0, 3.0, 2.4, 2.0, 2.2, 1.8, 2.2, 1.8};
  s.limb_group = {0, 0, 0, 0, 1, 1, 2, 2};
  for (int k = 8; k < joints; ++k) {
    s.parents.push_back(k - 2);
    s.lengths.push_back(50);
    s.rest.push_back(Eigen::Vector3d(0, 1, 0));
    s.swing_deg.push_back(30);
    s.twist_deg.push_back(30);
    s.radius_px.push_back(1.5);
    s.limb_group.push_back(0);
  }
  s.parents.resize(joints);
  s.lengths.resize(joints);
  s.rest.resize(joints);
  s.swing_deg.resize(joints);
  s.twist_deg.resize(joints);
  s.radius_px.resize(joints);
  s.limb_group.resize(joints);
  return s;
}

DomainSpec DomainSpec::source() {
  DomainSpec d;
  d.name = "source";
  d.domain = Domain::source;
  d.backgrounds = {Background::flat, Background::gradient};
  d.bg_hue_min = 0.45, d.bg_hue_max = 0.7;
  d.bg_sat_min = 0.1, d.bg_sat_max = 0.35;
  d.bg_val_min = 0.35, d.bg_val_max = 0.85;
  d.fig_hue_min = 0.0, d.fig_hue_max = 0.1;
  d.fig_sat_min = 0.55, d.fig_sat_max = 0.85;
  return d;
}

DomainSpec DomainSpec::target() {
  DomainSpec d;
  d.name = "target";
  d.domain = Domain::target;
  d.backgrounds = {Background::perlin, Background::checker};
  d.bg_hue_min = 0.0, d.bg_hue_max = 1.0;
  d.bg_sat_min = 0.35, d.bg_sat_max = 0.9;
  d.bg_val_min = 0.25, d.bg_val_max = 0.9;
  d.fig_hue_min = 0.08, d.fig_hue_max = 0.16;
  d.fig_sat_min = 0.45, d.fig_sat_max = 0.75;
  d.thickness_min = 0.85, d.thickness_max = 1.15;
  return d;
}

DomainSpec DomainSpec::unconstrained() {
  DomainSpec d;
  d.name = "unconstrained";
  d.domain = Domain::unconstrained;
  d.backgrounds = {Background::perlin, Background::checker, Background::stripes, Background::gradient,
                   Background::flat};
  d.bg_sat_min = 0.0, d.bg_sat_max = 1.0;
  d.bg_val_min = 0.15, d.bg_val_max = 0.95;
  return d;
}

Camera default_camera(int image_size) {
  Camera c;
  c.scale = 0.085 * image_size / 64.0;
  c.u0 = image_size / 2.0;
  c.v0 = image_size / 2.0;
  return c;
}

Keypoints sample_skeleton(Rng& rng, const Skeleton& sk, const PosePrior& prior, const Camera& cam, int image_size,
                          double margin_px, int max_tries) {
  const int k_count = sk.joints();
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    Keypoints y(k_count, 3);
    std::vector<Eigen::Matrix3d> frame(static_cast<std::size_t>(k_count));
    frame[0] = rot_y(sym(rng, prior.yaw_deg * kDeg)) * rot_z(sym(rng, prior.roll_deg * kDeg));
    y.row(0) = Eigen::Vector3d(sym(rng, prior.root_jitter_mm), prior.root_drop_mm + sym(rng, prior.root_jitter_mm),
                               prior.root_depth_mm)
                   .transpose();
    for (int k = 1; k < k_count; ++k) {
      const int p = sk.parents[k];
      const double swing = sym(rng, prior.angle_scale * sk.swing_deg[k] * kDeg);
      const double twist = sym(rng, prior.angle_scale * sk.twist_deg[k] * kDeg);
      frame[k] = frame[p] * rot_z(swing) * rot_x(twist);
      y.row(k) = y.row(p) + sk.lengths[k] * (frame[k] * sk.rest[k]).transpose();
    }
    bool inside = true;
    for (int k = 0; k < k_count && inside; ++k) {
      const Eigen::Vector2d uv = cam.project(y.row(k).transpose());
      inside = uv.x() >= margin_px && uv.y() >= margin_px && uv.x() <= image_size - margin_px &&
               uv.y() <= image_size - margin_px;
    }
    if (inside) return y;
  }
  throw GenerationFailure("sample_skeleton: no in-frame pose after " + std::to_string(max_tries) + " tries");
}

namespace {

Eigen::Vector3f random_color(Rng& rng, const DomainSpec& s) {
  return hsv_to_rgb(in_range(rng, s.bg_hue_min, s.bg_hue_max), in_range(rng, s.bg_sat_min, s.bg_sat_max),
                    in_range(rng, s.bg_val_min, s.bg_val_max));
}

// Bilinearly interpolated lattice noise in [0,1] with smoothstep fade.
Eigen::MatrixXd value_noise(Rng& rng, int size, int cells) {
  Eigen::MatrixXd lattice(cells + 1, cells + 1);
  for (Index i = 0; i < lattice.size(); ++i) lattice.data()[i] = uniform(rng, 0.0, 1.0);
  Eigen::MatrixXd out(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double fx = (x + 0.5) / size * cells, fy = (y + 0.5) / size * cells;
      const int x0 = std::min(static_cast<int>(fx), cells - 1), y0 = std::min(static_cast<int>(fy), cells - 1);
      double ax = fx - x0, ay = fy - y0;
      ax = ax * ax * (3 - 2 * ax);
      ay = ay * ay * (3 - 2 * ay);
      out(y, x) = (1 - ay) * ((1 - ax) * lattice(y0, x0) + ax * lattice(y0, x0 + 1)) +
                  ay * ((1 - ax) * lattice(y0 + 1, x0) + ax * lattice(y0 + 1, x0 + 1));
    }
  return out;
}

Image blend(const Eigen::MatrixXd& t, const Eigen::Vector3f& a, const Eigen::Vector3f& b) {
  const int size = static_cast<int>(t.rows());
  Image img(Index(size) * size, 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const float w = static_cast<float>(t(y, x));
      img.row(Index(y) * size + x) = ((1.0f - w) * a + w * b).transpose();
    }
  return img;
}

}  // namespace

Image render_background(Rng& rng, const DomainSpec& spec, int image_size) {
  std::vector<Background> families = spec.backgrounds;
  if (!spec.photos.empty()) families.push_back(Background::photo);
  if (families.empty()) throw GenerationFailure("domain " + spec.name + " has no background family");
  const Background fam = families[static_cast<std::size_t>(uniform_int(rng, 0, int(families.size()) - 1))];
  const int n = image_size;
  const Eigen::Vector3f a = random_color(rng, spec), b = random_color(rng, spec);
  Eigen::MatrixXd t(n, n);
  switch (fam) {
    case Background::flat:
      t.setZero();
      break;
    case Background::gradient: {
      const double ang = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double c = std::cos(ang), s = std::sin(ang);
      const double half = 0.5 * n * (std::abs(c) + std::abs(s));
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) t(y, x) = ((x + 0.5 - n / 2.0) * c + (y + 0.5 - n / 2.0) * s + half) / (2 * half);
      break;
    }
    case Background::perlin: {
      t.setZero();
      double amp = 1.0, total = 0.0;
      int cells = uniform_int(rng, 3, 6);
      for (int octave = 0; octave < 3; ++octave, amp *= 0.5, cells *= 2) {
        t += amp * value_noise(rng, n, cells);
        total += amp;
      }
      t /= total;
      t = ((t.array() - t.minCoeff()) / std::max(1e-9, t.maxCoeff() - t.minCoeff())).matrix();
      break;
    }
    case Background::checker: {
      const double cell = uniform(rng, 4.0, 12.0) * n / 64.0;
      const double ang = uniform(rng, 0.0, std::numbers::pi / 2.0);
      const double c = std::cos(ang), s = std::sin(ang);
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          const double u = (x + 0.5) * c + (y + 0.5) * s, v = -(x + 0.5) * s + (y + 0.5) * c;
          const long iu = static_cast<long>(std::floor(u / cell)), iv = static_cast<long>(std::floor(v / cell));
          t(y, x) = double((iu + iv) & 1);
        }
      break;
    }
    case Background::stripes: {
      const double freq = uniform(rng, 0.15, 0.8) * 64.0 / n;
      const double ang = uniform(rng, 0.0, std::numbers::pi), phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
          t(y, x) = 0.5 + 0.5 * std::sin(freq * ((x + 0.5) * std::cos(ang) + (y + 0.5) * std::sin(ang)) + phase);
      break;
    }
    case Background::photo: {
      const auto& path = spec.photos[static_cast<std::size_t>(uniform_int(rng, 0, int(spec.photos.size()) - 1))];
      return crop_resize(read_png(path, 3), n);
    }
  }
  return blend(t, a, b);
}

ImageSample render_sample(const Keypoints& joints, Rng& rng, const DomainSpec& spec, const Skeleton& sk,
                          const Camera& cam, int image_size, double cube_side) {
  const int k_count = sk.joints();
  if (joints.rows() != k_count) throw GenerationFailure("render_sample: joint count does not match the skeleton");
  const int n = image_size;
  Image img = render_background(rng, spec, n);
  Image mask = Image::Zero(Index(n) * n, 1);

  const Eigen::Vector3f base = hsv_to_rgb(in_range(rng, spec.fig_hue_min, spec.fig_hue_max),
                                          in_range(rng, spec.fig_sat_min, spec.fig_sat_max),
                                          in_range(rng, spec.fig_val_min, spec.fig_val_max));
  const double thick = in_range(rng, spec.thickness_min, spec.thickness_max) * n / 64.0;
  const double z_root = joints(0, 2);
  auto depth_factor = [&](double z) { return std::clamp(1.0 - spec.depth_coupling * (z - z_root), 0.35, 1.8); };
  auto shade = [&](double z) { return std::clamp(1.0 - 0.8 * spec.depth_coupling * (z - z_root), 0.45, 1.35); };
  const float group_gain[3] = {1.0f, 1.25f, 0.7f};

  struct Item {
    int a, b;  // joint indices; a == b draws a disc
    double radius;
    int group;
    double depth;
  };
  std::vector<Item> items;
  for (int k = 1; k < k_count; ++k)
    items.push_back({sk.parents[k], k, sk.radius_px[k], sk.limb_group[k], 0.5 * (joints(k, 2) + joints(sk.parents[k], 2))});
  if (k_count > 3) items.push_back({3, 3, 4.2, 0, joints(3, 2)});
  std::stable_sort(items.begin(), items.end(), [](const Item& l, const Item& r) { return l.depth > r.depth; });

  for (const Item& it : items) {
    const Eigen::Vector2d pa = cam.project(joints.row(it.a).transpose());
    const Eigen::Vector2d pb = cam.project(joints.row(it.b).transpose());
    const double ra = it.radius * thick * depth_factor(joints(it.a, 2));
    const double rb = it.radius * thick * depth_factor(joints(it.b, 2));
    const double sa = shade(joints(it.a, 2)), sb = shade(joints(it.b, 2));
    const Eigen::Vector2d ab = pb - pa;
    const double len2 = ab.squaredNorm();
    const double reach = std::max(ra, rb) + 1.0;
    const int x_lo = std::max(0, static_cast<int>(std::floor(std::min(pa.x(), pb.x()) - reach)));
    const int x_hi = std::min(n - 1, static_cast<int>(std::ceil(std::max(pa.x(), pb.x()) + reach)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(std::min(pa.y(), pb.y()) - reach)));
    const int y_hi = std::min(n - 1, static_cast<int>(std::ceil(std::max(pa.y(), pb.y()) + reach)));
    for (int y = y_lo; y <= y_hi; ++y)
      for (int x = x_lo; x <= x_hi; ++x) {
        const Eigen::Vector2d p(x + 0.5, y + 0.5);
        const double t = len2 > 0.0 ? std::clamp((p - pa).dot(ab) / len2, 0.0, 1.0) : 0.0;
        const double d = (p - (pa + t * ab)).norm();
        const double r = ra + t * (rb - ra);
        const double alpha = spec.binary ? (d <= r ? 1.0 : 0.0) : std::clamp(r + 0.5 - d, 0.0, 1.0);
        if (alpha <= 0.0) continue;
        const float a = static_cast<float>(alpha);
        const float g = static_cast<float>(sa + t * (sb - sa)) * group_gain[it.group];
        const Eigen::RowVector3f color = (base * g).cwiseMin(1.0f).transpose();
        const Index row = Index(y) * n + x;
        img.row(row) = a * color + (1.0f - a) * img.row(row);
        mask(row, 0) = a + (1.0f - a) * mask(row, 0);
      }
  }

  ImageSample s;
  s.height = n;
  s.width = n;
  s.pixels = quantize(img);
  s.mask = quantize(mask);
  s.keypoints = joints;
  s.camera = cam;
  s.cube = Cube{joints.row(0).transpose(), cube_side};
  s.domain = spec.domain;
  return s;
}

ImageSample render_unconstrained(Rng& rng, const DomainSpec& spec, int image_size) {
  ImageSample s;
  s.height = image_size;
  s.width = image_size;
  s.pixels = quantize(render_background(rng, spec, image_size));
  s.domain = spec.domain;
  return s;
}

std::vector<ImageSample> generate_split(const GeneratorConfig& c, const DomainSpec& spec, std::uint64_t stream,
                                        int count, const std::string& prefix) {
  const Skeleton sk = default_skeleton(c.joints);
  const Camera cam = default_camera(c.image_size);
  DomainSpec sp = spec;
  sp.binary = sp.binary || c.binary;
  std::vector<ImageSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = mix_seed(c.seed, (stream << 32) + std::uint64_t(i));
    Rng rng(seed);
    ImageSample s;
    if (sp.domain == Domain::unconstrained) {
      s = render_unconstrained(rng, sp, c.image_size);
    } else {
      const Keypoints y = sample_skeleton(rng, sk, PosePrior{}, cam, c.image_size);
      s = render_sample(y, rng, sp, sk, cam, c.image_size, c.cube_side);
    }
    char id[32];
    std::snprintf(id, sizeof id, "_%05d", i);
    s.sample_id = prefix + id;
    s.rng_seed = seed;
    out.push_back(std::move(s));
  }
  return out;
}

void generate_dataset(const GeneratorConfig& c, const std::filesystem::path& root) {
  DomainSpec unc = DomainSpec::unconstrained();
  if (!c.photo_dir.empty()) {
    if (!std::filesystem::is_directory(c.photo_dir)) throw IoError("photo folder not found: " + c.photo_dir.string());
    for (const auto& e : std::filesystem::directory_iterator(c.photo_dir))
      if (e.path().extension() == ".png") unc.photos.push_back(e.path());
    std::sort(unc.photos.begin(), unc.photos.end());
  }
  write_split(root, "train", Domain::source, generate_split(c, DomainSpec::source(), 1, c.source_train, "source_train"));
  write_split(root, "train", Domain::target, generate_split(c, DomainSpec::target(), 2, c.target_train, "target_train"));
  write_split(root, "train", Domain::unconstrained, generate_split(c, unc, 3, c.unconstrained, "unconstrained_train"));
  write_split(root, "test", Domain::source, generate_split(c, DomainSpec::source(), 4, c.source_test, "source_test"));
  write_split(root, "test", Domain::target, generate_split(c, DomainSpec::target(), 5, c.target_test, "target_test"));
}

}  // namespace fgmae
