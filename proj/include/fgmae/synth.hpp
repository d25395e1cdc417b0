#pragma once

// Procedural cross-domain data: an articulated stick figure posed by random
// joint angles, rendered as shaded capsules over domain-specific backgrounds.
//
// Camera frame: x right, y down, z away from the camera, millimetres.
// Projection is orthographic; limb thickness and shading grow as a joint comes
// closer to the camera, which makes depth recoverable from the image.

#include "fgmae/datamodel.hpp"
#include "fgmae/rng.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fgmae {

struct Skeleton {
  std::vector<int> parents;          // parents[0] = -1
  std::vector<double> lengths;       // bone length to the parent, mm (entry 0 unused)
  std::vector<Eigen::Vector3d> rest; // unit rest direction of each bone in the parent frame
  std::vector<double> swing_deg;     // in-plane (about z) angle range, +-
  std::vector<double> twist_deg;     // out-of-plane (about x) angle range, +-
  std::vector<double> radius_px;     // capsule radius at 64 px resolution
  std::vector<int> limb_group;       // 0 body, 1 left arm, 2 right arm (drives color)
  int joints() const { return static_cast<int>(parents.size()); }
};

// K = 8: root, spine, neck, head, left elbow, left wrist, right elbow, right
// wrist. K > 8 appends short segments hanging off joint k-2; K < 8 truncates.
Skeleton default_skeleton(int joints);

struct PosePrior {
  double yaw_deg = 60.0;     // whole-body rotation about the vertical axis
  double roll_deg = 10.0;    // whole-body in-plane lean
  double angle_scale = 1.0;  // multiplies every per-bone range
  double root_jitter_mm = 40.0;
  double root_depth_mm = 2000.0;
  double root_drop_mm = 70.0;  // root sits this far below the image centre
  static PosePrior rest() { return {0, 0, 0, 0, 2000.0, 70.0}; }
};

enum class Background { flat, gradient, perlin, checker, stripes, photo };

struct DomainSpec {
  std::string name;
  Domain domain = Domain::source;
  std::vector<Background> backgrounds;
  double bg_hue_min = 0.0, bg_hue_max = 1.0;
  double bg_sat_min = 0.0, bg_sat_max = 1.0;
  double bg_val_min = 0.2, bg_val_max = 0.9;
  double fig_hue_min = 0.0, fig_hue_max = 0.1;
  double fig_sat_min = 0.5, fig_sat_max = 0.9;
  double fig_val_min = 0.7, fig_val_max = 0.95;
  double thickness_min = 0.9, thickness_max = 1.1;  // global radius multiplier
  double depth_coupling = 1.0 / 500.0;  // radius factor 1 - coupling * (z - z_root)
  bool binary = false;                  // hard-edged capsules, mask in {0,1}
  std::vector<std::filesystem::path> photos;

  static DomainSpec source();
  static DomainSpec target();
  static DomainSpec unconstrained();
};

Camera default_camera(int image_size);

// Rejection-samples until every joint projects at least `margin_px` inside
// the frame; GenerationFailure after max_tries.
Keypoints sample_skeleton(Rng& rng, const Skeleton& sk, const PosePrior& prior, const Camera& cam, int image_size,
                          double margin_px = 2.0, int max_tries = 1000);

Image render_background(Rng& rng, const DomainSpec& spec, int image_size);

// Figure over a freshly sampled background. mask = rendered silhouette alpha;
// pixels and mask are quantised to 8 bits so that they survive PNG storage.
ImageSample render_sample(const Keypoints& joints, Rng& rng, const DomainSpec& spec, const Skeleton& sk,
                          const Camera& cam, int image_size, double cube_side);

ImageSample render_unconstrained(Rng& rng, const DomainSpec& spec, int image_size);

struct GeneratorConfig {
  int image_size = 64;
  int joints = 8;
  double cube_side = 720.0;
  std::uint64_t seed = 0;
  int source_train = 512;
  int source_test = 64;
  int target_train = 512;
  int target_test = 128;
  int unconstrained = 256;
  bool binary = false;
  std::filesystem::path photo_dir;  // optional extra unconstrained images
};

// Writes train/{source,target,unconstrained} and test/{source,target}.
void generate_dataset(const GeneratorConfig& c, const std::filesystem::path& root);

// Generates one split in memory; stream identifies (split, domain) so that
// every sample seed is mix_seed(master, stream * 2^32 + i).
std::vector<ImageSample> generate_split(const GeneratorConfig& c, const DomainSpec& spec, std::uint64_t stream,
                                        int count, const std::string& prefix);

// HSV in [0,1]^3 to RGB.
Eigen::Vector3f hsv_to_rgb(double h, double s, double v);
double rgb_hue(const Eigen::Vector3f& rgb);

}  // namespace fgmae
