#pragma once

#include <cstdint>

#include "wmnet/boxes.hpp"
#include "wmnet/tensor.hpp"

namespace wmnet {

/// The three corruption axes applied to the rgb view, plus low-light
/// degradation. The infrared frame is the reference: ground truth lives there.
struct MisalignmentSpec {
  double offset_dx = 0.0;          // rgb spatial offset, pixels
  double offset_dy = 0.0;
  double resolution_ratio = 1.0;   // rgb capture scale (then resized back)
  double deficiency_prob = 0.0;    // per-object chance of single-modality visibility
  double noise_sigma = 0.0;        // rgb additive gaussian noise
  double illumination_gain = 1.0;  // rgb global gain (low light < 1)

  void validate() const {
    WMNET_CHECK(std::isfinite(offset_dx) && std::isfinite(offset_dy),
                "spec: non-finite offset");
    WMNET_CHECK(std::isfinite(resolution_ratio) && resolution_ratio > 0,
                "spec: resolution_ratio must be positive");
    WMNET_CHECK(deficiency_prob >= 0.0 && deficiency_prob <= 1.0,
                "spec: deficiency_prob must lie in [0, 1]");
    WMNET_CHECK(std::isfinite(noise_sigma) && noise_sigma >= 0, "spec: bad noise_sigma");
    WMNET_CHECK(std::isfinite(illumination_gain) && illumination_gain > 0,
                "spec: bad illumination_gain");
  }

  static MisalignmentSpec neutral() { return {}; }

  /// The heavy setting used by the directional ablation.
  static MisalignmentSpec heavy() {
    MisalignmentSpec s;
    s.offset_dx = 5.0;
    s.resolution_ratio = 0.75;
    s.deficiency_prob = 0.2;
    s.noise_sigma = 0.12;
    s.illumination_gain = 0.45;
    return s;
  }
};

// Class ids: 0 = elongated blob ("person"), 1 = wide box ("car"),
// 2 = thin two-wheel silhouette ("bicycle").
inline constexpr int kNumClasses = 3;

struct SceneObject {
  int class_id = 0;
  double cx = 0, cy = 0;      // center in the reference (infrared) frame
  double w = 0, h = 0;        // body size, pixels
  double angle = 0;           // orientation, radians
  double thermal = 0;         // infrared intensity
  double visual = 0;          // rgb base intensity
  uint64_t texture_seed = 0;
  bool in_rgb = true, in_ir = true;  // deficiency dropout
};

struct Scene {
  int height = 0, width = 0;
  std::vector<SceneObject> objects;
};

struct PairSample {
  Tensor<float> rgb;  // (H, W, 3), values in [0, 1]
  Tensor<float> ir;   // (H, W, 1)
  GtSet gt;           // infrared-frame boxes, all objects visible in >= 1 modality
};

/// Random scene content (no corruption applied yet).
Scene sample_scene(uint64_t seed, int height, int width);

/// Axis-aligned bound of an object's footprint in the reference frame.
Box object_bound(const SceneObject& o);

/// Renders the same scene into both modalities and applies the corruption in
/// `spec` to the rgb view. Deterministic for a fixed (seed, spec).
PairSample generate_pair(uint64_t seed, const MisalignmentSpec& spec, int height,
                         int width);

/// Binary object-coverage mask of one modality, for geometry tests. The rgb
/// frame applies the spec's offset and resolution scale.
Tensor<float> render_object_mask(const Scene& scene, const MisalignmentSpec& spec,
                                 bool rgb_frame);

}  // namespace wmnet
