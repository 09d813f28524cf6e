#include "wmnet/synth.hpp"

#include <algorithm>
#include <random>

namespace wmnet {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Coordinate-hashed uniform in [-1, 1]; independent of traversal order and
/// of the raster size, so shifted geometry keeps its pattern.
double hash_noise(uint64_t seed, int64_t x, int64_t y, int c) {
  uint64_t h = splitmix64(seed ^ (0x100000001b3ull * static_cast<uint64_t>(x + 40009)));
  h = splitmix64(h ^ (0x9e3779b1ull * static_cast<uint64_t>(y + 70003)));
  h = splitmix64(h ^ static_cast<uint64_t>(c + 11));
  return (static_cast<double>(h >> 11) / 9007199254740992.0) * 2.0 - 1.0;
}

double hash_gauss(uint64_t seed, int64_t x, int64_t y, int c) {
  const double u1 = 0.5 * (hash_noise(seed, x, y, 2 * c) + 1.0);
  const double u2 = 0.5 * (hash_noise(seed, x, y, 2 * c + 1) + 1.0);
  const double r = std::sqrt(-2.0 * std::log(std::max(u1, 1e-12)));
  return r * std::cos(2.0 * M_PI * u2);
}

/// Coverage of one object at a point given in the reference frame.
bool inside_object(const SceneObject& o, double px, double py) {
  const double dx = px - o.cx, dy = py - o.cy;
  const double ca = std::cos(o.angle), sa = std::sin(o.angle);
  const double lx = dx * ca + dy * sa;
  const double ly = -dx * sa + dy * ca;
  const double rx = o.w / 2, ry = o.h / 2;
  switch (o.class_id) {
    case 0: {  // elongated ellipse
      const double nx = lx / rx, ny = ly / ry;
      return nx * nx + ny * ny <= 1.0;
    }
    case 1:  // wide box
      return std::abs(lx) <= rx && std::abs(ly) <= ry;
    default: {  // thin bar with two wheel discs
      if (std::abs(lx) <= rx && std::abs(ly) <= ry * 0.5) return true;
      const double wr = o.h * 0.8;
      const double wx1 = lx - o.w / 3, wx2 = lx + o.w / 3;
      return (wx1 * wx1 + ly * ly <= wr * wr) || (wx2 * wx2 + ly * ly <= wr * wr);
    }
  }
}

/// Supersampled coverage in [0, 1] at a pixel of a (possibly scaled/offset)
/// raster. Sample positions map back into the reference frame.
double coverage(const SceneObject& o, int px, int py, double sx, double sy, double dx,
                double dy) {
  int hit = 0;
  static const double sub[2] = {0.25, 0.75};
  for (double oy : sub)
    for (double ox : sub) {
      const double rx = (px + ox) / sx - dx;
      const double ry = (py + oy) / sy - dy;
      if (inside_object(o, rx, ry)) ++hit;
    }
  return hit / 4.0;
}

double extent_x(const SceneObject& o) { return o.class_id == 2 ? o.w / 2 + o.h * 0.3 : o.w / 2; }
double extent_y(const SceneObject& o) { return o.class_id == 2 ? o.h * 0.8 : o.h / 2; }

}  // namespace

Box object_bound(const SceneObject& o) {
  const double ex = extent_x(o), ey = extent_y(o);
  const double ca = std::abs(std::cos(o.angle)), sa = std::abs(std::sin(o.angle));
  const double hx = ex * ca + ey * sa;
  const double hy = ex * sa + ey * ca;
  return Box{o.cx - hx, o.cy - hy, o.cx + hx, o.cy + hy};
}

Scene sample_scene(uint64_t seed, int height, int width) {
  WMNET_CHECK(height >= 8 && width >= 8, "scene: canvas must be at least 8 px");
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Scene scene;
  scene.height = height;
  scene.width = width;
  const int count = 3 + static_cast<int>(u01(rng) * 5.0);  // 3..7
  const double s = std::min(height, width) / 64.0;         // scale to canvas
  for (int i = 0; i < count; ++i) {
    SceneObject o;
    o.class_id = static_cast<int>(u01(rng) * 3.0) % 3;
    switch (o.class_id) {
      case 0:
        o.w = (5.0 + 3.0 * u01(rng)) * s;
        o.h = (10.0 + 5.0 * u01(rng)) * s;
        o.thermal = 0.85 + 0.1 * u01(rng);
        break;
      case 1:
        o.w = (14.0 + 6.0 * u01(rng)) * s;
        o.h = (8.0 + 4.0 * u01(rng)) * s;
        o.thermal = 0.7 + 0.1 * u01(rng);
        break;
      default:
        o.w = (9.0 + 3.0 * u01(rng)) * s;
        o.h = (3.0 + 1.5 * u01(rng)) * s;
        o.thermal = 0.55 + 0.08 * u01(rng);
        break;
    }
    o.angle = (u01(rng) - 0.5) * 0.6;
    o.visual = 0.6 + 0.3 * u01(rng);
    o.texture_seed = rng();
    // Keep the footprint inside the canvas.
    Box b0 = object_bound(SceneObject{o.class_id, 0, 0, o.w, o.h, o.angle, 0, 0, 0});
    const double hx = b0.x2, hy = b0.y2;
    const double lo_x = hx + 1, hi_x = width - hx - 1;
    const double lo_y = hy + 1, hi_y = height - hy - 1;
    o.cx = lo_x >= hi_x ? width / 2.0 : lo_x + (hi_x - lo_x) * u01(rng);
    o.cy = lo_y >= hi_y ? height / 2.0 : lo_y + (hi_y - lo_y) * u01(rng);
    scene.objects.push_back(o);
  }
  return scene;
}

Tensor<float> render_object_mask(const Scene& scene, const MisalignmentSpec& spec,
                                 bool rgb_frame) {
  spec.validate();
  const int H = scene.height, W = scene.width;
  const double sx = rgb_frame ? spec.resolution_ratio : 1.0;
  const double sy = sx;
  const int rh = rgb_frame ? std::max(2, static_cast<int>(std::lround(H * sy))) : H;
  const int rw = rgb_frame ? std::max(2, static_cast<int>(std::lround(W * sx))) : W;
  const double esy = static_cast<double>(rh) / H, esx = static_cast<double>(rw) / W;
  Tensor<float> mask({rh, rw, 1});
  for (const SceneObject& o : scene.objects) {
    if (rgb_frame && !o.in_rgb) continue;
    if (!rgb_frame && !o.in_ir) continue;
    const double dx = rgb_frame ? spec.offset_dx : 0.0;
    const double dy = rgb_frame ? spec.offset_dy : 0.0;
    const Box b = object_bound(o);
    const int x0 = std::max(0, static_cast<int>(std::floor((b.x1 + dx) * esx)) - 2);
    const int x1 = std::min(rw - 1, static_cast<int>(std::ceil((b.x2 + dx) * esx)) + 2);
    const int y0 = std::max(0, static_cast<int>(std::floor((b.y1 + dy) * esy)) - 2);
    const int y1 = std::min(rh - 1, static_cast<int>(std::ceil((b.y2 + dy) * esy)) + 2);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (coverage(o, x, y, esx, esy, dx, dy) > 0.5) mask.at(y, x, 0) = 1.f;
  }
  return mask;
}

namespace {

Tensor<float> render_ir(const Scene& scene, uint64_t seed) {
  const int H = scene.height, W = scene.width;
  Tensor<float> img({H, W, 1});
  std::mt19937_64 rng(splitmix64(seed ^ 0xAAAAull));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double fx = 0.5 + u01(rng), fy = 0.5 + u01(rng), phase = u01(rng) * 2 * M_PI;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double v = 0.18 + 0.05 * std::sin(2 * M_PI * (fx * x / W + fy * y / H) + phase);
      v += 0.01 * hash_noise(seed ^ 0x17ull, x, y, 0);
      img.at(y, x, 0) = static_cast<float>(v);
    }
  for (const SceneObject& o : scene.objects) {
    if (!o.in_ir) continue;
    const Box b = object_bound(o);
    const int x0 = std::max(0, static_cast<int>(b.x1) - 2);
    const int x1 = std::min(W - 1, static_cast<int>(b.x2) + 2);
    const int y0 = std::max(0, static_cast<int>(b.y1) - 2);
    const int y1 = std::min(H - 1, static_cast<int>(b.y2) + 2);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double c = coverage(o, x, y, 1.0, 1.0, 0.0, 0.0);
        if (c <= 0) continue;
        float& px = img.at(y, x, 0);
        px = static_cast<float>(px * (1 - c) + o.thermal * c);
      }
  }
  for (auto& v : img.data) v = std::clamp(v, 0.f, 1.f);
  return img;
}

Tensor<float> bilinear_resize_plain(const Tensor<float>& x, int oh, int ow) {
  const int H = x.shape[0], W = x.shape[1], C = x.shape[2];
  if (oh == H && ow == W) return x;
  Tensor<float> out({oh, ow, C});
  for (int oy = 0; oy < oh; ++oy) {
    double sy = (oy + 0.5) * static_cast<double>(H) / oh - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(H - 1));
    const int y0 = static_cast<int>(sy), y1 = std::min(y0 + 1, H - 1);
    const double fy = sy - y0;
    for (int ox = 0; ox < ow; ++ox) {
      double sx = (ox + 0.5) * static_cast<double>(W) / ow - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(W - 1));
      const int x0 = static_cast<int>(sx), x1 = std::min(x0 + 1, W - 1);
      const double fx = sx - x0;
      for (int c = 0; c < C; ++c) {
        const double top = x.at(y0, x0, c) * (1 - fx) + x.at(y0, x1, c) * fx;
        const double bot = x.at(y1, x0, c) * (1 - fx) + x.at(y1, x1, c) * fx;
        out.at(oy, ox, c) = static_cast<float>(top * (1 - fy) + bot * fy);
      }
    }
  }
  return out;
}

Tensor<float> render_rgb(const Scene& scene, const MisalignmentSpec& spec, uint64_t seed) {
  const int H = scene.height, W = scene.width;
  const int rh = std::max(2, static_cast<int>(std::lround(H * spec.resolution_ratio)));
  const int rw = std::max(2, static_cast<int>(std::lround(W * spec.resolution_ratio)));
  const double esy = static_cast<double>(rh) / H, esx = static_cast<double>(rw) / W;
  Tensor<float> img({rh, rw, 3});
  std::mt19937_64 rng(splitmix64(seed ^ 0xBBBBull));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double fx = 0.5 + u01(rng), fy = 0.5 + u01(rng), phase = u01(rng) * 2 * M_PI;
  const double tint[3] = {0.9 + 0.1 * u01(rng), 0.9 + 0.1 * u01(rng), 0.9 + 0.1 * u01(rng)};
  for (int y = 0; y < rh; ++y)
    for (int x = 0; x < rw; ++x) {
      const double base =
          0.32 + 0.08 * std::cos(2 * M_PI * (fx * x / rw + fy * y / rh) + phase);
      for (int c = 0; c < 3; ++c) {
        double v = base * tint[c] + 0.04 * hash_noise(seed ^ 0x33ull, x, y, c);
        img.at(y, x, c) = static_cast<float>(v);
      }
    }
  for (const SceneObject& o : scene.objects) {
    if (!o.in_rgb) continue;
    const double dx = spec.offset_dx, dy = spec.offset_dy;
    const Box b = object_bound(o);
    const int x0 = std::max(0, static_cast<int>(std::floor((b.x1 + dx) * esx)) - 2);
    const int x1 = std::min(rw - 1, static_cast<int>(std::ceil((b.x2 + dx) * esx)) + 2);
    const int y0 = std::max(0, static_cast<int>(std::floor((b.y1 + dy) * esy)) - 2);
    const int y1 = std::min(rh - 1, static_cast<int>(std::ceil((b.y2 + dy) * esy)) + 2);
    double chroma[3];
    for (int c = 0; c < 3; ++c)
      chroma[c] = std::clamp(
          o.visual * (0.8 + 0.4 * 0.5 *
                              (hash_noise(o.texture_seed, 7 + c, 3, c) + 1.0)),
          0.1, 1.0);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double cov = coverage(o, x, y, esx, esy, dx, dy);
        if (cov <= 0) continue;
        const double tex =
            1.0 + 0.15 * hash_noise(o.texture_seed, x, y, 0);
        for (int c = 0; c < 3; ++c) {
          float& px = img.at(y, x, c);
          px = static_cast<float>(px * (1 - cov) + chroma[c] * tex * cov);
        }
      }
  }
  Tensor<float> resized = bilinear_resize_plain(img, H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = resized.at(y, x, c) * spec.illumination_gain;
        if (spec.noise_sigma > 0)
          v += spec.noise_sigma * hash_gauss(seed ^ 0x77ull, x, y, c);
        resized.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  return resized;
}

}  // namespace

PairSample generate_pair(uint64_t seed, const MisalignmentSpec& spec, int height,
                         int width) {
  spec.validate();
  WMNET_CHECK(height >= 8 && width >= 8, "generate_pair: canvas must be at least 8 px");
  Scene scene = sample_scene(seed, height, width);

  // Deficiency dropout: with probability p an object exists in exactly one
  // modality; a fair coin picks which.
  std::mt19937_64 rng(splitmix64(seed ^ 0xDEF1C1ull));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (SceneObject& o : scene.objects) {
    const double roll = u01(rng);
    const double coin = u01(rng);
    if (roll < spec.deficiency_prob) {
      o.in_rgb = coin < 0.5;
      o.in_ir = !o.in_rgb;
    }
  }

  PairSample out;
  out.ir = render_ir(scene, seed);
  out.rgb = render_rgb(scene, spec, seed);
  for (const SceneObject& o : scene.objects) {
    Box b = object_bound(o);
    b.x1 = std::clamp(b.x1, 0.0, static_cast<double>(width));
    b.x2 = std::clamp(b.x2, 0.0, static_cast<double>(width));
    b.y1 = std::clamp(b.y1, 0.0, static_cast<double>(height));
    b.y2 = std::clamp(b.y2, 0.0, static_cast<double>(height));
    if (b.area() <= 1.0) continue;
    out.gt.push_back(GtBox{o.class_id, b});
  }
  return out;
}

}  // namespace wmnet
