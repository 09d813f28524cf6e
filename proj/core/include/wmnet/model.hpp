#pragma once

#include <array>
#include <memory>

#include "wmnet/detector.hpp"
#include "wmnet/maf.hpp"
#include "wmnet/wunet.hpp"

namespace wmnet {

struct ModelConfig {
  bool use_wunet = true;
  bool use_sawf = true;
  bool use_cfm = true;    // SSD interaction core
  bool use_xattn = false; // cross-attention interaction core (exclusive with cfm)
  double w1_init = 0.1;
  double w2_init = 1.0;
  std::array<int, 4> widths = {16, 32, 48, 64};
  int head_width = 48;
  int num_classes = 3;
  int stride = 4;  // finest head grid stride (stage-2 resolution)
  WUNetConfig wunet;
  CFMConfig cfm;
  unsigned init_seed = 0;

  FusionCoreKind core_kind() const {
    WMNET_CHECK(!(use_cfm && use_xattn), "model config: cfm and xattn are exclusive");
    if (use_cfm) return FusionCoreKind::kCFM;
    if (use_xattn) return FusionCoreKind::kCrossAttention;
    return FusionCoreKind::kNone;
  }

  void validate() const {
    WMNET_CHECK(!(use_sawf && core_kind() == FusionCoreKind::kNone),
                "model config: sawf enabled but both interaction cores are off");
    for (int w : widths) WMNET_CHECK(w >= 1, "model config: bad stage width");
  }
};

/// The full dual-stream detector: optional image-level enhancement, four
/// stride-2 stages per stream with one fusion stage each, and the center
/// head on the three coarsest fused maps.
template <typename T>
struct WMNetModel {
  ModelConfig cfg;
  ParamStore<T> store;
  std::optional<WUNet<T>> wunet;
  std::vector<ConvStage<T>> rgb_stages, ir_stages;
  std::vector<MAFStage<T>> mafs;
  std::optional<CenterHead<T>> head;

  explicit WMNetModel(ModelConfig cfg_) : cfg(cfg_) {
    cfg.validate();
    std::mt19937 rng(cfg.init_seed);
    if (cfg.use_wunet) wunet.emplace(store, "wunet", cfg.wunet, rng);
    int prev_rgb = cfg.wunet.channels, prev_ir = 1;
    for (int s = 0; s < 4; ++s) {
      const int w = cfg.widths[static_cast<size_t>(s)];
      rgb_stages.emplace_back(store, "backbone.rgb.stage" + std::to_string(s + 1), prev_rgb,
                              w, rng);
      ir_stages.emplace_back(store, "backbone.ir.stage" + std::to_string(s + 1), prev_ir, w,
                             rng);
      MAFConfig mc;
      mc.use_sawf = cfg.use_sawf;
      mc.core = cfg.core_kind();
      mc.sawf.w1_init = cfg.w1_init;
      mc.sawf.w2_init = cfg.w2_init;
      mc.sawf.cfm = cfg.cfm;
      mafs.emplace_back(store, "maf" + std::to_string(s + 1), w, mc, rng);
      prev_rgb = prev_ir = w;
    }
    head.emplace(store, "head", cfg.widths[1], cfg.widths[2], cfg.widths[3],
                 cfg.head_width, cfg.num_classes, rng);
  }

  struct ForwardResult {
    HeadOutputs<T> head;
    std::array<Var<T>, 4> fused;  // X_f^1..4 (X_f^1 is produced but unused by the head)
  };

  /// rgb: (H, W, 3), ir: (H, W, 1); H and W divisible by 16.
  ForwardResult forward(Tape<T>& tape, const Tensor<T>& rgb, const Tensor<T>& ir,
                        bool needs_input_grad = false) const {
    WMNET_CHECK(rgb.ndim() == 3 && ir.ndim() == 3, "model: expects (H, W, C) images");
    WMNET_CHECK(rgb.shape[0] == ir.shape[0] && rgb.shape[1] == ir.shape[1],
                "model: rgb/ir spatial size mismatch");
    WMNET_CHECK(rgb.shape[0] % 16 == 0 && rgb.shape[1] % 16 == 0,
                "model: image size must be divisible by 16");
    Var<T> x_rgb = tape.input(rgb, needs_input_grad);
    Var<T> x_ir = tape.input(ir, needs_input_grad);
    if (wunet) x_rgb = wunet->forward(tape, x_rgb, x_ir);
    ForwardResult out;
    for (int s = 0; s < 4; ++s) {
      x_rgb = rgb_stages[static_cast<size_t>(s)].forward(tape, x_rgb);
      x_ir = ir_stages[static_cast<size_t>(s)].forward(tape, x_ir);
      auto [ir_star, rgb_star, fused] = mafs[static_cast<size_t>(s)].forward(tape, x_ir, x_rgb);
      x_ir = ir_star;
      x_rgb = rgb_star;
      out.fused[static_cast<size_t>(s)] = fused;
    }
    out.head = head->forward(tape, out.fused[1], out.fused[2], out.fused[3]);
    return out;
  }

  int64_t param_count() const { return store.total_scalars(); }

  /// Total size of the interaction cores across the four fusion stages.
  int64_t fusion_core_param_count() const {
    int64_t n = 0;
    for (size_t i = 0; i < store.count(); ++i) {
      const std::string& name = store.at(i).name;
      if (name.find(".cfm.") != std::string::npos ||
          name.find(".xattn.") != std::string::npos)
        n += store.at(i).value.size();
    }
    return n;
  }
};

using Model = WMNetModel<float>;

/// build_model: validated construction from a config.
template <typename T = float>
std::unique_ptr<WMNetModel<T>> build_model(const ModelConfig& cfg) {
  cfg.validate();
  return std::make_unique<WMNetModel<T>>(cfg);
}

}  // namespace wmnet
