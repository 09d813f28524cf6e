#pragma once

#include <map>
#include <string>

#include "wmnet/model.hpp"

namespace wmnet {

/// Plain-text key=value parsing shared by config and dataset spec files.
/// '#' starts a comment; blank lines are ignored.
std::map<std::string, std::string> parse_kv_text(const std::string& text);
std::map<std::string, std::string> parse_kv_file(const std::string& path);

struct ExperimentConfig {
  // model variant flags (ablation axes)
  bool wunet = true;
  bool sawf = true;
  bool cfm = true;
  bool xattn = false;  // cross-attention core; the fallback baseline core
  double w1_init = 0.1;
  double w2_init = 1.0;
  std::array<int, 4> widths = {16, 32, 48, 64};
  int head_width = 48;

  // optimization
  int epochs = 60;
  int batch = 8;
  double lr = 0.01;
  double momentum = 0.9;
  double grad_clip = 5.0;
  unsigned seed = 1;
  int seeds = 3;       // repeats for ablate / sweep means
  int eval_every = 1;  // epochs between val evaluations
  int threads = 0;     // 0 = hardware concurrency

  // data / output
  std::string data;
  std::string out = "runs/exp";
  double conf_thresh = 0.05;

  static ExperimentConfig from_text(const std::string& text);
  static ExperimentConfig from_file(const std::string& path);

  /// Canonical serialization: every field, fixed order.
  std::string resolved_text() const;
  /// FNV-1a of the resolved text; embedded in emitted tables and logs.
  std::string hash() const;

  ModelConfig model_config() const;
  void validate() const;
};

std::string config_hash_of(const std::string& text);

}  // namespace wmnet
