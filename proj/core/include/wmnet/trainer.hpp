#pragma once

#include "wmnet/checkpoint.hpp"
#include "wmnet/config.hpp"
#include "wmnet/dataset.hpp"
#include "wmnet/metrics.hpp"

namespace wmnet {

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double map50 = -1;  // -1 when no evaluation ran this epoch
  double map = -1;
};

struct TrainOutcome {
  std::vector<EpochRecord> history;
  EvalResult final_val;
  std::string checkpoint_path;
  std::string config_hash;
  int64_t param_count = 0;
};

/// Thrown when training hits a non-finite loss; the offending batch is
/// dumped to <out>/nan_dump.json first.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Full training run: SGD with momentum and cosine decay, per-epoch metric
/// history, checkpoint written to <out>/checkpoint.wmnet. Deterministic for
/// a fixed config in a fixed environment.
TrainOutcome train(const ExperimentConfig& cfg, bool quiet = false);

/// Detections for every image of a split (parallel across images).
std::vector<DetectionSet> predict_split(const Model& model, const DataSplit& split,
                                        int threads, double conf_thresh);

/// Evaluate a model on a split. `oracle` replaces predictions with the
/// ground truth at confidence 1 (debug hook).
EvalResult evaluate_split(const Model& model, const DataSplit& split, int threads,
                          double conf_thresh, bool oracle = false);

/// Load a checkpoint, rebuild its model and evaluate a dataset split. The
/// result is printed as JSON and appended to `log_path` (JSONL) when given.
EvalResult evaluate_checkpoint(const std::string& ckpt_path, const std::string& split,
                               const std::string& data_override = "",
                               const std::string& log_path = "", bool oracle = false);

struct AblationRow {
  std::string label;
  bool wunet = false, sawf = false, cfm = false;
  double map50 = 0, map = 0;
  int64_t params = 0;
};

/// The seven component combinations, each trained `cfg.seeds` times; means
/// are reported. Writes ablation.md and ablation.json under cfg.out.
std::vector<AblationRow> run_ablation(const ExperimentConfig& base, bool quiet = false);

struct SweepRow {
  double w1 = 0, w2 = 0;
  double map50 = 0, map = 0;
};

/// The W2 x W1 initialization grid on the full model. Writes sweep.md and
/// sweep.json under cfg.out.
std::vector<SweepRow> run_sweep_w(const ExperimentConfig& base, bool quiet = false);

std::string history_to_json(const std::vector<EpochRecord>& history);

}  // namespace wmnet
