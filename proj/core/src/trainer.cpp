#include "wmnet/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace wmnet {

namespace {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Static round-robin parallel for; result ordering is index-based so the
/// outcome is independent of scheduling.
template <typename Fn>
void parallel_for(int n, int threads, Fn fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex err_mu;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int i = w; i < n; i += threads) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

double cosine_lr(double base, int epoch, int total) {
  return base * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(epoch) / total));
}

struct SgdState {
  std::vector<Tensor<float>> velocity;

  explicit SgdState(const ParamStore<float>& store) {
    for (size_t i = 0; i < store.count(); ++i)
      velocity.emplace_back(Tensor<float>::zeros(store.at(i).value.shape));
  }

  void step(ParamStore<float>& store, GradBuffer<float>& grads, double lr, double momentum,
            double clip) {
    if (clip > 0) {
      double norm_sq = 0;
      for (const auto& g : grads.grads) norm_sq += g.sum_sq();
      const double norm = std::sqrt(norm_sq);
      if (norm > clip) {
        const float s = static_cast<float>(clip / norm);
        for (auto& g : grads.grads)
          for (auto& v : g.data) v *= s;
      }
    }
    for (size_t i = 0; i < store.count(); ++i) {
      Tensor<float>& p = store.at(i).value;
      Tensor<float>& vel = velocity[i];
      const Tensor<float>& g = grads.grads[i];
      for (int64_t k = 0; k < p.size(); ++k) {
        vel[k] = static_cast<float>(momentum) * vel[k] + g[k];
        p[k] -= static_cast<float>(lr) * vel[k];
      }
    }
  }
};

json eval_to_json(const EvalResult& r) {
  json per50 = json::array(), perall = json::array();
  for (double v : r.per_class_ap50) per50.push_back(v);
  for (double v : r.per_class_map) perall.push_back(v);
  return json{{"map50", r.map50},
              {"map", r.map},
              {"per_class_ap50", per50},
              {"per_class_map", perall},
              {"evaluated_classes", r.evaluated_classes}};
}

void append_jsonl(const std::string& path, const json& j) {
  if (path.empty()) return;
  std::ofstream f(path, std::ios::app);
  WMNET_CHECK(f.good(), "cannot append to log " + path);
  f << j.dump() << "\n";
}

}  // namespace

std::string history_to_json(const std::vector<EpochRecord>& history) {
  json arr = json::array();
  for (const EpochRecord& r : history) {
    json e{{"epoch", r.epoch}, {"lr", r.lr}, {"train_loss", r.train_loss}};
    if (r.map50 >= 0) {
      e["map50"] = r.map50;
      e["map"] = r.map;
    }
    arr.push_back(e);
  }
  return arr.dump();
}

std::vector<DetectionSet> predict_split(const Model& model, const DataSplit& split,
                                        int threads, double conf_thresh) {
  const int n = static_cast<int>(split.size());
  std::vector<DetectionSet> preds(static_cast<size_t>(n));
  parallel_for(n, resolve_threads(threads), [&](int i) {
    Tape<float> tape;
    auto out = model.forward(tape, split.rgb[static_cast<size_t>(i)],
                             split.ir[static_cast<size_t>(i)]);
    const int H = split.ir[static_cast<size_t>(i)].shape[0];
    const int W = split.ir[static_cast<size_t>(i)].shape[1];
    preds[static_cast<size_t>(i)] =
        decode_detections(out.head.heatmap.val(), out.head.size.val(), out.head.offset.val(),
                          model.cfg.stride, H, W, conf_thresh);
  });
  return preds;
}

EvalResult evaluate_split(const Model& model, const DataSplit& split, int threads,
                          double conf_thresh, bool oracle) {
  WMNET_CHECK(split.size() > 0, "evaluate: empty split");
  std::vector<DetectionSet> preds;
  if (oracle) {
    for (const GtSet& g : split.gt) {
      DetectionSet d;
      for (const GtBox& b : g) d.push_back(Detection{b.class_id, b.box, 1.0});
      preds.push_back(std::move(d));
    }
  } else {
    preds = predict_split(model, split, threads, conf_thresh);
  }
  return compute_map(preds, split.gt, coco_thresholds(), model.cfg.num_classes);
}

TrainOutcome train(const ExperimentConfig& cfg, bool quiet) {
  cfg.validate();
  WMNET_CHECK(!cfg.data.empty(), "train: config needs data=<dataset dir>");
  DataSplit train_split = load_split(cfg.data, "train");
  DataSplit val_split = load_split(cfg.data, "val");
  const int n_train = static_cast<int>(train_split.size());
  const int threads = resolve_threads(cfg.threads);

  fs::create_directories(cfg.out);
  const std::string metrics_log = (fs::path(cfg.out) / "metrics.jsonl").string();

  Model model(cfg.model_config());
  SgdState sgd(model.store);
  std::mt19937 shuffle_rng(cfg.seed ^ 0x5117u);

  // Per-image targets are fixed; build them once.
  const int grid = train_split.ir[0].shape[0] / model.cfg.stride;
  std::vector<HeadTargets<float>> targets;
  targets.reserve(train_split.size());
  for (const GtSet& g : train_split.gt)
    targets.push_back(build_head_targets<float>(g, grid, model.cfg.stride,
                                                model.cfg.num_classes));

  // Per-sample gradient buffers, merged in sample order for thread-count
  // independent determinism.
  std::vector<GradBuffer<float>> sample_grads;
  for (int i = 0; i < cfg.batch; ++i) sample_grads.emplace_back(model.store);
  GradBuffer<float> batch_grads(model.store);

  TrainOutcome outcome;
  outcome.config_hash = cfg.hash();
  outcome.param_count = model.param_count();

  std::vector<int> order(static_cast<size_t>(n_train));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0;
    int batches = 0;
    for (int start = 0; start < n_train; start += cfg.batch) {
      const int bsz = std::min(cfg.batch, n_train - start);
      std::vector<double> losses(static_cast<size_t>(bsz), 0.0);
      parallel_for(bsz, threads, [&](int bi) {
        const int idx = order[static_cast<size_t>(start + bi)];
        Tape<float> tape;
        auto out = model.forward(tape, train_split.rgb[static_cast<size_t>(idx)],
                                 train_split.ir[static_cast<size_t>(idx)]);
        Var<float> loss = detection_loss(tape, out.head, targets[static_cast<size_t>(idx)]);
        losses[static_cast<size_t>(bi)] = loss.val()[0];
        tape.backward(loss);
        sample_grads[static_cast<size_t>(bi)].zero();
        tape.collect_param_grads(sample_grads[static_cast<size_t>(bi)],
                                 1.0f / static_cast<float>(bsz));
      });
      double batch_loss = 0;
      for (double l : losses) batch_loss += l;
      batch_loss /= bsz;
      if (!std::isfinite(batch_loss)) {
        json dump{{"epoch", epoch + 1}, {"losses", losses}, {"batch", json::array()}};
        for (int bi = 0; bi < bsz; ++bi)
          dump["batch"].push_back(train_split.ids[static_cast<size_t>(
              order[static_cast<size_t>(start + bi)])]);
        std::ofstream f(fs::path(cfg.out) / "nan_dump.json");
        f << dump.dump(2) << "\n";
        throw TrainingAborted("non-finite loss at epoch " + std::to_string(epoch + 1) +
                              "; offending batch dumped to nan_dump.json");
      }
      batch_grads.zero();
      for (int bi = 0; bi < bsz; ++bi) batch_grads.add_scaled(sample_grads[static_cast<size_t>(bi)], 1.0f);
      sgd.step(model.store, batch_grads, lr, cfg.momentum, cfg.grad_clip);
      epoch_loss += batch_loss;
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    rec.train_loss = epoch_loss / std::max(1, batches);
    const bool do_eval = ((epoch + 1) % cfg.eval_every == 0) || (epoch + 1 == cfg.epochs);
    if (do_eval) {
      EvalResult ev = evaluate_split(model, val_split, threads, cfg.conf_thresh);
      rec.map50 = ev.map50;
      rec.map = ev.map;
      outcome.final_val = ev;
      json j = eval_to_json(ev);
      j["type"] = "eval";
      j["split"] = "val";
      j["epoch"] = epoch + 1;
      j["config_hash"] = outcome.config_hash;
      append_jsonl(metrics_log, j);
    }
    append_jsonl(metrics_log, json{{"type", "epoch"},
                                   {"epoch", rec.epoch},
                                   {"lr", rec.lr},
                                   {"train_loss", rec.train_loss}});
    outcome.history.push_back(rec);
    if (!quiet)
      std::cout << "epoch " << rec.epoch << "/" << cfg.epochs << " loss " << rec.train_loss
                << (rec.map50 >= 0 ? " val mAP50 " + std::to_string(rec.map50) : "")
                << std::endl;
  }

  outcome.checkpoint_path = (fs::path(cfg.out) / "checkpoint.wmnet").string();
  Checkpoint ckpt = checkpoint_from_store(model.store, cfg.resolved_text(),
                                          history_to_json(outcome.history));
  save_checkpoint(outcome.checkpoint_path, ckpt);
  return outcome;
}

EvalResult evaluate_checkpoint(const std::string& ckpt_path, const std::string& split,
                               const std::string& data_override,
                               const std::string& log_path, bool oracle) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  ExperimentConfig cfg = ExperimentConfig::from_text(ckpt.config_text);
  if (!data_override.empty()) cfg.data = data_override;
  WMNET_CHECK(!cfg.data.empty(), "eval: no dataset path in checkpoint or override");
  DataSplit ds = load_split(cfg.data, split);
  Model model(cfg.model_config());
  load_store_from_checkpoint(model.store, ckpt);
  EvalResult ev = evaluate_split(model, ds, resolve_threads(cfg.threads), cfg.conf_thresh,
                                 oracle);
  json j = eval_to_json(ev);
  j["type"] = "eval";
  j["split"] = split;
  j["checkpoint"] = ckpt_path;
  j["config_hash"] = cfg.hash();
  std::cout << j.dump(2) << std::endl;
  append_jsonl(log_path, j);
  return ev;
}

namespace {

struct FlagCombo {
  std::string label;
  bool wunet, sawf, cfm;
};

/// Table-style component rows; rows without the SSD core fall back to the
/// cross-attention core.
const std::vector<FlagCombo>& ablation_rows() {
  static const std::vector<FlagCombo> rows = {
      {"baseline", false, false, false}, {"cfm", false, false, true},
      {"wunet", true, false, false},     {"wunet+cfm", true, false, true},
      {"sawf+cfm", false, true, true},   {"sawf", false, true, false},
      {"wunet+sawf+cfm", true, true, true},
  };
  return rows;
}

ExperimentConfig apply_combo(const ExperimentConfig& base, const FlagCombo& combo) {
  ExperimentConfig c = base;
  c.wunet = combo.wunet;
  c.sawf = combo.sawf;
  c.cfm = combo.cfm;
  c.xattn = !combo.cfm;  // interaction core always present in the ablation rows
  return c;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<AblationRow> run_ablation(const ExperimentConfig& base, bool quiet) {
  base.validate();
  fs::create_directories(base.out);
  std::vector<AblationRow> rows;
  for (size_t r = 0; r < ablation_rows().size(); ++r) {
    const FlagCombo& combo = ablation_rows()[r];
    std::vector<double> m50s, ms;
    int64_t params = 0;
    for (int s = 0; s < base.seeds; ++s) {
      ExperimentConfig c = apply_combo(base, combo);
      c.seed = base.seed + static_cast<unsigned>(s);
      c.out = (fs::path(base.out) / ("ablate_row" + std::to_string(r) + "_seed" +
                                     std::to_string(c.seed)))
                  .string();
      TrainOutcome o = train(c, quiet);
      m50s.push_back(o.final_val.map50);
      ms.push_back(o.final_val.map);
      params = o.param_count;
    }
    AblationRow row;
    row.label = combo.label;
    row.wunet = combo.wunet;
    row.sawf = combo.sawf;
    row.cfm = combo.cfm;
    row.map50 = mean_of(m50s);
    row.map = mean_of(ms);
    row.params = params;
    rows.push_back(row);
    if (!quiet)
      std::cout << "[ablate] " << row.label << " mAP50 " << row.map50 << " mAP " << row.map
                << " params " << row.params << std::endl;
  }

  const std::string hash = base.hash();
  std::ostringstream md;
  md << "| WU-Net | SAWF | CFM | mAP@0.5 | mAP | params |\n";
  md << "|--------|------|-----|---------|-----|--------|\n";
  json jrows = json::array();
  for (const AblationRow& r : rows) {
    md << "| " << (r.wunet ? "x" : " ") << " | " << (r.sawf ? "x" : " ") << " | "
       << (r.cfm ? "x" : " ") << " | " << r.map50 << " | " << r.map << " | " << r.params
       << " |\n";
    jrows.push_back(json{{"label", r.label},
                         {"wunet", r.wunet},
                         {"sawf", r.sawf},
                         {"cfm", r.cfm},
                         {"map50", r.map50},
                         {"map", r.map},
                         {"params", r.params}});
  }
  md << "\nconfig_hash: " << hash << "\n";
  std::ofstream fmd(fs::path(base.out) / "ablation.md");
  fmd << md.str();
  std::ofstream fj(fs::path(base.out) / "ablation.json");
  fj << json{{"config_hash", hash}, {"seeds", base.seeds}, {"rows", jrows}}.dump(2) << "\n";
  if (!quiet) std::cout << md.str();
  return rows;
}

std::vector<SweepRow> run_sweep_w(const ExperimentConfig& base, bool quiet) {
  base.validate();
  fs::create_directories(base.out);
  const std::vector<double> w2s = {1.0, 0.5};
  const std::vector<double> w1s = {1.0, 0.75, 0.5, 0.25, 0.1};
  std::vector<SweepRow> rows;
  int run = 0;
  for (double w2 : w2s) {
    for (double w1 : w1s) {
      std::vector<double> m50s, ms;
      for (int s = 0; s < base.seeds; ++s) {
        ExperimentConfig c = base;
        c.wunet = true;
        c.sawf = true;
        c.cfm = true;
        c.xattn = false;
        c.w1_init = w1;
        c.w2_init = w2;
        c.seed = base.seed + static_cast<unsigned>(s);
        c.out = (fs::path(base.out) / ("sweep_run" + std::to_string(run) + "_seed" +
                                       std::to_string(c.seed)))
                    .string();
        TrainOutcome o = train(c, quiet);
        m50s.push_back(o.final_val.map50);
        ms.push_back(o.final_val.map);
      }
      rows.push_back(SweepRow{w1, w2, mean_of(m50s), mean_of(ms)});
      if (!quiet)
        std::cout << "[sweep] W2=" << w2 << " W1=" << w1 << " mAP50 " << rows.back().map50
                  << std::endl;
      ++run;
    }
  }
  const std::string hash = base.hash();
  std::ostringstream md;
  md << "| W2 | W1 | mAP@0.5 | mAP |\n|----|----|---------|-----|\n";
  json jrows = json::array();
  for (const SweepRow& r : rows) {
    md << "| " << r.w2 << " | " << r.w1 << " | " << r.map50 << " | " << r.map << " |\n";
    jrows.push_back(json{{"w1", r.w1}, {"w2", r.w2}, {"map50", r.map50}, {"map", r.map}});
  }
  md << "\nconfig_hash: " << hash << "\n";
  std::ofstream fmd(fs::path(base.out) / "sweep.md");
  fmd << md.str();
  std::ofstream fj(fs::path(base.out) / "sweep.json");
  fj << json{{"config_hash", hash}, {"seeds", base.seeds}, {"rows", jrows}}.dump(2) << "\n";
  if (!quiet) std::cout << md.str();
  return rows;
}

}  // namespace wmnet
