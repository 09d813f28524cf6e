#include <CLI11.hpp>
#include <iostream>

#include "wmnet/image_io.hpp"
#include "wmnet/plot.hpp"
#include "wmnet/trainer.hpp"
#include "wmnet/wunet.hpp"

using namespace wmnet;

int main(int argc, char** argv) {
  CLI::App app{"wmnet: misalignment-aware visible-infrared fusion detector"};
  app.require_subcommand(1);

  // gen-data
  std::string spec_path, out_dir;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic misaligned pair dataset");
  gen->add_option("--spec", spec_path, "key=value misalignment spec file")->required();
  gen->add_option("--out", out_dir, "output dataset directory")->required();

  // train
  std::string cfg_path;
  auto* tr = app.add_subcommand("train", "train a detector from a config file");
  tr->add_option("--config", cfg_path, "key=value experiment config")->required();

  // eval
  std::string ckpt_path, split = "val", data_override, log_path;
  bool oracle = false;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  ev->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  ev->add_option("--split", split, "train or val");
  ev->add_option("--data", data_override, "dataset dir (defaults to the checkpoint's)");
  ev->add_option("--log", log_path, "JSONL file to append the result to");
  ev->add_flag("--oracle", oracle, "score ground truth as predictions (debug)");

  // ablate / sweep-w
  std::string ab_cfg, sw_cfg;
  auto* ab = app.add_subcommand("ablate", "run the component ablation grid");
  ab->add_option("--config", ab_cfg, "base experiment config")->required();
  auto* sw = app.add_subcommand("sweep-w", "run the W1/W2 initialization sweep");
  sw->add_option("--config", sw_cfg, "base experiment config")->required();

  // plot
  std::string plot_log, plot_out;
  auto* pl = app.add_subcommand("plot", "render metric curves from a JSONL log");
  pl->add_option("--log", plot_log, "metrics JSONL file")->required();
  pl->add_option("--out", plot_out, "output PNG path")->required();

  // wavelet roundtrip <image>
  auto* wav = app.add_subcommand("wavelet", "wavelet debug utilities");
  std::string wav_image;
  auto* wav_rt = wav->add_subcommand("roundtrip", "print DWT/IDWT reconstruction error");
  wav_rt->add_option("image", wav_image, "input image")->required();

  // wunet enhance
  auto* wu = app.add_subcommand("wunet", "enhancement debug utilities");
  std::string wu_rgb, wu_ir, wu_out;
  unsigned wu_seed = 0;
  auto* wu_en = wu->add_subcommand("enhance", "run the (untrained) enhancer on a pair");
  wu_en->add_option("--rgb", wu_rgb, "rgb image")->required();
  wu_en->add_option("--ir", wu_ir, "infrared image")->required();
  wu_en->add_option("--out", wu_out, "output image")->required();
  wu_en->add_option("--seed", wu_seed, "parameter init seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      DatasetSpec spec = dataset_spec_from_file(spec_path);
      generate_dataset(spec, out_dir);
      std::cout << "wrote " << spec.train_count << " train / " << spec.val_count
                << " val pairs to " << out_dir << std::endl;
    } else if (*tr) {
      ExperimentConfig cfg = ExperimentConfig::from_file(cfg_path);
      TrainOutcome o = train(cfg);
      std::cout << "checkpoint: " << o.checkpoint_path << "\nfinal val mAP50 "
                << o.final_val.map50 << " mAP " << o.final_val.map << std::endl;
    } else if (*ev) {
      evaluate_checkpoint(ckpt_path, split, data_override, log_path, oracle);
    } else if (*ab) {
      run_ablation(ExperimentConfig::from_file(ab_cfg));
    } else if (*sw) {
      run_sweep_w(ExperimentConfig::from_file(sw_cfg));
    } else if (*pl) {
      plot_metrics(plot_log, plot_out);
      std::cout << "wrote " << plot_out << std::endl;
    } else if (*wav_rt) {
      Tensor<float> img = load_image(wav_image);
      SubbandSet<float> s = dwt2(img);
      Tensor<float> back = idwt2(s);
      const double err = max_abs_diff(back, img);
      const double in_e = img.sum_sq();
      const double sub_e =
          s.ll.sum_sq() + s.lh.sum_sq() + s.hl.sum_sq() + s.hh.sum_sq();
      std::cout << "max reconstruction error: " << err << "\n"
                << "relative energy difference: "
                << std::abs(in_e - sub_e) / std::max(1e-12, in_e) << std::endl;
    } else if (*wu_en) {
      Tensor<float> rgb = load_image(wu_rgb);
      Tensor<float> ir = load_image(wu_ir);
      ParamStore<float> store;
      std::mt19937 rng(wu_seed);
      WUNetConfig wcfg;
      wcfg.channels = rgb.shape[2];
      WUNet<float> net(store, "wunet", wcfg, rng);
      Tape<float> tape;
      Var<float> out = net.forward(tape, tape.constant(rgb), tape.constant(ir));
      Tensor<float> res = out.val();
      for (auto& v : res.data) v = std::clamp(v, 0.f, 1.f);
      save_image(wu_out, res);
      std::cout << "wrote " << wu_out << std::endl;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
