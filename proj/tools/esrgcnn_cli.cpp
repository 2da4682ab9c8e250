// esrgcnn command-line driver: train, sr, eval, info.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "esrgcnn/esrgcnn.hpp"

namespace fs = std::filesystem;
using namespace esrgcnn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct ModelFlags {
  std::size_t channels = 64;
  std::size_t gebs = 6;
  std::vector<int> scales{2, 3, 4};
  bool no_wff = false;
  bool no_last_cr = false;
  bool no_distilling = false;
  bool no_group_split = false;

  void attach(CLI::App* app) {
    app->add_option("--channels", channels, "Base channel count s (multiple of 4)")->capture_default_str();
    app->add_option("--gebs", gebs, "Number of group enhanced blocks")->capture_default_str();
    app->add_option("--scales", scales, "Upsampling modes to build")->delimiter(',')->check(CLI::IsMember({2, 3, 4}))
        ->capture_default_str();
    app->add_flag("--no-wff", no_wff, "Ablation: disable wide feature fusion");
    app->add_flag("--no-last-cr", no_last_cr, "Ablation: drop the last Conv+ReLU");
    app->add_flag("--no-distilling", no_distilling, "Ablation: drop the distilling branch");
    app->add_flag("--no-group-split", no_group_split, "Ablation: ungrouped lead convolutions");
  }

  ModelConfig config(std::uint64_t seed) const {
    ModelConfig cfg;
    cfg.channels = channels;
    cfg.num_gebs = gebs;
    cfg.scales = scales;
    cfg.disable_wff = no_wff;
    cfg.disable_last_cr = no_last_cr;
    cfg.disable_distilling = no_distilling;
    cfg.disable_group_split = no_group_split;
    cfg.seed = seed;
    return cfg;
  }
};

struct TrainFlags {
  ModelFlags model;
  std::string data;
  std::string out = "run";
  std::uint64_t steps = 600000;
  std::size_t batch = 32;
  std::size_t patch = kPatchSize;
  double lr = 1e-4;
  std::uint64_t halving = 400000;
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_every = 0;
  std::uint64_t log_every = 100;
  std::string strategy = "round-robin";
};

int run_train(const TrainFlags& f) {
  const ModelConfig cfg = f.model.config(f.seed);
  cfg.validate();
  TrainSchedule schedule;
  schedule.base_lr = f.lr;
  schedule.halving_period = f.halving;
  schedule.total_steps = f.steps;
  schedule.batch_size = f.batch;
  schedule.patch_size = f.patch;
  schedule.strategy = f.strategy == "random" ? ScaleStrategy::RandomUniform : ScaleStrategy::RoundRobin;
  schedule.validate();

  IngestResult corpus = ingest_corpus(f.data, cfg.scales);
  for (const auto& [file, msg] : corpus.errors) std::cerr << "warning: skipped " << file << ": " << msg << "\n";
  std::cerr << "ingested " << corpus.records.size() << " images from " << f.data << "\n";

  fs::create_directories(f.out);
  const fs::path ckpt = fs::path(f.out) / "model.esrg";
  const fs::path csv = fs::path(f.out) / "loss.csv";

  TrainOptions opts;
  opts.data_seed = f.seed;
  opts.checkpoint_every = f.checkpoint_every;
  opts.on_checkpoint = [&](std::uint64_t, const ModelParams<float>& p) { save_checkpoint(p, ckpt); };
  opts.on_step = [&](const LossRecord& r) {
    if (f.log_every && (r.step % f.log_every == 0 || r.step + 1 == f.steps))
      std::fprintf(stderr, "step %llu  x%d  loss %.6g  lr %.3g\n", static_cast<unsigned long long>(r.step), r.scale,
                   r.loss, r.lr);
  };
  TrainResult result = train(init_model<float>(cfg), schedule, corpus.records, opts);
  write_loss_csv(csv, result.log);
  std::cout << "wrote " << ckpt.string() << " and " << csv.string() << "\n";
  return kExitOk;
}

int run_sr(const std::string& model, int scale, const std::string& input, const std::string& output) {
  const ModelParams<float> params = load_checkpoint(model);
  check_valve(params.config, scale);
  const Tensor<float> lr = read_png(input);
  write_png(output, model_forward(params, lr, scale));
  std::cout << "wrote " << output << " (" << lr.w() * scale << "x" << lr.h() * scale << ")\n";
  return kExitOk;
}

int run_eval(const std::string& model, bool bicubic, const std::string& data, int scale, std::string report) {
  ModelParams<float> params;
  SrSource source = bicubic_source();
  if (!bicubic) {
    params = load_checkpoint(model);
    check_valve(params.config, scale);
    source = model_source(params);
  }
  IngestResult corpus = ingest_corpus(data, {scale});
  for (const auto& [file, msg] : corpus.errors) std::cerr << "warning: skipped " << file << ": " << msg << "\n";
  const MetricReport r = evaluate(source, corpus.records, scale);
  for (const MetricRow& row : r.rows) {
    if (row.ok())
      std::printf("%-24s %8.4f dB  %.4f\n", row.id.c_str(), row.psnr, row.ssim);
    else
      std::printf("%-24s error: %s\n", row.id.c_str(), row.error.c_str());
  }
  std::printf("mean PSNR %.4f dB  SSIM %.4f  (n=%zu, x%d, shave %zu)\n", r.mean_psnr, r.mean_ssim, r.n, scale,
              r.shave);
  if (report.empty()) report = "report_x" + std::to_string(scale);
  write_report(r, report);
  return r.n == r.rows.size() ? kExitOk : kExitFailure;
}

int run_info(const std::string& model, const std::string& config, const std::string& size, int scale) {
  std::size_t h = 0, w = 0;
  char sep = 0;
  std::istringstream ss(size);
  if (!(ss >> h >> sep >> w) || sep != 'x' || h == 0 || w == 0) {
    std::cerr << "--size must look like 83x83\n";
    return kExitUsage;
  }
  ModelConfig cfg;
  if (!model.empty()) {
    cfg = load_checkpoint(model).config;
  } else if (!config.empty()) {
    std::ifstream in(config);
    if (!in) throw std::runtime_error("cannot read config '" + config + "'");
    cfg = config_from_json(nlohmann::json::parse(in));
  }
  std::cout << describe_model(cfg, h, w, scale);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  configure_threads_from_env();

  CLI::App app{"ESRGCNN single-image super-resolution"};
  app.require_subcommand(1);

  TrainFlags tf;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model on a directory of PNG images");
  tf.model.attach(train_cmd);
  train_cmd->add_option("--data", tf.data, "Directory of HR PNG images")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", tf.out, "Output directory for checkpoint and loss CSV")->capture_default_str();
  train_cmd->add_option("--steps", tf.steps)->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", tf.batch)->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--patch", tf.patch, "LR patch side")->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tf.lr)->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--halving", tf.halving, "Steps between learning-rate halvings")->capture_default_str()
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", tf.seed)->capture_default_str();
  train_cmd->add_option("--checkpoint-every", tf.checkpoint_every)->capture_default_str();
  train_cmd->add_option("--log-every", tf.log_every)->capture_default_str();
  train_cmd->add_option("--strategy", tf.strategy, "Scale alternation")->check(CLI::IsMember({"round-robin", "random"}))
      ->capture_default_str();

  std::string sr_model, sr_input, sr_output;
  int sr_scale = 2;
  CLI::App* sr_cmd = app.add_subcommand("sr", "Super-resolve one PNG");
  sr_cmd->add_option("--model", sr_model)->required()->check(CLI::ExistingFile);
  sr_cmd->add_option("--scale", sr_scale)->required()->check(CLI::IsMember({2, 3, 4}));
  sr_cmd->add_option("--input", sr_input)->required()->check(CLI::ExistingFile);
  sr_cmd->add_option("--output", sr_output)->required();

  std::string ev_model, ev_data, ev_report;
  bool ev_bicubic = false;
  int ev_scale = 2;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Y-channel PSNR/SSIM on a directory of HR PNG images");
  auto* ev_model_opt = eval_cmd->add_option("--model", ev_model)->check(CLI::ExistingFile);
  auto* ev_bicubic_opt = eval_cmd->add_flag("--bicubic", ev_bicubic, "Evaluate the bicubic baseline");
  ev_model_opt->excludes(ev_bicubic_opt);
  eval_cmd->add_option("--data", ev_data)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--scale", ev_scale)->required()->check(CLI::IsMember({2, 3, 4}));
  eval_cmd->add_option("--report", ev_report, "Report path stem (writes .csv and .json)");

  std::string info_model, info_config, info_size = "83x83";
  int info_scale = 2;
  CLI::App* info_cmd = app.add_subcommand("info", "Parameter and FLOP accounting");
  auto* info_model_opt = info_cmd->add_option("--model", info_model)->check(CLI::ExistingFile);
  auto* info_config_opt = info_cmd->add_option("--config", info_config, "JSON model config")->check(CLI::ExistingFile);
  info_model_opt->excludes(info_config_opt);
  info_cmd->add_option("--size", info_size, "LR input size HxW")->capture_default_str();
  info_cmd->add_option("--scale", info_scale)->check(CLI::IsMember({2, 3, 4}))->capture_default_str();

  try {
    app.parse(argc, argv);
    if (eval_cmd->parsed() && !ev_bicubic && ev_model.empty())
      throw CLI::ValidationError("eval", "one of --model or --bicubic is required");
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return run_train(tf);
    if (sr_cmd->parsed()) return run_sr(sr_model, sr_scale, sr_input, sr_output);
    if (eval_cmd->parsed()) return run_eval(ev_model, ev_bicubic, ev_data, ev_scale, ev_report);
    if (info_cmd->parsed()) return run_info(info_model, info_config, info_size, info_scale);
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: training diverged: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
