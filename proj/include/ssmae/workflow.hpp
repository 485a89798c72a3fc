#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ssmae/config.hpp"
#include "ssmae/data.hpp"
#include "ssmae/metrics.hpp"
#include "ssmae/model.hpp"

namespace ssmae {

/// Scene plus the model-ready cubes: standardized aux and PCA-reduced HSI.
struct PreparedData {
  Scene scene;
  PcaModel pca;
  Tensor aux;  // [C1×H×W]
  Tensor hsi;  // [K×H×W]
  SplitManifest split;
};

PreparedData prepare_data(const RunConfig& cfg);

/// Patches for `sites`; unlabeled centers allowed. Extraction runs on up to
/// `threads` workers, results in site order.
std::vector<Patch> assemble_patches(const PreparedData& data, std::span<const Site> sites, std::size_t patch_size,
                                    std::size_t threads);

/// Worker count for batch assembly from SSMAE_THREADS (default 1).
std::size_t worker_threads();

/// Seed of the parameter initialization for a run.
std::uint64_t init_seed(const RunConfig& cfg);

/// Seeded pixel sites for pretraining (labels unused).
std::vector<Site> pretrain_pool(const RunConfig& cfg, const PreparedData& data);

struct PretrainRun {
  Model model;
  std::vector<StepLog> log;
};

/// Pretraining for cfg.pretrain_steps steps. `on_step` sees every logged step.
PretrainRun run_pretrain(const RunConfig& cfg, const PreparedData& data,
                         const std::function<void(std::size_t, const StepLog&)>& on_step = {});

struct TrainRun {
  Model model;
  std::vector<double> loss;
};

/// Finetuning for cfg.train_steps steps on the training split. Encoders start
/// from `pretrained` when given.
TrainRun run_train(const RunConfig& cfg, const PreparedData& data, const Model* pretrained = nullptr);

struct EvalRun {
  ConfusionMatrix cm;
  Scores scores;
  std::vector<Site> sites;
  std::vector<std::size_t> predictions;  // class index per site
  std::string report;
};

EvalRun run_eval(const RunConfig& cfg, const PreparedData& data, const Model& model);

// File-producing subcommands. Every artifact lands in cfg.out_dir.
void write_scene(const RunConfig& cfg);                       // scene.mst, split.csv
void write_pretrain(const RunConfig& cfg);                    // pretrain.mst, pretrain_loss.csv
void write_train(const RunConfig& cfg, const std::string& from_pretrained);  // model.mst, train_loss.csv
EvalRun write_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint);  // report.txt, confusion.csv, predictions.mst
void write_mask_demo(const RunConfig& cfg);                   // mask_demo.mst

std::string format_double(double v);

}  // namespace ssmae
