#include "ssmae/workflow.hpp"

#include <algorithm>
#include <cstdlib>
#include <optional>
#include <fstream>
#include <thread>

#include "ssmae/container.hpp"
#include "ssmae/error.hpp"

namespace ssmae {

namespace {

enum Stream : std::uint64_t { split_stream = 20, init_stream, pool_stream, pretrain_batch_stream, mask_stream,
                              train_batch_stream, pca_stream, demo_stream };

std::ofstream open_text(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::io, "cannot write " + path.string());
  return out;
}

std::filesystem::path ensure_dir(const RunConfig& cfg) {
  std::filesystem::path dir(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(Errc::io, "cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

// Epoch-wise seeded shuffles over a fixed index set.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), seed_(seed) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    reshuffle();
  }

  std::vector<std::size_t> next(std::size_t batch) {
    batch = std::min(batch, order_.size());
    std::vector<std::size_t> out;
    while (out.size() < batch) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    Rng rng(mix_seed(seed_, epoch_++));
    rng.shuffle(std::span<std::size_t>(order_));
    pos_ = 0;
  }

  std::vector<std::size_t> order_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::size_t pos_ = 0;
};

std::vector<Site> sites_for(const std::vector<Site>& all, const std::vector<std::size_t>& idx) {
  std::vector<Site> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t worker_threads() {
  const char* env = std::getenv("SSMAE_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) fail(Errc::config, "SSMAE_THREADS must be a positive integer, got '" + std::string(env) + "'");
  return static_cast<std::size_t>(v);
}

PreparedData prepare_data(const RunConfig& cfg) {
  cfg.validate();
  PreparedData d;
  d.scene = generate_scene(cfg.scene, cfg.seed);
  const auto& gt = d.scene.gt;

  // PCA on labeled pixels, optionally a seeded subset of them.
  std::vector<std::size_t> labeled;
  for (std::size_t p = 0; p < gt.labels.size(); ++p) {
    if (gt.labels[p] != 0) labeled.push_back(p);
  }
  if (cfg.pca_sample_cap > 0 && labeled.size() > cfg.pca_sample_cap) {
    Rng rng(mix_seed(cfg.seed, pca_stream));
    rng.shuffle(std::span<std::size_t>(labeled));
    labeled.resize(cfg.pca_sample_cap);
    std::sort(labeled.begin(), labeled.end());
  }
  const Tensor all = cube_pixels(d.scene.hsi);
  const auto c = all.dim(1);
  std::vector<double> rows;
  rows.reserve(labeled.size() * c);
  for (auto p : labeled) rows.insert(rows.end(), all.data().begin() + static_cast<std::ptrdiff_t>(p * c),
                                     all.data().begin() + static_cast<std::ptrdiff_t>((p + 1) * c));
  d.pca = pca_fit(Tensor({labeled.size(), c}, std::move(rows)), cfg.pca_components);
  d.hsi = pca_apply(d.pca, d.scene.hsi, cfg.scaling());
  d.aux = standardize_channels(d.scene.aux);
  d.split = split_samples(gt, cfg.scene.classes, cfg.train_per_class, mix_seed(cfg.seed, split_stream));
  return d;
}

std::vector<Patch> assemble_patches(const PreparedData& data, std::span<const Site> sites, std::size_t patch_size,
                                    std::size_t threads) {
  std::vector<Patch> out(sites.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      out[i] = extract_patch(data.aux, data.hsi, data.scene.gt, sites[i].row, sites[i].col, patch_size, false);
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, sites.size()));
  if (threads == 1) {
    work(0, sites.size());
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (sites.size() + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        work(t * chunk, std::min(sites.size(), (t + 1) * chunk));
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::uint64_t init_seed(const RunConfig& cfg) { return mix_seed(cfg.seed, init_stream); }

std::vector<Site> pretrain_pool(const RunConfig& cfg, const PreparedData& data) {
  // A distinct pixel locations; labels are never read.
  const auto h = data.scene.gt.height, w = data.scene.gt.width;
  std::vector<std::size_t> pixels(h * w);
  for (std::size_t p = 0; p < pixels.size(); ++p) pixels[p] = p;
  Rng pool_rng(mix_seed(cfg.seed, pool_stream));
  pool_rng.shuffle(std::span<std::size_t>(pixels));
  pixels.resize(std::min(cfg.pretrain_samples, pixels.size()));
  std::vector<Site> pool;
  for (auto p : pixels) pool.push_back({p / w, p % w, data.scene.gt.labels[p]});
  return pool;
}

PretrainRun run_pretrain(const RunConfig& cfg, const PreparedData& data,
                         const std::function<void(std::size_t, const StepLog&)>& on_step) {
  cfg.validate();
  PretrainRun run{Model::create(cfg.model_config(), init_seed(cfg)), {}};
  Adam opt(run.model.pretrain_params(), AdamConfig{cfg.lr_pretrain});
  const auto pool = pretrain_pool(cfg, data);

  PretrainOptions opts{cfg.ratio_spatial, cfg.ratio_spectral, cfg.lambda};
  BatchSampler sampler(pool.size(), mix_seed(cfg.seed, pretrain_batch_stream));
  const auto threads = worker_threads();
  for (std::size_t step = 0; step < cfg.pretrain_steps; ++step) {
    const auto sites = sites_for(pool, sampler.next(cfg.batch_size));
    const auto batch = assemble_patches(data, sites, cfg.patch_size, threads);
    run.log.push_back(pretrain_step(run.model, opt, batch, opts, mix_seed(cfg.seed, mask_stream, step)));
    if (on_step) on_step(step, run.log.back());
  }
  return run;
}

TrainRun run_train(const RunConfig& cfg, const PreparedData& data, const Model* pretrained) {
  cfg.validate();
  auto mc = cfg.model_config();
  mc.num_classes = cfg.scene.classes;
  TrainRun run{Model::create(mc, init_seed(cfg)), {}};
  if (pretrained) {
    ParamList src;
    pretrained->spatial.collect_encoder(src, "spa");
    pretrained->spectral.collect_encoder(src, "spe");
    ParamList dst;
    run.model.spatial.collect_encoder(dst, "spa");
    run.model.spectral.collect_encoder(dst, "spe");
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (src[i].tensor.shape() != dst[i].tensor.shape()) {
        fail(Errc::config, "pretrained encoder " + src[i].name + " has shape " + shape_str(src[i].tensor.shape()));
      }
      auto out = dst[i].tensor.mutable_data();
      std::copy(src[i].tensor.data().begin(), src[i].tensor.data().end(), out.begin());
    }
  }
  const auto train = data.split.all_train();
  if (train.empty()) fail(Errc::config, "train_per_class: the training split is empty");
  Adam opt(run.model.train_params(), AdamConfig{cfg.lr_train});
  BatchSampler sampler(train.size(), mix_seed(cfg.seed, train_batch_stream));
  const auto threads = worker_threads();
  for (std::size_t step = 0; step < cfg.train_steps; ++step) {
    const auto sites = sites_for(train, sampler.next(cfg.batch_size));
    auto batch = assemble_patches(data, sites, cfg.patch_size, threads);
    run.loss.push_back(train_step(run.model, opt, batch));
  }
  return run;
}

EvalRun run_eval(const RunConfig& cfg, const PreparedData& data, const Model& model) {
  EvalRun run;
  run.sites = data.split.all_test();
  if (run.sites.empty()) fail(Errc::metric, "the test split is empty");
  std::vector<std::size_t> truths;
  const auto threads = worker_threads();
  constexpr std::size_t chunk = 256;
  for (std::size_t begin = 0; begin < run.sites.size(); begin += chunk) {
    const auto end = std::min(run.sites.size(), begin + chunk);
    std::span<const Site> part(run.sites.data() + begin, end - begin);
    const auto batch = assemble_patches(data, part, cfg.patch_size, threads);
    const auto preds = predict(model, batch);
    run.predictions.insert(run.predictions.end(), preds.begin(), preds.end());
  }
  for (const auto& s : run.sites) truths.push_back(s.label - 1);
  run.cm = confusion(run.predictions, truths, cfg.scene.classes);
  run.scores = score(run.cm);
  run.report = format_report(run.cm, run.scores);
  return run;
}

void write_scene(const RunConfig& cfg) {
  cfg.validate();
  const auto dir = ensure_dir(cfg);
  const auto data = prepare_data(cfg);
  const auto& s = data.scene;
  std::vector<double> gt(s.gt.labels.begin(), s.gt.labels.end());
  write_tensors(dir / "scene.mst", {
                                       StoredTensor::of("hsi", s.hsi),
                                       StoredTensor::of("aux", s.aux),
                                       {"gt", DType::u16, {s.gt.height, s.gt.width}, gt},
                                       StoredTensor::of("signatures", s.signatures),
                                       StoredTensor::of("aux_signatures", s.aux_signatures),
                                   });
  auto out = open_text(dir / "split.csv");
  out << "row,col,label,set\n";
  for (const auto& site : data.split.all_train()) out << site.row << ',' << site.col << ',' << site.label << ",train\n";
  for (const auto& site : data.split.all_test()) out << site.row << ',' << site.col << ',' << site.label << ",test\n";
}

void write_pretrain(const RunConfig& cfg) {
  cfg.validate();
  const auto dir = ensure_dir(cfg);
  const auto data = prepare_data(cfg);
  auto csv = open_text(dir / "pretrain_loss.csv");
  csv << "step,spatial,spectral,total\n";
  const auto run = run_pretrain(cfg, data, [&](std::size_t step, const StepLog& l) {
    csv << step << ',' << format_double(l.spatial) << ',' << format_double(l.spectral) << ','
        << format_double(l.total) << '\n';
  });
  save_checkpoint(run.model, dir / "pretrain.mst");
}

void write_train(const RunConfig& cfg, const std::string& from_pretrained) {
  cfg.validate();
  const auto dir = ensure_dir(cfg);
  std::optional<Model> pretrained;
  if (!from_pretrained.empty()) {
    pretrained = load_checkpoint(from_pretrained);
    auto mine = cfg.model_config();
    const auto& theirs = pretrained->cfg;
    if (theirs.transformer.token_dim != mine.transformer.token_dim || theirs.transformer.blocks != mine.transformer.blocks ||
        theirs.transformer.heads != mine.transformer.heads || theirs.transformer.patch_size != mine.transformer.patch_size ||
        theirs.aux_channels != mine.aux_channels || theirs.hsi_channels != mine.hsi_channels) {
      fail(Errc::config, "pretrained checkpoint " + from_pretrained + " does not match the configured model shape");
    }
  }
  const auto data = prepare_data(cfg);
  const auto run = run_train(cfg, data, pretrained ? &*pretrained : nullptr);
  auto csv = open_text(dir / "train_loss.csv");
  csv << "step,loss\n";
  for (std::size_t i = 0; i < run.loss.size(); ++i) csv << i << ',' << format_double(run.loss[i]) << '\n';
  save_checkpoint(run.model, dir / "model.mst");
}

EvalRun write_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint) {
  cfg.validate();
  if (!std::filesystem::exists(checkpoint)) fail(Errc::io, "checkpoint not found: " + checkpoint.string());
  const auto model = load_checkpoint(checkpoint);
  if (!model.has_classifier()) fail(Errc::config, "checkpoint " + checkpoint.string() + " has no classifier");
  if (model.cfg.num_classes != cfg.scene.classes) {
    fail(Errc::config, "classes: checkpoint has " + std::to_string(model.cfg.num_classes) + " classes");
  }
  const auto dir = ensure_dir(cfg);
  const auto data = prepare_data(cfg);
  auto run = run_eval(cfg, data, model);
  open_text(dir / "report.txt") << run.report;
  open_text(dir / "confusion.csv") << confusion_csv(run.cm);
  const auto h = data.scene.gt.height, w = data.scene.gt.width;
  std::vector<double> map(h * w, 0.0);
  for (std::size_t i = 0; i < run.sites.size(); ++i) {
    map[run.sites[i].row * w + run.sites[i].col] = static_cast<double>(run.predictions[i] + 1);
  }
  write_tensor(dir / "predictions.mst", {"predictions", DType::u16, {h, w}, map});
  return run;
}

void write_mask_demo(const RunConfig& cfg) {
  cfg.validate();
  const auto dir = ensure_dir(cfg);
  const auto data = prepare_data(cfg);
  const auto h = data.scene.gt.height, w = data.scene.gt.width;
  const auto patch = extract_patch(data.aux, data.hsi, data.scene.gt, h / 2, w / 2, cfg.patch_size, false);
  const Tensor t = concat_patch(patch);
  const auto mc = cfg.model_config();
  const auto spa = sample_mask(MaskMode::spatial, cfg.patch_size * cfg.patch_size, cfg.ratio_spatial,
                               mix_seed(cfg.seed, demo_stream, 0));
  const auto spe = sample_mask(MaskMode::spectral, mc.transformer.channels, cfg.ratio_spectral,
                               mix_seed(cfg.seed, demo_stream, 1), mc.protected_bands());
  auto indices = [](const std::vector<std::size_t>& v) {
    StoredTensor s{"", DType::u16, {v.size()}, {}};
    for (auto i : v) s.values.push_back(static_cast<double>(i));
    return s;
  };
  auto spa_idx = indices(spa.masked);
  spa_idx.name = "spatial_masked";
  auto spe_idx = indices(spe.masked);
  spe_idx.name = "spectral_masked";
  write_tensors(dir / "mask_demo.mst", {
                                           StoredTensor::of("T", t),
                                           StoredTensor::of("T_spa", apply_spatial_mask(t, spa).reassemble()),
                                           StoredTensor::of("T_spe", apply_spectral_mask(t, spe).reassemble()),
                                           spa_idx,
                                           spe_idx,
                                       });
}

}  // namespace ssmae
