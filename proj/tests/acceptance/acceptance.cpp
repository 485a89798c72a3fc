// Runs the acceptance criteria and prints one PASS/FAIL line each.
// Usage: acceptance [criterion numbers...]   (default: all)
#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ssmae/attention.hpp"
#include "ssmae/container.hpp"
#include "ssmae/data.hpp"
#include "ssmae/grad_check.hpp"
#include "ssmae/masking.hpp"
#include "ssmae/metrics.hpp"
#include "ssmae/model.hpp"
#include "ssmae/ops.hpp"
#include "ssmae/workflow.hpp"

using namespace ssmae;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Tensor random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(s));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor(std::move(s), std::move(v));
}

// Desk-scale setup shared by the training criteria: 64×64 scene, L=5,
// 48 bands reduced to 20, one auxiliary band.
RunConfig desk_config(std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.scene = SceneConfig{};
  c.pca_components = 20;
  c.token_dim = 32;
  c.heads = 4;
  c.blocks = 2;
  c.batch_size = 64;
  c.lr_pretrain = 3e-3;
  c.ratio_spatial = 0.3;
  c.ratio_spectral = 0.3;
  c.pretrain_steps = 200;
  c.train_steps = 300;
  c.lr_train = 1e-3;
  return c;
}

constexpr std::size_t kTrainBatch = 32;

// Pretrained models are shared between criteria that use the same seed.
struct PretrainCache {
  std::map<std::uint64_t, PretrainRun> runs;
  std::map<std::uint64_t, double> seconds;

  const PretrainRun& get(std::uint64_t seed, const PreparedData& data) {
    auto it = runs.find(seed);
    if (it != runs.end()) return it->second;
    Stopwatch sw;
    auto run = run_pretrain(desk_config(seed), data);
    seconds[seed] = sw.seconds();
    return runs.emplace(seed, std::move(run)).first->second;
  }
};

PretrainCache cache;

// 1. Gradient suite
Outcome gradient_suite() {
  Stopwatch sw;
  const auto cases = run_grad_suite();
  double worst_op = 0, worst_path = 0;
  std::string failed;
  for (const auto& c : cases) {
    (c.tolerance <= 1e-5 ? worst_op : worst_path) = std::max(c.tolerance <= 1e-5 ? worst_op : worst_path, c.error);
    if (!c.passed()) failed += " " + c.name;
  }
  const double t = sw.seconds();
  Outcome o;
  o.pass = failed.empty() && t < 60.0;
  o.detail = std::to_string(cases.size()) + " cases, worst op " + fmt("%.1e", worst_op) + " (tol 1e-5), worst path " +
             fmt("%.1e", worst_path) + " (tol 1e-4), " + fmt("%.1f s", t) + (failed.empty() ? "" : ", failed:" + failed);
  return o;
}

// 2. Masking exactness
Outcome masking_exactness() {
  std::size_t checked = 0, wrong = 0;
  for (std::size_t total = 4; total <= 256; ++total) {
    for (std::size_t tenth = 1; tenth <= 9; ++tenth) {
      const double ratio = static_cast<double>(tenth) / 10.0;
      for (std::size_t prot = 0; prot <= 1; ++prot) {
        const std::size_t eligible = total - prot;
        // round half up of tenth·eligible/10 in integers
        const std::size_t want = (tenth * eligible + 5) / 10;
        std::vector<std::size_t> p;
        if (prot) p.push_back(total / 2);
        const auto spec = sample_mask(prot ? MaskMode::spectral : MaskMode::spatial, total, ratio, total * 31 + tenth, p);
        ++checked;
        if (spec.masked.size() != want || (prot && spec.is_masked(total / 2))) ++wrong;
      }
    }
  }

  // Reconstructions perturbed at visible units must leave the loss bit-identical.
  Rng rng(2);
  std::size_t trials = 0, changed = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = 2 + rng.below(8), p = 3 + 2 * rng.below(3);
    const Tensor t = random_tensor({c, p, p}, rng);
    Tensor r_spa = random_tensor({c, p, p}, rng), r_spe = random_tensor({c, p, p}, rng);
    const double ratio = (1.0 + static_cast<double>(rng.below(9))) / 10.0;
    const auto spa = sample_mask(MaskMode::spatial, p * p, ratio, rng.next());
    const auto spe = sample_mask(MaskMode::spectral, c, ratio, rng.next());
    if (spa.masked.empty() || spe.masked.empty()) continue;
    const double before = ssmae_loss(t, r_spa, r_spe, spa, spe, 2.0).total.item();
    auto ds = r_spa.mutable_data();
    auto de = r_spe.mutable_data();
    const auto ms = element_mask(spa, t.shape()), me = element_mask(spe, t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) {
      if (ms.data()[i] == 0.0) ds[i] += 1e3 * rng.normal();
      if (me.data()[i] == 0.0) de[i] -= 1e3 * rng.normal();
    }
    ++trials;
    if (ssmae_loss(t, r_spa, r_spe, spa, spe, 2.0).total.item() != before) ++changed;
  }
  Outcome o;
  o.pass = wrong == 0 && changed == 0 && trials > 0;
  o.detail = std::to_string(checked - wrong) + "/" + std::to_string(checked) + " mask counts exact, " +
             std::to_string(trials - changed) + "/" + std::to_string(trials) + " perturbations left the loss unchanged";
  return o;
}

// 3. Attention normalization
Outcome attention_normalization() {
  Rng rng(3);
  double worst = 0;
  std::size_t rows = 0;
  const std::size_t dims[][2] = {{8, 2}, {16, 4}, {32, 8}, {12, 3}, {24, 6}};
  for (int inst = 0; inst < 100; ++inst) {
    const auto d = dims[inst % 5][0], h = dims[inst % 5][1];
    const std::size_t n = 1 + rng.below(60);
    auto block = BlockParams::create(d, h, rng);
    auto alpha = block.alpha_log.mutable_data();
    for (auto& a : alpha) a = rng.uniform(-3.0, 3.0);
    AttentionTrace trace;
    attention_block(random_tensor({n, d}, rng, 3.0), block, h, &trace);
    for (const auto& w : trace.weights) {
      for (std::size_t r = 0; r < n; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < n; ++c) s += w.at({r, c});
        worst = std::max(worst, std::abs(s - 1.0));
        ++rows;
      }
    }
  }
  return {worst <= 1e-9, std::to_string(rows) + " weight rows over 100 instances, max |sum-1| " + fmt("%.1e", worst)};
}

// 4. Loss composition on every logged step
Outcome loss_composition() {
  auto cfg = desk_config(4);
  cfg.pretrain_steps = 40;
  cfg.batch_size = 16;
  const auto data = prepare_data(cfg);
  double worst = 0;
  std::size_t steps = 0;
  run_pretrain(cfg, data, [&](std::size_t, const StepLog& l) {
    worst = std::max(worst, std::abs(l.total - (cfg.lambda * l.spatial + l.spectral)));
    ++steps;
  });
  return {worst <= 1e-12 && steps == cfg.pretrain_steps,
          std::to_string(steps) + " steps at lambda 2, max |total - (2 spatial + spectral)| " + fmt("%.1e", worst)};
}

// 5. Pretraining convergence
Outcome pretraining_convergence() {
  double total_time = 0, mean_ratio = 0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Stopwatch sw;
    const auto cfg = desk_config(seed);
    const auto data = prepare_data(cfg);
    // Fixed held-out batch and masks, scored before and after training.
    const auto pool = pretrain_pool(cfg, data);
    const std::size_t n = std::min<std::size_t>(128, pool.size());
    const std::vector<Site> held(pool.end() - static_cast<std::ptrdiff_t>(n), pool.end());
    const auto patches = assemble_patches(data, held, cfg.patch_size, 1);
    const PretrainOptions opts{cfg.ratio_spatial, cfg.ratio_spectral, cfg.lambda};
    const std::uint64_t mask_seed = mix_seed(seed, 99);
    const double initial = evaluate_reconstruction(Model::create(cfg.model_config(), init_seed(cfg)), patches, opts, mask_seed).total;
    const auto& run = cache.get(seed, data);
    const double final_loss = evaluate_reconstruction(run.model, patches, opts, mask_seed).total;
    const double ratio = final_loss / initial;
    mean_ratio += ratio / 3.0;
    total_time += sw.seconds();
    per_seed += " " + fmt("%.3f", ratio);
  }
  return {mean_ratio < 0.25 && total_time < 300.0,
          "final/initial loss per seed" + per_seed + ", mean " + fmt("%.3f", mean_ratio) + " (need < 0.25), " +
              fmt("%.0f s", total_time) + " (need < 300 s)"};
}

// 6. Overfit check
Outcome overfit() {
  RunConfig c;
  c.scene.height = 32;
  c.scene.width = 32;
  c.scene.classes = 4;
  c.scene.hsi_bands = 16;
  c.pca_components = 4;
  c.patch_size = 3;
  c.train_per_class = 16;
  c.pretrain_samples = 256;
  const auto data = prepare_data(c);
  auto sites = data.split.all_train();
  sites.resize(64);
  const auto patches = assemble_patches(data, sites, 3, 1);

  ModelConfig mc;
  mc.transformer = TransformerConfig{1, 8, 2, 3, 5};
  mc.aux_channels = 1;
  mc.hsi_channels = 4;
  mc.irb_depth = 1;
  Model model = Model::create(mc, 6);
  model.add_classifier(c.scene.classes, 7);
  Adam opt(model.train_params(), AdamConfig{1e-2});
  std::size_t correct = 0, step = 0;
  while (step < 300) {
    train_step(model, opt, patches);
    ++step;
    if (step % 10 == 0) {
      const auto pred = predict(model, patches);
      correct = 0;
      for (std::size_t i = 0; i < patches.size(); ++i) correct += pred[i] == patches[i].label;
      if (correct == patches.size()) break;
    }
  }
  return {correct == 64, std::to_string(correct) + "/64 training patches correct after " + std::to_string(step) +
                              " steps (limit 300)"};
}

// 7. Desk-scale classification
Outcome desk_classification() {
  Stopwatch sw;
  auto cfg = desk_config(0);
  const auto data = prepare_data(cfg);
  const auto& pre = cache.get(0, data);
  const double pretrain_time = cache.seconds[0];
  cfg.batch_size = kTrainBatch;
  const auto run = run_train(cfg, data, &pre.model);
  const auto ev = run_eval(cfg, data, run.model);
  // time of this criterion includes the pretraining it relies on
  const double t = sw.seconds() + pretrain_time;
  return {ev.scores.oa >= 0.90 && t < 600.0,
          "OA " + fmt("%.4f", ev.scores.oa) + " AA " + fmt("%.4f", ev.scores.aa) + " Kappa " + fmt("%.4f", ev.scores.kappa) +
              " on " + std::to_string(ev.sites.size()) + " test pixels (need OA >= 0.90), " + fmt("%.0f s", t) +
              " (need < 600 s)"};
}

// 8. Few-shot direction
Outcome few_shot() {
  double with = 0, without = 0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto cfg = desk_config(seed);
    const auto data_pre = prepare_data(cfg);
    const auto& pre = cache.get(seed, data_pre);
    cfg.train_per_class = 4;
    cfg.batch_size = kTrainBatch;
    const auto data = prepare_data(cfg);
    const double a = run_eval(cfg, data, run_train(cfg, data, &pre.model).model).scores.oa;
    const double b = run_eval(cfg, data, run_train(cfg, data, nullptr).model).scores.oa;
    with += a / 5;
    without += b / 5;
    detail += " " + fmt("%.3f", a) + "/" + fmt("%.3f", b);
  }
  return {with >= without, "mean OA with pretraining " + fmt("%.4f", with) + " vs without " + fmt("%.4f", without) +
                               " (per seed with/without" + detail + ")"};
}

// 9. Metrics oracle
Outcome metrics_oracle() {
  Rng rng(9);
  double worst = 0;
  for (int m = 0; m < 1000; ++m) {
    const std::size_t l = 2 + rng.below(9);
    ConfusionMatrix cm(l);
    for (auto& v : cm.counts) v = rng.below(rng.below(2) ? 1000 : 20);
    cm.counts[0] += 1;
    const auto s = score(cm);
    // direct formulas in long double
    long double n = 0, diag = 0, pe = 0, aa = 0;
    std::size_t present = 0;
    for (std::size_t t = 0; t < l; ++t)
      for (std::size_t p = 0; p < l; ++p) n += cm.at(t, p);
    for (std::size_t k = 0; k < l; ++k) {
      long double row = 0, col = 0;
      for (std::size_t j = 0; j < l; ++j) {
        row += cm.at(k, j);
        col += cm.at(j, k);
      }
      diag += cm.at(k, k);
      pe += row * col;
      if (row > 0) {
        aa += cm.at(k, k) / row;
        ++present;
      }
    }
    const long double po = diag / n;
    pe /= n * n;
    const double oa = static_cast<double>(po), av = static_cast<double>(aa / present),
                 kappa = static_cast<double>((po - pe) / (1 - pe));
    worst = std::max({worst, std::abs(s.oa - oa), std::abs(s.aa - av), std::abs(s.kappa - kappa)});
  }
  ConfusionMatrix chance(2);
  chance.counts = {50, 0, 50, 0};
  const auto c = score(chance);
  return {worst <= 1e-12 && c.kappa == 0.0, "1000 random matrices, max deviation " + fmt("%.1e", worst) +
                                                 "; chance-agreement kappa = " + fmt("%g", c.kappa)};
}

// 10. PCA oracle
Outcome pca_oracle() {
  Rng rng(10);
  double worst_val = 0, worst_vec = 0, worst_orth = 0;
  for (int inst = 0; inst < 500; ++inst) {
    const std::size_t n = 1 + rng.below(8);
    Eigen::MatrixXd b(n, n + 2);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();
    const Eigen::MatrixXd cov = b * b.transpose() / double(n + 2);
    std::vector<double> flat(n * n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) flat[r * n + c] = cov(Eigen::Index(r), Eigen::Index(c));
    std::vector<double> vals, vecs;
    symmetric_eigen(flat, n, n, vals, vecs);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> v(
        vecs.data(), Eigen::Index(n), Eigen::Index(n));
    for (std::size_t j = 0; j < n; ++j) {
      const auto k = Eigen::Index(n - 1 - j);  // oracle is ascending
      worst_val = std::max(worst_val, std::abs(vals[j] - es.eigenvalues()(k)));
      Eigen::VectorXd ref = es.eigenvectors().col(k);
      const Eigen::VectorXd mine = v.col(Eigen::Index(j));
      if (ref.dot(mine) < 0) ref = -ref;
      worst_vec = std::max(worst_vec, (ref - mine).cwiseAbs().maxCoeff());
    }
    worst_orth = std::max(worst_orth, (Eigen::MatrixXd(v.transpose() * v) - Eigen::MatrixXd::Identity(Eigen::Index(n), Eigen::Index(n)))
                                          .cwiseAbs()
                                          .maxCoeff());
  }
  return {worst_val <= 1e-8 && worst_vec <= 1e-8 && worst_orth <= 1e-8,
          "500 covariances up to 8x8: eigenvalue err " + fmt("%.1e", worst_val) + ", eigenvector err " +
              fmt("%.1e", worst_vec) + ", orthonormality err " + fmt("%.1e", worst_orth)};
}

// 11. Determinism
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const auto root = fs::temp_directory_path() / "ssmae_acceptance_determinism";
  fs::remove_all(root);
  auto run = [&](const std::string& name) {
    RunConfig c;
    c.seed = 11;
    c.scene.height = 24;
    c.scene.width = 24;
    c.scene.classes = 4;
    c.scene.hsi_bands = 16;
    c.pca_components = 6;
    c.token_dim = 16;
    c.heads = 4;
    c.pretrain_samples = 256;
    c.batch_size = 16;
    c.pretrain_steps = 20;
    c.train_steps = 20;
    c.train_per_class = 5;
    c.out_dir = (root / name).string();
    write_pretrain(c);
    write_train(c, (root / name / "pretrain.mst").string());
    write_eval(c, root / name / "model.mst");
  };
  run("a");
  run("b");
  std::string differ;
  std::size_t compared = 0;
  for (const char* f : {"pretrain.mst", "pretrain_loss.csv", "model.mst", "train_loss.csv", "predictions.mst",
                        "report.txt", "confusion.csv"}) {
    const auto x = slurp(root / "a" / f), y = slurp(root / "b" / f);
    if (x.empty() || x != y) differ += std::string(" ") + f;
    ++compared;
  }
  fs::remove_all(root);
  return {differ.empty(), std::to_string(compared) + " artifacts compared byte-for-byte" +
                              (differ.empty() ? ", all identical" : ", differing:" + differ)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"masking exactness", masking_exactness},
      {"attention normalization", attention_normalization},
      {"loss composition", loss_composition},
      {"pretraining convergence", pretraining_convergence},
      {"overfit check", overfit},
      {"desk-scale classification", desk_classification},
      {"few-shot direction", few_shot},
      {"metrics oracle", metrics_oracle},
      {"PCA oracle", pca_oracle},
      {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
