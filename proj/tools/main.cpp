// ssmae command-line driver. Talks to the library only through ssmae.h.
#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ssmae.h"

namespace {

struct Flags {
  std::string config;
  std::optional<std::string> seed, out, steps, ratio_spatial, ratio_spectral;
  std::string from_pretrained;
  std::string checkpoint;
};

int report(ssmae_status s) {
  if (s == SSMAE_OK) return 0;
  std::fprintf(stderr, "ssmae: %s\n", ssmae_last_error());
  return 1;
}

// Config file first, then flag overrides. `steps_key` names the step budget --steps controls.
ssmae_config* build_config(const Flags& f, const char* steps_key, int& rc) {
  ssmae_config* cfg = nullptr;
  rc = report(f.config.empty() ? ssmae_config_new(&cfg) : ssmae_config_load(f.config.c_str(), &cfg));
  if (rc) return nullptr;
  auto put = [&](const char* key, const std::optional<std::string>& v) {
    if (rc == 0 && v) rc = report(ssmae_config_set(cfg, key, v->c_str()));
  };
  put("seed", f.seed);
  put("out_dir", f.out);
  put("ratio_spatial", f.ratio_spatial);
  put("ratio_spectral", f.ratio_spectral);
  if (steps_key) put(steps_key, f.steps);
  if (rc == 0) rc = report(ssmae_config_validate(cfg));
  if (rc) {
    ssmae_config_free(cfg);
    return nullptr;
  }
  return cfg;
}

void print_line(const char* line, void*) { std::printf("%s\n", line); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial-spectral masked autoencoder for multi-source remote sensing classification"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub, bool with_steps) {
    sub->add_option("--config", f.config, "flat JSON config; flags override it")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "master seed");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--ratio-spatial", f.ratio_spatial, "spatial mask ratio");
    sub->add_option("--ratio-spectral", f.ratio_spectral, "spectral mask ratio");
    if (with_steps) sub->add_option("--steps", f.steps, "step budget");
  };

  auto* gen = app.add_subcommand("gen-data", "write the synthetic scene and split manifest");
  common(gen, false);
  auto* pre = app.add_subcommand("pretrain", "self-supervised pretraining; checkpoint + loss curve");
  common(pre, true);
  auto* train = app.add_subcommand("train", "supervised finetuning; checkpoint + loss curve");
  common(train, true);
  train->add_option("--from-pretrained", f.from_pretrained, "pretraining checkpoint for the encoders");
  auto* eval = app.add_subcommand("eval", "scores, confusion matrix and predicted label map");
  common(eval, false);
  eval->add_option("--checkpoint", f.checkpoint, "trained checkpoint (default OUT/model.mst)");
  auto* grad = app.add_subcommand("grad-check", "finite-difference gradient suite");
  grad->add_option("--seed", f.seed, "seed for the random inputs");
  auto* demo = app.add_subcommand("mask-demo", "write one masked patch for plotting");
  common(demo, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  int rc = 0;
  if (grad->parsed()) {
    std::uint64_t seed = 1;
    if (f.seed) {
      try {
        seed = std::stoull(*f.seed);
      } catch (const std::exception&) {
        std::fprintf(stderr, "ssmae: config error: seed: not an unsigned integer\n");
        return 1;
      }
    }
    std::size_t failures = 0;
    if ((rc = report(ssmae_grad_check(seed, print_line, nullptr, &failures)))) return rc;
    std::printf("%zu failing\n", failures);
    return failures == 0 ? 0 : 1;
  }

  const char* steps_key = pre->parsed() ? "pretrain_steps" : train->parsed() ? "train_steps" : nullptr;
  ssmae_config* cfg = build_config(f, steps_key, rc);
  if (!cfg) return rc;

  if (gen->parsed()) {
    rc = report(ssmae_gen_data(cfg));
  } else if (pre->parsed()) {
    rc = report(ssmae_pretrain(cfg));
  } else if (train->parsed()) {
    rc = report(ssmae_train(cfg, f.from_pretrained.empty() ? nullptr : f.from_pretrained.c_str()));
  } else if (eval->parsed()) {
    ssmae_scores s{};
    rc = report(ssmae_eval(cfg, f.checkpoint.empty() ? nullptr : f.checkpoint.c_str(), &s));
    if (rc == 0) std::printf("OA %.4f  AA %.4f  Kappa %.4f\n", s.oa, s.aa, s.kappa);
  } else if (demo->parsed()) {
    rc = report(ssmae_mask_demo(cfg));
  }
  ssmae_config_free(cfg);
  return rc;
}
