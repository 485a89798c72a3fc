#include "ssmae.h"

#include <cstdio>
#include <cstring>
#include <exception>
#include <filesystem>
#include <new>
#include <string>

#include "ssmae/config.hpp"
#include "ssmae/error.hpp"
#include "ssmae/grad_check.hpp"
#include "ssmae/workflow.hpp"

struct ssmae_config {
  ssmae::RunConfig cfg;
};

namespace {

thread_local std::string last_error;

ssmae_status fail_with(ssmae_status s, const std::string& msg) {
  last_error = msg;
  return s;
}

// Runs `f`, turning exceptions into status codes.
template <class F>
ssmae_status guarded(F&& f) noexcept {
  try {
    f();
    last_error.clear();
    return SSMAE_OK;
  } catch (const ssmae::Error& e) {
    return fail_with(static_cast<ssmae_status>(e.code()), std::string(ssmae::errc_name(e.code())) + ": " + e.what());
  } catch (const std::bad_alloc&) {
    return fail_with(SSMAE_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail_with(SSMAE_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail_with(SSMAE_ERR_INTERNAL, "unknown exception");
  }
}

bool null_arg(const void* p, const char* name, ssmae_status& s) {
  if (p) return false;
  s = fail_with(SSMAE_ERR_CONTRACT, std::string("contract error: ") + name + " is null");
  return true;
}

}  // namespace

extern "C" {

const char* ssmae_version(void) { return "0.1.0"; }

const char* ssmae_last_error(void) { return last_error.c_str(); }

const char* ssmae_status_name(ssmae_status status) {
  if (status == SSMAE_OK) return "ok";
  if (status >= SSMAE_ERR_DIMENSION && status <= SSMAE_ERR_CONFIG) {
    return ssmae::errc_name(static_cast<ssmae::Errc>(status));
  }
  return "internal error";
}

ssmae_status ssmae_config_new(ssmae_config** out) {
  ssmae_status s;
  if (null_arg(out, "out", s)) return s;
  return guarded([&] { *out = new ssmae_config{}; });
}

ssmae_status ssmae_config_load(const char* path, ssmae_config** out) {
  ssmae_status s;
  if (null_arg(path, "path", s) || null_arg(out, "out", s)) return s;
  return guarded([&] { *out = new ssmae_config{ssmae::RunConfig::from_file(path)}; });
}

ssmae_status ssmae_config_set(ssmae_config* cfg, const char* key, const char* value) {
  ssmae_status s;
  if (null_arg(cfg, "cfg", s) || null_arg(key, "key", s) || null_arg(value, "value", s)) return s;
  return guarded([&] { cfg->cfg.set(key, value); });
}

ssmae_status ssmae_config_validate(const ssmae_config* cfg) {
  ssmae_status s;
  if (null_arg(cfg, "cfg", s)) return s;
  return guarded([&] { cfg->cfg.validate(); });
}

ssmae_status ssmae_config_to_json(const ssmae_config* cfg, char* buf, size_t cap, size_t* needed) {
  ssmae_status s;
  if (null_arg(cfg, "cfg", s)) return s;
  return guarded([&] {
    const auto text = cfg->cfg.to_json();
    if (needed) *needed = text.size() + 1;
    if (buf && cap > 0) {
      const auto n = std::min(cap - 1, text.size());
      std::memcpy(buf, text.data(), n);
      buf[n] = '\0';
    }
  });
}

void ssmae_config_free(ssmae_config* cfg) { delete cfg; }

ssmae_status ssmae_gen_data(const ssmae_config* cfg) {
  ssmae_status s;
  if (null_arg(cfg, "cfg", s)) return s;
  return guarded([&] { ssmae::write_scene(cfg->cfg); });
}

ssmae_status ssmae_pretrain(const ssmae_config* cfg) {
  ssmae_status s;
  if (null_arg(cfg, "cfg", s)) return s;
  return guarded([&] { ssmae::write_pretrain(cfg->cfg); });
}

ssmae_status ssmae_train(const ssmae_config* cfg, const char* from_pretrained) {
  ssmae_status s;
  if (null_arg(cfg, "cfg", s)) return s;
  return guarded([&] { ssmae::write_train(cfg->cfg, from_pretrained ? from_pretrained : ""); });
}

ssmae_status ssmae_eval(const ssmae_config* cfg, const char* checkpoint, ssmae_scores* scores) {
  ssmae_status s;
  if (null_arg(cfg, "cfg", s)) return s;
  return guarded([&] {
    const auto path = checkpoint ? std::filesystem::path(checkpoint) : std::filesystem::path(cfg->cfg.out_dir) / "model.mst";
    const auto run = ssmae::write_eval(cfg->cfg, path);
    if (scores) *scores = {run.scores.oa, run.scores.aa, run.scores.kappa};
  });
}

ssmae_status ssmae_mask_demo(const ssmae_config* cfg) {
  ssmae_status s;
  if (null_arg(cfg, "cfg", s)) return s;
  return guarded([&] { ssmae::write_mask_demo(cfg->cfg); });
}

ssmae_status ssmae_grad_check(uint64_t seed, ssmae_line_fn on_line, void* user, size_t* failures) {
  return guarded([&] {
    std::size_t bad = 0;
    for (const auto& c : ssmae::run_grad_suite(seed)) {
      if (!c.passed()) ++bad;
      if (on_line) {
        char line[256];
        std::snprintf(line, sizeof line, "%-4s %-40s err %.3e  tol %.0e  (%zu coords)", c.passed() ? "ok" : "FAIL",
                      c.name.c_str(), c.error, c.tolerance, c.coordinates);
        on_line(line, user);
      }
    }
    if (failures) *failures = bad;
  });
}

}  // extern "C"
