#include <filesystem>
#include <set>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "ssmae/container.hpp"
#include "ssmae/workflow.hpp"

using namespace ssmae;
namespace fs = std::filesystem;

namespace {

RunConfig tiny(const fs::path& out) {
  RunConfig c;
  c.scene.height = 16;
  c.scene.width = 16;
  c.scene.classes = 3;
  c.scene.hsi_bands = 10;
  c.scene.region_scale = 3;
  c.pca_components = 4;
  c.patch_size = 3;
  c.token_dim = 8;
  c.heads = 2;
  c.blocks = 1;
  c.irb_depth = 1;
  c.pretrain_samples = 64;
  c.batch_size = 8;
  c.pretrain_steps = 3;
  c.train_steps = 3;
  c.train_per_class = 4;
  c.out_dir = out.string();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(Workflow, PatchAssemblyIndependentOfThreads) {
  auto cfg = tiny("unused");
  auto data = prepare_data(cfg);
  auto sites = data.split.all_test();
  auto one = assemble_patches(data, sites, 3, 1);
  auto four = assemble_patches(data, sites, 3, 4);
  ASSERT_EQ(one.size(), four.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i].label, four[i].label);
    EXPECT_TRUE(std::equal(one[i].x2.data().begin(), one[i].x2.data().end(), four[i].x2.data().begin()));
  }
}

TEST(Workflow, PretrainPoolDistinct) {
  auto cfg = tiny("unused");
  auto data = prepare_data(cfg);
  auto pool = pretrain_pool(cfg, data);
  EXPECT_EQ(pool.size(), 64u);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& s : pool) seen.insert({s.row, s.col});
  EXPECT_EQ(seen.size(), 64u);
}

TEST(Workflow, EndToEndArtifacts) {
  TempDir dir("ssmae_workflow_e2e");
  auto cfg = tiny(dir.path);
  write_scene(cfg);
  write_pretrain(cfg);
  write_train(cfg, (dir.path / "pretrain.mst").string());
  auto run = write_eval(cfg, dir.path / "model.mst");
  for (const char* f : {"scene.mst", "split.csv", "pretrain.mst", "pretrain_loss.csv", "model.mst", "train_loss.csv",
                        "report.txt", "confusion.csv", "predictions.mst"}) {
    EXPECT_TRUE(fs::exists(dir.path / f)) << f;
  }
  auto pred = read_tensor(dir.path / "predictions.mst");
  EXPECT_EQ(pred.dtype, DType::u16);
  EXPECT_EQ(pred.shape, (Shape{16, 16}));
  EXPECT_GE(run.scores.oa, 0.0);
  EXPECT_LE(run.scores.oa, 1.0);

  // loss curve: header plus one row per step, total = λ·spatial + spectral
  std::istringstream csv(slurp(dir.path / "pretrain_loss.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "step,spatial,spectral,total");
  int rows = 0;
  while (std::getline(csv, line)) {
    double v[4];
    char comma;
    std::istringstream ls(line);
    ls >> v[0] >> comma >> v[1] >> comma >> v[2] >> comma >> v[3];
    EXPECT_NEAR(v[3], 2.0 * v[1] + v[2], 1e-12);
    ++rows;
  }
  EXPECT_EQ(rows, 3);
}

TEST(Workflow, SceneFilesReproducible) {
  TempDir a("ssmae_workflow_a"), b("ssmae_workflow_b");
  auto ca = tiny(a.path), cb = tiny(b.path);
  ca.seed = cb.seed = 7;
  write_scene(ca);
  write_scene(cb);
  EXPECT_EQ(slurp(a.path / "scene.mst"), slurp(b.path / "scene.mst"));
  EXPECT_EQ(slurp(a.path / "split.csv"), slurp(b.path / "split.csv"));
}

TEST(Workflow, MaskDemo) {
  TempDir dir("ssmae_workflow_demo");
  auto cfg = tiny(dir.path);
  write_mask_demo(cfg);
  auto e = read_tensors(dir.path / "mask_demo.mst");
  EXPECT_EQ(find_entry(e, "T").shape, (Shape{5, 3, 3}));
  EXPECT_EQ(find_entry(e, "T_spa").shape, (Shape{5, 3, 3}));
  EXPECT_EQ(find_entry(e, "spectral_masked").values.size(), 2u);  // round(0.5·4)
}

TEST(Workflow, MissingCheckpoint) {
  TempDir dir("ssmae_workflow_missing");
  auto cfg = tiny(dir.path);
  try {
    write_eval(cfg, dir.path / "model.mst");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::io);
    EXPECT_NE(std::string(e.what()).find("model.mst"), std::string::npos);
  }
}

TEST(Workflow, PretrainCheckpointShapeChecked) {
  TempDir dir("ssmae_workflow_shape");
  auto cfg = tiny(dir.path);
  write_pretrain(cfg);
  cfg.token_dim = 12;
  EXPECT_ERRC(write_train(cfg, (dir.path / "pretrain.mst").string()), Errc::config);
}
