#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "test_helpers.hpp"
#include "tthf/evaluation.hpp"
#include "tthf/train.hpp"

using namespace tthf;
using tthf_test::ScratchDir;

namespace {

// Slim-width toy stack at the full 224 input so preprocessing stays valid.
train::TrainConfig tiny_train_config(std::uint64_t seed = 3) {
  train::TrainConfig c;
  c.backbone = enc::BackboneKind::toy_conv;
  c.embed_dim = 16;
  c.batch_size = 16;
  c.learning_rate = 1e-3;
  c.weight_decay = 1e-4;
  c.epochs = 2;
  c.seed = seed;
  c.preprocess = data::synthetic_preprocess();
  enc::BackboneSpec spec;
  spec.kind = enc::BackboneKind::toy_conv;
  spec.input_size = data::kInputSize;
  spec.embed_dim = 16;
  spec.layers = {{16, 16, 0, 6}, {7, 7, 0, 10}, {1, 1, 0, 16}};
  c.custom_backbone = spec;
  return c;
}

data::DatasetManifest tiny_manifest(std::uint64_t seed = 11) {
  return data::generate_synthetic_dataset(seed, 10, 6, 32);
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TTHF_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE_BEGIN("train_cli");

TEST_CASE("Adam drives a quadratic to its minimum") {
  auto p = ad::param(ad::Matrix::Constant(1, 2, 5.0));
  train::Adam adam(0.1, 0.0);
  std::vector<std::pair<std::string, ad::Value>> params = {{"p", p}};
  for (int i = 0; i < 300; ++i) {
    adam.zero_grad(params);
    auto loss = ad::sum(ad::hadamard(p, p));
    ad::backward(loss);
    adam.step(params);
  }
  CHECK(p->val.cwiseAbs().maxCoeff() < 1e-2);
}

TEST_CASE("profiles pin the documented hyperparameters") {
  train::TrainConfig paper = train::profile_config("paper");
  CHECK(paper.batch_size == 128);
  CHECK(paper.learning_rate == doctest::Approx(5e-6));
  CHECK(paper.weight_decay == doctest::Approx(1e-4));
  CHECK(paper.epochs == 10);
  CHECK(paper.backbone == enc::BackboneKind::pretrained_clip);
  CHECK(paper.embed_dim == 1024);

  train::TrainConfig toy = train::profile_config("toy");
  CHECK(toy.backbone == enc::BackboneKind::toy_conv);
  CHECK(toy.batch_size == 32);
  CHECK(toy.learning_rate == doctest::Approx(1e-3));
  CHECK(toy.epochs == 5);

  CHECK_THROWS_AS(train::profile_config("bogus"), UsageError);
}

TEST_CASE("train config JSON round trip and validation") {
  ScratchDir scratch("config");
  train::TrainConfig c = tiny_train_config();
  c.dataset_root = "/tmp/somewhere";
  c.share_ca_heads = true;
  const auto path = scratch.path() / "config.json";
  train::save_train_config(c, path);
  train::TrainConfig back = train::load_train_config(path, train::profile_config("toy"));
  CHECK(back.batch_size == c.batch_size);
  CHECK(back.learning_rate == doctest::Approx(c.learning_rate));
  CHECK(back.dataset_root == c.dataset_root);
  CHECK(back.share_ca_heads == true);
  CHECK(back.backbone == enc::BackboneKind::toy_conv);

  std::ofstream(scratch.path() / "bad.json") << "not json";
  CHECK_THROWS_AS(train::load_train_config(scratch.path() / "bad.json"), UsageError);

  train::TrainConfig invalid = c;
  invalid.batch_size = 0;
  CHECK_THROWS_AS(invalid.validate(), UsageError);
}

TEST_CASE("fit is deterministic and its loss decreases") {
  ScratchDir scratch("fit");
  train::TrainConfig config = tiny_train_config();
  config.epochs = 3;
  data::DatasetManifest manifest = tiny_manifest();

  train::TrainResult a = train::fit(config, manifest, scratch.path() / "run_a");
  train::TrainResult b = train::fit(config, manifest, scratch.path() / "run_b");

  REQUIRE(!a.metrics.empty());
  CHECK(read_file(a.metrics_path) == read_file(b.metrics_path));
  CHECK(read_file(a.final_checkpoint) == read_file(b.final_checkpoint));

  // Mean total of the last epoch sits below the first (pre-update) loss.
  const size_t steps_per_epoch = a.metrics.size() / 3;
  double last_epoch = 0.0;
  for (size_t i = a.metrics.size() - steps_per_epoch; i < a.metrics.size(); ++i) {
    last_epoch += a.metrics[i].total;
  }
  last_epoch /= static_cast<double>(steps_per_epoch);
  CHECK(last_epoch < a.metrics.front().total);

  // Per-epoch checkpoints exist alongside the final one.
  CHECK(std::filesystem::exists(scratch.path() / "run_a" / "checkpoint_epoch_001.ckpt"));
  CHECK(std::filesystem::exists(scratch.path() / "run_a" / "checkpoint_epoch_003.ckpt"));
  CHECK(std::filesystem::exists(a.metrics_path));
}

TEST_CASE("epochs=0 leaves the checkpoint at initialization") {
  ScratchDir scratch("fit0");
  train::TrainConfig config = tiny_train_config();
  config.epochs = 0;
  data::DatasetManifest manifest = tiny_manifest();
  train::TrainResult r = train::fit(config, manifest, scratch.path());
  CHECK(r.metrics.empty());

  TthfModel loaded = TthfModel::load_checkpoint(r.final_checkpoint);
  TthfModel fresh = TthfModel::init(config.model_config());
  auto lp = loaded.parameters();
  auto fp = fresh.parameters();
  REQUIRE(lp.size() == fp.size());
  for (size_t i = 0; i < lp.size(); ++i) {
    CHECK(lp[i].first == fp[i].first);
    CHECK((lp[i].second->val - fp[i].second->val).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("the frozen visual encoder is bit-identical after training") {
  ScratchDir scratch("fit_frozen");
  train::TrainConfig config = tiny_train_config();
  config.epochs = 2;
  data::DatasetManifest manifest = tiny_manifest();
  train::TrainResult r = train::fit(config, manifest, scratch.path());

  TthfModel trained = TthfModel::load_checkpoint(r.final_checkpoint);
  TthfModel fresh = TthfModel::init(config.model_config());
  auto tp = trained.parameters();
  auto fp = fresh.parameters();
  bool some_param_moved = false;
  for (size_t i = 0; i < tp.size(); ++i) {
    const bool is_visual = tp[i].first.rfind("visual", 0) == 0;
    const double delta = (tp[i].second->val - fp[i].second->val).cwiseAbs().maxCoeff();
    if (is_visual) {
      CHECK(delta == 0.0);
    } else if (delta > 0.0) {
      some_param_moved = true;
    }
  }
  CHECK(some_param_moved);
}

TEST_CASE("dropping normal clips of anomalous videos shrinks the epoch") {
  ScratchDir scratch("fit_flag");
  train::TrainConfig config = tiny_train_config();
  config.epochs = 1;
  config.batch_size = 8;
  data::DatasetManifest manifest = tiny_manifest();
  train::TrainResult with_all = train::fit(config, manifest, scratch.path() / "all");
  config.use_normal_clips_from_anomalous_videos = false;
  train::TrainResult dropped = train::fit(config, manifest, scratch.path() / "dropped");
  CHECK(dropped.metrics.size() < with_all.metrics.size());
}

TEST_CASE("checkpoint round trip reproduces scores exactly") {
  ScratchDir scratch("ckpt");
  train::TrainConfig config = tiny_train_config();
  TthfModel model = TthfModel::init(config.model_config());
  const auto path = scratch.path() / "model.ckpt";
  model.save_checkpoint(path);
  TthfModel loaded = TthfModel::load_checkpoint(path);

  data::DatasetManifest manifest = tiny_manifest();
  auto a = scoring::score_video(manifest.records[1], model);
  auto b = scoring::score_video(manifest.records[1], loaded);
  REQUIRE(a.series.scores.size() == b.series.scores.size());
  for (size_t i = 0; i < a.series.scores.size(); ++i) {
    CHECK(std::abs(a.series.scores[i] - b.series.scores[i]) < 1e-6);
  }
}

TEST_CASE("checkpoint loading validates architecture compatibility") {
  ScratchDir scratch("ckpt_mismatch");
  train::TrainConfig config = tiny_train_config();
  TthfModel model = TthfModel::init(config.model_config());
  const auto path = scratch.path() / "model.ckpt";
  model.save_checkpoint(path);

  ModelConfig other = config.model_config();
  other.embed_dim = 24;
  other.custom_backbone->embed_dim = 24;
  other.custom_backbone->layers.back().out_channels = 24;
  CHECK_THROWS_AS(TthfModel::load_checkpoint(path, other), CheckpointError);

  ModelConfig wrong_kind = config.model_config();
  wrong_kind.backbone = enc::BackboneKind::pretrained_clip;
  CHECK_THROWS_AS(TthfModel::load_checkpoint(path, wrong_kind), CheckpointError);

  CHECK_THROWS_AS(TthfModel::load_checkpoint(scratch.path() / "missing.ckpt"), IoError);
}

TEST_CASE("every embedding in a forward pass shares the configured width") {
  train::TrainConfig config = tiny_train_config();
  TthfModel model = TthfModel::init(config.model_config());
  data::DatasetManifest manifest = tiny_manifest();
  const auto& rec = manifest.records[0];
  auto prev = ad::constant(data::preprocess_frame(rec.frame(0), config.preprocess));
  auto cur = ad::constant(data::preprocess_frame(rec.frame(1), config.preprocess));
  auto text_fine = model.encode_fine_prompts();
  auto fwd = model.forward_clip(prev, cur, text_fine);
  const int c = config.embed_dim;
  CHECK(fwd.visual_ctx->val.cols() == c);
  CHECK(fwd.high_freq->val.cols() == c);
  CHECK(fwd.fused->val.cols() == c);
  CHECK(fwd.enhanced->val.cols() == c);
  CHECK(fwd.feature_map->val.cols() == c);
  CHECK(text_fine->val.cols() == c);
  CHECK(model.encode_general_prompts()->val.cols() == c);
}

TEST_CASE("share_ca_heads reuses one projection set for both strategies") {
  train::TrainConfig config = tiny_train_config();
  config.share_ca_heads = true;
  TthfModel model = TthfModel::init(config.model_config());
  CHECK(model.vfs_head().query_proj.get() == model.lfs_head().query_proj.get());
  auto params = model.parameters();
  for (const auto& [name, value] : params) {
    CHECK(name.find("aafm.lfs") == std::string::npos);
  }
}

TEST_CASE("cli: end-to-end synth, train, eval, score, prompts, plot") {
  ScratchDir scratch("cli");
  const std::string root = (scratch.path() / "data").string();
  const std::string run = (scratch.path() / "run").string();

  REQUIRE(run_cli("synth --out " + root + " --seed 5 --videos 6 --frames 6 --size 32 --split train") == 0);
  REQUIRE(run_cli("synth --out " + root + " --seed 6 --videos 4 --frames 6 --size 32 --split test") == 0);
  REQUIRE(run_cli("train --profile toy --dataset " + root + " --epochs 1 --batch-size 16 --out " +
                  run) == 0);
  CHECK(std::filesystem::exists(run + "/checkpoint_final.ckpt"));
  CHECK(std::filesystem::exists(run + "/metrics.csv"));

  REQUIRE(run_cli("eval --checkpoint " + run + "/checkpoint_final.ckpt --dataset " + root +
                  " --split test --out " + run + "/eval") == 0);
  CHECK(std::filesystem::exists(run + "/eval/report.json"));
  CHECK(std::filesystem::exists(run + "/eval/roc.png"));
  eval::EvalReport report = eval::read_report(run + "/eval/report.json");
  CHECK(report.n_frames == 24);

  const std::string frames_dir = root + "/test/synth_000001/frames";
  std::ofstream(frames_dir + "/notes.txt") << "not an image";
  REQUIRE(run_cli("score --checkpoint " + run + "/checkpoint_final.ckpt --frames " + frames_dir +
                  " --out " + run + "/frames.csv --dump-attention " + run + "/attn.json") == 0);
  scoring::ScoreSeries series = scoring::read_score_csv(run + "/frames.csv");
  CHECK(series.scores.size() == 6);  // the text file was skipped
  for (double s : series.scores) {
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
  CHECK(std::filesystem::exists(run + "/attn.json"));

  REQUIRE(run_cli("prompts export --out " + run + "/prompts.json") == 0);
  CHECK(std::filesystem::exists(run + "/prompts.json"));

  // Feed eval's CSVs... score wrote one; plot over a directory of CSVs.
  std::filesystem::create_directories(run + "/curves_in");
  std::filesystem::copy_file(run + "/frames.csv", run + "/curves_in/frames.csv");
  REQUIRE(run_cli("plot --scores " + run + "/curves_in --out " + run + "/curves") == 0);
  CHECK(std::filesystem::exists(run + "/curves/frames_scores.png"));
}

TEST_CASE("cli: determinism of two identical train runs") {
  ScratchDir scratch("cli_det");
  const std::string root = (scratch.path() / "data").string();
  REQUIRE(run_cli("synth --out " + root + " --seed 9 --videos 4 --frames 6 --size 32 --split train") == 0);
  const std::string run_a = (scratch.path() / "a").string();
  const std::string run_b = (scratch.path() / "b").string();
  const std::string common =
      "train --profile toy --dataset " + root + " --epochs 1 --batch-size 8 --seed 77 --out ";
  REQUIRE(run_cli(common + run_a) == 0);
  REQUIRE(run_cli(common + run_b) == 0);
  CHECK(read_file(run_a + "/metrics.csv") == read_file(run_b + "/metrics.csv"));
  CHECK(read_file(run_a + "/checkpoint_final.ckpt") == read_file(run_b + "/checkpoint_final.ckpt"));
}

TEST_CASE("cli: error paths exit with category codes") {
  ScratchDir scratch("cli_err");
  // Missing checkpoint -> io error (3).
  CHECK(run_cli("eval --checkpoint " + (scratch.path() / "nope.ckpt").string() + " --dataset " +
                scratch.path().string() + " --split test") == 3);
  // Bad profile -> usage error (1).
  CHECK(run_cli("train --profile nope --dataset /tmp --out " +
                (scratch.path() / "x").string()) == 1);
  // Synth with too few videos -> usage error (1).
  CHECK(run_cli("synth --out " + (scratch.path() / "d").string() + " --videos 1") == 1);
}

TEST_SUITE_END();
