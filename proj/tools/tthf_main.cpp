// Command line front end: train, eval, score, synth, prompts export, plot.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "tthf/dataset.hpp"
#include "tthf/evaluation.hpp"
#include "tthf/model.hpp"
#include "tthf/prompt_bank.hpp"
#include "tthf/scoring.hpp"
#include "tthf/train.hpp"

namespace fs = std::filesystem;

namespace {

fs::path default_out_dir() {
  if (const char* home = std::getenv("TTHF_HOME")) return fs::path(home);
  return fs::path("tthf_out");
}

struct TrainCli {
  std::string profile = "paper";
  std::string config_path;
  std::string dataset;
  std::string out;
  std::uint64_t seed = 0;
  int epochs = -1;
  int batch_size = -1;
  double learning_rate = 0;
  double weight_decay = -1;
  std::string backbone;
  int embed_dim = -1;
  std::string train_text_encoder, share_ca_heads, cosine_in_loss, use_anom_normals, disable_thfm;
};

bool parse_bool(const std::string& s, const char* flag) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw tthf::UsageError(std::string(flag) + " expects true|false");
}

tthf::train::TrainConfig resolve_train_config(const CLI::App* cmd, const TrainCli& cli) {
  tthf::train::TrainConfig config = tthf::train::profile_config(cli.profile);
  if (cmd->count("--config")) {
    config = tthf::train::load_train_config(cli.config_path, config);
  }
  if (cmd->count("--dataset")) config.dataset_root = cli.dataset;
  if (cmd->count("--seed")) config.seed = cli.seed;
  if (cmd->count("--epochs")) config.epochs = cli.epochs;
  if (cmd->count("--batch-size")) config.batch_size = cli.batch_size;
  if (cmd->count("--lr")) config.learning_rate = cli.learning_rate;
  if (cmd->count("--weight-decay")) config.weight_decay = cli.weight_decay;
  if (cmd->count("--backbone")) config.backbone = tthf::enc::backbone_from_string(cli.backbone);
  if (cmd->count("--embed-dim")) config.embed_dim = cli.embed_dim;
  if (cmd->count("--train-text-encoder")) {
    config.train_text_encoder = parse_bool(cli.train_text_encoder, "--train-text-encoder");
  }
  if (cmd->count("--share-ca-heads")) {
    config.share_ca_heads = parse_bool(cli.share_ca_heads, "--share-ca-heads");
  }
  if (cmd->count("--cosine-in-loss")) {
    config.cosine_in_loss = parse_bool(cli.cosine_in_loss, "--cosine-in-loss");
  }
  if (cmd->count("--use-anomalous-normal-clips")) {
    config.use_normal_clips_from_anomalous_videos =
        parse_bool(cli.use_anom_normals, "--use-anomalous-normal-clips");
  }
  if (cmd->count("--disable-thfm")) {
    config.disable_thfm = parse_bool(cli.disable_thfm, "--disable-thfm");
  }
  config.validate();
  return config;
}

void add_train_overrides(CLI::App* cmd, TrainCli& cli) {
  cmd->add_option("--profile", cli.profile, "Config profile: toy|paper")->capture_default_str();
  cmd->add_option("--config", cli.config_path, "JSON config file; flags override its keys");
  cmd->add_option("--dataset", cli.dataset, "Dataset root directory");
  cmd->add_option("--seed", cli.seed, "RNG seed");
  cmd->add_option("--epochs", cli.epochs, "Training epochs");
  cmd->add_option("--batch-size", cli.batch_size, "Batch size");
  cmd->add_option("--lr", cli.learning_rate, "Learning rate");
  cmd->add_option("--weight-decay", cli.weight_decay, "Weight decay");
  cmd->add_option("--backbone", cli.backbone, "pretrained-clip|toy-conv");
  cmd->add_option("--embed-dim", cli.embed_dim, "Embedding dimension C");
  cmd->add_option("--train-text-encoder", cli.train_text_encoder, "true|false");
  cmd->add_option("--share-ca-heads", cli.share_ca_heads, "true|false");
  cmd->add_option("--cosine-in-loss", cli.cosine_in_loss, "true|false");
  cmd->add_option("--use-anomalous-normal-clips", cli.use_anom_normals,
                  "Train on out-of-interval clips of anomalous videos (true|false)");
  cmd->add_option("--disable-thfm", cli.disable_thfm,
                  "Zero the temporal high-frequency branch (true|false)");
}

int run(int argc, char** argv) {
  CLI::App app{"Text-driven traffic anomaly detection over two-frame video clips"};
  app.require_subcommand(1);

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "Train a detector");
  TrainCli train_cli;
  std::string train_out;
  add_train_overrides(train_cmd, train_cli);
  train_cmd->add_option("--out", train_out, "Output directory for checkpoints and metrics");

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  std::string eval_ckpt, eval_dataset, eval_split = "test", eval_out, eval_profile;
  bool per_video_average = false;
  double eval_tau = 0.0;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--dataset", eval_dataset, "Dataset root")->required();
  eval_cmd->add_option("--split", eval_split, "train|test")->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "Output directory for report and plots");
  eval_cmd->add_option("--profile", eval_profile,
                       "Expected config profile; mismatching checkpoints are rejected");
  eval_cmd->add_flag("--per-video-average", per_video_average,
                     "Average per-video AUCs instead of concatenating frames");
  eval_cmd->add_option("--tau", eval_tau, "Override the learned temperature");

  // ---- score ----
  auto* score_cmd = app.add_subcommand("score", "Score a directory of frames");
  std::string score_ckpt, score_frames, score_out, score_attn;
  double score_tau = 0.0;
  score_cmd->add_option("--checkpoint", score_ckpt, "Checkpoint file")->required();
  score_cmd->add_option("--frames", score_frames, "Directory of frame images")->required();
  score_cmd->add_option("--out", score_out, "Output CSV path");
  score_cmd->add_option("--dump-attention", score_attn,
                        "Write per-clip attention weights to this JSON file");
  score_cmd->add_option("--tau", score_tau, "Override the learned temperature");

  // ---- synth ----
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string synth_out, synth_split = "train";
  std::uint64_t synth_seed = 7;
  int synth_videos = 20, synth_frames = 16, synth_size = 64;
  synth_cmd->add_option("--out", synth_out, "Dataset root to write")->required();
  synth_cmd->add_option("--seed", synth_seed, "RNG seed")->capture_default_str();
  synth_cmd->add_option("--videos", synth_videos, "Number of videos")->capture_default_str();
  synth_cmd->add_option("--frames", synth_frames, "Frames per video")->capture_default_str();
  synth_cmd->add_option("--size", synth_size, "Source image side in pixels")
      ->capture_default_str();
  synth_cmd->add_option("--split", synth_split, "train|test")->capture_default_str();

  // ---- prompts export ----
  auto* prompts_cmd = app.add_subcommand("prompts", "Prompt bank utilities");
  prompts_cmd->require_subcommand(1);
  auto* prompts_export = prompts_cmd->add_subcommand("export", "Write the prompt bank as JSON");
  std::string prompts_out = "prompts.json";
  prompts_export->add_option("--out", prompts_out, "Output file")->capture_default_str();

  // ---- plot ----
  auto* plot_cmd = app.add_subcommand("plot", "Render score curves (and ROC when possible)");
  std::string plot_scores, plot_out;
  plot_cmd->add_option("--scores", plot_scores, "Directory of score CSV files")->required();
  plot_cmd->add_option("--out", plot_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (train_cmd->parsed()) {
    tthf::train::TrainConfig config = resolve_train_config(train_cmd, train_cli);
    fs::path out = train_out.empty() ? default_out_dir() : fs::path(train_out);
    tthf::train::TrainResult result = tthf::train::fit(config, out);
    std::cout << "final checkpoint: " << result.final_checkpoint.string() << "\n";
    std::cout << "metrics: " << result.metrics_path.string() << "\n";
    if (!result.metrics.empty()) {
      std::cout << "final loss: " << result.metrics.back().total << "\n";
    }
    return 0;
  }

  if (eval_cmd->parsed()) {
    std::optional<tthf::ModelConfig> expected;
    if (!eval_profile.empty()) {
      expected = tthf::train::profile_config(eval_profile).model_config();
    }
    tthf::TthfModel model = tthf::TthfModel::load_checkpoint(eval_ckpt, expected);
    tthf::data::DatasetManifest manifest =
        tthf::data::load_manifest(eval_dataset, tthf::data::split_from_string(eval_split));
    tthf::eval::EvalOptions options;
    options.per_video_average = per_video_average;
    if (eval_cmd->count("--tau")) options.score.tau = eval_tau;

    std::vector<tthf::scoring::ScoreSeries> series;
    std::vector<tthf::eval::ClassKey> keys;
    for (const auto& rec : manifest.records) {
      series.push_back(tthf::scoring::score_video(rec, model, options.score).series);
      keys.push_back({rec.category, rec.ego_involved});
    }
    tthf::eval::EvalReport report = tthf::eval::aggregate(series, keys, options);
    std::cout << tthf::eval::format_report_table(report);
    fs::path out = eval_out.empty() ? default_out_dir() / "eval" : fs::path(eval_out);
    tthf::eval::export_plots(series, report, out);
    std::cout << "report: " << (out / "report.json").string() << "\n";
    return 0;
  }

  if (score_cmd->parsed()) {
    tthf::TthfModel model = tthf::TthfModel::load_checkpoint(score_ckpt);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(score_frames)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    tthf::data::VideoRecord record;
    record.video_id = fs::path(score_frames).filename().string();
    for (const auto& f : files) {
      try {
        record.frames_in_memory.push_back(tthf::load_image(f));
      } catch (const tthf::Error&) {
        std::cerr << "warning: skipping non-image file " << f.string() << "\n";
      }
    }
    if (record.frame_count() < 2) {
      throw tthf::ValidationError("need at least 2 decodable frames in " + score_frames);
    }
    tthf::scoring::ScoreOptions options;
    options.collect_attention = score_cmd->count("--dump-attention") > 0;
    if (score_cmd->count("--tau")) options.tau = score_tau;
    tthf::scoring::VideoScoreResult result = tthf::scoring::score_video(record, model, options);
    fs::path out = score_out.empty() ? fs::path(record.video_id + "_scores.csv")
                                     : fs::path(score_out);
    tthf::scoring::write_score_csv(result.series, out);
    std::cout << "scores: " << out.string() << "\n";
    if (options.collect_attention) {
      tthf::scoring::write_attention_json(result.attention, score_attn);
      std::cout << "attention: " << score_attn << "\n";
    }
    return 0;
  }

  if (synth_cmd->parsed()) {
    tthf::data::DatasetManifest manifest = tthf::data::generate_synthetic_dataset(
        synth_seed, synth_videos, synth_frames, synth_size);
    manifest.split = tthf::data::split_from_string(synth_split);
    tthf::data::write_manifest(manifest, synth_out);
    std::cout << "wrote " << manifest.records.size() << " videos under " << synth_out << "/"
              << synth_split << "\n";
    return 0;
  }

  if (prompts_export->parsed()) {
    tthf::prompts::export_prompts(prompts_out);
    std::cout << "prompts: " << prompts_out << "\n";
    return 0;
  }

  if (plot_cmd->parsed()) {
    std::vector<tthf::scoring::ScoreSeries> series;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(plot_scores)) {
      if (entry.is_regular_file() && entry.path().extension() == ".csv") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) series.push_back(tthf::scoring::read_score_csv(f));
    if (series.empty()) throw tthf::ValidationError("no score CSV files in " + plot_scores);
    std::vector<tthf::eval::ClassKey> keys(series.size());
    fs::path out(plot_out);
    try {
      tthf::eval::EvalReport report = tthf::eval::aggregate(series, keys, {});
      tthf::eval::export_plots(series, report, out);
    } catch (const tthf::NumericError&) {
      // Single-class labels: render the curves, skip ROC and report.
      tthf::eval::export_score_curves(series, out);
      std::cerr << "note: labels contain a single class; wrote curves only\n";
    }
    std::cout << "plots: " << out.string() << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const tthf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 10;
  }
}
