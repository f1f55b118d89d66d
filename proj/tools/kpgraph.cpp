// kpgraph command-line front end.
#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kpg/kpgraph.hpp"

namespace {

using kpg::Image;

int run_synth(const std::string& out, std::size_t frames, std::size_t seq_len, int size, double density,
              std::uint64_t seed) {
  kpg::SynthOptions opt;
  opt.frames = frames;
  opt.sequence_length = seq_len;
  opt.size = size;
  opt.vessel_density = density;
  opt.seed = seed;
  const auto n = kpg::write_synthetic_dataset(out, opt);
  std::cout << "wrote " << frames << " frames in " << n << " sequence(s) to " << out << '\n';
  return 0;
}

kpg::TrainConfig config_or_default(const std::string& path, bool toy) {
  if (!path.empty()) return kpg::load_config(path);
  return toy ? kpg::TrainConfig::toy() : kpg::TrainConfig{};
}

int run_train(const std::string& data, const std::string& config, const std::string& run_dir, bool toy,
              std::optional<std::uint64_t> seed) {
  auto cfg = config_or_default(config, toy);
  if (seed) cfg.seed = *seed;
  const auto ds = kpg::load_dataset(data, cfg.seed);
  std::cout << "training on " << ds.train_frames().size() << " frames from " << ds.train.size()
            << " sequence(s); run directory " << run_dir << '\n';
  kpg::TrainOptions opt;
  opt.run_dir = run_dir;
  const auto start = std::chrono::steady_clock::now();
  opt.on_step = [&](const kpg::TrainLogRow& r) {
    if (r.step % 50 == 0) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::cout << "step " << r.step << " epoch " << r.epoch << " loss " << std::setprecision(5) << r.loss << " ("
                << std::setprecision(3) << secs << " s)\n";
    }
  };
  const auto result = kpg::train(ds, cfg, opt);
  const auto epochs = kpg::epoch_mean_losses(result.log);
  std::cout << "done: " << result.log.size() << " steps, " << result.skipped << " skipped frame(s), final epoch loss "
            << epochs.back() << "\nmodel: " << (std::filesystem::path(run_dir) / "model.bin").string() << '\n';
  return 0;
}

int run_match(const std::string& model_path, const std::string& img_a, const std::string& img_b,
              const std::string& out, std::size_t max_kp, std::optional<double> threshold) {
  const auto model = kpg::load_model<float>(model_path);
  const Image a = kpg::load_frame(img_a), b = kpg::load_frame(img_b);
  kpg::EvalOptions opt;
  opt.max_keypoints = max_kp;
  const auto pa = kpg::detect_for_model(a, model.patch_side(), opt);
  const auto pb = kpg::detect_for_model(b, model.patch_side(), opt);
  if (pa.empty() || pb.empty()) throw kpg::EstimationError("no key-points detected in one of the images");
  const auto ga = kpg::describe_keypoints(model, a, pa);
  const auto gb = kpg::describe_keypoints(model, b, pb);
  const auto matches = threshold ? kpg::match_nnt(ga, gb, *threshold) : kpg::match_nn(ga, gb);
  kpg::write_matches_csv(out, matches, pa, pb);
  std::cout << pa.size() << " / " << pb.size() << " key-points, " << matches.size() << " matches -> " << out << '\n';
  return 0;
}

int run_eval(const std::string& model_path, const std::string& data, const std::string& report,
             const std::string& suite, std::size_t max_kp, std::uint64_t seed) {
  const auto model = kpg::load_model<float>(model_path);
  const auto ds = kpg::load_dataset(data, seed);
  auto split = ds.validation;
  if (split.empty()) {
    kpg::warn("no validation sequences; evaluating on every sequence");
    split = ds.train;
    split.insert(split.end(), ds.validation.begin(), ds.validation.end());
  }
  kpg::EvalOptions opt;
  opt.max_keypoints = max_kp;
  std::vector<kpg::ReportRow> rows;
  if (suite == "viewpoint") {
    rows = kpg::viewpoint_suite(model, ds, split, opt);
  } else {
    std::vector<Image> frames;
    for (const auto& p : ds.frames_of(split)) frames.push_back(kpg::load_frame(p));
    rows = kpg::individual_suite(model, frames, kpg::AugmentationSet{}, opt);
  }
  kpg::write_report_csv(report, rows);
  for (const auto& r : rows) {
    std::cout << r.transform << ' ' << r.parameter << ": precision "
              << kpg::detail::optional_field(r.summary.precision()) << ", matching score "
              << kpg::detail::optional_field(r.summary.matching_score()) << '\n';
  }
  return 0;
}

int run_mosaic(const std::string& model_path, const std::string& seq_dir, const std::string& out,
               const std::string& homographies, std::size_t max_kp, std::uint64_t seed) {
  const auto model = kpg::load_model<float>(model_path);
  const auto ds = kpg::load_dataset(seq_dir, 0);
  if (ds.sequences.size() != 1) {
    kpg::warn("'" + seq_dir + "' holds " + std::to_string(ds.sequences.size()) + " sequences; using the first");
  }
  std::vector<Image> frames;
  for (const auto& p : ds.sequences.front().frames) frames.push_back(kpg::read_image(p));
  kpg::MosaicOptions opt;
  opt.matching.max_keypoints = max_kp;
  opt.ransac.seed = seed;
  const auto r = kpg::mosaic_frames(model, frames, opt);
  kpg::write_image(out, r.panorama.image);
  if (!homographies.empty()) kpg::write_homographies_csv(homographies, r.links);
  std::cout << frames.size() << " frames -> " << r.panorama.image.width << "x" << r.panorama.image.height
            << " canvas, overlap RMS " << r.panorama.overlap_rms << " -> " << out << '\n';
  const auto& known = ds.sequences.front().links;
  if (known.size() == r.links.size() && !known.empty()) {
    const auto drift = kpg::chain_drift(r.links, known, frames.front().width, frames.front().height);
    std::cout << "drift against the known links: " << drift.back() << " px at the last frame, "
              << *std::max_element(drift.begin(), drift.end()) << " px max\n";
  }
  return 0;
}

std::vector<Image> load_all(const kpg::Dataset& ds, const std::vector<std::size_t>& split) {
  std::vector<Image> frames;
  for (const auto& p : ds.frames_of(split)) frames.push_back(kpg::load_frame(p));
  return frames;
}

int run_ablate(const std::string& axis_name, std::vector<double> values, const std::string& data,
               const std::string& config, const std::string& out, bool toy, std::optional<std::uint64_t> seed) {
  const auto axis = kpg::parse_axis(axis_name);
  if (values.empty()) values = kpg::default_axis_values(axis);
  auto cfg = config_or_default(config, toy);
  if (seed) cfg.seed = *seed;
  const auto ds = kpg::load_dataset(data, cfg.seed);
  if (ds.validation.empty()) throw kpg::ContractError("ablation needs a nonempty validation split");
  kpg::EvalOptions opt;
  opt.max_keypoints = cfg.max_keypoints;
  const auto report = kpg::run_ablation(axis, values, load_all(ds, ds.train), load_all(ds, ds.validation), cfg, opt,
                                        [](const std::string& m) { std::cout << m << '\n'; });
  kpg::write_ablation_csv(out, report);
  std::cout << "report -> " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised key-point matching with graph attention and contrastive training"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string data, config, out, model, run_dir = "run", img_a, img_b, seq, report, suite = "individual",
                                       axis, homographies;
  std::size_t frames = 200, seq_len = 10, max_kp = 512;
  int size = 256;
  double density = kpg::kDefaultVesselDensity;
  bool toy = false;
  std::optional<double> threshold;
  std::vector<double> values;

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--frames", frames, "Total number of frames")->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "Random seed");
  synth->add_option("--size", size, "Frame side in pixels")->check(CLI::Range(64, 8192));
  synth->add_option("--sequence-length", seq_len, "Frames per sequence")->check(CLI::PositiveNumber);
  synth->add_option("--density", density, "Vessel density")->check(CLI::NonNegativeNumber);

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--data", data, "Dataset root")->required()->check(CLI::ExistingDirectory);
  train->add_option("--config", config, "JSON config")->check(CLI::ExistingFile);
  train->add_option("--run-dir", run_dir, "Run directory");
  train->add_flag("--toy", toy, "Desk-scale defaults when no config is given");
  train->add_option("--seed", seed, "Random seed (overrides the config)");

  auto* match = app.add_subcommand("match", "Match two images");
  match->add_option("--model", model, "Checkpoint")->required()->check(CLI::ExistingFile);
  match->add_option("--img-a", img_a, "First image")->required()->check(CLI::ExistingFile);
  match->add_option("--img-b", img_b, "Second image")->required()->check(CLI::ExistingFile);
  match->add_option("--out", out, "Matches CSV")->required();
  match->add_option("--max-keypoints", max_kp, "Key-points per image")->check(CLI::PositiveNumber);
  match->add_option("--threshold", threshold, "NNT distance threshold (NN when omitted)");

  auto* eval = app.add_subcommand("eval", "Evaluate a model");
  eval->add_option("--model", model, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "Dataset root")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--report", report, "Report CSV")->required();
  eval->add_option("--transform-suite", suite, "individual or viewpoint")
      ->check(CLI::IsMember({"individual", "viewpoint"}));
  eval->add_option("--max-keypoints", max_kp, "Key-points per image")->check(CLI::PositiveNumber);
  eval->add_option("--seed", seed, "Split seed");

  auto* mosaic = app.add_subcommand("mosaic", "Stitch a sequence into a panorama");
  mosaic->add_option("--model", model, "Checkpoint")->required()->check(CLI::ExistingFile);
  mosaic->add_option("--seq", seq, "Sequence directory")->required()->check(CLI::ExistingDirectory);
  mosaic->add_option("--out", out, "Panorama image (.png or .pgm)")->required();
  mosaic->add_option("--homographies", homographies, "Also write the estimated links as CSV");
  mosaic->add_option("--max-keypoints", max_kp, "Key-points per image")->check(CLI::PositiveNumber);
  mosaic->add_option("--seed", seed, "RANSAC seed");

  auto* ablate = app.add_subcommand("ablate", "Retrain along one hyper-parameter axis");
  ablate->add_option("--axis", axis, "tau or minibatch")->required()->check(CLI::IsMember({"tau", "minibatch"}));
  ablate->add_option("--values", values, "Axis values (default: the standard grid)");
  ablate->add_option("--data", data, "Dataset root")->required()->check(CLI::ExistingDirectory);
  ablate->add_option("--config", config, "JSON config")->check(CLI::ExistingFile);
  ablate->add_option("--out", out, "Report CSV")->required();
  ablate->add_flag("--toy", toy, "Desk-scale defaults when no config is given");
  ablate->add_option("--seed", seed, "Random seed (overrides the config)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return run_synth(out, frames, seq_len, size, density, seed.value_or(0));
    if (*train) return run_train(data, config, run_dir, toy, seed);
    if (*match) return run_match(model, img_a, img_b, out, max_kp, threshold);
    if (*eval) return run_eval(model, data, report, suite, max_kp, seed.value_or(0));
    if (*mosaic) return run_mosaic(model, seq, out, homographies, max_kp, seed.value_or(0));
    if (*ablate) return run_ablate(axis, values, data, config, out, toy, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
