#include "handvote/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "handvote/aggregator.hpp"
#include "handvote/codec.hpp"
#include "handvote/config.hpp"
#include "handvote/errors.hpp"
#include "handvote/eval.hpp"
#include "handvote/geometry.hpp"
#include "handvote/io.hpp"
#include "handvote/learner.hpp"
#include "handvote/rng.hpp"
#include "handvote/synth.hpp"

namespace handvote {

namespace fs = std::filesystem;

namespace {

RunConfig config_from_option(const std::string& path) {
  return path.empty() ? default_config() : load_config(path);
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create " + dir + ": " + ec.message());
}

int run_synth(const std::string& config_path, int count, std::uint64_t seed,
              const std::string& out_dir) {
  RunConfig cfg = config_from_option(config_path);
  const HandModel model = model_by_name(cfg.synth.model);
  DatasetParams params;
  params.count = count;
  params.seed = seed;
  params.theta = cfg.codec.theta_mm;
  params.tau = cfg.codec.tau_px;
  params.frame_noise = cfg.synth.noise;
  const std::string manifest = generate_dataset(model, cfg.camera, params, out_dir);
  std::cout << manifest << "\n";
  return 0;
}

int run_encode(const std::string& config_path, const std::vector<std::string>& frames,
               const std::vector<std::string>& poses, const std::string& out_dir) {
  RunConfig cfg = config_from_option(config_path);
  if (frames.size() != poses.size()) {
    throw config_error("encode: --frames and --poses must pair up");
  }
  ensure_dir(out_dir);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const DepthFrame frame = read_depth_pgm(frames[i]);
    const Pose pose = read_pose_json(poses[i]);
    const DenseTargets targets = encode_targets(frame, pose, cfg.codec.theta_mm, cfg.codec.tau_px);
    const std::string out =
        (fs::path(out_dir) / ("targets_" + stem_of(frames[i]) + ".dvt")).string();
    write_targets(out, targets);
    std::cout << out << "\n";
  }
  return 0;
}

int run_decode(const std::string& config_path, const std::string& weighting_override,
               const std::vector<std::string>& frames, const std::vector<std::string>& targets,
               const std::string& out_dir) {
  RunConfig cfg = config_from_option(config_path);
  if (!weighting_override.empty()) {
    cfg.aggregator.weighting = weighting_from_string(weighting_override);
  }
  if (frames.size() != targets.size()) {
    throw config_error("decode: --frames and --targets must pair up");
  }
  ensure_dir(out_dir);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const DepthFrame frame = read_depth_pgm(frames[i]);
    const DenseTargets bundle = read_targets(targets[i]);
    const PointMap pm = depth_to_pointmap(frame);
    const PoseEstimate est = estimate_pose(pm, bundle, frame.intrinsics, cfg.aggregator);
    const std::string out =
        (fs::path(out_dir) / ("pose_" + stem_of(frames[i]) + ".json")).string();
    write_pose_json(out, est.pose, &est.ok);
    std::cout << out << "\n";
  }
  return 0;
}

std::vector<TrainSample> load_train_samples(const DatasetManifest& manifest) {
  std::vector<TrainSample> samples;
  samples.reserve(manifest.samples.size());
  for (const auto& s : manifest.samples) {
    TrainSample sample;
    sample.frame = read_depth_pgm(manifest.resolve(s.frame));
    sample.pose = read_pose_json(manifest.resolve(s.pose));
    samples.push_back(std::move(sample));
  }
  return samples;
}

int run_train(const std::string& config_path, const std::string& data,
              const std::string& out_model, const std::string& log_path) {
  RunConfig cfg = config_from_option(config_path);
  const DatasetManifest manifest = read_manifest(data);
  const std::vector<TrainSample> samples = load_train_samples(manifest);
  const TrainResult result = train(samples, cfg.train);
  save_model(out_model, result.params);
  if (!log_path.empty()) write_training_log(log_path, result.log);
  if (!result.log.empty()) {
    std::printf("final loss %.6g after %d steps\n", result.log.back().loss,
                result.log.back().step);
  }
  return 0;
}

int run_infer(const std::string& config_path, const std::string& model_path,
              const std::vector<std::string>& frames, const std::string& out_dir) {
  RunConfig cfg = config_from_option(config_path);
  const PredictorParams params = load_model(model_path);
  ensure_dir(out_dir);
  for (const std::string& frame_path : frames) {
    const DepthFrame frame = read_depth_pgm(frame_path);
    const DenseOutputs outputs = forward(params, frame);
    const DenseTargets targets =
        outputs_to_targets(outputs, cfg.codec.theta_mm, cfg.codec.tau_px);
    const PointMap pm = depth_to_pointmap(frame);
    const PoseEstimate est = estimate_pose(pm, targets, frame.intrinsics, cfg.aggregator);
    const std::string out =
        (fs::path(out_dir) / ("pose_" + stem_of(frame_path) + ".json")).string();
    write_pose_json(out, est.pose, &est.ok);
    std::cout << out << "\n";
  }
  return 0;
}

int run_eval(const std::string& config_path, const std::vector<std::string>& pred_paths,
             const std::vector<std::string>& gt_paths, const std::string& out_dir) {
  RunConfig cfg = config_from_option(config_path);
  if (pred_paths.size() != gt_paths.size()) {
    throw config_error("eval: --pred and --gt must pair up");
  }
  std::vector<PoseEstimate> preds;
  std::vector<Pose> gts;
  for (std::size_t i = 0; i < pred_paths.size(); ++i) {
    PoseEstimate est;
    est.pose = read_pose_json(pred_paths[i], &est.ok);
    preds.push_back(std::move(est));
    gts.push_back(read_pose_json(gt_paths[i]));
  }
  MethodResult result;
  result.label = "eval";
  result.result = evaluate(preds, gts, cfg.eval.thresholds);
  write_report({result}, out_dir);
  std::printf("mean error %.6g mm over %d frames (%d failed)\n", result.result.mean_error_mm,
              result.result.frame_count, result.result.failed_frames);
  return 0;
}

SweepGrid parse_grid_file(const std::string& path, const AggregatorConfig& base) {
  const nlohmann::json j = [&] {
    try {
      return nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
      throw config_error(path + ": " + e.what());
    }
  }();
  if (!j.is_object()) throw config_error(path + ": expected an object");
  for (const auto& item : j.items()) {
    if (item.key() != "k" && item.key() != "sigma_mm" && item.key() != "weighting") {
      throw config_error(path + ": unknown key '" + item.key() + "'");
    }
  }
  SweepGrid grid;
  if (j.contains("k")) {
    for (const auto& v : j["k"]) grid.ks.push_back(v.get<int>());
  } else {
    grid.ks.push_back(base.k_candidates);
  }
  if (j.contains("sigma_mm")) {
    for (const auto& v : j["sigma_mm"]) grid.sigmas.push_back(v.get<double>());
  } else {
    grid.sigmas.push_back(base.sigma);
  }
  if (j.contains("weighting")) {
    for (const auto& v : j["weighting"]) {
      grid.weightings.push_back(weighting_from_string(v.get<std::string>()));
    }
  } else {
    grid.weightings.push_back(base.weighting);
  }
  return grid;
}

int run_sweep(const std::string& config_path, const std::string& data,
              const std::string& grid_path, const std::string& out_dir) {
  RunConfig cfg = config_from_option(config_path);
  const DatasetManifest manifest = read_manifest(data);
  const SweepGrid grid = grid_path.empty()
                             ? SweepGrid{{cfg.aggregator.k_candidates},
                                         {cfg.aggregator.sigma},
                                         {cfg.aggregator.weighting}}
                             : parse_grid_file(grid_path, cfg.aggregator);

  std::vector<SweepSample> samples;
  samples.reserve(manifest.samples.size());
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    SweepSample s;
    s.frame = read_depth_pgm(manifest.resolve(manifest.samples[i].frame));
    s.gt = read_pose_json(manifest.resolve(manifest.samples[i].pose));
    DenseTargets targets = read_targets(manifest.resolve(manifest.samples[i].targets));
    NoiseConfig nc = cfg.synth.noise;
    nc.seed = mix_seed(cfg.synth.noise.seed, i);
    s.targets = corrupt_targets(targets, nc);
    samples.push_back(std::move(s));
  }
  const std::vector<MethodResult> rows = sweep(samples, cfg.aggregator, grid, cfg.eval.thresholds);
  write_report(rows, out_dir);
  for (const auto& row : rows) {
    std::printf("%s: %.6g mm\n", row.label.c_str(), row.result.mean_error_mm);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// selftest: fast property suite with independent oracles.

bool report(const char* name, bool ok) {
  std::printf("%s - %s\n", ok ? "ok" : "FAIL", name);
  return ok;
}

// Scalar-loop fixed-point iteration, written apart from mean_shift on purpose.
Eigen::Vector3d mean_shift_oracle(const CandidateSet& cs, double sigma, int iters) {
  double wx = 0.0, wy = 0.0, wz = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    wx += cs.weights[i] * cs.points[i].x();
    wy += cs.weights[i] * cs.points[i].y();
    wz += cs.weights[i] * cs.points[i].z();
    wsum += cs.weights[i];
  }
  double px = wx / wsum, py = wy / wsum, pz = wz / wsum;
  for (int n = 0; n < iters; ++n) {
    double nx = 0.0, ny = 0.0, nz = 0.0, denom = 0.0;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const double dx = cs.points[i].x() - px;
      const double dy = cs.points[i].y() - py;
      const double dz = cs.points[i].z() - pz;
      const double k = std::exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * sigma * sigma));
      const double kw = k * cs.weights[i];
      nx += kw * cs.points[i].x();
      ny += kw * cs.points[i].y();
      nz += kw * cs.points[i].z();
      denom += kw;
    }
    const double sx = nx / denom - px, sy = ny / denom - py, sz = nz / denom - pz;
    px += sx;
    py += sy;
    pz += sz;
    if (std::sqrt(sx * sx + sy * sy + sz * sz) < 1e-12) break;
  }
  return {px, py, pz};
}

CandidateSet random_candidates(Rng& rng, int max_k) {
  CandidateSet cs;
  const int k = rng.uniform_int(1, max_k);
  for (int i = 0; i < k; ++i) {
    cs.points.emplace_back(rng.uniform(-50.0, 50.0), rng.uniform(-50.0, 50.0),
                           rng.uniform(400.0, 700.0));
    cs.weights.push_back(rng.uniform(0.05, 1.0));
    cs.source_pixels.push_back(i);
  }
  return cs;
}

bool selftest_geometry() {
  CameraIntrinsics cam{110.0, 115.0, 24.0, 23.0, 48, 48};
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d p(rng.uniform(-200, 200), rng.uniform(-200, 200),
                            rng.uniform(100, 900));
    const Eigen::Vector2d px = project(p, cam);
    const Eigen::Vector3d back = unproject(px.x(), px.y(), p.z(), cam);
    if ((back - p).norm() > 1e-9 * p.norm()) return false;
  }
  return true;
}

bool selftest_fk_lengths() {
  const HandModel model = default_hand16();
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    const PoseAngles angles = sample_pose(model, rng);
    const Pose pose = forward_kinematics(model, angles);
    for (std::size_t b = 1; b < model.bones.size(); ++b) {
      const double rest = model.bones[b].rest_offset.norm();
      const double actual = (pose.joints[b] - pose.joints[model.bones[b].parent]).norm();
      if (std::abs(actual - rest) > 1e-9 * std::max(1.0, rest)) return false;
    }
  }
  return true;
}

bool selftest_roundtrip() {
  const HandModel model = default_hand16();
  CameraIntrinsics cam{110.0, 110.0, 24.0, 24.0, 48, 48};
  const double theta = 80.0, tau = 4.5;
  Rng rng(17);
  for (int i = 0; i < 10; ++i) {
    const PoseAngles angles = sample_pose(model, rng);
    const Pose pose = forward_kinematics(model, angles);
    const DepthFrame frame = render_depth(model, angles, cam);
    const DenseTargets targets = encode_targets(frame, pose, theta, tau);
    const PointMap pm = depth_to_pointmap(frame);
    for (Weighting mode : {Weighting::kWeighted, Weighting::kUnweighted}) {
      AggregatorConfig cfg;
      cfg.theta = theta;
      cfg.tau = tau;
      cfg.weighting = mode;
      const PoseEstimate est = estimate_pose(pm, targets, cam, cfg);
      if (!est.all_ok()) return false;
      for (int j = 0; j < pose.joint_count(); ++j) {
        if ((est.pose.joints[j] - pose.joints[j]).norm() > 0.1) return false;
      }
    }
  }
  return true;
}

bool selftest_mean_shift_oracle() {
  Rng rng(19);
  for (int i = 0; i < 200; ++i) {
    const CandidateSet cs = random_candidates(rng, 10);
    const double sigma = rng.uniform(10.0, 100.0);
    const Eigen::Vector3d ours = mean_shift(cs, sigma, 500, 1e-11);
    const Eigen::Vector3d oracle = mean_shift_oracle(cs, sigma, 10000);
    if ((ours - oracle).norm() > 1e-9) return false;
  }
  return true;
}

bool selftest_sigma_limit() {
  Rng rng(23);
  for (int i = 0; i < 50; ++i) {
    const CandidateSet cs = random_candidates(rng, 10);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    double wsum = 0.0;
    for (std::size_t k = 0; k < cs.size(); ++k) {
      mean += cs.weights[k] * cs.points[k];
      wsum += cs.weights[k];
    }
    mean /= wsum;
    const Eigen::Vector3d limit = mean_shift(cs, 1e6, 100, 1e-9);
    if ((limit - mean).norm() > 1e-6) return false;
  }
  return true;
}

bool selftest_gradient() {
  const HandModel model = mini_hand5();
  CameraIntrinsics cam{28.0, 28.0, 6.0, 6.0, 12, 12};
  Rng rng(29);
  const PoseAngles angles = sample_pose(model, rng);
  const Pose pose = forward_kinematics(model, angles);
  const DepthFrame frame = render_depth(model, angles, cam);
  const DenseTargets targets = encode_targets(frame, pose, 80.0, 2.0);
  const PredictorDesc desc = PredictorDesc::make(12, 12, 5, 2, 2);
  const PredictorParams params = init_params(desc, 31);
  return gradient_check(params, frame, targets, 1e-5, 200, 37) < 1e-4;
}

bool selftest_loss_decomposition() {
  const HandModel model = mini_hand5();
  CameraIntrinsics cam{28.0, 28.0, 6.0, 6.0, 12, 12};
  Rng rng(41);
  const PoseAngles angles = sample_pose(model, rng);
  const Pose pose = forward_kinematics(model, angles);
  const DepthFrame frame = render_depth(model, angles, cam);
  const DenseTargets targets = encode_targets(frame, pose, 80.0, 2.0);

  const PredictorDesc desc2 = PredictorDesc::make(12, 12, 5, 2, 2);
  const PredictorParams params2 = init_params(desc2, 43);
  const LossBreakdown full = loss(forward(params2, frame), targets);
  double sum = 0.0;
  for (const LossTerms& t : full.per_stack) sum += t.total();
  if (std::abs(sum - full.total) > 1e-10 * std::max(1.0, std::abs(full.total))) return false;

  // first-stack slice must equal the single-stack loss exactly
  const PredictorDesc desc1 = PredictorDesc::make(12, 12, 5, 2, 1);
  PredictorParams params1;
  params1.desc = desc1;
  params1.values.assign(params2.values.begin(),
                        params2.values.begin() + static_cast<long>(desc1.param_count));
  const LossBreakdown first = loss(forward(params1, frame), targets);
  return first.total == full.per_stack[0].total();
}

int run_selftest() {
  bool ok = true;
  ok &= report("geometry projection round trip", selftest_geometry());
  ok &= report("forward kinematics preserves bone lengths", selftest_fk_lengths());
  ok &= report("encode/decode round trip <= 0.1 mm", selftest_roundtrip());
  ok &= report("mean shift matches fixed-point oracle", selftest_mean_shift_oracle());
  ok &= report("mean shift sigma->inf equals weighted mean", selftest_sigma_limit());
  ok &= report("backward matches finite differences", selftest_gradient());
  ok &= report("loss decomposition is exact", selftest_loss_decomposition());
  return ok ? 0 : 1;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"dense per-pixel voting pipeline for 3D hand pose from depth"};
  app.require_subcommand(1);

  std::string config_path;
  int count = 16;
  std::uint64_t seed = 1;
  std::string out;
  std::string data;
  std::string model_path;
  std::string grid_path;
  std::string log_path;
  std::string weighting_override;
  std::vector<std::string> frames, poses, targets, preds, gts;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic depth dataset");
  synth->add_option("--count", count, "number of samples")->required();
  synth->add_option("--seed", seed, "dataset seed (default 1)");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--config", config_path, "JSON run configuration");

  CLI::App* encode = app.add_subcommand("encode", "encode poses into dense targets");
  encode->add_option("--frames", frames, "depth PGM files")->required();
  encode->add_option("--poses", poses, "matching pose JSON files")->required();
  encode->add_option("--out", out, "output directory")->required();
  encode->add_option("--config", config_path, "JSON run configuration");

  CLI::App* decode = app.add_subcommand("decode", "aggregate dense targets into poses");
  decode->add_option("--frames", frames, "depth PGM files")->required();
  decode->add_option("--targets", targets, "matching target bundles")->required();
  decode->add_option("--out", out, "output directory")->required();
  decode->add_option("--config", config_path, "JSON run configuration");
  decode->add_option("--weighting", weighting_override,
                     "weighted | unweighted | uniform (overrides the config)");

  CLI::App* train_cmd = app.add_subcommand("train", "train the dense predictor");
  train_cmd->add_option("--data", data, "dataset manifest")->required();
  train_cmd->add_option("--out-model", model_path, "model output path")->required();
  train_cmd->add_option("--log", log_path, "training log CSV path");
  train_cmd->add_option("--config", config_path, "JSON run configuration");

  CLI::App* infer = app.add_subcommand("infer", "run the predictor and decode poses");
  infer->add_option("--model", model_path, "model file")->required();
  infer->add_option("--frames", frames, "depth PGM files")->required();
  infer->add_option("--out", out, "output directory")->required();
  infer->add_option("--config", config_path, "JSON run configuration");

  CLI::App* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
  eval_cmd->add_option("--pred", preds, "predicted pose JSON files")->required();
  eval_cmd->add_option("--gt", gts, "ground-truth pose JSON files")->required();
  eval_cmd->add_option("--out", out, "report directory")->required();
  eval_cmd->add_option("--config", config_path, "JSON run configuration");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "aggregator hyperparameter sweep");
  sweep_cmd->add_option("--data", data, "dataset manifest")->required();
  sweep_cmd->add_option("--grid", grid_path, "grid JSON ({\"k\": [...], ...})");
  sweep_cmd->add_option("--out", out, "report directory")->required();
  sweep_cmd->add_option("--config", config_path, "JSON run configuration");

  CLI::App* selftest = app.add_subcommand("selftest", "run the built-in property suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return run_synth(config_path, count, seed, out);
    if (encode->parsed()) return run_encode(config_path, frames, poses, out);
    if (decode->parsed()) return run_decode(config_path, weighting_override, frames, targets, out);
    if (train_cmd->parsed()) return run_train(config_path, data, model_path, log_path);
    if (infer->parsed()) return run_infer(config_path, model_path, frames, out);
    if (eval_cmd->parsed()) return run_eval(config_path, preds, gts, out);
    if (sweep_cmd->parsed()) return run_sweep(config_path, data, grid_path, out);
    if (selftest->parsed()) return run_selftest();
  } catch (const io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const format_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace handvote
