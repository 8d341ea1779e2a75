#include "handvote/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <stdexcept>

#include "handvote/errors.hpp"
#include "handvote/io.hpp"

namespace handvote {

namespace fs = std::filesystem;

namespace {

void check_pairing(std::size_t preds, std::size_t gts) {
  if (preds != gts) {
    throw std::invalid_argument("eval: prediction and ground-truth counts differ");
  }
}

void check_joints(const Pose& a, const Pose& b) {
  if (a.joint_count() != b.joint_count()) {
    throw std::invalid_argument("eval: joint counts differ");
  }
}

}  // namespace

double mean_joint_error(const std::vector<Pose>& preds, const std::vector<Pose>& gts) {
  check_pairing(preds.size(), gts.size());
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t f = 0; f < preds.size(); ++f) {
    check_joints(preds[f], gts[f]);
    for (int j = 0; j < preds[f].joint_count(); ++j) {
      sum += (preds[f].joints[j] - gts[f].joints[j]).norm();
      ++count;
    }
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

std::vector<std::pair<double, double>> success_rate_curve(const std::vector<Pose>& preds,
                                                          const std::vector<Pose>& gts,
                                                          const std::vector<double>& thresholds) {
  check_pairing(preds.size(), gts.size());
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw std::invalid_argument("success_rate_curve: thresholds must be sorted ascending");
  }
  std::vector<double> max_errors;
  max_errors.reserve(preds.size());
  for (std::size_t f = 0; f < preds.size(); ++f) {
    check_joints(preds[f], gts[f]);
    double worst = 0.0;
    for (int j = 0; j < preds[f].joint_count(); ++j) {
      worst = std::max(worst, (preds[f].joints[j] - gts[f].joints[j]).norm());
    }
    max_errors.push_back(worst);
  }
  std::vector<std::pair<double, double>> curve;
  curve.reserve(thresholds.size());
  for (double t : thresholds) {
    std::size_t below = 0;
    for (double e : max_errors) {
      if (e < t) ++below;
    }
    const double fraction =
        max_errors.empty() ? 0.0 : static_cast<double>(below) / static_cast<double>(max_errors.size());
    curve.emplace_back(t, fraction);
  }
  return curve;
}

EvalResult evaluate(const std::vector<PoseEstimate>& preds, const std::vector<Pose>& gts,
                    const std::vector<double>& thresholds) {
  check_pairing(preds.size(), gts.size());
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw std::invalid_argument("evaluate: thresholds must be sorted ascending");
  }
  EvalResult r;
  r.frame_count = static_cast<int>(preds.size());
  const int joints = gts.empty() ? 0 : gts[0].joint_count();
  r.per_joint_error_mm.assign(joints, 0.0);

  std::vector<double> max_errors;  // infinity marks failed frames
  double sum = 0.0;
  std::size_t count = 0;
  int ok_frames = 0;
  for (std::size_t f = 0; f < preds.size(); ++f) {
    check_joints(preds[f].pose, gts[f]);
    if (!preds[f].all_ok()) {
      ++r.failed_frames;
      max_errors.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    ++ok_frames;
    double worst = 0.0;
    for (int j = 0; j < joints; ++j) {
      const double e = (preds[f].pose.joints[j] - gts[f].joints[j]).norm();
      r.per_joint_error_mm[j] += e;
      sum += e;
      ++count;
      worst = std::max(worst, e);
    }
    max_errors.push_back(worst);
  }
  r.mean_error_mm = count > 0 ? sum / static_cast<double>(count) : 0.0;
  for (double& e : r.per_joint_error_mm) {
    e = ok_frames > 0 ? e / static_cast<double>(ok_frames) : 0.0;
  }
  for (double t : thresholds) {
    std::size_t below = 0;
    for (double e : max_errors) {
      if (e < t) ++below;
    }
    const double fraction =
        max_errors.empty() ? 0.0 : static_cast<double>(below) / static_cast<double>(max_errors.size());
    r.success_curve.emplace_back(t, fraction);
  }
  return r;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int mm = 0; mm <= 80; mm += 2) t.push_back(static_cast<double>(mm));
  return t;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

const char* kCurveColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                              "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string render_curve_svg(const std::vector<MethodResult>& results) {
  const int width = 640;
  const int height = 480;
  const double left = 60.0, right = 20.0, top = 20.0, bottom = 50.0;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  double max_threshold = 0.0;
  for (const auto& m : results) {
    for (const auto& pt : m.result.success_curve) {
      max_threshold = std::max(max_threshold, pt.first);
    }
  }
  if (max_threshold <= 0.0) max_threshold = 1.0;

  const auto map_x = [&](double t) { return left + plot_w * t / max_threshold; };
  const auto map_y = [&](double f) { return top + plot_h * (1.0 - f); };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // axes
  svg += "<line x1=\"" + format_double(left) + "\" y1=\"" + format_double(top + plot_h) +
         "\" x2=\"" + format_double(left + plot_w) + "\" y2=\"" + format_double(top + plot_h) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + format_double(left) + "\" y1=\"" + format_double(top) + "\" x2=\"" +
         format_double(left) + "\" y2=\"" + format_double(top + plot_h) +
         "\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + format_double(left + plot_w / 2) + "\" y=\"" +
         format_double(height - 12.0) +
         "\" text-anchor=\"middle\" font-size=\"14\">threshold-mm</text>\n";
  svg += "<text x=\"16\" y=\"" + format_double(top + plot_h / 2) +
         "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 16 " +
         format_double(top + plot_h / 2) + ")\">fraction</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double f = i / 4.0;
    svg += "<text x=\"" + format_double(left - 8.0) + "\" y=\"" + format_double(map_y(f) + 4.0) +
           "\" text-anchor=\"end\" font-size=\"11\">" + format_double(f) + "</text>\n";
    const double t = max_threshold * f;
    svg += "<text x=\"" + format_double(map_x(t)) + "\" y=\"" +
           format_double(top + plot_h + 18.0) + "\" text-anchor=\"middle\" font-size=\"11\">" +
           format_double(t) + "</text>\n";
  }
  for (std::size_t m = 0; m < results.size(); ++m) {
    const char* color = kCurveColors[m % (sizeof(kCurveColors) / sizeof(kCurveColors[0]))];
    if (!results[m].result.success_curve.empty()) {
      std::string points;
      for (const auto& pt : results[m].result.success_curve) {
        points += format_double(map_x(pt.first)) + "," + format_double(map_y(pt.second)) + " ";
      }
      svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" points=\"" + points +
             "\"/>\n";
    }
    const double ly = top + 16.0 + 16.0 * static_cast<double>(m);
    svg += "<line x1=\"" + format_double(left + 10.0) + "\" y1=\"" + format_double(ly - 4.0) +
           "\" x2=\"" + format_double(left + 34.0) + "\" y2=\"" + format_double(ly - 4.0) +
           "\" stroke=\"" + color + "\"/>\n";
    svg += "<text x=\"" + format_double(left + 40.0) + "\" y=\"" + format_double(ly) +
           "\" font-size=\"12\">" + results[m].label + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace

void write_report(const std::vector<MethodResult>& results, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw io_error("cannot create " + out_dir + ": " + ec.message());

  std::string csv = "config,mean_error_mm,frames,failed\n";
  char line[256];
  for (const auto& m : results) {
    std::snprintf(line, sizeof(line), "%s,%.17g,%d,%d\n", m.label.c_str(),
                  m.result.mean_error_mm, m.result.frame_count, m.result.failed_frames);
    csv += line;
  }
  write_text_file((fs::path(out_dir) / "metrics.csv").string(), csv);
  write_text_file((fs::path(out_dir) / "success_curve.svg").string(), render_curve_svg(results));
}

std::vector<MethodResult> sweep(const std::vector<SweepSample>& samples,
                                const AggregatorConfig& base, const SweepGrid& grid,
                                const std::vector<double>& thresholds) {
  if (grid.ks.empty() || grid.sigmas.empty() || grid.weightings.empty()) {
    throw config_error("sweep: grid must have at least one value per axis");
  }
  std::vector<PointMap> pointmaps;
  pointmaps.reserve(samples.size());
  std::vector<Pose> gts;
  gts.reserve(samples.size());
  for (const auto& s : samples) {
    pointmaps.push_back(depth_to_pointmap(s.frame));
    gts.push_back(s.gt);
  }

  std::vector<MethodResult> rows;
  for (int k : grid.ks) {
    for (double sigma : grid.sigmas) {
      for (Weighting weighting : grid.weightings) {
        AggregatorConfig cfg = base;
        cfg.k_candidates = k;
        cfg.sigma = sigma;
        cfg.weighting = weighting;
        validate(cfg);
        std::vector<PoseEstimate> preds;
        preds.reserve(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) {
          preds.push_back(estimate_pose(pointmaps[i], samples[i].targets,
                                        samples[i].frame.intrinsics, cfg));
        }
        MethodResult row;
        row.label = "k=" + std::to_string(k) + " sigma=" + format_double(sigma) + " " +
                    to_string(weighting);
        row.result = evaluate(preds, gts, thresholds);
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

}  // namespace handvote
