// Acceptance runner: evaluates criteria 1-10 and prints one PASS/FAIL line each.
// Exit code 0 when every selected criterion passes, 4 otherwise. With
// --report-only the exit code only reflects whether the runner completed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "edgefield/app/commands.hpp"
#include "edgefield/boundary.hpp"
#include "edgefield/field.hpp"
#include "edgefield/metrics.hpp"
#include "edgefield/nerfnet.hpp"
#include "edgefield/parallel.hpp"
#include "edgefield/splat.hpp"
#include "joint_fixture.hpp"
#include "oracles.hpp"
#include "splat_oracle.hpp"

namespace fs = std::filesystem;
using namespace edgefield;
using namespace edgefield::app;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error("cannot read " + p.string());
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runtime bounds for criteria with a single-core and a multicore budget.
double runtime_budget(double single_core, double multicore) {
  return thread_count() > 1 ? multicore : single_core;
}

struct Runner {
  fs::path output;
  unsigned threads = 0;
  std::ostringstream sink;  // command logs are kept out of the report

  RunConfig base(const std::string& name, unsigned run_threads) const {
    RunConfig cfg;
    cfg.preset = "two-spheres";
    cfg.seed = 7;
    cfg.refine.seed = 7;
    cfg.noise = {2.0, 0.2};
    cfg.refine.iterations = 500;
    cfg.threads = run_threads;
    cfg.output = output / name;
    return cfg;
  }
};

// ---------------------------------------------------------------------------

Outcome c1_rbf(Runner&) {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> count(1, 40);
  const RbfConfig cfg;  // k = 8, width 0.3
  double worst_sum = 0.0, worst_interp = 0.0;
  for (int q = 0; q < 1000; ++q) {
    const int n = count(rng);
    std::vector<Vec3> pts(static_cast<std::size_t>(n));
    for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
    Eigen::MatrixXd feats(3, n);
    for (Eigen::Index i = 0; i < feats.size(); ++i) feats.data()[i] = u(rng);
    const Vec3 query = 0.5 * Vec3(u(rng), u(rng), u(rng));

    const RbfStencil s = rbf_stencil(query, pts, cfg);
    double sum = 0.0;
    for (double w : s.weights) sum += w;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));

    // Scalar loop: brute-force k nearest (index tiebreak), Gaussian kernel.
    std::vector<std::pair<double, int>> by_distance;
    for (int i = 0; i < n; ++i) by_distance.push_back({(pts[static_cast<std::size_t>(i)] - query).squaredNorm(), i});
    std::sort(by_distance.begin(), by_distance.end());
    const int k = std::min(cfg.k_neighbors, n);
    double num[3] = {0, 0, 0}, den = 0.0;
    for (int j = 0; j < k; ++j) {
      const double w = std::exp(-by_distance[static_cast<std::size_t>(j)].first /
                                (2.0 * cfg.kernel_width * cfg.kernel_width));
      den += w;
      for (int r = 0; r < 3; ++r) num[r] += w * feats(r, by_distance[static_cast<std::size_t>(j)].second);
    }
    const Eigen::VectorXd got = rbf_interpolate(query, pts, feats, cfg);
    for (int r = 0; r < 3; ++r) {
      const double expect = den > 0.0 ? num[r] / den : 0.0;
      if (den > 0.0) worst_interp = std::max(worst_interp, std::abs(got(r) - expect));
    }
  }
  return {worst_sum <= 1e-9 && worst_interp <= 1e-10,
          "max |sum w - 1| = " + fmt(worst_sum) + ", max interpolation error = " + fmt(worst_interp)};
}

Outcome c2_volume_rendering(Runner&) {
  double worst8 = 0.0, worst128 = 0.0, worst_color = 0.0;
  const Vec3 color(0.3, 0.6, 0.9);
  for (double sigma : {0.1, 1.0, 10.0}) {
    for (int k : {8, 128}) {
      const std::vector<double> sig(static_cast<std::size_t>(k), sigma);
      const std::vector<Vec3> col(static_cast<std::size_t>(k), color);
      const auto seg = window_segments(k, 1.0);
      const RayComposite c = composite_ray(sig, col, seg);
      const double err = std::abs(c.alpha - (1.0 - std::exp(-sigma)));
      (k == 8 ? worst8 : worst128) = std::max(k == 8 ? worst8 : worst128, err);
      worst_color = std::max(worst_color, (c.color - c.alpha * color).cwiseAbs().maxCoeff());
    }
  }
  return {worst8 <= 1e-2 && worst128 <= 1e-4 && worst_color <= 1e-12,
          "K=8 alpha error " + fmt(worst8) + ", K=128 alpha error " + fmt(worst128) + ", color error " +
              fmt(worst_color)};
}

Outcome c3_gradients(Runner&) {
  const auto r = joint_fixture::run();
  bool ok = r.groups.size() == 7;
  std::string detail;
  for (const auto& g : r.groups) {
    ok = ok && g.parameters > 0 && g.max_relative_error < 1e-3;
    detail += (detail.empty() ? "" : ", ") + g.group + " " + fmt(g.max_relative_error, 2);
  }
  return {ok, "max relative error: " + detail};
}

Outcome c4_compositing(Runner&) {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> size(1, 8), px(56, 72);
  const Camera cam = splat_oracle::axis_camera();
  double worst = 0.0, worst_sum = 0.0;
  bool monotone = true;
  int stacks = 0, deepest = 0;
  while (stacks < 1000) {
    const auto gs = splat_oracle::random_cluster(rng, size(rng), 0.05);
    const SplatFrame f = render(gs, cam);
    for (int k = 0; k < 10; ++k, ++stacks) {
      const int x = px(rng), y = px(rng);
      const auto o = splat_oracle::pixel_oracle(gs, cam, x, y);
      worst = std::max({worst, std::abs(f.color.at(x, y, 0) - o.r), std::abs(f.color.at(x, y, 1) - o.g),
                        std::abs(f.color.at(x, y, 2) - o.b), std::abs(f.mask.at(x, y) - o.mask),
                        std::abs(f.alpha.at(x, y) - o.alpha)});
      double sum = 0.0, t = 1.0;
      const auto entries = f.contributors(x, y);
      deepest = std::max(deepest, static_cast<int>(entries.size()));
      for (const auto& e : entries) {
        const double next = t * (1.0 - e.local_alpha);
        monotone = monotone && next <= t;
        t = next;
        sum += e.weight;
      }
      worst_sum = std::max(worst_sum, sum);
    }
  }
  return {worst <= 1e-12 && worst_sum <= 1.0 + 1e-12 && monotone,
          std::to_string(stacks) + " stacks (up to " + std::to_string(deepest) + " deep), max error " + fmt(worst) +
              ", max weight sum " + fmt(worst_sum, 17) + (monotone ? "" : ", transmittance increased")};
}

// Pixels with a 4-neighbour of the other value, on either side of the edge.
std::vector<Vec2> edge_pixels(const Mask& m) {
  std::vector<Vec2> out;
  for (int v = 0; v < m.height; ++v)
    for (int u = 0; u < m.width; ++u) {
      const auto self = m.at(u, v);
      if ((u > 0 && m.at(u - 1, v) != self) || (u + 1 < m.width && m.at(u + 1, v) != self) ||
          (v > 0 && m.at(u, v - 1) != self) || (v + 1 < m.height && m.at(u, v + 1) != self))
        out.emplace_back(u, v);
    }
  return out;
}

Outcome c5_boundary_soundness(Runner& run) {
  const auto scene = generate_scene(preset("two-spheres", 7));
  const auto masks = scene.target_masks();
  const RefineConfig defaults;
  const auto table = mask_signals(scene.gaussians, scene.cameras, masks, defaults.signals);
  const auto bset = select_boundary(table, defaults.tau, defaults.raw_threshold);

  std::vector<std::vector<Vec2>> edges;
  for (const auto& m : masks) edges.push_back(edge_pixels(m));
  // Nearest edge distance over all views in which the centre projects onto the image.
  std::vector<double> nearest(scene.gaussians.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < scene.gaussians.size(); ++i)
    for (std::size_t v = 0; v < scene.cameras.size(); ++v) {
      const Camera& cam = scene.cameras[v];
      const auto pr = project(scene.gaussians[i], cam);
      if (!pr || pr->mean.x() < 0 || pr->mean.y() < 0 || pr->mean.x() > cam.width - 1 ||
          pr->mean.y() > cam.height - 1)
        continue;
      for (const Vec2& e : edges[v]) nearest[i] = std::min(nearest[i], (e - pr->mean).norm());
    }
  int far_flagged = 0, interior_flagged = 0, interior = 0;
  for (double d : nearest) interior += d >= 5.0;
  for (int i : bset.indices) {
    far_flagged += nearest[static_cast<std::size_t>(i)] > 3.0;
    interior_flagged += nearest[static_cast<std::size_t>(i)] >= 5.0;
  }
  std::ofstream report(run.output / "c5_flagged.csv");
  report << "gaussian,object,nearest_edge_px\r\n";
  for (int i : bset.indices)
    report << i << ',' << scene.gaussians[static_cast<std::size_t>(i)].object_id << ','
           << format_double(nearest[static_cast<std::size_t>(i)]) << "\r\n";
  return {far_flagged == 0 && interior_flagged == 0,
          std::to_string(bset.size()) + " flagged; " + std::to_string(far_flagged) + " farther than 3 px from every edge; " +
              std::to_string(interior_flagged) + " of " + std::to_string(interior) + " interior Gaussians flagged"};
}

const std::vector<std::string> kRefineFiles{"loss.csv", "metrics.csv"};

Outcome c6_refinement(Runner& run) {
  set_thread_count(run.threads);
  const auto t0 = std::chrono::steady_clock::now();
  const RefineSummary a = cmd_refine(run.base("c6_run1", run.threads), run.sink);
  const double elapsed = seconds_since(t0);
  const RefineSummary b = cmd_refine(run.base("c6_run2", run.threads), run.sink);
  bool identical = true;
  for (const auto& f : kRefineFiles)
    identical = identical && slurp(run.output / "c6_run1" / f) == slurp(run.output / "c6_run2" / f);
  const double gain = 100.0 * (a.after.b_miou - a.before.b_miou);
  const double miou_drop = 100.0 * (a.before.miou - a.after.miou);
  const double budget = runtime_budget(300.0, 120.0);
  const bool ok = gain >= 3.0 && miou_drop <= 0.5 && identical && b.after.b_miou == a.after.b_miou && elapsed < budget;
  return {ok, "B-mIoU " + fmt(100 * a.before.b_miou, 5) + " -> " + fmt(100 * a.after.b_miou, 5) + " (+" + fmt(gain, 3) +
                  " pts), mIoU " + fmt(100 * a.before.miou, 5) + " -> " + fmt(100 * a.after.miou, 5) +
                  (identical ? ", reruns identical" : ", reruns differ") + ", " + fmt(elapsed, 3) + " s (budget " +
                  fmt(budget, 3) + " s)"};
}

std::map<std::string, double> ablation_b_miou(const CsvTable& t) {
  std::map<std::string, double> out;
  for (const auto& row : t.rows()) out[row[0]] = 100.0 * std::stod(row[3]);
  return out;
}

RunConfig ablation_config(const Runner& run, const std::string& name, unsigned threads) {
  RunConfig cfg = run.base(name, threads);
  cfg.variants = {"full", "no_align_smth", "threshold_only"};
  return cfg;
}

Outcome c7_ablation(Runner& run) {
  set_thread_count(run.threads);
  const auto t0 = std::chrono::steady_clock::now();
  const auto b = ablation_b_miou(cmd_ablate(ablation_config(run, "c7_run1", run.threads), run.sink));
  const double elapsed = seconds_since(t0);
  const double full = b.at("full"), no_as = b.at("no_align_smth"), thr = b.at("threshold_only");
  const bool ok = full >= no_as && no_as >= thr && full - thr >= 0.5 && elapsed < 900.0;
  return {ok, "B-mIoU full " + fmt(full, 5) + ", -align -smth " + fmt(no_as, 5) + ", threshold only " + fmt(thr, 5) +
                  " (separation " + fmt(full - thr, 3) + " pts), " + fmt(elapsed, 3) + " s"};
}

// The synthetic suite: every shipped preset, seed 7, default noise.
RunConfig sweep_config(const Runner& run, const std::string& name, const std::string& preset_name, unsigned threads) {
  RunConfig cfg = run.base(name + "/" + preset_name, threads);
  cfg.preset = preset_name;
  return cfg;
}

Outcome c8_tau_sweep(Runner& run) {
  set_thread_count(run.threads);
  const auto t0 = std::chrono::steady_clock::now();
  std::map<double, std::pair<double, double>> mean;  // tau -> (mIoU, B-mIoU) averaged over presets
  const auto presets = preset_names();
  std::string per_preset;
  for (const auto& p : presets) {
    const CsvTable t = cmd_sweep_tau(sweep_config(run, "c8_run1", p, run.threads), run.sink);
    std::string best;
    double best_b = -1.0;
    for (const auto& row : t.rows()) {
      const double tau = std::stod(row[0]);
      mean[tau].first += 100.0 * std::stod(row[2]) / presets.size();
      mean[tau].second += 100.0 * std::stod(row[4]) / presets.size();
      if (std::stod(row[4]) > best_b) best_b = std::stod(row[4]), best = row[0];
    }
    per_preset += "; " + p + " B-mIoU peak at tau " + best;
  }
  const double elapsed = seconds_since(t0);
  const auto at = mean.at(0.6);
  bool ok = elapsed < 1200.0;
  std::string table;
  for (const auto& [tau, m] : mean) {
    ok = ok && at.first >= m.first && at.second >= m.second;
    table += (table.empty() ? "" : ", ") + ("tau " + fmt(tau) + ": " + fmt(m.first, 4) + "/" + fmt(m.second, 4));
  }
  return {ok, "suite mean mIoU/B-mIoU " + table + per_preset + ", " + fmt(elapsed, 4) + " s"};
}

bool same_files(const fs::path& a, const fs::path& b, const std::vector<std::string>& files, std::string& diff) {
  bool ok = true;
  for (const auto& f : files)
    if (slurp(a / f) != slurp(b / f)) {
      ok = false;
      diff += " " + (a / f).lexically_relative(a.parent_path()).string();
    }
  return ok;
}

Outcome c10_determinism(Runner& run) {
  std::string diff;
  bool ok = true;
  // Second same-seed run at the default thread count, then a run with 8 workers.
  for (const unsigned threads : {run.threads, 8u}) {
    set_thread_count(threads);
    const std::string tag = threads == 8 ? "t8" : "run2";
    if (threads == 8) cmd_refine(run.base("c6_" + tag, threads), run.sink);  // c6_run2 exists already
    ok = same_files(run.output / "c6_run1", run.output / ("c6_" + tag), kRefineFiles, diff) && ok;
    cmd_ablate(ablation_config(run, "c7_" + tag, threads), run.sink);
    ok = same_files(run.output / "c7_run1", run.output / ("c7_" + tag), {"ablation.csv"}, diff) && ok;
    for (const auto& p : preset_names()) {
      cmd_sweep_tau(sweep_config(run, "c8_" + tag, p, threads), run.sink);
      ok = same_files(run.output / "c8_run1" / p, run.output / ("c8_" + tag) / p, {"sweep_tau.csv"}, diff) && ok;
    }
  }
  set_thread_count(run.threads);
  return {ok, ok ? "criteria 6-8 CSVs bit-identical across reruns and --threads 1 vs 8" : "differing:" + diff};
}

Outcome c9_metrics(Runner&) {
  std::mt19937_64 rng(909);
  int mismatches = 0;
  for (int pair = 0; pair < 200; ++pair) {
    const bool blobs = pair % 2 == 0;
    const Mask a = blobs ? oracle::random_blobs(16, 16, rng) : oracle::random_mask(16, 16, rng);
    const Mask b = blobs ? oracle::random_blobs(16, 16, rng) : oracle::random_mask(16, 16, rng);
    const auto r = miou_macc(a, b);
    mismatches += r.iou != oracle::iou(a, b);
    mismatches += r.acc != oracle::accuracy(a, b);
    for (int band : {1, 2, default_band(16, 16)}) mismatches += boundary_iou(a, b, band) != oracle::boundary_iou(a, b, band);
  }
  return {mismatches == 0, "200 pairs, " + std::to_string(mismatches) + " mismatches against the brute-force oracles"};
}

struct Criterion {
  int id;
  std::string name;
  double budget_s;  // 0 when the runtime is checked inside the criterion
  std::function<Outcome(Runner&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Acceptance criteria runner"};
  std::string output = "acceptance_runs";
  std::vector<int> only;
  unsigned threads = 1;
  bool report_only = false;
  cli.add_option("-o,--output", output, "Directory for run artifacts");
  cli.add_option("--only", only, "Criterion numbers to run (default: all)");
  cli.add_option("--threads", threads, "Worker threads for criteria 6-8 (0 = all cores)");
  cli.add_flag("--report-only", report_only, "Exit 0 once every criterion has been evaluated");
  CLI11_PARSE(cli, argc, argv);

  Runner run;
  run.output = output;
  run.threads = threads;
  fs::create_directories(run.output);
  set_thread_count(threads);

  const std::vector<Criterion> criteria{
      {1, "RBF normalization", 5.0, c1_rbf},
      {2, "Volume-rendering closed form", 1.0, c2_volume_rendering},
      {3, "Gradient suite", 60.0, c3_gradients},
      {4, "Compositing oracle", 5.0, c4_compositing},
      {5, "Boundary detection soundness", 10.0, c5_boundary_soundness},
      {6, "End-to-end refinement delta", 0.0, c6_refinement},
      {7, "Ablation direction", 0.0, c7_ablation},
      {8, "Tau-sweep shape", 0.0, c8_tau_sweep},
      {9, "Metric oracle", 5.0, c9_metrics},
      {10, "Determinism", 0.0, c10_determinism},
  };
  const std::set<int> selected(only.begin(), only.end());
  // Determinism compares against the artifacts of criteria 6-8.
  if (selected.count(10))
    for (int dep : {6, 7, 8})
      if (!selected.count(dep)) {
        std::cerr << "criterion 10 needs criteria 6, 7 and 8 in the same run\n";
        return 2;
      }

  std::ofstream report(run.output / "report.txt");
  const auto emit = [&](const std::string& line) {
    std::cout << line << std::endl;
    report << line << '\n' << std::flush;
  };
  int failed = 0;
  bool crashed = false;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(run);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
      crashed = true;
    }
    const double elapsed = seconds_since(t0);
    if (c.budget_s > 0.0 && elapsed >= c.budget_s) {
      o.pass = false;
      o.detail += "; runtime " + fmt(elapsed, 3) + " s exceeds " + fmt(c.budget_s, 3) + " s";
    }
    failed += !o.pass;
    emit(std::string(o.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(c.id) + " (" + c.name + "): " + o.detail +
         " [" + fmt(elapsed, 3) + " s]");
  }
  emit(failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed");
  if (report_only) return crashed ? kExitPipeline : kExitOk;
  return failed == 0 ? kExitOk : kExitAcceptance;
}
