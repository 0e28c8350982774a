// Acceptance suite: runs every acceptance criterion and prints one PASS/FAIL
// line per criterion. Exit status is non-zero if any criterion fails.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "treedoa/baselines.hpp"
#include "treedoa/common.hpp"
#include "treedoa/experiment.hpp"
#include "treedoa/rng.hpp"

using namespace treedoa;
namespace fs = std::filesystem;

namespace {

// Tolerances and sizes, pinned.
constexpr double kCodecSlack = 1e-12;
constexpr int kCodecDraws = 10000;
constexpr int kGradNets = 120;
constexpr double kFdStep = 1e-5;
constexpr double kGradRelTol = 1e-4;
constexpr int kFloorDraws = 100000;
constexpr double kFloorRelTol = 0.05;
constexpr int kMusicCases = 100;
constexpr double kMusicMinSep = 10.0;
constexpr double kMusicExactTol = 1e-6;
constexpr double kMusicGridStep = 0.005;
constexpr double kMusicGridTol = 0.01;
constexpr double kCrlbRelTol = 1e-10;
constexpr double kFloorFactor = 1.2;
constexpr double kZ95 = 1.96;
constexpr double kDeskBudgetSeconds = 20.0 * 60.0;
constexpr int kSnrTrials = 500;
constexpr int kQTrials = 300;

const double kQuantFloor = 1.0 / std::sqrt(12.0);  // 1-degree cells

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

TreeSpec table_two_level() { return TreeSpec{{12, 10}, -60.0, 60.0, {128, 64, 32}}; }
TreeSpec table_three_level() { return TreeSpec{{6, 5, 4}, -60.0, 60.0, {128, 64, 32}}; }

const PlotPoint& point(const std::vector<PlotPoint>& pts, const std::string& series, double x) {
  for (const auto& p : pts)
    if (p.series == series && p.x == x) return p;
  throw RuntimeError("missing plot point " + series);
}

std::string ci(const PlotPoint& p) {
  return fmt("%.4f [%.4f, %.4f]", p.rmse, p.rmse - kZ95 * p.rmse_stderr, p.rmse + kZ95 * p.rmse_stderr);
}

// 1 ------------------------------------------------------------------------
Outcome structure_algebra() {
  const auto t2 = table_two_level();
  const auto t3 = table_three_level();
  bool ok = level_node_counts(t2) == std::vector<std::int64_t>{1, 12} &&
            level_node_counts(t3) == std::vector<std::int64_t>{1, 6, 30};
  ok = ok && t2.resolution() == 1.0 && t3.resolution() == 1.0;
  const auto c2 = complexity_report(t2, 240);
  const auto c3 = complexity_report(t3, 240);
  ok = ok && c2.model_classes == 22 && c3.model_classes == 15 && c2.flat_equivalent == 120 && c3.flat_equivalent == 120;
  ok = ok && FlatDnnSpec::matching(t3).classes == 120;
  return {ok, fmt("G=(1,12),(1,6,30) dtheta=%g,%g sumL=%lld,%lld flat=%lld", t2.resolution(), t3.resolution(),
                  static_cast<long long>(c2.model_classes), static_cast<long long>(c3.model_classes),
                  static_cast<long long>(c3.flat_equivalent))};
}

// 2 ------------------------------------------------------------------------
Outcome label_codec() {
  double worst = 0.0;
  RngStream rng(20240101);
  for (const auto& s : {table_two_level(), table_three_level()})
    for (int i = 0; i < kCodecDraws; ++i) {
      const double theta = rng.uniform(-60.0, 60.0);
      worst = std::max(worst, std::abs(labels_to_doa(s, doa_to_labels(s, theta)) - theta));
    }
  const auto s = table_three_level();
  int agree = 0;
  for (int k = 0; k < 120; ++k) {
    bool cell_ok = true;
    for (double frac : {0.0, 0.25, 0.5, 0.75, 0.999999}) {
      const double theta = -60.0 + k + frac;
      int scanned = -1;
      for (int c = 0; c < 120; ++c)
        if (theta >= -60.0 + c && theta < -59.0 + c) scanned = c;
      const auto l = doa_to_labels(s, theta);
      cell_ok = cell_ok && scanned == k && l[0] * 20 + l[1] * 4 + l[2] == k &&
                std::abs(labels_to_doa(s, l) - (-59.5 + k)) < kCodecSlack;
    }
    agree += cell_ok;
  }
  const bool ok = worst <= 0.5 + kCodecSlack && agree == 120;
  return {ok, fmt("max round-trip error %.6f deg (bound 0.5), cell scan %d/120", worst, agree)};
}

// 3 ------------------------------------------------------------------------
Outcome gradients() {
  RngStream rng(77);
  double worst = 0.0;
  for (int n = 0; n < kGradNets; ++n) {
    std::vector<int> sizes{1 + static_cast<int>(rng.uniform(0, 32))};
    const int hidden = 1 + static_cast<int>(rng.uniform(0, 3));
    for (int h = 0; h < hidden; ++h) sizes.push_back(1 + static_cast<int>(rng.uniform(0, 32)));
    sizes.push_back(2 + static_cast<int>(rng.uniform(0, 31)));
    nn::Mlnn net = nn::Mlnn::initialized(nn::LayerSpec{sizes}, derive_seed(5, n));
    for (int k = 0; k < net.num_transforms(); ++k)
      for (Eigen::Index i = 0; i < net.biases(k).size(); ++i) net.biases(k)(i) = 0.1 * rng.normal();
    Eigen::VectorXd x(sizes.front());
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
    Eigen::VectorXd z = Eigen::VectorXd::Zero(sizes.back());
    z(static_cast<Eigen::Index>(rng.uniform(0, sizes.back()))) = 1.0;
    const auto kind = n % 4 == 3 ? nn::LossKind::categorical_ce : nn::LossKind::bce;

    const auto g = nn::backprop_gradients(net, x, z, kind);
    double diff2 = 0.0, g2 = 0.0, fd2 = 0.0;
    auto probe = [&](double& param, double analytic) {
      const double keep = param;
      param = keep + kFdStep;
      const double up = nn::loss(kind, net.forward(x), z);
      param = keep - kFdStep;
      const double down = nn::loss(kind, net.forward(x), z);
      param = keep;
      const double fd = (up - down) / (2 * kFdStep);
      diff2 += (fd - analytic) * (fd - analytic);
      g2 += analytic * analytic;
      fd2 += fd * fd;
    };
    for (int k = 0; k < net.num_transforms(); ++k) {
      for (Eigen::Index i = 0; i < net.weights(k).size(); ++i) probe(net.weights(k)(i), g.weights[k](i));
      for (Eigen::Index i = 0; i < net.biases(k).size(); ++i) probe(net.biases(k)(i), g.biases[k](i));
    }
    worst = std::max(worst, std::sqrt(diff2) / std::max({std::sqrt(g2), std::sqrt(fd2), 1e-12}));
  }
  return {worst < kGradRelTol, fmt("%d nets, widths <= 32, max relative error %.3e (tol %.0e)", kGradNets, worst, kGradRelTol)};
}

// 4 ------------------------------------------------------------------------
Outcome quantization_floor() {
  const auto s = table_three_level();
  RngStream rng(4242);
  double sq = 0.0;
  for (int i = 0; i < kFloorDraws; ++i) {
    const double theta = rng.uniform(-60.0, 60.0);
    const auto truth = doa_to_labels(s, theta);
    const auto path = route_labels(s, [&](int h, std::span<const int>) { return truth[static_cast<std::size_t>(h)]; });
    const double e = labels_to_doa(s, path) - theta;
    sq += e * e;
  }
  const double rmse = std::sqrt(sq / kFloorDraws);
  const double rel = std::abs(rmse - kQuantFloor) / kQuantFloor;
  return {rel <= kFloorRelTol, fmt("oracle RMSE %.5f vs %.5f (rel diff %.4f, tol %.2f)", rmse, kQuantFloor, rel, kFloorRelTol)};
}

// 5 ------------------------------------------------------------------------
Outcome root_music_exactness() {
  const ArrayConfig cfg;  // M = 16
  const TreeSpec dom = table_three_level();
  double worst_exact = 0.0, worst_grid = 0.0;
  for (int c = 0; c < kMusicCases; ++c) {
    const int q = 1 + c % 2;
    const auto doas = random_separated_tuple(dom, q, kMusicMinSep, derive_seed(555, c));
    const auto r = analytic_covariance(cfg, SourceSet::noiseless(doas));
    const auto est = root_music(r, q, cfg).doas_deg;
    const auto grid = music_spectrum(r, q, cfg, kMusicGridStep).peaks_deg;
    if (est.size() != doas.size() || grid.size() != doas.size()) return {false, fmt("case %d: wrong estimate count", c)};
    for (int i = 0; i < q; ++i) {
      worst_exact = std::max(worst_exact, std::abs(est[i] - doas[i]));
      worst_grid = std::max(worst_grid, std::abs(est[i] - grid[i]));
    }
  }
  return {worst_exact < kMusicExactTol && worst_grid <= kMusicGridTol,
          fmt("%d cases: max error %.3e deg (tol %.0e), max |root - grid| %.4f deg (tol %.2f)", kMusicCases, worst_exact,
              kMusicExactTol, worst_grid, kMusicGridTol)};
}

// 6 ------------------------------------------------------------------------
double scalar_crlb_deg2(const ArrayConfig& cfg, double theta, double snr_db, int t) {
  const double pi = std::numbers::pi;
  const double sv = std::pow(10.0, -snr_db / 10.0);
  const int m = cfg.num_elements;
  Eigen::VectorXcd a(m), d(m);
  for (int i = 0; i < m; ++i) {
    const double phase = 2 * pi * cfg.spacing_wavelengths * i * std::sin(theta * pi / 180.0);
    a(i) = std::polar(1.0, phase);
    d(i) = cd(0.0, 2 * pi * cfg.spacing_wavelengths * i * std::cos(theta * pi / 180.0)) * a(i);
  }
  const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(m, m);
  const Eigen::MatrixXcd pperp = id - a * a.adjoint() / a.squaredNorm();
  const Eigen::MatrixXcd r = a * a.adjoint() + sv * id;
  const double dpd = (d.adjoint() * pperp * d)(0, 0).real();
  const double ara = (a.adjoint() * r.inverse() * a)(0, 0).real();
  return sv / (2.0 * t) / (dpd * ara) * (180.0 / pi) * (180.0 / pi);
}

Outcome crlb_sanity() {
  const ArrayConfig cfg;
  double worst = 0.0;
  for (double theta : {-55.0, -20.0, 0.0, 27.0, 50.0})
    for (double snr : {-20.0, -10.0, 0.0, 10.0})
      for (int t : {10, 50, 100}) {
        const double m = crlb_stochastic(cfg, SourceSet::equal_power({theta}, snr), t)(0, 0);
        const double s = scalar_crlb_deg2(cfg, theta, snr, t);
        worst = std::max(worst, std::abs(m - s) / s);
      }
  bool snr_dec = true;
  double prev = std::numeric_limits<double>::infinity();
  for (double snr = -20.0; snr <= 10.0; snr += 5.0) {
    const double v = crlb_stochastic(cfg, SourceSet::equal_power({27.0}, snr), 50)(0, 0);
    snr_dec = snr_dec && v < prev;
    prev = v;
  }
  bool t_dec = true;
  prev = std::numeric_limits<double>::infinity();
  for (int t : {10, 50, 100}) {
    const double v = crlb_stochastic(cfg, SourceSet::equal_power({27.0}, 0.0), t)(0, 0);
    t_dec = t_dec && v < prev;
    prev = v;
  }
  return {worst <= kCrlbRelTol && snr_dec && t_dec,
          fmt("closed form vs matrix max rel diff %.2e (tol %.0e); decreasing in SNR: %s, in T: %s", worst, kCrlbRelTol,
              snr_dec ? "yes" : "no", t_dec ? "yes" : "no")};
}

// 7, 8 and 10 share the single-source desk run ------------------------------
struct DeskRun {
  ExperimentConfig cfg;
  ResultTable table;
  double seconds = 0.0;
  double train_seconds = 0.0;
};

ExperimentConfig desk_snr_config() {
  ExperimentConfig cfg = ExperimentConfig::desk();
  cfg.methods = {"tdnn", "dnn", "root-music", "crlb"};
  cfg.snr_db = {-10.0, 10.0};
  cfg.trials = kSnrTrials;
  return cfg;
}

DeskRun run_desk(const ExperimentConfig& cfg) {
  DeskRun run;
  run.cfg = cfg;
  const auto start = Clock::now();
  const auto models = train_single_source_models(cfg, build_single_source_set(cfg));
  run.train_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  run.table = run_rmse_vs_snr(cfg, models);
  run.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return run;
}

Outcome desk_end_to_end(const DeskRun& run) {
  const auto pts = aggregate(run.table, SweepAxis::snr);
  const auto& p = point(pts, "tdnn", 10.0);
  const double bound = kFloorFactor * kQuantFloor + kZ95 * p.rmse_stderr;
  const bool ok = p.failures == 0 && p.rmse <= bound && run.seconds <= kDeskBudgetSeconds;
  return {ok, fmt("TDNN RMSE at +10 dB %s over %zu trials; bound 1.2*%.4f + %.4f = %.4f; %.0f s (train %.0f s, budget %.0f s)",
                  ci(p).c_str(), p.count, kQuantFloor, kZ95 * p.rmse_stderr, bound, run.seconds, run.train_seconds,
                  kDeskBudgetSeconds)};
}

Outcome low_snr_comparison(const DeskRun& run) {
  const auto pts = aggregate(run.table, SweepAxis::snr);
  const auto& t = point(pts, "tdnn", -10.0);
  const auto& f = point(pts, "dnn", -10.0);
  const auto& m = point(pts, "root-music", -10.0);
  const auto& c = point(pts, "crlb", -10.0);
  const bool ok = t.failures == 0 && f.failures == 0 && t.rmse <= f.rmse;
  return {ok, fmt("-10 dB, %zu trials, RMSE with 95%% CI: TDNN %s, flat DNN %s (root-MUSIC %s, sqrt CRLB %.4f)", t.count,
                  ci(t).c_str(), ci(f).c_str(), ci(m).c_str(), c.rmse)};
}

// 9 ------------------------------------------------------------------------
Outcome multi_emitter_comparison() {
  ExperimentConfig cfg = ExperimentConfig::desk();
  cfg.methods = {"tdnn", "dnn", "root-music"};
  cfg.q_values = {2, 3};
  cfg.trials = kQTrials;
  std::map<int, MultiSourceModels> models;
  const auto start = Clock::now();
  for (int q : cfg.q_values) models[q] = train_multi_source_models(cfg, q, build_multi_source_set(cfg, q));
  const auto table = run_rmse_vs_q(cfg, models);
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  const auto pts = aggregate(table, SweepAxis::num_sources);
  bool ok = true;
  std::string detail = fmt("%.0f dB, %d trials/point, %.0f s;", cfg.q_snr_db, kQTrials, secs);
  for (int q : cfg.q_values) {
    const auto& a = point(pts, "qtdnn", q);
    const auto& b = point(pts, "dnn", q);
    const auto& m = point(pts, "root-music", q);
    ok = ok && a.failures == 0 && b.failures == 0 && a.rmse <= b.rmse;
    detail += fmt(" Q=%d: Q-TDNN %s, flat top-Q %s (root-MUSIC %s);", q, ci(a).c_str(), ci(b).c_str(), ci(m).c_str());
  }
  return {ok, detail};
}

// 10 -----------------------------------------------------------------------
Outcome determinism(const DeskRun& first) {
  const fs::path dir = fs::temp_directory_path() / "treedoa_acceptance";
  fs::remove_all(dir);
  write_experiment_outputs(dir / "a", "rmse_vs_snr", first.cfg, first.table, SweepAxis::snr);
  const DeskRun second = run_desk(first.cfg);
  write_experiment_outputs(dir / "b", "rmse_vs_snr", second.cfg, second.table, SweepAxis::snr);

  ExperimentConfig q = ExperimentConfig::desk();
  q.methods = {"root-music", "crlb", "oracle-tdnn"};
  q.q_values = {1, 2, 3};
  q.trials = 100;
  write_experiment_outputs(dir / "a", "rmse_vs_q", q, run_rmse_vs_q(q, {}), SweepAxis::num_sources);
  write_experiment_outputs(dir / "b", "rmse_vs_q", q, run_rmse_vs_q(q, {}), SweepAxis::num_sources);

  bool ok = true;
  std::size_t bytes = 0;
  for (const char* name : {"rmse_vs_snr.csv", "rmse_vs_snr.plot.csv", "rmse_vs_q.csv", "rmse_vs_q.plot.csv"}) {
    const auto a = fs::path(dir / "a" / name);
    const auto b = fs::path(dir / "b" / name);
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    ok = ok && !sa.empty() && sa == sb;
    bytes += sa.size();
  }
  return {ok, fmt("retrained desk SNR sweep and baseline Q sweep rerun: %zu bytes compared, %s", bytes,
                  ok ? "byte-identical" : "DIFFERENT")};
}

}  // namespace

int main() {
  std::printf("treedoa %s acceptance suite\n", library_version());
  std::fflush(stdout);
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    std::printf("[%s] %2d %-28s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  };

  report(1, "structure algebra", structure_algebra);
  report(2, "label codec", label_codec);
  report(3, "gradient check", gradients);
  report(4, "oracle quantization floor", quantization_floor);
  report(5, "root-MUSIC exactness", root_music_exactness);
  report(6, "CRLB sanity", crlb_sanity);

  DeskRun desk;
  bool desk_ok = true;
  std::string desk_error;
  try {
    desk = run_desk(desk_snr_config());
  } catch (const std::exception& e) {
    desk_ok = false;
    desk_error = e.what();
  }
  auto needs_desk = [&](auto fn) {
    return [&, fn]() -> Outcome {
      if (!desk_ok) return {false, "desk run failed: " + desk_error};
      return fn(desk);
    };
  };
  report(7, "desk end-to-end", needs_desk(desk_end_to_end));
  report(8, "low-SNR TDNN vs flat DNN", needs_desk(low_snr_comparison));
  report(9, "multi-emitter Q-TDNN vs flat", multi_emitter_comparison);
  report(10, "determinism", needs_desk(determinism));

  std::printf("%d of 10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
