#include "treedoa/results.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "byte_io.hpp"
#include "treedoa/common.hpp"

namespace treedoa {

bool TrialResult::failed() const {
  return std::any_of(estimate.begin(), estimate.end(), [](double v) { return std::isnan(v); });
}

namespace {

bool same_values(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]) && std::isnan(b[i])) continue;
    if (a[i] != b[i]) return false;
  }
  return true;
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_number(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw RuntimeError("results CSV: bad number '" + std::string(s) + "'");
  return v;
}

template <typename Int>
Int parse_integer(std::string_view s) {
  Int v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw RuntimeError("results CSV: bad integer '" + std::string(s) + "'");
  return v;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + format_number(v[i]);
  return s;
}

std::vector<double> split_list(std::string_view s) {
  std::vector<double> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = s.find(';', start);
    out.push_back(parse_number(s.substr(start, end - start)));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> f;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = line.find(',', start);
    f.push_back(line.substr(start, end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return f;
}

}  // namespace

bool TrialResult::operator==(const TrialResult& o) const {
  return method == o.method && snr_db == o.snr_db && snapshots == o.snapshots && num_sources == o.num_sources &&
         trial == o.trial && same_values(truth, o.truth) && same_values(estimate, o.estimate) &&
         same_values(error, o.error) && seed == o.seed && ms == o.ms;
}

void compute_errors(TrialResult& row) {
  if (row.truth.size() != row.estimate.size()) throw ConfigError("truth and estimate sizes differ");
  std::sort(row.truth.begin(), row.truth.end());
  if (!row.failed()) std::sort(row.estimate.begin(), row.estimate.end());
  row.error.resize(row.truth.size());
  for (std::size_t q = 0; q < row.truth.size(); ++q) row.error[q] = row.estimate[q] - row.truth[q];
}

std::string trials_to_csv(const ResultTable& table) {
  std::string out = std::string(kTrialCsvHeader) + "\n";
  for (const auto& r : table) {
    out += r.method + "," + format_number(r.snr_db) + "," + std::to_string(r.snapshots) + "," +
           std::to_string(r.num_sources) + "," + std::to_string(r.trial) + "," + join(r.truth) + "," +
           join(r.estimate) + "," + join(r.error) + "," + std::to_string(r.seed) + "," + format_number(r.ms) + "\n";
  }
  return out;
}

ResultTable trials_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTrialCsvHeader) throw RuntimeError("results CSV: unexpected header");
  ResultTable table;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 10) throw RuntimeError("results CSV: expected 10 fields, got " + std::to_string(f.size()));
    TrialResult r;
    r.method = std::string(f[0]);
    r.snr_db = parse_number(f[1]);
    r.snapshots = parse_integer<int>(f[2]);
    r.num_sources = parse_integer<int>(f[3]);
    r.trial = parse_integer<int>(f[4]);
    r.truth = split_list(f[5]);
    r.estimate = split_list(f[6]);
    r.error = split_list(f[7]);
    r.seed = parse_integer<std::uint64_t>(f[8]);
    r.ms = parse_number(f[9]);
    table.push_back(std::move(r));
  }
  return table;
}

void emit_results(const ResultTable& table, const std::filesystem::path& path) {
  detail::write_text(path, trials_to_csv(table));
}

ResultTable load_results(const std::filesystem::path& path) { return trials_from_csv(detail::read_text(path)); }

std::vector<PlotPoint> aggregate(const ResultTable& table, SweepAxis axis) {
  std::vector<std::string> order;
  std::map<std::string, std::map<double, std::vector<const TrialResult*>>> groups;
  for (const auto& r : table) {
    if (!groups.count(r.method)) order.push_back(r.method);
    const double x = axis == SweepAxis::snr ? r.snr_db : static_cast<double>(r.num_sources);
    groups[r.method][x].push_back(&r);
  }
  std::vector<PlotPoint> points;
  for (const auto& method : order) {
    for (const auto& [x, rows] : groups[method]) {
      PlotPoint p;
      p.series = method;
      p.x = x;
      std::vector<double> sq;
      for (const TrialResult* r : rows) {
        if (r->failed()) {
          ++p.failures;
          continue;
        }
        for (double e : r->error) sq.push_back(e * e);
      }
      p.count = sq.size();
      if (!sq.empty()) {
        double sum = 0.0;
        for (double v : sq) sum += v;
        p.mse = sum / static_cast<double>(sq.size());
        p.rmse = std::sqrt(p.mse);
        if (sq.size() > 1 && p.rmse > 0.0) {
          double var = 0.0;
          for (double v : sq) var += (v - p.mse) * (v - p.mse);
          var /= static_cast<double>(sq.size() - 1);
          p.rmse_stderr = std::sqrt(var / static_cast<double>(sq.size())) / (2.0 * p.rmse);
        }
      } else {
        p.mse = p.rmse = std::numeric_limits<double>::quiet_NaN();
      }
      points.push_back(p);
    }
  }
  return points;
}

std::string plot_to_csv(const std::vector<PlotPoint>& points) {
  std::string out = std::string(kPlotCsvHeader) + "\n";
  for (const auto& p : points) {
    out += p.series + "," + format_number(p.x) + "," + std::to_string(p.count) + "," + std::to_string(p.failures) +
           "," + format_number(p.mse) + "," + format_number(p.rmse) + "," + format_number(p.rmse_stderr) + "\n";
  }
  return out;
}

void emit_plot_data(const std::vector<PlotPoint>& points, const std::filesystem::path& path) {
  detail::write_text(path, plot_to_csv(points));
}

std::string accuracy_to_csv(const std::vector<AccuracyRow>& rows) {
  std::string out = std::string(kAccuracyCsvHeader) + "\n";
  for (const auto& r : rows) {
    out += r.series + "," + std::to_string(r.classes) + "," + std::to_string(r.level) + "," + std::to_string(r.node) +
           "," + std::to_string(r.train_samples) + "," + std::to_string(r.val_samples) + "," +
           format_number(r.train_accuracy) + "," + format_number(r.val_accuracy) + "," + std::to_string(r.seed) + "\n";
  }
  return out;
}

void emit_accuracy(const std::vector<AccuracyRow>& rows, const std::filesystem::path& path) {
  detail::write_text(path, accuracy_to_csv(rows));
}

}  // namespace treedoa
