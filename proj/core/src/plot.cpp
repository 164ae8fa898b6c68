#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

#include "guard/bench.hpp"

namespace guard::bench {

namespace {

constexpr double kLeft = 80.0, kRight = 200.0, kTop = 50.0, kBottom = 60.0;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

PlotMetric parse_plot_metric(std::string_view name) {
  if (name == "reward") return PlotMetric::kReward;
  if (name == "cost") return PlotMetric::kCost;
  if (name == "cost_rate") return PlotMetric::kCostRate;
  throw std::invalid_argument("unknown plot metric '" + std::string(name) + "' (reward, cost, cost_rate)");
}

std::string_view to_string(PlotMetric metric) {
  switch (metric) {
    case PlotMetric::kReward: return "reward";
    case PlotMetric::kCost: return "cost";
    case PlotMetric::kCostRate: return "cost_rate";
  }
  return "?";
}

double metric_value(const MetricsRow& row, PlotMetric metric) {
  switch (metric) {
    case PlotMetric::kReward: return row.J_r;
    case PlotMetric::kCost: return row.M_c;
    case PlotMetric::kCostRate: return row.rho_c;
  }
  return 0.0;
}

std::vector<BandPoint> compute_band(const PlotSeries& series, PlotMetric metric) {
  if (series.seeds.empty()) return {};
  std::map<int, std::vector<double>> by_epoch;
  for (const auto& rows : series.seeds) {
    for (const auto& r : rows) by_epoch[r.epoch].push_back(metric_value(r, metric));
  }
  std::vector<BandPoint> out;
  for (const auto& [epoch, values] : by_epoch) {
    if (values.size() != series.seeds.size()) continue;
    BandPoint p;
    p.epoch = epoch;
    p.lo = *std::min_element(values.begin(), values.end());
    p.hi = *std::max_element(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    p.mean = sum / static_cast<double>(values.size());
    out.push_back(p);
  }
  return out;
}

std::string render_svg(const std::vector<PlotSeries>& series, PlotMetric metric) {
  std::vector<std::vector<BandPoint>> bands;
  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
  double y_min = x_min, y_max = -x_min;
  for (const auto& s : series) {
    bands.push_back(compute_band(s, metric));
    for (const auto& p : bands.back()) {
      x_min = std::min(x_min, static_cast<double>(p.epoch));
      x_max = std::max(x_max, static_cast<double>(p.epoch));
      y_min = std::min(y_min, p.lo);
      y_max = std::max(y_max, p.hi);
    }
  }
  if (!std::isfinite(x_min)) throw std::invalid_argument("render_svg: no data points");
  if (x_max == x_min) {
    x_min -= 1.0;
    x_max += 1.0;
  }
  if (y_max == y_min) {
    const double pad = std::max(1.0, std::abs(y_min) * 0.1);
    y_min -= pad;
    y_max += pad;
  } else {
    const double pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;
  }

  const double w = kPlotWidth - kLeft - kRight;
  const double h = kPlotHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * w; };
  auto py = [&](double y) { return kTop + (y_max - y) / (y_max - y_min) * h; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kPlotWidth) + "\" height=\"" +
         std::to_string(kPlotHeight) + "\" viewBox=\"0 0 " + std::to_string(kPlotWidth) + " " +
         std::to_string(kPlotHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const std::string_view title = metric == PlotMetric::kReward ? "Average episode return"
                                 : metric == PlotMetric::kCost ? "Average episodic cost"
                                                               : "Cost rate";
  svg += "<text x=\"" + num(kLeft + w / 2) + "\" y=\"25\" text-anchor=\"middle\" font-size=\"16\">" +
         std::string(title) + "</text>\n";

  // Axes and ticks.
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + h) + "\" x2=\"" + num(kLeft + w) + "\" y2=\"" +
         num(kTop + h) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" +
         num(kTop + h) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double yv = y_min + (y_max - y_min) * i / 5.0;
    const double xv = x_min + (x_max - x_min) * i / 5.0;
    svg += "<line x1=\"" + num(kLeft - 5) + "\" y1=\"" + num(py(yv)) + "\" x2=\"" + num(kLeft) + "\" y2=\"" +
           num(py(yv)) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(py(yv) + 4) + "\" text-anchor=\"end\">" +
           tick_label(yv) + "</text>\n";
    svg += "<line x1=\"" + num(px(xv)) + "\" y1=\"" + num(kTop + h) + "\" x2=\"" + num(px(xv)) + "\" y2=\"" +
           num(kTop + h + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(px(xv)) + "\" y=\"" + num(kTop + h + 20) + "\" text-anchor=\"middle\">" +
           tick_label(xv) + "</text>\n";
  }
  svg += "<text x=\"" + num(kLeft + w / 2) + "\" y=\"" + num(kPlotHeight - 15.0) +
         "\" text-anchor=\"middle\">epoch</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& band = bands[i];
    if (band.empty()) continue;
    const std::string color = kPalette[i % std::size(kPalette)];
    if (series[i].seeds.size() >= 2) {
      std::string points;
      for (const auto& p : band) points += num(px(p.epoch)) + "," + num(py(p.hi)) + " ";
      for (auto it = band.rbegin(); it != band.rend(); ++it) points += num(px(it->epoch)) + "," + num(py(it->lo)) + " ";
      points.pop_back();
      svg += "<polygon points=\"" + points + "\" fill=\"" + color + "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    }
    std::string points;
    for (const auto& p : band) points += num(px(p.epoch)) + "," + num(py(p.mean)) + " ";
    points.pop_back();
    svg += "<polyline points=\"" + points + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";

    const double ly = kTop + 10.0 + 20.0 * static_cast<double>(i);
    svg += "<line x1=\"" + num(kLeft + w + 15) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(kLeft + w + 40) +
           "\" y2=\"" + num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + num(kLeft + w + 45) + "\" y=\"" + num(ly + 4) + "\">" + escape(series[i].label) +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void emit_plot(const std::vector<std::filesystem::path>& csv_paths, PlotMetric metric,
               const std::filesystem::path& svg_path) {
  if (csv_paths.empty()) throw std::invalid_argument("emit_plot: no CSV files given");
  std::vector<PlotSeries> series;
  std::map<std::string, std::size_t> index;
  for (const auto& path : csv_paths) {
    const std::string label = path.parent_path().filename().string();
    auto [it, inserted] = index.try_emplace(label, series.size());
    if (inserted) series.push_back({label, {}});
    series[it->second].seeds.push_back(read_metrics_csv(path));
  }
  if (!svg_path.parent_path().empty()) std::filesystem::create_directories(svg_path.parent_path());
  std::ofstream out(svg_path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + svg_path.string());
  out << render_svg(series, metric);
}

}  // namespace guard::bench
