#include <array>
#include <charconv>
#include <fstream>
#include <stdexcept>
#include <string>

#include "guard/bench.hpp"

namespace guard::bench {

MetricsRow compute_metrics(int epoch, std::span<const EpisodeTotals> completed, double epoch_cost,
                           long long epoch_steps, CumulativeCounters& counters,
                           const MetricsRow* previous) {
  if (epoch_steps < 1) throw std::invalid_argument("compute_metrics: epoch_steps must be >= 1");
  counters.cost += epoch_cost;
  counters.steps += epoch_steps;

  MetricsRow row;
  row.epoch = epoch;
  row.steps = counters.steps;
  row.rho_c = counters.cost / static_cast<double>(counters.steps);
  if (completed.empty()) {
    row.carried = true;
    if (previous != nullptr) {
      row.J_r = previous->J_r;
      row.M_c = previous->M_c;
    }
    return row;
  }
  double reward = 0.0;
  double cost = 0.0;
  for (const EpisodeTotals& e : completed) {
    reward += e.reward;
    cost += e.cost;
  }
  const double n = static_cast<double>(completed.size());
  row.J_r = reward / n;
  row.M_c = cost / n;
  return row;
}

std::string format_double(double value) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf.data(), ptr);
}

std::string format_row(const MetricsRow& r) {
  std::string line = std::to_string(r.epoch);
  line += ',';
  line += std::to_string(r.steps);
  for (double v : {r.J_r, r.M_c, r.rho_c, r.kl, r.multiplier}) {
    line += ',';
    line += format_double(v);
  }
  return line;
}

MetricsRow parse_row(std::string_view line) {
  std::array<std::string_view, 7> fields;
  std::size_t start = 0;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const std::size_t at = line.find(',', start);
    if ((at == std::string_view::npos) != (i + 1 == fields.size())) {
      throw std::invalid_argument("metrics row needs 7 comma-separated fields: '" + std::string(line) + "'");
    }
    fields[i] = line.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start);
    start = at + 1;
  }
  auto number = [&](std::string_view text, auto& out) {
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw std::invalid_argument("bad number '" + std::string(text) + "' in metrics row");
    }
  };
  MetricsRow r;
  number(fields[0], r.epoch);
  number(fields[1], r.steps);
  number(fields[2], r.J_r);
  number(fields[3], r.M_c);
  number(fields[4], r.rho_c);
  number(fields[5], r.kl);
  number(fields[6], r.multiplier);
  return r;
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw std::runtime_error(path.string() + ": missing header '" + std::string(kMetricsHeader) + "'");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    rows.push_back(parse_row(line));
  }
  if (rows.empty()) throw std::runtime_error(path.string() + ": no metric rows");
  return rows;
}

// ----------------------------------------------------------------- summary --

SummaryRow summarize(std::string algorithm, const std::vector<std::vector<MetricsRow>>& seeds) {
  SummaryRow out;
  out.algorithm = std::move(algorithm);
  for (const auto& rows : seeds) {
    if (rows.empty()) {
      ++out.missing;
      continue;
    }
    out.J_r += rows.back().J_r;
    out.M_c += rows.back().M_c;
    out.rho_c += rows.back().rho_c;
    ++out.seeds;
  }
  if (out.seeds > 0) {
    out.J_r /= out.seeds;
    out.M_c /= out.seeds;
    out.rho_c /= out.seeds;
  }
  return out;
}

std::vector<SummaryRow> emit_summary(const std::vector<ExperimentResult>& results) {
  std::vector<SummaryRow> rows;
  for (const auto& r : results) {
    std::vector<std::vector<MetricsRow>> seeds;
    int failed = 0;
    for (const auto& s : r.seeds) {
      if (s.failed) {
        ++failed;
        continue;
      }
      seeds.push_back(s.rows);
    }
    SummaryRow row = summarize(r.algorithm, seeds);
    row.missing += failed;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out(kSummaryHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += r.algorithm;
    for (double v : {r.J_r, r.M_c, r.rho_c}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

bool ExperimentResult::ok() const {
  for (const auto& s : seeds) {
    if (s.failed) return false;
  }
  return !seeds.empty();
}

}  // namespace guard::bench
