#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xmdiff/eval/metrics.hpp"

namespace xmdiff {

inline std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// "0.14±0.02" style cell: mean and population std across folds.
inline std::string format_mean_std(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("format_mean_std: empty");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f±%.2f", mean, std::sqrt(var));
  return buf;
}

inline void write_reports_csv(const std::vector<MetricsReport>& reports, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open report csv for write: " + path);
  os << "modality_pair,direction,fold_index,mse,fid,predictive,predictive_ratio,"
        "probe_linear,probe_nonlinear,latent_corr\n";
  for (const MetricsReport& r : reports)
    os << r.modality_pair << "," << r.direction << "," << r.fold_index << ","
       << format_metric(r.mse) << "," << format_metric(r.fid) << ","
       << format_metric(r.predictive) << "," << format_metric(r.predictive_ratio) << ","
       << format_metric(r.probe_linear) << "," << format_metric(r.probe_nonlinear) << ","
       << format_metric(r.latent_corr) << "\n";
}

inline std::vector<MetricsReport> read_reports_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open report csv: " + path);
  std::string line;
  std::getline(is, line);  // header
  std::vector<MetricsReport> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    MetricsReport r;
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 10) throw std::runtime_error("malformed report row: " + line);
    r.modality_pair = cells[0];
    r.direction = cells[1];
    r.fold_index = std::stoi(cells[2]);
    r.mse = std::stod(cells[3]);
    r.fid = std::stod(cells[4]);
    r.predictive = std::stod(cells[5]);
    r.predictive_ratio = std::stod(cells[6]);
    r.probe_linear = std::stod(cells[7]);
    r.probe_nonlinear = std::stod(cells[8]);
    r.latent_corr = std::stod(cells[9]);
    out.push_back(std::move(r));
  }
  return out;
}

// Aggregated table, one row per (pair, direction), mean+-std across folds.
inline std::string aggregate_markdown(const std::vector<MetricsReport>& reports) {
  std::map<std::string, std::vector<MetricsReport>> groups;
  for (const MetricsReport& r : reports) groups[r.modality_pair + " " + r.direction].push_back(r);
  std::string out;
  out += "| pair | MSE | FID | Pred | Pred ratio | Linear probe | Nonlinear probe | CKA |\n";
  out += "|---|---|---|---|---|---|---|---|\n";
  for (const auto& [key, rs] : groups) {
    auto col = [&](double MetricsReport::* field) {
      std::vector<double> v;
      for (const MetricsReport& r : rs) v.push_back(r.*field);
      return format_mean_std(v);
    };
    out += "| " + key + " | " + col(&MetricsReport::mse) + " | " + col(&MetricsReport::fid) +
           " | " + col(&MetricsReport::predictive) + " | " +
           col(&MetricsReport::predictive_ratio) + " | " + col(&MetricsReport::probe_linear) +
           " | " + col(&MetricsReport::probe_nonlinear) + " | " +
           col(&MetricsReport::latent_corr) + " |\n";
  }
  return out;
}

}  // namespace xmdiff
