#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xmdiff/data/dataset.hpp"

namespace xmdiff {

// Canonical CSV layout: a header row
//   subject_id,profile,<schema_x channels...>,<schema_y channels...>
// followed by uniformly sampled rows; rows for one (subject, profile)
// stream are contiguous. Streams are cut into non-overlapping windows of
// window_len samples; the remainder is dropped and counted. Segments
// containing a run of more than 5 consecutive NaN samples are rejected.
struct IngestReport {
  int windows{0};
  int dropped_samples{0};
  int rejected_segments{0};
};

inline std::vector<SequencePair> ingest_csv(const std::string& path,
                                            const ModalitySchema& schema_x,
                                            const ModalitySchema& schema_y, int window_len,
                                            IngestReport* report = nullptr) {
  if (window_len < 2) throw std::invalid_argument("ingest_csv: window_len must be >= 2");
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open csv: " + path);

  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
  };

  std::string header_line;
  if (!std::getline(is, header_line)) throw std::runtime_error("csv has no header: " + path);
  std::vector<std::string> header = split(header_line);
  std::map<std::string, int> col;
  for (int i = 0; i < static_cast<int>(header.size()); ++i) col[header[static_cast<std::size_t>(i)]] = i;

  auto require = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw std::runtime_error("csv missing channel: " + name);
    return it->second;
  };
  int c_subject = require("subject_id");
  int c_profile = require("profile");
  std::vector<int> cx, cy;
  for (const std::string& ch : schema_x.channels) cx.push_back(require(ch));
  for (const std::string& ch : schema_y.channels) cy.push_back(require(ch));

  struct Stream {
    std::string subject;
    int profile;
    std::vector<std::vector<double>> rows_x, rows_y;
  };
  std::vector<Stream> streams;

  std::string line;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells = split(line);
    if (cells.size() != header.size())
      throw std::runtime_error("csv row " + std::to_string(line_no) + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(header.size()));
    auto num = [&](int c) {
      const std::string& s = cells[static_cast<std::size_t>(c)];
      if (s.empty() || s == "nan" || s == "NaN") return std::nan("");
      return std::stod(s);
    };
    std::string subject = cells[static_cast<std::size_t>(c_subject)];
    int profile = static_cast<int>(num(c_profile));
    if (streams.empty() || streams.back().subject != subject || streams.back().profile != profile)
      streams.push_back({subject, profile, {}, {}});
    std::vector<double> rx, ry;
    for (int c : cx) rx.push_back(num(c));
    for (int c : cy) ry.push_back(num(c));
    streams.back().rows_x.push_back(std::move(rx));
    streams.back().rows_y.push_back(std::move(ry));
  }

  IngestReport rep;
  std::vector<SequencePair> pairs;
  for (const Stream& st : streams) {
    int n = static_cast<int>(st.rows_x.size());
    int windows = n / window_len;
    rep.dropped_samples += n - windows * window_len;
    for (int w = 0; w < windows; ++w) {
      SequencePair p;
      p.subject_id = st.subject;
      p.profile_label = st.profile;
      p.x.resize(window_len, schema_x.channel_count());
      p.y.resize(window_len, schema_y.channel_count());
      int nan_run = 0, max_nan_run = 0;
      for (int l = 0; l < window_len; ++l) {
        int r = w * window_len + l;
        bool row_nan = false;
        for (int c = 0; c < schema_x.channel_count(); ++c) {
          double v = st.rows_x[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
          p.x(l, c) = v;
          row_nan = row_nan || std::isnan(v);
        }
        for (int c = 0; c < schema_y.channel_count(); ++c) {
          double v = st.rows_y[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
          p.y(l, c) = v;
          row_nan = row_nan || std::isnan(v);
        }
        nan_run = row_nan ? nan_run + 1 : 0;
        max_nan_run = std::max(max_nan_run, nan_run);
      }
      if (max_nan_run > 5) {
        ++rep.rejected_segments;
        continue;
      }
      // short NaN gaps are linearly bridgeable upstream; here any NaN left
      // in an accepted segment is replaced by the previous finite sample
      for (int c = 0; c < p.x.cols(); ++c)
        for (int l = 0; l < window_len; ++l)
          if (std::isnan(p.x(l, c))) p.x(l, c) = (l > 0) ? p.x(l - 1, c) : 0.0;
      for (int c = 0; c < p.y.cols(); ++c)
        for (int l = 0; l < window_len; ++l)
          if (std::isnan(p.y(l, c))) p.y(l, c) = (l > 0) ? p.y(l - 1, c) : 0.0;
      pairs.push_back(std::move(p));
      ++rep.windows;
    }
  }
  if (report != nullptr) *report = rep;
  return pairs;
}

}  // namespace xmdiff
