#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "xmdiff/core/serialize.hpp"
#include "xmdiff/data/synthetic.hpp"

#include <nlohmann/json.hpp>

namespace xmdiff {

namespace data_io_detail {
inline std::string key(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s.%05zu", prefix, i);
  return buf;
}
}  // namespace data_io_detail

// Dataset directory: manifest.json with metadata, data.bin with the paired
// observations, hidden.bin with the test-only hidden trajectories.
inline void save_dataset(const std::string& dir, const SyntheticDataset& ds,
                         const SyntheticSystem& sys, int length, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json subjects = nlohmann::json::array(), labels = nlohmann::json::array();
  for (const SequencePair& p : ds.pairs) {
    subjects.push_back(p.subject_id);
    labels.push_back(p.profile_label);
  }
  nlohmann::json manifest = {{"n_sequences", ds.pairs.size()},
                             {"length", length},
                             {"seed", seed},
                             {"system", sys.to_json()},
                             {"normalizer", ds.normalizer.to_json()},
                             {"subjects", subjects},
                             {"labels", labels}};
  std::ofstream os(dir + "/manifest.json");
  if (!os) throw std::runtime_error("cannot write dataset manifest: " + dir);
  os << manifest.dump(2) << "\n";

  io::TensorMap data, hidden;
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    data[data_io_detail::key("x", i)] = ds.pairs[i].x;
    data[data_io_detail::key("y", i)] = ds.pairs[i].y;
    hidden[data_io_detail::key("z", i)] = ds.hidden[i];
  }
  io::save_tensors(dir + "/data.bin", data);
  io::save_tensors(dir + "/hidden.bin", hidden);
}

inline std::vector<SequencePair> load_dataset(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  if (!is) throw std::runtime_error("dataset manifest missing: " + dir + "/manifest.json");
  nlohmann::json manifest = nlohmann::json::parse(is);
  std::size_t n = manifest.at("n_sequences");
  io::TensorMap data = io::load_tensors(dir + "/data.bin");
  std::vector<SequencePair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    SequencePair p;
    p.x = data.at(data_io_detail::key("x", i));
    p.y = data.at(data_io_detail::key("y", i));
    p.subject_id = manifest.at("subjects").at(i);
    p.profile_label = manifest.at("labels").at(i);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

inline Batch load_hidden_sidecar(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  if (!is) throw std::runtime_error("dataset manifest missing: " + dir + "/manifest.json");
  nlohmann::json manifest = nlohmann::json::parse(is);
  std::size_t n = manifest.at("n_sequences");
  io::TensorMap hidden = io::load_tensors(dir + "/hidden.bin");
  Batch out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(hidden.at(data_io_detail::key("z", i)));
  return out;
}

}  // namespace xmdiff
