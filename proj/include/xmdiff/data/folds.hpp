#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "xmdiff/core/rng.hpp"
#include "xmdiff/data/dataset.hpp"

#include <nlohmann/json.hpp>

namespace xmdiff {

struct FoldSpec {
  std::vector<std::string> held_out_subjects;
  std::vector<int> held_out_profiles;
  int fold_index{0};
  int n_folds{1};

  bool holds_out(const SequencePair& p) const {
    bool subj = std::find(held_out_subjects.begin(), held_out_subjects.end(), p.subject_id) !=
                held_out_subjects.end();
    bool prof = std::find(held_out_profiles.begin(), held_out_profiles.end(), p.profile_label) !=
                held_out_profiles.end();
    return subj || prof;
  }

  nlohmann::json to_json() const {
    return {{"held_out_subjects", held_out_subjects},
            {"held_out_profiles", held_out_profiles},
            {"fold_index", fold_index},
            {"n_folds", n_folds}};
  }

  static FoldSpec from_json(const nlohmann::json& j) {
    FoldSpec f;
    f.held_out_subjects = j.at("held_out_subjects").get<std::vector<std::string>>();
    f.held_out_profiles = j.at("held_out_profiles").get<std::vector<int>>();
    f.fold_index = j.at("fold_index");
    f.n_folds = j.at("n_folds");
    return f;
  }
};

struct FoldSplit {
  std::vector<SequencePair> train, test;
};

inline FoldSplit split_fold(const std::vector<SequencePair>& pairs, const FoldSpec& fold) {
  FoldSplit s;
  for (const SequencePair& p : pairs)
    (fold.holds_out(p) ? s.test : s.train).push_back(p);
  if (s.train.empty()) throw std::runtime_error("fold has an empty training split");
  if (s.test.empty()) throw std::runtime_error("fold has an empty test split");
  return s;
}

// Leave-k-out folds: each fold holds out k_subjects subjects (and
// k_profiles profile labels); every subject is held out in some fold.
inline std::vector<FoldSpec> make_folds(const std::vector<SequencePair>& pairs, int k_subjects,
                                        int k_profiles, int n_folds, std::uint64_t seed) {
  std::set<std::string> subject_set;
  std::set<int> profile_set;
  for (const SequencePair& p : pairs) {
    subject_set.insert(p.subject_id);
    profile_set.insert(p.profile_label);
  }
  std::vector<std::string> subjects(subject_set.begin(), subject_set.end());
  std::vector<int> profiles(profile_set.begin(), profile_set.end());

  if (subjects.size() < 2) throw std::invalid_argument("make_folds: need at least 2 subjects");
  if (n_folds < 1) throw std::invalid_argument("make_folds: n_folds must be >= 1");
  if (k_subjects < 1 || k_subjects >= static_cast<int>(subjects.size()))
    throw std::invalid_argument("make_folds: k_subjects must leave a nonempty train set");
  if (k_profiles < 0 || k_profiles >= static_cast<int>(profiles.size()))
    throw std::invalid_argument("make_folds: k_profiles must leave a nonempty train set");
  if (static_cast<std::int64_t>(n_folds) * k_subjects < static_cast<std::int64_t>(subjects.size()))
    throw std::invalid_argument("make_folds: n_folds * k_subjects cannot cover all subjects");

  Rng rng(seed);
  rng.shuffle(subjects);
  rng.shuffle(profiles);

  std::vector<FoldSpec> folds;
  for (int f = 0; f < n_folds; ++f) {
    FoldSpec spec;
    spec.fold_index = f;
    spec.n_folds = n_folds;
    for (int k = 0; k < k_subjects; ++k) {
      std::size_t idx = (static_cast<std::size_t>(f) * static_cast<std::size_t>(k_subjects) +
                         static_cast<std::size_t>(k)) %
                        subjects.size();
      spec.held_out_subjects.push_back(subjects[idx]);
    }
    for (int k = 0; k < k_profiles; ++k) {
      std::size_t idx = (static_cast<std::size_t>(f) * static_cast<std::size_t>(k_profiles) +
                         static_cast<std::size_t>(k)) %
                        profiles.size();
      spec.held_out_profiles.push_back(profiles[idx]);
    }
    folds.push_back(std::move(spec));
  }
  return folds;
}

}  // namespace xmdiff
