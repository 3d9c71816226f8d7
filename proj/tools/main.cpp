#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "xmdiff/data/ingest.hpp"
#include "xmdiff/data/io.hpp"
#include "xmdiff/exp/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// exit codes: 0 success, 2 config/usage, 3 data, 4 numerical
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json default_run_config() {
  xmdiff::TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 16;
  tc.lr_x = tc.lr_y = 3e-4;
  tc.ema_decay = 0.98;  // desk-scale runs take few steps; 0.999 would pin the EMA near init
  tc.model_x = {5, 4, 32, 2, 2, 4, 64, 0.1};
  tc.model_y = {4, 5, 32, 2, 2, 4, 64, 0.1};
  tc.align.window_len = 8;
  return {{"experiment", "default"},
          {"out", "runs/default"},
          {"data",
           {{"source", "synthetic:oscillators"},
            {"n_sequences", 48},
            {"length", 64},
            {"seed", 7},
            {"noise", 0.01}}},
          {"folds", {{"k_subjects", 1}, {"k_profiles", 0}, {"n_folds", 2}, {"seed", 0}}},
          {"train", tc.to_json()}};
}

json load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
}

// dotted --set overrides: "train.align.method=simclr"
void apply_override(json& cfg, const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("--set expects key=value, got: " + kv);
  std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
  json* node = &cfg;
  std::size_t pos = 0;
  while (true) {
    auto dot = key.find('.', pos);
    std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (part.empty()) throw ConfigError("--set has an empty key segment: " + kv);
    if (dot == std::string::npos) {
      json parsed;
      try {
        parsed = json::parse(value);
      } catch (const json::exception&) {
        parsed = value;  // bare strings stay strings
      }
      (*node)[part] = parsed;
      return;
    }
    node = &(*node)[part];
    pos = dot + 1;
  }
}

std::vector<xmdiff::SequencePair> load_data(const json& data_cfg) {
  std::string source = data_cfg.at("source");
  if (source.rfind("synthetic:", 0) == 0) {
    std::string name = source.substr(10);
    xmdiff::SyntheticSystem sys;
    if (name == "oscillators")
      sys = xmdiff::SyntheticSystem::default_oscillators();
    else if (name == "lorenz")
      sys = xmdiff::SyntheticSystem::default_lorenz();
    else
      throw ConfigError("unknown synthetic system in --data: " + name);
    if (data_cfg.contains("noise")) sys.obs_noise_std = data_cfg.at("noise");
    if (data_cfg.contains("subjects")) sys.n_subjects = data_cfg.at("subjects");
    int n = data_cfg.value("n_sequences", 48);
    int length = data_cfg.value("length", 64);
    std::uint64_t seed = data_cfg.value("seed", 7);
    return xmdiff::generate_synthetic(sys, n, length, seed).pairs;
  }
  if (source.size() > 4 && source.substr(source.size() - 4) == ".csv") {
    xmdiff::ModalitySchema sx = xmdiff::ModalitySchema::by_name(data_cfg.value("schema_x", "kinematics"));
    xmdiff::ModalitySchema sy = xmdiff::ModalitySchema::by_name(data_cfg.value("schema_y", "grf"));
    int window = data_cfg.value("window", 300);
    try {
      return xmdiff::ingest_csv(source, sx, sy, window, nullptr);
    } catch (const std::runtime_error& e) {
      throw DataError(e.what());
    }
  }
  if (!fs::exists(source + "/manifest.json"))
    throw DataError("dataset directory has no manifest.json: " + source);
  return xmdiff::load_dataset(source);
}

void write_resolved_config(const json& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream os(out_dir + "/resolved_config.json");
  if (!os) throw DataError("cannot write resolved config into: " + out_dir);
  os << cfg.dump(2) << "\n";
}

std::vector<xmdiff::FoldSpec> folds_from_config(const json& cfg,
                                                const std::vector<xmdiff::SequencePair>& pairs) {
  const json& f = cfg.at("folds");
  return xmdiff::make_folds(pairs, f.value("k_subjects", 1), f.value("k_profiles", 0),
                            f.value("n_folds", 2), f.value("seed", 0));
}

void check_reports_finite(const std::vector<xmdiff::MetricsReport>& reports) {
  for (const auto& r : reports) {
    bool ok = std::isfinite(r.mse) && std::isfinite(r.fid) && std::isfinite(r.predictive) &&
              std::isfinite(r.latent_corr);
    if (!ok) throw NumericalError("non-finite metric in fold " + std::to_string(r.fold_index));
  }
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- commands ----

int cmd_make_synthetic(const std::string& out, const std::string& system, int n, int length,
                       std::uint64_t seed, double noise, const std::string& obs, int subjects) {
  xmdiff::SyntheticSystem sys;
  if (system == "oscillators")
    sys = xmdiff::SyntheticSystem::default_oscillators();
  else if (system == "lorenz")
    sys = xmdiff::SyntheticSystem::default_lorenz();
  else
    throw ConfigError("unknown --system value: " + system + " (use oscillators or lorenz)");
  sys.obs_noise_std = noise;
  sys.n_subjects = subjects;
  if (!obs.empty()) {
    sys.obs_kind_x = xmdiff::obs_map_kind_from_string(obs);
    sys.obs_kind_y = xmdiff::obs_map_kind_from_string(obs);
  }
  json resolved = {{"command", "make-synthetic"}, {"system", sys.to_json()},
                   {"n_sequences", n},            {"length", length},
                   {"seed", seed},                {"out", out}};
  write_resolved_config(resolved, out);
  xmdiff::SyntheticDataset ds = xmdiff::generate_synthetic(sys, n, length, seed);
  xmdiff::save_dataset(out, ds, sys, length, seed);
  std::cout << "wrote " << ds.pairs.size() << " sequence pairs to " << out << "\n";
  return 0;
}

int cmd_train(json cfg) {
  std::string out = cfg.at("out");
  cfg["command"] = "train";
  write_resolved_config(cfg, out);
  std::vector<xmdiff::SequencePair> pairs = load_data(cfg.at("data"));
  std::vector<xmdiff::FoldSpec> folds = folds_from_config(cfg, pairs);
  xmdiff::TrainConfig tc = xmdiff::TrainConfig::from_json(cfg.at("train"));

  std::vector<xmdiff::MetricsReport> all;
  for (const xmdiff::FoldSpec& fold : folds) {
    std::string fold_dir = out + "/fold_" + std::to_string(fold.fold_index);
    xmdiff::FoldResult fr = xmdiff::run_fold(fold, tc, pairs, fold_dir);
    check_reports_finite(fr.reports);
    all.insert(all.end(), fr.reports.begin(), fr.reports.end());
    std::cout << "fold " << fold.fold_index << ": mse x|y " << fr.reports[0].mse << ", y|x "
              << fr.reports[1].mse << "\n";
  }
  xmdiff::write_reports_csv(all, out + "/report.csv");
  std::ofstream os(out + "/aggregate.md");
  os << xmdiff::aggregate_markdown(all);
  std::cout << "run complete: " << out << "\n";
  return 0;
}

int cmd_evaluate(const std::string& run_dir, const std::string& data_override) {
  if (!fs::exists(run_dir + "/resolved_config.json"))
    throw DataError("not a run directory (no resolved_config.json): " + run_dir);
  json cfg = load_config(run_dir + "/resolved_config.json");
  if (!data_override.empty()) cfg["data"]["source"] = data_override;
  std::vector<xmdiff::SequencePair> pairs = load_data(cfg.at("data"));
  std::string out = run_dir + "/eval";
  fs::create_directories(out);
  write_resolved_config(cfg, out);

  std::vector<xmdiff::MetricsReport> all;
  bool any = false;
  for (int f = 0; f < 64; ++f) {
    std::string fold_dir = run_dir + "/fold_" + std::to_string(f);
    if (!fs::exists(fold_dir + "/checkpoint/manifest.json")) continue;
    any = true;
    json fold_manifest = load_config(fold_dir + "/fold_manifest.json");
    xmdiff::FoldSpec fold = xmdiff::FoldSpec::from_json(fold_manifest.at("fold"));
    xmdiff::Normalizer norm = xmdiff::Normalizer::from_json(fold_manifest.at("normalizer"));
    xmdiff::FoldSplit split = xmdiff::split_fold(pairs, fold);
    std::vector<xmdiff::SequencePair> train = norm.apply(split.train);
    std::vector<xmdiff::SequencePair> test = norm.apply(split.test);

    xmdiff::Trainer tr = xmdiff::Trainer::load_checkpoint(fold_dir + "/checkpoint");
    xmdiff::DenoiserParams ema_x = tr.ema_theta(), ema_y = tr.ema_phi();
    xmdiff::EvalResult er = xmdiff::evaluate_model(ema_x, ema_y, tr.schedule(), train, test,
                                                   fold.fold_index, tr.config().seed);
    all.push_back(er.x_from_y);
    all.push_back(er.y_from_x);
    check_reports_finite(all);

    std::string tag = "fold" + std::to_string(f);
    for (int c = 0; c < static_cast<int>(er.real_x.front().cols()); ++c)
      xmdiff::plot::write_overlay_plot(out + "/" + tag + "_x_ch" + std::to_string(c) + ".svg",
                                       er.real_x, er.gen_x, c, "modality x, channel " + std::to_string(c));
    for (int c = 0; c < static_cast<int>(er.real_y.front().cols()); ++c)
      xmdiff::plot::write_overlay_plot(out + "/" + tag + "_y_ch" + std::to_string(c) + ".svg",
                                       er.real_y, er.gen_y, c, "modality y, channel " + std::to_string(c));
    Eigen::MatrixXd joint(er.pooled_zx.rows() + er.pooled_zy.rows(), er.pooled_zx.cols());
    joint << er.pooled_zx, er.pooled_zy;
    std::vector<int> labels = er.labels;
    labels.insert(labels.end(), er.labels.begin(), er.labels.end());
    xmdiff::plot::write_scatter_plot(out + "/" + tag + "_latent_pca.svg",
                                     xmdiff::plot::pca2(joint), labels, "latent PCA, " + tag);
  }
  if (!any) throw DataError("no fold checkpoints found under: " + run_dir);
  xmdiff::write_reports_csv(all, out + "/report.csv");
  std::ofstream os(out + "/aggregate.md");
  os << xmdiff::aggregate_markdown(all);
  std::cout << "evaluation written to " << out << "\n";
  return 0;
}

int cmd_ablate(json cfg) {
  std::string out = cfg.at("out");
  cfg["command"] = "ablate";
  write_resolved_config(cfg, out);
  std::vector<xmdiff::SequencePair> pairs = load_data(cfg.at("data"));
  std::vector<xmdiff::FoldSpec> folds = folds_from_config(cfg, pairs);
  xmdiff::TrainConfig base = xmdiff::TrainConfig::from_json(cfg.at("train"));

  std::string table = "| variant | contrast | covariance | energy | MSE x|y | MSE y|x |\n";
  table += "|---|---|---|---|---|---|\n";
  for (const xmdiff::AblationVariant& v : xmdiff::ablation_variants()) {
    xmdiff::TrainConfig tc = xmdiff::apply_variant(base, v);
    std::vector<double> mse_x, mse_y;
    for (const xmdiff::FoldSpec& fold : folds) {
      std::string fold_dir = out + "/" + v.name + "/fold_" + std::to_string(fold.fold_index);
      xmdiff::FoldResult fr = xmdiff::run_fold(fold, tc, pairs, fold_dir);
      check_reports_finite(fr.reports);
      mse_x.push_back(fr.reports[0].mse);
      mse_y.push_back(fr.reports[1].mse);
    }
    auto mark = [](bool b) { return b ? "yes" : "no"; };
    char row[256];
    std::snprintf(row, sizeof(row), "| %s | %s | %s | %s | %.4f | %.4f |\n", v.name.c_str(),
                  mark(v.contrast), mark(v.cov), mark(v.energy), median(mse_x), median(mse_y));
    table += row;
    std::cout << v.name << ": median mse x|y " << median(mse_x) << ", y|x " << median(mse_y)
              << "\n";
  }
  std::ofstream os(out + "/ablation.md");
  os << table;
  std::cout << "ablation table written to " << out << "/ablation.md\n";
  return 0;
}

int cmd_probe(const std::string& run_dir, const std::string& data_override) {
  if (!fs::exists(run_dir + "/resolved_config.json"))
    throw DataError("not a run directory (no resolved_config.json): " + run_dir);
  json cfg = load_config(run_dir + "/resolved_config.json");
  if (!data_override.empty()) cfg["data"]["source"] = data_override;
  std::vector<xmdiff::SequencePair> pairs = load_data(cfg.at("data"));
  std::string method = cfg.at("train").at("align").at("method");

  std::string out = run_dir + "/probe";
  fs::create_directories(out);
  write_resolved_config(cfg, out);
  std::ofstream os(out + "/probe_report.csv");
  os << "method,fold,kind,modality,accuracy\n";
  bool any = false;
  for (int f = 0; f < 64; ++f) {
    std::string fold_dir = run_dir + "/fold_" + std::to_string(f);
    if (!fs::exists(fold_dir + "/checkpoint/manifest.json")) continue;
    any = true;
    json fold_manifest = load_config(fold_dir + "/fold_manifest.json");
    xmdiff::FoldSpec fold = xmdiff::FoldSpec::from_json(fold_manifest.at("fold"));
    xmdiff::Normalizer norm = xmdiff::Normalizer::from_json(fold_manifest.at("normalizer"));
    xmdiff::FoldSplit split = xmdiff::split_fold(pairs, fold);
    std::vector<xmdiff::SequencePair> test = norm.apply(split.test);

    xmdiff::Trainer tr = xmdiff::Trainer::load_checkpoint(fold_dir + "/checkpoint");
    xmdiff::DenoiserParams ema_x = tr.ema_theta(), ema_y = tr.ema_phi();
    xmdiff::Batch rx, ry;
    std::vector<int> labels;
    for (const auto& p : test) {
      rx.push_back(p.x);
      ry.push_back(p.y);
      labels.push_back(p.profile_label);
    }
    std::vector<int> t1(test.size(), 1);
    auto pool = [](const xmdiff::Batch& z) {
      Eigen::MatrixXd m(static_cast<Eigen::Index>(z.size()), z.front().cols());
      for (std::size_t i = 0; i < z.size(); ++i)
        m.row(static_cast<Eigen::Index>(i)) = z[i].colwise().mean();
      return m;
    };
    Eigen::MatrixXd zx = pool(xmdiff::latent_batch(ema_x, rx, ry, t1));
    Eigen::MatrixXd zy = pool(xmdiff::latent_batch(ema_y, ry, rx, t1));
    std::uint64_t seed = tr.config().seed;
    os << method << "," << f << ",linear,x,"
       << xmdiff::probe(zx, labels, xmdiff::ProbeKind::linear, seed) << "\n";
    os << method << "," << f << ",nonlinear,x,"
       << xmdiff::probe(zx, labels, xmdiff::ProbeKind::nonlinear, seed) << "\n";
    os << method << "," << f << ",linear,y,"
       << xmdiff::probe(zy, labels, xmdiff::ProbeKind::linear, seed) << "\n";
    os << method << "," << f << ",nonlinear,y,"
       << xmdiff::probe(zy, labels, xmdiff::ProbeKind::nonlinear, seed) << "\n";
  }
  if (!any) throw DataError("no fold checkpoints found under: " + run_dir);
  std::cout << "probe report written to " << out << "/probe_report.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("MAM_NUM_THREADS")) {
    int n = std::atoi(threads);
    if (n > 0) Eigen::setNbThreads(n);
  }

  CLI::App app{"cross-modal aligned diffusion for paired time series"};
  app.require_subcommand(1);

  // make-synthetic
  auto* mk = app.add_subcommand("make-synthetic", "generate a paired synthetic dataset");
  std::string mk_out = "dataset", mk_system = "oscillators", mk_obs;
  int mk_n = 48, mk_len = 64, mk_subjects = 2;
  std::uint64_t mk_seed = 7;
  double mk_noise = 0.01;
  mk->add_option("--out", mk_out, "output dataset directory");
  mk->add_option("--system", mk_system, "oscillators | lorenz");
  mk->add_option("--n", mk_n, "number of sequence pairs");
  mk->add_option("--length", mk_len, "sequence length L");
  mk->add_option("--seed", mk_seed, "generator seed");
  mk->add_option("--noise", mk_noise, "observation noise std");
  mk->add_option("--obs", mk_obs, "observation map: affine | affine_tanh | identity | lossy");
  mk->add_option("--subjects", mk_subjects, "synthetic subject count");

  // shared train/ablate flags
  std::string cfg_path, data_flag, out_flag, align_flag;
  std::vector<std::string> sets;
  long long seed_flag = -1;
  int epochs_flag = -1;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", cfg_path, "run config json");
    cmd->add_option("--set", sets, "dotted config overrides key=value");
    cmd->add_option("--data", data_flag, "data source: dir | file.csv | synthetic:NAME");
    cmd->add_option("--out", out_flag, "output run directory");
    cmd->add_option("--seed", seed_flag, "training seed");
    cmd->add_option("--align", align_flag, "llma | simclr | barlow | vicreg | mse | none");
    cmd->add_option("--epochs", epochs_flag, "training epochs");
  };
  auto* train = app.add_subcommand("train", "train both denoisers jointly");
  add_common(train);
  auto* ablate = app.add_subcommand("ablate", "run the four-variant ablation grid");
  add_common(ablate);

  auto* eval = app.add_subcommand("evaluate", "evaluate a finished run");
  std::string eval_run, eval_data;
  eval->add_option("--run", eval_run, "run directory")->required();
  eval->add_option("--data", eval_data, "data source override");

  auto* probe_cmd = app.add_subcommand("probe", "probe latents of a finished run");
  std::string probe_run, probe_data;
  probe_cmd->add_option("--run", probe_run, "run directory")->required();
  probe_cmd->add_option("--data", probe_data, "data source override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (mk->parsed())
      return cmd_make_synthetic(mk_out, mk_system, mk_n, mk_len, mk_seed, mk_noise, mk_obs,
                                mk_subjects);

    if (train->parsed() || ablate->parsed()) {
      json cfg = cfg_path.empty() ? default_run_config() : load_config(cfg_path);
      if (!data_flag.empty()) cfg["data"]["source"] = data_flag;
      if (!out_flag.empty()) cfg["out"] = out_flag;
      if (seed_flag >= 0) cfg["train"]["seed"] = seed_flag;
      if (epochs_flag >= 0) cfg["train"]["epochs"] = epochs_flag;
      if (!align_flag.empty()) cfg["train"]["align"]["method"] = align_flag;
      for (const std::string& kv : sets) apply_override(cfg, kv);
      try {
        xmdiff::TrainConfig::from_json(cfg.at("train"));
      } catch (const std::exception& e) {
        throw ConfigError(std::string("invalid train config: ") + e.what());
      }
      return train->parsed() ? cmd_train(cfg) : cmd_ablate(cfg);
    }
    if (eval->parsed()) return cmd_evaluate(eval_run, eval_data);
    if (probe_cmd->parsed()) return cmd_probe(probe_run, probe_data);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
