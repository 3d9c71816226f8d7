#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xmdiff/align/alignment.hpp"
#include "xmdiff/core/rng.hpp"
#include "xmdiff/core/serialize.hpp"
#include "xmdiff/data/dataset.hpp"
#include "xmdiff/diffusion/forward.hpp"
#include "xmdiff/diffusion/schedule.hpp"
#include "xmdiff/net/denoiser.hpp"
#include "xmdiff/objective/objective.hpp"
#include "xmdiff/train/optimizer.hpp"

#include <nlohmann/json.hpp>

namespace xmdiff {

struct TrainConfig {
  int epochs{10};
  int batch_size{16};
  double lr_x{1e-4}, lr_y{1e-4};
  double weight_decay{1e-4};
  double ema_decay{0.999};
  std::uint64_t seed{0};
  ScheduleKind schedule_kind{ScheduleKind::cosine};
  int num_steps{50};
  double retention_min{0.01};
  DenoiserConfig model_x, model_y;
  AlignmentConfig align;
  AlphaMode alpha_mode{AlphaMode::uncertainty};
  bool use_energy{true};

  void validate() const {
    if (epochs < 1 || batch_size < 1) throw std::invalid_argument("epochs and batch_size must be >= 1");
    if (lr_x < 0.0 || lr_y < 0.0) throw std::invalid_argument("learning rates must be >= 0");
    if (!(ema_decay >= 0.0 && ema_decay < 1.0))
      throw std::invalid_argument("ema_decay must be in [0, 1)");
    model_x.validate();
    model_y.validate();
  }

  nlohmann::json to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"lr_x", lr_x},
            {"lr_y", lr_y},
            {"weight_decay", weight_decay},
            {"ema_decay", ema_decay},
            {"seed", seed},
            {"schedule_kind", to_string(schedule_kind)},
            {"num_steps", num_steps},
            {"retention_min", retention_min},
            {"model_x", model_x.to_json()},
            {"model_y", model_y.to_json()},
            {"align", align.to_json()},
            {"alpha_mode", to_string(alpha_mode)},
            {"use_energy", use_energy}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs = j.at("epochs");
    c.batch_size = j.at("batch_size");
    c.lr_x = j.at("lr_x");
    c.lr_y = j.at("lr_y");
    c.weight_decay = j.at("weight_decay");
    c.ema_decay = j.at("ema_decay");
    c.seed = j.at("seed");
    c.schedule_kind = schedule_kind_from_string(j.at("schedule_kind"));
    c.num_steps = j.at("num_steps");
    c.retention_min = j.at("retention_min");
    c.model_x = DenoiserConfig::from_json(j.at("model_x"));
    c.model_y = DenoiserConfig::from_json(j.at("model_y"));
    c.align = AlignmentConfig::from_json(j.at("align"));
    c.alpha_mode = alpha_mode_from_string(j.at("alpha_mode"));
    c.use_energy = j.value("use_energy", true);
    return c;
  }
};

inline constexpr int kCheckpointSchemaVersion = 1;

// Joint training loop: one shared timestep per batch element, independent
// noise for each modality, clean other-modality conditioning, and a single
// total loss backpropagated into both denoisers and the alignment weight.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg)
      : cfg_(cfg),
        schedule_(make_schedule(cfg.schedule_kind, cfg.num_steps, cfg.retention_min)),
        rng_(cfg.seed),
        dropout_rng_(cfg.seed ^ 0xd509bULL),
        opt_x_(cfg.lr_x, cfg.weight_decay),
        opt_y_(cfg.lr_y, cfg.weight_decay),
        opt_alpha_(cfg.lr_x, 0.0) {
    cfg_.validate();
    Rng init_x(cfg.seed ^ 0x7468657461ULL), init_y(cfg.seed ^ 0x706869ULL);
    theta_ = DenoiserParams::init(cfg.model_x, init_x);
    phi_ = DenoiserParams::init(cfg.model_y, init_y);
    alpha_.mode = cfg.alpha_mode;
    ema_theta_ = theta_.tensors;
    ema_phi_ = phi_.tensors;
    ema_alpha_ = alpha_.raw;
  }

  LossBreakdown train_step(const std::vector<SequencePair>& batch) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    const int B = static_cast<int>(batch.size());
    std::vector<int> t(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b)
      t[static_cast<std::size_t>(b)] = static_cast<int>(rng_.uniform_int(1, schedule_.num_steps));

    Batch x0, y0;
    for (const SequencePair& p : batch) {
      x0.push_back(p.x);
      y0.push_back(p.y);
    }
    std::uint64_t seed_x = static_cast<std::uint64_t>(rng_.uniform_int(0, INT64_MAX));
    std::uint64_t seed_y = static_cast<std::uint64_t>(rng_.uniform_int(0, INT64_MAX));
    NoisySample nx = forward_noise(x0, t, schedule_, seed_x);
    NoisySample ny = forward_noise(y0, t, schedule_, seed_y);

    ad::Graph g;
    ParamBinding pb_x(g, theta_), pb_y(g, phi_);
    ad::Var alpha_raw = ad::leaf(g, Eigen::MatrixXd::Constant(1, 1, alpha_.raw), true);

    std::vector<ad::Var> zx, zy;
    ad::Var dn_x, dn_y, en_x, en_y;
    for (int b = 0; b < B; ++b) {
      std::size_t sb = static_cast<std::size_t>(b);
      DenoiserOutput ox = denoise_forward(g, pb_x, theta_, nx.x_t[sb], y0[sb], t[sb],
                                          /*train_mode=*/true, &dropout_rng_);
      DenoiserOutput oy = denoise_forward(g, pb_y, phi_, ny.x_t[sb], x0[sb], t[sb],
                                          /*train_mode=*/true, &dropout_rng_);
      ad::Var x0c = ad::constant(g, x0[sb]);
      ad::Var y0c = ad::constant(g, y0[sb]);
      ad::Var dnx = denoise_loss_v(x0c, ox.x0_hat), dny = denoise_loss_v(y0c, oy.x0_hat);
      ad::Var enx = energy_loss_v(x0c, ox.x0_hat), eny = energy_loss_v(y0c, oy.x0_hat);
      dn_x = b == 0 ? dnx : ad::add(dn_x, dnx);
      dn_y = b == 0 ? dny : ad::add(dn_y, dny);
      en_x = b == 0 ? enx : ad::add(en_x, enx);
      en_y = b == 0 ? eny : ad::add(en_y, eny);
      zx.push_back(ox.latent);
      zy.push_back(oy.latent);
    }
    double inv_b = 1.0 / static_cast<double>(B);
    dn_x = ad::scale(dn_x, inv_b);
    dn_y = ad::scale(dn_y, inv_b);
    en_x = ad::scale(en_x, inv_b);
    en_y = ad::scale(en_y, inv_b);
    if (!cfg_.use_energy) {
      en_x = ad::scalar_const(g, 0.0);
      en_y = ad::scalar_const(g, 0.0);
    }

    int L = static_cast<int>(batch.front().x.rows());
    int num_windows = L / cfg_.align.window_len;
    ad::Var align = align::alignment_loss_v(g, zx, zy, cfg_.align, num_windows);

    TotalLossVars tl = total_loss_v(g, dn_x, dn_y, en_x, en_y, align, alpha_raw, cfg_.alpha_mode);

    LossBreakdown out;
    out.denoise_x = dn_x.scalar();
    out.denoise_y = dn_y.scalar();
    out.energy_x = en_x.scalar();
    out.energy_y = en_y.scalar();
    out.align = align.scalar();
    out.alpha_effective = tl.alpha_effective.scalar();
    out.total = tl.total.scalar();

    if (!out.finite()) {
      // skip the update; the RNG streams have already advanced
      ++skipped_;
      ++step_;
      incidents_.push_back("step " + std::to_string(step_) + ": non-finite loss, update skipped");
      log_.push_back(out);
      return out;
    }

    g.backward(tl.total.id());
    TensorMap grads_x, grads_y;
    pb_x.export_grads(grads_x);
    pb_y.export_grads(grads_y);
    opt_x_.update(theta_.tensors, grads_x);
    opt_y_.update(phi_.tensors, grads_y);
    TensorMap alpha_t{{"raw", Eigen::MatrixXd::Constant(1, 1, alpha_.raw)}};
    TensorMap alpha_g{{"raw", alpha_raw.grad()}};
    opt_alpha_.update(alpha_t, alpha_g);
    alpha_.raw = alpha_t["raw"](0, 0);

    ema_update(ema_theta_, theta_.tensors, cfg_.ema_decay);
    ema_update(ema_phi_, phi_.tensors, cfg_.ema_decay);
    ema_update(ema_alpha_, alpha_.raw, cfg_.ema_decay);

    ++step_;
    log_.push_back(out);
    return out;
  }

  // One pass over the data in shuffled batches.
  void train_epoch(const std::vector<SequencePair>& data) {
    if (data.empty()) throw std::invalid_argument("train_epoch: empty dataset");
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng_.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg_.batch_size)) {
      std::vector<SequencePair> batch;
      for (std::size_t i = start;
           i < std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch_size)); ++i)
        batch.push_back(data[order[i]]);
      train_step(batch);
    }
  }

  void train(const std::vector<SequencePair>& data) {
    for (int e = 0; e < cfg_.epochs; ++e) train_epoch(data);
  }

  // Evaluation weights: the EMA shadows, never the live parameters.
  DenoiserParams ema_theta() const {
    DenoiserParams p = theta_;
    p.tensors = ema_theta_;
    return p;
  }
  DenoiserParams ema_phi() const {
    DenoiserParams p = phi_;
    p.tensors = ema_phi_;
    return p;
  }

  DenoiserParams& theta() { return theta_; }
  DenoiserParams& phi() { return phi_; }
  AlphaParam& alpha() { return alpha_; }
  double ema_alpha() const { return ema_alpha_; }
  const TrainConfig& config() const { return cfg_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  std::int64_t step() const { return step_; }
  std::int64_t skipped() const { return skipped_; }
  const std::vector<LossBreakdown>& log() const { return log_; }
  const std::vector<std::string>& incidents() const { return incidents_; }

  void write_log_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open log for write: " + path);
    os << "step,denoise_x,denoise_y,energy_x,energy_y,align,alpha_effective,total\n";
    char buf[512];
    for (std::size_t i = 0; i < log_.size(); ++i) {
      const LossBreakdown& b = log_[i];
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", i + 1,
                    b.denoise_x, b.denoise_y, b.energy_x, b.energy_y, b.align, b.alpha_effective,
                    b.total);
      os << buf;
    }
  }

  void save_checkpoint(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest = {{"schema_version", kCheckpointSchemaVersion},
                               {"step", step_},
                               {"skipped", skipped_},
                               {"config", cfg_.to_json()},
                               {"schedule_beta", schedule_.beta}};
    std::ofstream ms(dir + "/manifest.json");
    if (!ms) throw std::runtime_error("cannot write checkpoint manifest");
    ms << manifest.dump(2) << "\n";

    TensorMap all;
    for (const auto& [name, t] : theta_.tensors) all["theta." + name] = t;
    for (const auto& [name, t] : phi_.tensors) all["phi." + name] = t;
    all["alpha.raw"] = Eigen::MatrixXd::Constant(1, 1, alpha_.raw);
    for (const auto& [name, t] : ema_theta_) all["ema.theta." + name] = t;
    for (const auto& [name, t] : ema_phi_) all["ema.phi." + name] = t;
    all["ema.alpha"] = Eigen::MatrixXd::Constant(1, 1, ema_alpha_);
    opt_x_.export_state(all, "adam_x");
    opt_y_.export_state(all, "adam_y");
    opt_alpha_.export_state(all, "adam_a");
    io::save_tensors(dir + "/arrays.bin", all);

    std::ofstream rs(dir + "/rng_state.txt");
    rs << rng_.serialize_state() << "\n" << dropout_rng_.serialize_state() << "\n";
  }

  static Trainer load_checkpoint(const std::string& dir) {
    std::ifstream ms(dir + "/manifest.json");
    if (!ms) throw std::runtime_error("checkpoint manifest missing: " + dir);
    nlohmann::json manifest = nlohmann::json::parse(ms);
    int version = manifest.at("schema_version");
    if (version > kCheckpointSchemaVersion)
      throw std::runtime_error("checkpoint schema version " + std::to_string(version) +
                               " is newer than supported");
    Trainer t(TrainConfig::from_json(manifest.at("config")));
    t.step_ = manifest.at("step");
    t.skipped_ = manifest.at("skipped");

    TensorMap all = io::load_tensors(dir + "/arrays.bin");
    for (auto& [name, tensor] : t.theta_.tensors) tensor = all.at("theta." + name);
    for (auto& [name, tensor] : t.phi_.tensors) tensor = all.at("phi." + name);
    t.alpha_.raw = all.at("alpha.raw")(0, 0);
    for (auto& [name, tensor] : t.ema_theta_) tensor = all.at("ema.theta." + name);
    for (auto& [name, tensor] : t.ema_phi_) tensor = all.at("ema.phi." + name);
    t.ema_alpha_ = all.at("ema.alpha")(0, 0);
    t.opt_x_.import_state(all, "adam_x");
    t.opt_y_.import_state(all, "adam_y");
    t.opt_alpha_.import_state(all, "adam_a");

    std::ifstream rs(dir + "/rng_state.txt");
    if (!rs) throw std::runtime_error("checkpoint rng state missing: " + dir);
    std::string line;
    std::getline(rs, line);
    t.rng_.restore_state(line);
    std::getline(rs, line);
    t.dropout_rng_.restore_state(line);
    return t;
  }

 private:
  TrainConfig cfg_;
  NoiseSchedule schedule_;
  Rng rng_, dropout_rng_;
  DenoiserParams theta_, phi_;
  AlphaParam alpha_;
  TensorMap ema_theta_, ema_phi_;
  double ema_alpha_{0.0};
  AdamW opt_x_, opt_y_, opt_alpha_;
  std::int64_t step_{0};
  std::int64_t skipped_{0};
  std::vector<LossBreakdown> log_;
  std::vector<std::string> incidents_;
};

}  // namespace xmdiff
