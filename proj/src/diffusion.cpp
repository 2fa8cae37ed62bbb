#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "flap/diffusion.hpp"
#include "flap/error.hpp"

namespace flap {

NoiseSchedule make_schedule(std::size_t T, double beta_min, double beta_max) {
  if (T == 0) throw ConfigError("schedule: T must be positive");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) throw ConfigError("schedule: invalid beta range");
  NoiseSchedule s;
  s.betas.resize(T);
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  double ab = 1.0;
  for (std::size_t t = 0; t < T; ++t) {
    const double f = T == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(T - 1);
    s.betas[t] = beta_min + f * (beta_max - beta_min);
    s.alphas[t] = 1.0 - s.betas[t];
    ab *= s.alphas[t];
    s.alpha_bars[t] = ab;
  }
  return s;
}

Eigen::VectorXd forward_noise(const Eigen::VectorXd& x0, std::size_t t, const Eigen::VectorXd& eps,
                              const NoiseSchedule& schedule) {
  if (t >= schedule.size()) throw DimensionError("forward_noise: timestep out of range");
  if (x0.size() != eps.size()) throw DimensionError("forward_noise: x0 and eps differ in length");
  const double ab = schedule.alpha_bars[t];
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

namespace {

struct Unit {
  std::size_t seq, start;
};

std::vector<Unit> enumerate_units(const TrainingSet& data, std::size_t window, std::size_t dim) {
  std::vector<Unit> units;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const auto& seq = data[s];
    if (static_cast<std::size_t>(seq.x0.cols()) != dim || static_cast<std::size_t>(seq.ref.size()) != dim) {
      throw DimensionError("train: sequence " + std::to_string(s) + " has the wrong frame width");
    }
    if (seq.cond.rows() != seq.x0.rows() || seq.cond.cols() != static_cast<Eigen::Index>(kCondDim)) {
      throw DimensionError("train: sequence " + std::to_string(s) + " needs one 120-wide condition per frame");
    }
    const auto n = static_cast<std::size_t>(seq.x0.rows());
    for (std::size_t f = 0; f + window <= n; ++f) units.push_back({s, f});
  }
  return units;
}

}  // namespace

DenoiserParams train(const DenoiserParams& init, const TrainingSet& data, const TrainConfig& cfg,
                     std::vector<LogRecord>* log) {
  if (cfg.window == 0 || cfg.batch_size == 0) throw ConfigError("train: window and batch_size must be positive");
  if (!(cfg.lr > 0.0)) throw ConfigError("train: lr must be positive");
  const std::size_t D = init.config.dim, W = cfg.window;
  const auto units = enumerate_units(data, W, D);
  if (units.empty()) throw ConfigError("train: no training units (sequences shorter than the window?)");
  const NoiseSchedule schedule = make_schedule(init.config.steps, init.config.beta_min, init.config.beta_max);

  DenoiserParams p = init;
  p.condition_mask = cfg.condition_mask;
  if (W > 1) p.window = W;

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_t(0, schedule.size() - 1);
  std::vector<std::size_t> order(units.size());
  std::size_t cursor = order.size();

  const std::size_t B = cfg.batch_size;
  Batch batch;
  batch.window = W;
  batch.x0.resize(static_cast<Eigen::Index>(B * W), static_cast<Eigen::Index>(D));
  batch.eps.resize(batch.x0.rows(), batch.x0.cols());
  batch.ref.resize(batch.x0.rows(), batch.x0.cols());
  batch.cond.resize(batch.x0.rows(), static_cast<Eigen::Index>(kCondDim));
  batch.t.resize(B);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (std::size_t b = 0; b < B; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const Unit u = units[order[cursor++]];
      const auto& seq = data[u.seq];
      batch.t[b] = pick_t(rng);
      for (std::size_t w = 0; w < W; ++w) {
        const auto row = static_cast<Eigen::Index>(b * W + w);
        const auto src = static_cast<Eigen::Index>(u.start + w);
        batch.x0.row(row) = seq.x0.row(src);
        batch.ref.row(row) = seq.ref.transpose();
        batch.cond.row(row) = seq.cond.row(src);
        for (Eigen::Index i = 0; i < batch.eps.cols(); ++i) batch.eps(row, i) = normal(rng);
      }
    }
    const LossAndGrad lg = loss_and_gradients(p, batch, schedule, cfg.trainable, cfg.condition_mask);
    if (!std::isfinite(lg.loss)) {
      throw DivergenceError("training diverged at step " + std::to_string(step) + " of stage " + cfg.stage);
    }
    for (std::size_t i = 0; i < p.values.size(); ++i) p.values[i] -= cfg.lr * lg.grad[i];
    if (log) log->push_back({step, cfg.stage, lg.loss});
  }
  return p;
}

std::vector<LandmarkFrame> sample(const DenoiserParams& params, const LandmarkFrame& ref,
                                  const ConditionSequence& conditions, const NoiseSchedule& schedule,
                                  std::uint64_t seed) {
  conditions.validate();
  const DenoiserConfig& cfg = params.config;
  const std::size_t D = cfg.dim, N = conditions.size();
  const std::size_t W = std::max<std::size_t>(1, params.window);
  const Eigen::VectorXd r = normalize_frame(cfg, ref);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(D));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = normal(rng);
  }
  Eigen::MatrixXd refs = r.transpose().replicate(static_cast<Eigen::Index>(N), 1);
  Eigen::MatrixXd cond(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(kCondDim));
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t k = 0; k < kCondDim; ++k) cond(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = conditions.frames[i][k];
  }

  // Full windows first, then the tail as one shorter window.
  const std::size_t full = (N / W) * W;
  auto predict = [&](const Eigen::MatrixXd& xt, std::size_t t) {
    Eigen::MatrixXd eps(xt.rows(), xt.cols());
    auto run = [&](std::size_t lo, std::size_t hi, std::size_t win) {
      if (hi <= lo) return;
      DenoiseInput in;
      const auto n = static_cast<Eigen::Index>(hi - lo), l = static_cast<Eigen::Index>(lo);
      in.x_t = xt.middleRows(l, n);
      in.ref = refs.middleRows(l, n);
      in.cond = cond.middleRows(l, n);
      in.window = win;
      in.t.assign((hi - lo) / win, t);
      eps.middleRows(l, n) = predict_noise(params, in, params.condition_mask, schedule);
    };
    run(0, full, W);
    run(full, N, N - full);
    return eps;
  };

  for (std::size_t step = schedule.size(); step-- > 0;) {
    const double beta = schedule.betas[step], alpha = schedule.alphas[step], ab = schedule.alpha_bars[step];
    const Eigen::MatrixXd eps = predict(x, step);
    x = (x - (beta / std::sqrt(1.0 - ab)) * eps) / std::sqrt(alpha);
    if (step > 0) {
      const double sd = std::sqrt(beta);
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) += sd * normal(rng);
      }
    }
  }

  std::vector<LandmarkFrame> out;
  out.reserve(N);
  for (std::size_t i = 0; i < N; ++i) out.push_back(denormalize_frame(cfg, x.row(static_cast<Eigen::Index>(i)).transpose()));
  return out;
}

Eigen::VectorXd normalize_frame(const DenoiserConfig& cfg, const LandmarkFrame& frame) {
  if (static_cast<std::size_t>(frame.size()) != cfg.dim) {
    throw DimensionError("normalize_frame: expected " + std::to_string(cfg.dim / 2) + " landmarks, got " +
                         std::to_string(frame.rows()));
  }
  Eigen::VectorXd x(static_cast<Eigen::Index>(cfg.dim));
  for (Eigen::Index k = 0; k < frame.rows(); ++k) {
    for (Eigen::Index a = 0; a < 2; ++a) {
      const auto i = 2 * k + a;
      x(i) = (frame(k, a) - cfg.norm_mean[static_cast<std::size_t>(i)]) / cfg.norm_scale;
    }
  }
  return x;
}

LandmarkFrame denormalize_frame(const DenoiserConfig& cfg, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != cfg.dim) throw DimensionError("denormalize_frame: wrong vector length");
  LandmarkFrame f(static_cast<Eigen::Index>(cfg.dim / 2), 2);
  for (Eigen::Index k = 0; k < f.rows(); ++k) {
    for (Eigen::Index a = 0; a < 2; ++a) {
      const auto i = 2 * k + a;
      f(k, a) = x(i) * cfg.norm_scale + cfg.norm_mean[static_cast<std::size_t>(i)];
    }
  }
  return f;
}

DenoiserConfig denoiser_config_for(const ModelAsset& asset, const Camera& camera) {
  DenoiserConfig cfg;
  const LandmarkFrame rest = evaluate_landmarks(asset, HeadCoefficients::zeros(asset), camera);
  cfg.dim = static_cast<std::size_t>(rest.size());
  cfg.norm_mean.resize(cfg.dim);
  for (Eigen::Index k = 0; k < rest.rows(); ++k) {
    cfg.norm_mean[static_cast<std::size_t>(2 * k)] = rest(k, 0);
    cfg.norm_mean[static_cast<std::size_t>(2 * k + 1)] = rest(k, 1);
  }
  cfg.norm_scale = camera.scale;
  return cfg;
}

TrainingSet make_training_set(const DenoiserConfig& cfg, const std::vector<LandmarkFrame>& refs,
                              const std::vector<std::vector<LandmarkFrame>>& targets,
                              const std::vector<ConditionSequence>& conditions) {
  if (refs.size() != targets.size() || refs.size() != conditions.size()) {
    throw DimensionError("make_training_set: refs, targets and conditions differ in count");
  }
  TrainingSet out;
  out.reserve(refs.size());
  for (std::size_t s = 0; s < refs.size(); ++s) {
    const auto& tg = targets[s];
    const auto& cs = conditions[s];
    if (tg.size() != cs.size()) {
      throw DimensionError("make_training_set: sequence " + std::to_string(s) + " has " + std::to_string(tg.size()) +
                           " frames but " + std::to_string(cs.size()) + " conditions");
    }
    TrainSequence seq;
    seq.ref = normalize_frame(cfg, refs[s]);
    seq.x0.resize(static_cast<Eigen::Index>(tg.size()), static_cast<Eigen::Index>(cfg.dim));
    seq.cond.resize(static_cast<Eigen::Index>(tg.size()), static_cast<Eigen::Index>(kCondDim));
    for (std::size_t f = 0; f < tg.size(); ++f) {
      seq.x0.row(static_cast<Eigen::Index>(f)) = normalize_frame(cfg, tg[f]).transpose();
      for (std::size_t k = 0; k < kCondDim; ++k) seq.cond(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(k)) = cs.frames[f][k];
    }
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace flap
