#pragma once

// Shared by the unit tests and the acceptance binary.

#include <random>
#include <vector>

#include "flap/diffusion.hpp"

namespace flap::test {

inline DenoiserConfig small_config(std::size_t dim = 6, std::size_t hidden = 5, std::size_t cond_hidden = 4) {
  DenoiserConfig c;
  c.dim = dim;
  c.hidden = hidden;
  c.cond_hidden = cond_hidden;
  c.steps = 100;
  c.norm_mean.assign(dim, 0.0);
  return c;
}

// Initialized weights with the temporal block moved off zero, so every
// block has a non-trivial gradient.
inline DenoiserParams busy_params(const DenoiserConfig& c, std::uint64_t seed) {
  DenoiserParams p = init_params(c, seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : p.view("temporal.w")) v = 0.3 * n(rng);
  for (double& v : p.view("temporal.b")) v = 0.3 * n(rng);
  for (const char* name : {"trunk.out.w", "motion.w2", "expr.w2", "spatial.w2"}) {
    for (double& v : p.view(name)) v += 0.2 * n(rng);
  }
  return p;
}

inline Batch random_batch(const DenoiserConfig& c, std::size_t n_frames, std::size_t window, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto N = static_cast<Eigen::Index>(n_frames), D = static_cast<Eigen::Index>(c.dim);
  Batch b;
  b.window = window;
  b.x0.resize(N, D);
  b.eps.resize(N, D);
  b.ref.resize(N, D);
  b.cond.resize(N, 120);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = 0; j < D; ++j) {
      b.x0(i, j) = n(rng);
      b.eps(i, j) = n(rng);
      b.ref(i, j) = n(rng);
    }
    for (Eigen::Index k = 0; k < 120; ++k) b.cond(i, k) = 0.3 * n(rng);
  }
  std::uniform_int_distribution<std::size_t> t(0, c.steps - 1);
  for (std::size_t u = 0; u < n_frames / window; ++u) b.t.push_back(t(rng));
  return b;
}

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

// Central differences at `per_block` seeded coordinates of block `b`.
inline GradCheck gradient_check(const DenoiserParams& p, const Batch& batch, const NoiseSchedule& s, Block b,
                                std::size_t per_block, std::uint64_t seed, double h = 1e-5) {
  const LossAndGrad lg = loss_and_gradients(p, batch, s, BlockMask::all(), ConditionMask::all());
  std::vector<std::size_t> coords;
  for (auto [lo, hi] : p.block_ranges(b)) {
    for (std::size_t i = lo; i < hi; ++i) coords.push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  if (coords.size() > per_block) coords.resize(per_block);
  GradCheck r;
  DenoiserParams q = p;
  for (std::size_t i : coords) {
    const double v = q.values[i];
    q.values[i] = v + h;
    const double lp = loss_and_gradients(q, batch, s, BlockMask::none(), ConditionMask::all()).loss;
    q.values[i] = v - h;
    const double lm = loss_and_gradients(q, batch, s, BlockMask::none(), ConditionMask::all()).loss;
    q.values[i] = v;
    const double fd = (lp - lm) / (2.0 * h);
    const double an = lg.grad[i];
    // Relative error with a floor so coordinates whose gradient is ~0 are
    // judged on absolute agreement.
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
    r.max_rel = std::max(r.max_rel, rel);
    ++r.checked;
  }
  return r;
}

}  // namespace flap::test
