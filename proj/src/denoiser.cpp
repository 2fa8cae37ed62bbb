// Denoiser network: parameter layout, forward pass and hand-written reverse
// pass. Dense products go through the kernel dispatch table.

#include <algorithm>
#include <cmath>
#include <random>

#include "flap/diffusion.hpp"
#include "flap/error.hpp"
#include "flap/kernels.hpp"
#include "flap/parallel.hpp"

namespace flap {

namespace {

constexpr std::size_t kTimeFeatures = 8;
constexpr std::size_t kRotFeatures = 9;
constexpr std::size_t kExprInputs = kCondDim - cond_slice::kEyes.begin;  // 117
// Units (frames or windows) per gradient buffer; fixed so the reduction order
// does not depend on the thread count.
constexpr std::size_t kGroupUnits = 8;

constexpr std::array<const char*, kNumBlocks> kBlockNames{"time",    "trunk",      "motion",  "ref_encoder",
                                                          "spatial", "expression", "temporal"};

}  // namespace

const char* block_name(Block b) { return kBlockNames[static_cast<std::size_t>(b)]; }

Block block_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumBlocks; ++i) {
    if (name == kBlockNames[i]) return static_cast<Block>(i);
  }
  throw ConfigError("unknown block \"" + std::string(name) + "\"");
}

BlockMask BlockMask::all() {
  BlockMask m;
  m.on.fill(true);
  return m;
}

BlockMask BlockMask::none() { return {}; }

BlockMask BlockMask::only(std::initializer_list<Block> blocks) {
  BlockMask m;
  for (Block b : blocks) m.on[static_cast<std::size_t>(b)] = true;
  return m;
}

BlockMask BlockMask::without(Block b) const {
  BlockMask m = *this;
  m.on[static_cast<std::size_t>(b)] = false;
  return m;
}

HeadCondition ConditionMask::apply(const HeadCondition& c) const {
  HeadCondition out = c;
  auto clear = [&](bool keep, Slice s) {
    if (!keep) std::fill(out.begin() + static_cast<std::ptrdiff_t>(s.begin), out.begin() + static_cast<std::ptrdiff_t>(s.end), 0.0);
  };
  clear(global, cond_slice::kGlobal);
  clear(eyes, cond_slice::kEyes);
  clear(jaw, cond_slice::kJaw);
  clear(eyelids, cond_slice::kEyelids);
  clear(expr, cond_slice::kExpr);
  return out;
}

void DenoiserConfig::validate() const {
  if (dim == 0 || hidden == 0 || cond_hidden == 0) throw ConfigError("denoiser: widths must be positive");
  if (steps == 0) throw ConfigError("denoiser: diffusion steps must be positive");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) throw ConfigError("denoiser: invalid beta range");
  if (!(uncertainty_init > 0.0)) throw ConfigError("denoiser: uncertainty_init must be positive");
  if (norm_mean.size() != dim) throw ConfigError("denoiser: norm_mean must have dim entries");
  if (!(norm_scale > 0.0)) throw ConfigError("denoiser: norm_scale must be positive");
}

const TensorInfo& DenoiserParams::tensor(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw Error("denoiser: no tensor named " + std::string(name));
}

std::span<double> DenoiserParams::view(std::string_view name) {
  const auto& t = tensor(name);
  return {values.data() + t.offset, t.size()};
}

std::span<const double> DenoiserParams::view(std::string_view name) const {
  const auto& t = tensor(name);
  return {values.data() + t.offset, t.size()};
}

std::vector<std::pair<std::size_t, std::size_t>> DenoiserParams::block_ranges(Block b) const {
  std::vector<std::pair<std::size_t, std::size_t>> r;
  for (const auto& t : tensors) {
    if (t.block == b) r.emplace_back(t.offset, t.offset + t.size());
  }
  return r;
}

DenoiserParams zero_params(const DenoiserConfig& cfg) {
  cfg.validate();
  const std::size_t D = cfg.dim, H = cfg.hidden, M = cfg.cond_hidden;
  DenoiserParams p;
  p.config = cfg;
  std::size_t off = 0;
  auto add = [&](const char* name, Block b, std::size_t rows, std::size_t cols) {
    p.tensors.push_back({name, b, rows, cols, off});
    off += rows * cols;
  };
  add("time.w", Block::Time, 2 * H, kTimeFeatures);
  add("time.b", Block::Time, 2 * H, 1);
  add("trunk.in.w", Block::Trunk, H, D);
  add("trunk.in.b", Block::Trunk, H, 1);
  add("trunk.out.w", Block::Trunk, D, H);
  add("trunk.out.b", Block::Trunk, D, 1);
  add("trunk.skip", Block::Trunk, 2, 1);  // output gain, log data-scale prior
  add("motion.w1", Block::Motion, M, kRotFeatures);
  add("motion.b1", Block::Motion, M, 1);
  add("motion.w2", Block::Motion, 2 * H, M);
  add("motion.b2", Block::Motion, 2 * H, 1);
  add("ref.w", Block::RefEncoder, H, D);
  add("ref.b", Block::RefEncoder, H, 1);
  add("spatial.w1", Block::Spatial, H, H);
  add("spatial.wr", Block::Spatial, H, H);
  add("spatial.b1", Block::Spatial, H, 1);
  add("spatial.w2", Block::Spatial, H, H);
  add("spatial.b2", Block::Spatial, H, 1);
  add("expr.w1", Block::Expression, M, kExprInputs);
  add("expr.b1", Block::Expression, M, 1);
  add("expr.w2", Block::Expression, 2 * H, M);
  add("expr.b2", Block::Expression, 2 * H, 1);
  add("temporal.w", Block::Temporal, H, H);
  add("temporal.b", Block::Temporal, H, 1);
  p.values.assign(off, 0.0);
  return p;
}

DenoiserParams init_params(const DenoiserConfig& cfg, std::uint64_t seed) {
  DenoiserParams p = zero_params(cfg);
  const double D = static_cast<double>(cfg.dim), H = static_cast<double>(cfg.hidden);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](const char* name, double scale) {
    for (double& v : p.view(name)) v = scale * normal(rng);
  };
  fill("time.w", 0.1);
  fill("trunk.in.w", 1.0 / std::sqrt(D));
  fill("trunk.out.w", 0.1 / std::sqrt(H));
  fill("motion.w1", 1.0);
  fill("motion.w2", 0.1);
  fill("ref.w", 1.0 / std::sqrt(D));
  fill("spatial.w1", 1.0 / std::sqrt(H));
  fill("spatial.wr", 1.0 / std::sqrt(H));
  fill("spatial.w2", 0.1 / std::sqrt(H));
  fill("expr.w1", 0.3);
  fill("expr.w2", 0.1);
  auto skip = p.view("trunk.skip");
  skip[0] = 1.0;
  skip[1] = std::log(cfg.uncertainty_init);
  return p;
}

namespace {

// Row-major dense layer.
struct Dense {
  const double* w;
  const double* b;
  std::size_t rows, cols;
  std::size_t w_off, b_off;
};

struct Net {
  Dense time, in, out, m1, m2, ref, s1, sr, s2, e1, e2, tw;
  double gain, log_u;
  std::size_t skip_off;
  std::size_t D, H, M;

  explicit Net(const DenoiserParams& p) : D(p.config.dim), H(p.config.hidden), M(p.config.cond_hidden) {
    auto dense = [&](const char* w, const char* b) {
      const auto& tw_ = p.tensor(w);
      Dense d{p.values.data() + tw_.offset, nullptr, tw_.rows, tw_.cols, tw_.offset, 0};
      if (b) {
        const auto& tb = p.tensor(b);
        d.b = p.values.data() + tb.offset;
        d.b_off = tb.offset;
      }
      return d;
    };
    time = dense("time.w", "time.b");
    in = dense("trunk.in.w", "trunk.in.b");
    out = dense("trunk.out.w", "trunk.out.b");
    m1 = dense("motion.w1", "motion.b1");
    m2 = dense("motion.w2", "motion.b2");
    ref = dense("ref.w", "ref.b");
    s1 = dense("spatial.w1", "spatial.b1");
    sr = dense("spatial.wr", nullptr);
    s2 = dense("spatial.w2", "spatial.b2");
    e1 = dense("expr.w1", "expr.b1");
    e2 = dense("expr.w2", "expr.b2");
    tw = dense("temporal.w", "temporal.b");
    const auto& sk = p.tensor("trunk.skip");
    skip_off = sk.offset;
    gain = p.values[sk.offset];
    log_u = p.values[sk.offset + 1];
  }
};

void dense_fwd(const Dense& L, const double* x, double* y) {
  if (L.b) {
    std::copy(L.b, L.b + L.rows, y);
  } else {
    std::fill(y, y + L.rows, 0.0);
  }
  kernels::active().gemv_acc(L.w, L.rows, L.cols, x, y);
}

// Accumulates dW += gy x^T, db += gy (when `grad` is set) and gx += W^T gy
// (when `gx` is set).
void dense_bwd(const Dense& L, const double* x, const double* gy, double* grad, double* gx) {
  const auto& k = kernels::active();
  if (grad) {
    k.ger_acc(L.rows, L.cols, gy, x, grad + L.w_off);
    if (L.b) k.axpy(1.0, gy, grad + L.b_off, L.rows);
  }
  if (gx) k.gemv_t_acc(L.w, L.rows, L.cols, gy, gx);
}

std::array<double, kRotFeatures> rotation_features(const HeadCondition& c) {
  const Mat3 R = axis_angle_to_matrix(Vec3(c[0], c[1], c[2])) - Mat3::Identity();
  std::array<double, kRotFeatures> f;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) f[static_cast<std::size_t>(3 * i + j)] = R(i, j);
  }
  return f;
}

struct StepTerms {
  double sigma;       // sqrt((1 - abar) / abar)
  double inv_sqrt_ab; // 1 / sqrt(abar)
  std::array<double, kTimeFeatures> features;
};

StepTerms step_terms(const NoiseSchedule& s, std::size_t t) {
  if (t >= s.size()) throw DimensionError("denoiser: timestep out of range");
  const double ab = s.alpha_bars[t];
  StepTerms st;
  st.sigma = std::sqrt((1.0 - ab) / ab);
  st.inv_sqrt_ab = 1.0 / std::sqrt(ab);
  const double tf = static_cast<double>(t) / static_cast<double>(s.size());
  const double pi = 3.14159265358979323846;
  const int ks[3] = {1, 2, 4};
  for (int i = 0; i < 3; ++i) {
    st.features[static_cast<std::size_t>(i)] = std::sin(pi * ks[i] * tf);
    st.features[static_cast<std::size_t>(3 + i)] = std::cos(pi * ks[i] * tf);
  }
  st.features[6] = std::log(st.sigma) / 5.0;
  st.features[7] = std::sqrt(ab);
  return st;
}

// Activations of one frame, kept for the reverse pass.
struct FrameCache {
  std::vector<double> xt, xs, refv, gt, a, h0, qm, m, h1, r, qs, h2, ce, qe, e, h3, h4, F, out;
  std::array<double, kRotFeatures> rf{};

  void resize(std::size_t D, std::size_t H, std::size_t M) {
    xt.resize(D);
    xs.resize(D);
    refv.resize(D);
    gt.resize(2 * H);
    a.resize(H);
    h0.resize(H);
    qm.resize(M);
    m.resize(2 * H);
    h1.resize(H);
    r.resize(H);
    qs.resize(H);
    h2.resize(H);
    ce.resize(kExprInputs);
    qe.resize(M);
    e.resize(2 * H);
    h3.resize(H);
    h4.resize(H);
    F.resize(D);
    out.resize(D);
  }
};

struct UnitCache {
  std::vector<FrameCache> frames;
  std::vector<double> pbar;  // mean of tanh(h3) over the window
  StepTerms st{};
};

void tanh_inplace(std::vector<double>& v) {
  for (double& x : v) x = std::tanh(x);
}

// Forward pass over one unit (W frames sharing t). Fills caches and the
// predicted noise in cache.out.
void forward_unit(const Net& net, const StepTerms& st, const double* const* xt, const double* const* ref,
                  const HeadCondition* cond, std::size_t W, UnitCache& uc) {
  const std::size_t D = net.D, H = net.H, M = net.M;
  uc.st = st;
  uc.frames.resize(W);
  for (std::size_t w = 0; w < W; ++w) {
    FrameCache& fc = uc.frames[w];
    fc.resize(D, H, M);
    std::copy(xt[w], xt[w] + D, fc.xt.begin());
    std::copy(ref[w], ref[w] + D, fc.refv.begin());
    for (std::size_t i = 0; i < D; ++i) fc.xs[i] = fc.xt[i] * st.inv_sqrt_ab;

    dense_fwd(net.time, st.features.data(), fc.gt.data());
    dense_fwd(net.in, fc.xt.data(), fc.a.data());
    for (std::size_t i = 0; i < H; ++i) fc.h0[i] = fc.a[i] * (1.0 + fc.gt[i]) + fc.gt[H + i];

    fc.rf = rotation_features(cond[w]);
    dense_fwd(net.m1, fc.rf.data(), fc.qm.data());
    tanh_inplace(fc.qm);
    dense_fwd(net.m2, fc.qm.data(), fc.m.data());
    for (std::size_t i = 0; i < H; ++i) fc.h1[i] = fc.h0[i] * (1.0 + fc.m[i]) + fc.m[H + i];

    dense_fwd(net.ref, fc.refv.data(), fc.r.data());
    tanh_inplace(fc.r);
    dense_fwd(net.s1, fc.h1.data(), fc.qs.data());
    kernels::active().gemv_acc(net.sr.w, H, H, fc.r.data(), fc.qs.data());
    tanh_inplace(fc.qs);
    dense_fwd(net.s2, fc.qs.data(), fc.h2.data());
    for (std::size_t i = 0; i < H; ++i) fc.h2[i] += fc.h1[i];

    std::copy(cond[w].begin() + cond_slice::kEyes.begin, cond[w].end(), fc.ce.begin());
    dense_fwd(net.e1, fc.ce.data(), fc.qe.data());
    tanh_inplace(fc.qe);
    dense_fwd(net.e2, fc.qe.data(), fc.e.data());
    for (std::size_t i = 0; i < H; ++i) fc.h3[i] = fc.h2[i] * (1.0 + fc.e[i]) + fc.e[H + i];
  }

  if (W > 1) {
    uc.pbar.assign(H, 0.0);
    for (const auto& fc : uc.frames) {
      for (std::size_t i = 0; i < H; ++i) uc.pbar[i] += std::tanh(fc.h3[i]);
    }
    for (double& v : uc.pbar) v /= static_cast<double>(W);
    std::vector<double> mix(H);
    dense_fwd(net.tw, uc.pbar.data(), mix.data());
    for (auto& fc : uc.frames) {
      for (std::size_t i = 0; i < H; ++i) fc.h4[i] = fc.h3[i] + mix[i];
    }
  } else {
    uc.frames[0].h4 = uc.frames[0].h3;
  }

  const double u2 = std::exp(2.0 * net.log_u);
  const double c0 = st.sigma / (st.sigma * st.sigma + u2);
  for (auto& fc : uc.frames) {
    dense_fwd(net.out, fc.h4.data(), fc.F.data());
    for (std::size_t i = 0; i < D; ++i) fc.out[i] = net.gain * c0 * (fc.xs[i] - fc.F[i]);
  }
}

// Reverse pass for one unit given dL/d(out) per frame. Accumulates into
// `grad` only for blocks in `train`.
void backward_unit(const Net& net, const UnitCache& uc, const std::vector<std::vector<double>>& gout,
                   const BlockMask& train, double* grad) {
  const std::size_t D = net.D, H = net.H, M = net.M;
  const std::size_t W = uc.frames.size();
  const StepTerms& st = uc.st;
  const double u2 = std::exp(2.0 * net.log_u);
  const double denom = st.sigma * st.sigma + u2;
  const double c0 = st.sigma / denom;
  auto g = [&](Block b) { return train[b] ? grad : nullptr; };

  std::vector<std::vector<double>> dh4(W, std::vector<double>(H, 0.0));
  std::vector<double> dF(D);
  for (std::size_t w = 0; w < W; ++w) {
    const FrameCache& fc = uc.frames[w];
    const auto& go = gout[w];
    if (train[Block::Trunk]) {
      double dgain = 0.0, dlogu = 0.0;
      for (std::size_t i = 0; i < D; ++i) {
        dgain += go[i] * c0 * (fc.xs[i] - fc.F[i]);
        dlogu += go[i] * fc.out[i] * (-2.0 * u2 / denom);
      }
      grad[net.skip_off] += dgain;
      grad[net.skip_off + 1] += dlogu;
    }
    for (std::size_t i = 0; i < D; ++i) dF[i] = -net.gain * c0 * go[i];
    dense_bwd(net.out, fc.h4.data(), dF.data(), g(Block::Trunk), dh4[w].data());
  }

  std::vector<std::vector<double>> dh3 = dh4;
  if (W > 1) {
    std::vector<double> dsum(H, 0.0);
    for (const auto& d : dh4) {
      for (std::size_t i = 0; i < H; ++i) dsum[i] += d[i];
    }
    std::vector<double> dpbar(H, 0.0);
    dense_bwd(net.tw, uc.pbar.data(), dsum.data(), g(Block::Temporal), dpbar.data());
    for (std::size_t w = 0; w < W; ++w) {
      const FrameCache& fc = uc.frames[w];
      for (std::size_t i = 0; i < H; ++i) {
        const double p = std::tanh(fc.h3[i]);
        dh3[w][i] += dpbar[i] / static_cast<double>(W) * (1.0 - p * p);
      }
    }
  }

  std::vector<double> dh2(H), de(2 * H), dqe(M), dqs(H), dh1(H), dr(H), dh0(H), dm(2 * H), dqm(M), da(H), dgt(2 * H);
  for (std::size_t w = 0; w < W; ++w) {
    const FrameCache& fc = uc.frames[w];
    const auto& d3 = dh3[w];

    for (std::size_t i = 0; i < H; ++i) {
      dh2[i] = d3[i] * (1.0 + fc.e[i]);
      de[i] = d3[i] * fc.h2[i];
      de[H + i] = d3[i];
    }
    if (train[Block::Expression]) {
      std::fill(dqe.begin(), dqe.end(), 0.0);
      dense_bwd(net.e2, fc.qe.data(), de.data(), grad, dqe.data());
      for (std::size_t i = 0; i < M; ++i) dqe[i] *= 1.0 - fc.qe[i] * fc.qe[i];
      dense_bwd(net.e1, fc.ce.data(), dqe.data(), grad, nullptr);
    }

    std::copy(dh2.begin(), dh2.end(), dh1.begin());
    std::fill(dqs.begin(), dqs.end(), 0.0);
    dense_bwd(net.s2, fc.qs.data(), dh2.data(), g(Block::Spatial), dqs.data());
    for (std::size_t i = 0; i < H; ++i) dqs[i] *= 1.0 - fc.qs[i] * fc.qs[i];
    dense_bwd(net.s1, fc.h1.data(), dqs.data(), g(Block::Spatial), dh1.data());
    if (train[Block::Spatial]) kernels::active().ger_acc(H, H, dqs.data(), fc.r.data(), grad + net.sr.w_off);
    if (train[Block::RefEncoder]) {
      std::fill(dr.begin(), dr.end(), 0.0);
      kernels::active().gemv_t_acc(net.sr.w, H, H, dqs.data(), dr.data());
      for (std::size_t i = 0; i < H; ++i) dr[i] *= 1.0 - fc.r[i] * fc.r[i];
      dense_bwd(net.ref, fc.refv.data(), dr.data(), grad, nullptr);
    }

    for (std::size_t i = 0; i < H; ++i) {
      dh0[i] = dh1[i] * (1.0 + fc.m[i]);
      dm[i] = dh1[i] * fc.h0[i];
      dm[H + i] = dh1[i];
    }
    if (train[Block::Motion]) {
      std::fill(dqm.begin(), dqm.end(), 0.0);
      dense_bwd(net.m2, fc.qm.data(), dm.data(), grad, dqm.data());
      for (std::size_t i = 0; i < M; ++i) dqm[i] *= 1.0 - fc.qm[i] * fc.qm[i];
      dense_bwd(net.m1, fc.rf.data(), dqm.data(), grad, nullptr);
    }

    for (std::size_t i = 0; i < H; ++i) {
      da[i] = dh0[i] * (1.0 + fc.gt[i]);
      dgt[i] = dh0[i] * fc.a[i];
      dgt[H + i] = dh0[i];
    }
    if (train[Block::Time]) dense_bwd(net.time, st.features.data(), dgt.data(), grad, nullptr);
    if (train[Block::Trunk]) dense_bwd(net.in, fc.xt.data(), da.data(), grad, nullptr);
  }
}

void check_input_shapes(const DenoiserConfig& cfg, std::size_t n, std::size_t window, std::size_t n_t,
                        const Eigen::MatrixXd& a, const Eigen::MatrixXd& ref, const Eigen::MatrixXd& cond) {
  if (n == 0) throw DimensionError("denoiser: empty batch");
  if (window == 0 || n % window != 0) throw DimensionError("denoiser: frame count is not a multiple of the window");
  if (n_t != n / window) throw DimensionError("denoiser: need one timestep per window");
  if (static_cast<std::size_t>(a.cols()) != cfg.dim || static_cast<std::size_t>(ref.cols()) != cfg.dim) {
    throw DimensionError("denoiser: frame width must be " + std::to_string(cfg.dim));
  }
  if (static_cast<std::size_t>(ref.rows()) != n || static_cast<std::size_t>(cond.rows()) != n) {
    throw DimensionError("denoiser: ref and cond must have one row per frame");
  }
  if (static_cast<std::size_t>(cond.cols()) != kCondDim) throw DimensionError("denoiser: cond must be 120 wide");
}

// Row-major copies so each frame is contiguous.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

Eigen::MatrixXd predict_noise(const DenoiserParams& params, const DenoiseInput& in, const ConditionMask& mask,
                              const NoiseSchedule& schedule) {
  const std::size_t n = static_cast<std::size_t>(in.x_t.rows());
  check_input_shapes(params.config, n, in.window, in.t.size(), in.x_t, in.ref, in.cond);
  const Net net(params);
  const RowMat xt = in.x_t, ref = in.ref;
  const std::size_t W = in.window, units = n / W;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(params.config.dim));
  parallel_for(units, [&](std::size_t u) {
    std::vector<const double*> xp(W), rp(W);
    std::vector<HeadCondition> cs(W);
    for (std::size_t w = 0; w < W; ++w) {
      const auto row = static_cast<Eigen::Index>(u * W + w);
      xp[w] = xt.data() + row * xt.cols();
      rp[w] = ref.data() + row * ref.cols();
      HeadCondition c;
      for (std::size_t k = 0; k < kCondDim; ++k) c[k] = in.cond(row, static_cast<Eigen::Index>(k));
      cs[w] = mask.apply(c);
    }
    UnitCache uc;
    forward_unit(net, step_terms(schedule, in.t[u]), xp.data(), rp.data(), cs.data(), W, uc);
    for (std::size_t w = 0; w < W; ++w) {
      for (std::size_t i = 0; i < params.config.dim; ++i) {
        out(static_cast<Eigen::Index>(u * W + w), static_cast<Eigen::Index>(i)) = uc.frames[w].out[i];
      }
    }
  });
  return out;
}

LossAndGrad loss_and_gradients(const DenoiserParams& params, const Batch& batch, const NoiseSchedule& schedule,
                               const BlockMask& trainable, const ConditionMask& cond_mask) {
  const std::size_t n = static_cast<std::size_t>(batch.x0.rows());
  check_input_shapes(params.config, n, batch.window, batch.t.size(), batch.x0, batch.ref, batch.cond);
  if (batch.eps.rows() != batch.x0.rows() || batch.eps.cols() != batch.x0.cols()) {
    throw DimensionError("denoiser: eps must match x0");
  }
  const Net net(params);
  const std::size_t D = params.config.dim, W = batch.window, units = n / W;
  const RowMat x0 = batch.x0, eps = batch.eps, ref = batch.ref;
  const double scale = 2.0 / static_cast<double>(n * D);

  const std::size_t groups = (units + kGroupUnits - 1) / kGroupUnits;
  std::vector<std::vector<double>> grads(groups);
  std::vector<double> sq(groups, 0.0);
  parallel_for(groups, [&](std::size_t gi) {
    auto& grad = grads[gi];
    grad.assign(params.size(), 0.0);
    UnitCache uc;
    std::vector<std::vector<double>> xt(W, std::vector<double>(D));
    std::vector<const double*> xp(W), rp(W);
    std::vector<HeadCondition> cs(W);
    std::vector<std::vector<double>> gout(W, std::vector<double>(D));
    for (std::size_t u = gi * kGroupUnits; u < std::min(units, (gi + 1) * kGroupUnits); ++u) {
      const std::size_t t = batch.t[u];
      if (t >= schedule.size()) throw DimensionError("denoiser: timestep out of range");
      const double sa = std::sqrt(schedule.alpha_bars[t]), sb = std::sqrt(1.0 - schedule.alpha_bars[t]);
      for (std::size_t w = 0; w < W; ++w) {
        const auto row = static_cast<Eigen::Index>(u * W + w);
        for (std::size_t i = 0; i < D; ++i) {
          xt[w][i] = sa * x0(row, static_cast<Eigen::Index>(i)) + sb * eps(row, static_cast<Eigen::Index>(i));
        }
        xp[w] = xt[w].data();
        rp[w] = ref.data() + row * ref.cols();
        HeadCondition c;
        for (std::size_t k = 0; k < kCondDim; ++k) c[k] = batch.cond(row, static_cast<Eigen::Index>(k));
        cs[w] = cond_mask.apply(c);
      }
      forward_unit(net, step_terms(schedule, t), xp.data(), rp.data(), cs.data(), W, uc);
      for (std::size_t w = 0; w < W; ++w) {
        const auto row = static_cast<Eigen::Index>(u * W + w);
        for (std::size_t i = 0; i < D; ++i) {
          const double diff = uc.frames[w].out[i] - eps(row, static_cast<Eigen::Index>(i));
          sq[gi] += diff * diff;
          gout[w][i] = scale * diff;
        }
      }
      backward_unit(net, uc, gout, trainable, grad.data());
    }
  });

  LossAndGrad res;
  res.grad.assign(params.size(), 0.0);
  double total = 0.0;
  for (std::size_t gi = 0; gi < groups; ++gi) {
    total += sq[gi];
    kernels::active().axpy(1.0, grads[gi].data(), res.grad.data(), params.size());
  }
  res.loss = total / static_cast<double>(n * D);
  // Frozen blocks never received contributions; clear anyway so the
  // guarantee does not rest on the reverse pass.
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    if (trainable.on[b]) continue;
    for (auto [lo, hi] : params.block_ranges(static_cast<Block>(b))) {
      std::fill(res.grad.begin() + static_cast<std::ptrdiff_t>(lo), res.grad.begin() + static_cast<std::ptrdiff_t>(hi), 0.0);
    }
  }
  return res;
}

}  // namespace flap
