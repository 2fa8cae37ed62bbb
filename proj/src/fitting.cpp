#include "flap/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>
#include <json.hpp>

#include "flap/binary_io.hpp"
#include "flap/error.hpp"

namespace flap {

void FitConfig::validate() const {
  if (max_iters <= 0) throw ConfigError("fit: max_iters must be positive");
  if (!(lambda_init > 0.0)) throw ConfigError("fit: lambda_init must be positive");
  if (!(lambda_up > 1.0)) throw ConfigError("fit: lambda_up must exceed 1");
  if (!(lambda_down > 0.0 && lambda_down < 1.0)) throw ConfigError("fit: lambda_down must lie in (0, 1)");
  if (!(reg_psi > 0.0) || !(reg_beta > 0.0)) throw ConfigError("fit: ridge weights must be positive");
  if (!(tol_step > 0.0) || !(tol_residual > 0.0)) throw ConfigError("fit: tolerances must be positive");
  if (!(fd_step > 0.0)) throw ConfigError("fit: fd_step must be positive");
}

Eigen::MatrixXd numeric_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h) {
  if (!(h > 0.0)) throw ConfigError("numeric_jacobian: step must be positive");
  Eigen::MatrixXd J;
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + step;
    const Eigen::VectorXd fp = f(xp);
    xp[i] = x[i] - step;
    const Eigen::VectorXd fm = f(xp);
    xp[i] = x[i];
    if (i == 0) J.resize(fp.size(), x.size());
    J.col(i) = (fp - fm) / (2.0 * step);
  }
  return J;
}

namespace {

// Full parameter vector: global, jaw, eye_l, eye_r (axis-angle), psi,
// eyelids, beta, camera scale, camera translation.
struct Layout {
  Eigen::Index n_expr, n_shape;
  Eigen::Index psi() const { return 12; }
  Eigen::Index lids() const { return 12 + n_expr; }
  Eigen::Index beta() const { return lids() + 2; }
  Eigen::Index cam() const { return beta() + n_shape; }
  Eigen::Index size() const { return cam() + 3; }
};

Eigen::VectorXd pack(const Layout& lay, const HeadCoefficients& c, const Camera& cam) {
  Eigen::VectorXd x(lay.size());
  x.segment<3>(0) = c.theta_global;
  x.segment<3>(3) = c.theta_jaw;
  x.segment<3>(6) = c.theta_eye_l;
  x.segment<3>(9) = c.theta_eye_r;
  x.segment(lay.psi(), lay.n_expr) = c.psi_exp;
  x.segment<2>(lay.lids()) = c.psi_eyelids;
  x.segment(lay.beta(), lay.n_shape) = c.beta;
  x[lay.cam()] = cam.scale;
  x.segment<2>(lay.cam() + 1) = cam.translation;
  return x;
}

void unpack(const Layout& lay, const Eigen::VectorXd& x, HeadCoefficients& c, Camera& cam) {
  c.theta_global = x.segment<3>(0);
  c.theta_neck = Vec3::Zero();
  c.theta_jaw = x.segment<3>(3);
  c.theta_eye_l = x.segment<3>(6);
  c.theta_eye_r = x.segment<3>(9);
  c.psi_exp = x.segment(lay.psi(), lay.n_expr);
  c.psi_eyelids = x.segment<2>(lay.lids());
  c.beta = x.segment(lay.beta(), lay.n_shape);
  cam.scale = x[lay.cam()];
  cam.translation = x.segment<2>(lay.cam() + 1);
}

class Problem {
 public:
  Problem(const ModelAsset& asset, const LandmarkFrame& target, const FitConfig& cfg)
      : asset_(asset),
        lay_{static_cast<Eigen::Index>(asset.n_expr), static_cast<Eigen::Index>(asset.n_shape)},
        target_(target),
        sq_psi_(std::sqrt(cfg.reg_psi)),
        sq_beta_(std::sqrt(cfg.reg_beta)) {}

  const Layout& layout() const { return lay_; }
  Eigen::Index n_data() const { return target_.size(); }

  // Landmark residuals followed by the ridge rows.
  Eigen::VectorXd residual(const Eigen::VectorXd& x) const {
    HeadCoefficients c;
    Camera cam;
    unpack(lay_, x, c, cam);
    const LandmarkFrame proj = evaluate_landmarks(asset_, c, cam);
    Eigen::VectorXd r(n_data() + lay_.n_expr + 2 + lay_.n_shape);
    r.head(n_data()) = Eigen::Map<const Eigen::VectorXd>(proj.data(), n_data()) -
                       Eigen::Map<const Eigen::VectorXd>(target_.data(), n_data());
    r.segment(n_data(), lay_.n_expr + 2) = sq_psi_ * x.segment(lay_.psi(), lay_.n_expr + 2);
    r.tail(lay_.n_shape) = sq_beta_ * x.segment(lay_.beta(), lay_.n_shape);
    return r;
  }

 private:
  const ModelAsset& asset_;
  Layout lay_;
  const LandmarkFrame& target_;
  double sq_psi_, sq_beta_;
};

struct LmOutcome {
  Eigen::VectorXd x;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Levenberg-Marquardt over the coordinates `free` of the full vector `x0`.
// A step is accepted only if it lowers the objective, so the returned
// iterate is the best one seen.
LmOutcome levenberg_marquardt(const Problem& prob, const Eigen::VectorXd& x0, const std::vector<Eigen::Index>& free,
                              const FitConfig& cfg, int max_iters) {
  const auto nf = static_cast<Eigen::Index>(free.size());
  Eigen::VectorXd full = x0;
  auto expand = [&](const Eigen::VectorXd& z) {
    Eigen::VectorXd x = full;
    for (Eigen::Index i = 0; i < nf; ++i) x[free[static_cast<std::size_t>(i)]] = z[i];
    return x;
  };
  auto f = [&](const Eigen::VectorXd& z) { return prob.residual(expand(z)); };

  Eigen::VectorXd z(nf);
  for (Eigen::Index i = 0; i < nf; ++i) z[i] = x0[free[static_cast<std::size_t>(i)]];
  Eigen::VectorXd r = f(z);
  double obj = r.squaredNorm();
  if (!std::isfinite(obj)) throw DivergenceError("fit: non-finite residual at the initial point");

  LmOutcome out;
  double lambda = cfg.lambda_init;
  while (out.iterations < max_iters && !out.converged) {
    if (obj <= cfg.tol_residual) {
      out.converged = true;
      break;
    }
    ++out.iterations;
    const Eigen::MatrixXd J = numeric_jacobian(f, z, cfg.fd_step);
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    const Eigen::VectorXd diag = JtJ.diagonal().cwiseMax(1e-12);
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd Aug = JtJ;
      Aug.diagonal() += lambda * diag;
      const Eigen::VectorXd step = Aug.ldlt().solve(-g);
      const Eigen::VectorXd z_new = z + step;
      const Eigen::VectorXd r_new = f(z_new);
      const double obj_new = r_new.squaredNorm();
      if (std::isfinite(obj_new) && obj_new < obj) {
        const double decrease = obj - obj_new;
        const bool small_step = step.norm() <= cfg.tol_step * (z.norm() + cfg.tol_step);
        z = z_new;
        r = r_new;
        obj = obj_new;
        lambda = std::max(lambda * cfg.lambda_down, 1e-15);
        accepted = true;
        if (small_step || decrease <= 1e-15 * obj) out.converged = true;
      } else {
        lambda *= cfg.lambda_up;
        if (lambda > 1e16) {
          // No descent direction left at machine precision.
          out.converged = true;
          break;
        }
      }
    }
  }
  out.x = expand(z);
  out.objective = obj;
  return out;
}

FitResult make_result(const Problem& prob, const LmOutcome& lm) {
  FitResult res;
  unpack(prob.layout(), lm.x, res.coeffs, res.camera);
  const Eigen::VectorXd r = prob.residual(lm.x);
  res.residual_rms = std::sqrt(r.head(prob.n_data()).squaredNorm() / static_cast<double>(prob.n_data()));
  res.objective = lm.objective;
  res.iterations = lm.iterations;
  res.converged = lm.converged;
  return res;
}

void check_landmarks(const ModelAsset& asset, const LandmarkFrame& landmarks) {
  if (static_cast<std::size_t>(landmarks.rows()) != asset.n_landmarks()) {
    throw DimensionError("fit: got " + std::to_string(landmarks.rows()) + " landmarks, asset has " +
                         std::to_string(asset.n_landmarks()));
  }
  if (!landmarks.allFinite()) throw DegenerateInputError("fit: non-finite landmark coordinates");
}

std::vector<Eigen::Index> range_indices(Eigen::Index n) {
  std::vector<Eigen::Index> v(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

FitResult fit_impl(const ModelAsset& asset, const LandmarkFrame& landmarks, const std::optional<FitResult>& init,
                   const FitConfig& cfg, bool freeze_beta) {
  cfg.validate();
  check_landmarks(asset, landmarks);
  const Problem prob(asset, landmarks, cfg);
  const Layout& lay = prob.layout();

  Eigen::VectorXd x0;
  if (init) {
    x0 = pack(lay, init->coeffs, init->camera);
  } else {
    x0 = pack(lay, HeadCoefficients::zeros(asset), initial_camera(asset, landmarks));
    // Rigid alignment from several yaw guesses avoids the mirror-pose basin.
    const std::vector<Eigen::Index> rigid{0, 1, 2, lay.cam(), lay.cam() + 1, lay.cam() + 2};
    std::optional<LmOutcome> best;
    for (double yaw : cfg.yaw_starts) {
      Eigen::VectorXd xs = x0;
      xs[1] = yaw;
      LmOutcome o = levenberg_marquardt(prob, xs, rigid, cfg, std::min(cfg.max_iters, 50));
      if (!best || o.objective < best->objective) best = std::move(o);
    }
    if (best) x0 = best->x;
    // Eyes held at rest until the rest of the face is close; released early
    // they can lock onto a wrong rotation of the eyeball sphere.
    std::vector<Eigen::Index> no_eyes = range_indices(lay.size());
    no_eyes.erase(no_eyes.begin() + 6, no_eyes.begin() + 12);
    x0 = levenberg_marquardt(prob, x0, no_eyes, cfg, cfg.max_iters).x;
  }

  std::vector<Eigen::Index> free = range_indices(lay.size());
  if (freeze_beta) {
    free.erase(std::remove_if(free.begin(), free.end(),
                              [&](Eigen::Index i) { return i >= lay.beta() && i < lay.beta() + lay.n_shape; }),
               free.end());
  }
  return make_result(prob, levenberg_marquardt(prob, x0, free, cfg, cfg.max_iters));
}

}  // namespace

Camera initial_camera(const ModelAsset& asset, const LandmarkFrame& landmarks) {
  Camera unit;
  const LandmarkFrame P = evaluate_landmarks(asset, HeadCoefficients::zeros(asset), unit);
  const double span_obs = landmarks.col(1).maxCoeff() - landmarks.col(1).minCoeff();
  const double span_tpl = P.col(1).maxCoeff() - P.col(1).minCoeff();
  if (!(span_obs > 0.0) || !(span_tpl > 0.0)) throw DegenerateInputError("fit: landmarks have zero vertical extent");
  Camera cam;
  cam.scale = span_obs / span_tpl;
  cam.translation = landmarks.colwise().mean().transpose() - cam.scale * P.colwise().mean().transpose();
  return cam;
}

FitResult fit_frame(const ModelAsset& asset, const LandmarkFrame& landmarks, const std::optional<FitResult>& init,
                    const FitConfig& cfg) {
  return fit_impl(asset, landmarks, init, cfg, false);
}

SequenceFit fit_sequence(const ModelAsset& asset, const std::vector<LandmarkFrame>& frames, double fps,
                         const FitConfig& cfg) {
  if (frames.empty()) throw Error("fit_sequence: no frames");
  SequenceFit out;
  out.conditions.fps = fps;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    try {
      std::optional<FitResult> init;
      if (t > 0) init = out.results.back();
      out.results.push_back(fit_impl(asset, frames[t], init, cfg, t > 0));
    } catch (const DimensionError& e) {
      throw DimensionError("frame " + std::to_string(t) + ": " + e.what());
    } catch (const DegenerateInputError& e) {
      throw DegenerateInputError("frame " + std::to_string(t) + ": " + e.what());
    } catch (const DivergenceError& e) {
      throw DivergenceError("frame " + std::to_string(t) + ": " + e.what());
    }
    out.conditions.frames.push_back(encode(out.results.back().coeffs));
  }
  return out;
}

std::string serialize_landmarks(const LandmarkSequence& seq) {
  if (seq.frames.empty()) throw Error("landmark sequence is empty");
  const auto k = seq.frames.front().rows();
  std::ostringstream o;
  o << "{\n  \"fps\": " << io::format_double(seq.fps) << ",\n  \"K\": " << k << ",\n  \"frames\": [\n";
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    const auto& f = seq.frames[t];
    if (f.rows() != k) throw DimensionError("landmark sequence: frames differ in K");
    o << "    [";
    for (Eigen::Index i = 0; i < k; ++i) {
      o << (i ? ", " : "") << '[' << io::format_double(f(i, 0)) << ", " << io::format_double(f(i, 1)) << ']';
    }
    o << (t + 1 < seq.frames.size() ? "],\n" : "]\n");
  }
  o << "  ]\n}\n";
  return o.str();
}

LandmarkSequence deserialize_landmarks(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text.begin(), text.end());
    LandmarkSequence seq;
    seq.fps = j.at("fps").get<double>();
    const auto k = j.at("K").get<std::size_t>();
    for (const auto& f : j.at("frames")) {
      if (f.size() != k) throw FormatError("landmark file: frame does not have K points");
      LandmarkFrame frame(static_cast<Eigen::Index>(k), 2);
      for (std::size_t i = 0; i < k; ++i) {
        const auto p = f.at(i).get<std::array<double, 2>>();
        frame(static_cast<Eigen::Index>(i), 0) = p[0];
        frame(static_cast<Eigen::Index>(i), 1) = p[1];
      }
      seq.frames.push_back(std::move(frame));
    }
    if (seq.frames.empty()) throw FormatError("landmark file: no frames");
    return seq;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("landmark file: ") + e.what());
  }
}

void save_landmarks(const LandmarkSequence& seq, const std::string& path) {
  io::write_text_file(path, serialize_landmarks(seq));
}

LandmarkSequence load_landmarks(const std::string& path) { return deserialize_landmarks(io::read_text_file(path)); }

}  // namespace flap
