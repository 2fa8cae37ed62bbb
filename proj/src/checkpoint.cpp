#include <fstream>
#include <sstream>

#include "flap/binary_io.hpp"
#include "flap/diffusion.hpp"
#include "flap/error.hpp"

namespace flap {

namespace {
constexpr std::uint64_t kCheckpointVersion = 1;
}

void save_checkpoint(const DenoiserParams& params, const std::string& path) {
  const DenoiserConfig& c = params.config;
  std::ostringstream os;
  io::BinaryWriter w(os);
  w.magic("FLAPCKPT");
  w.u64(kCheckpointVersion);
  w.u64(c.dim);
  w.u64(c.hidden);
  w.u64(c.cond_hidden);
  w.u64(c.steps);
  w.f64(c.beta_min);
  w.f64(c.beta_max);
  w.f64(c.uncertainty_init);
  w.f64(c.norm_scale);
  w.f64s(c.norm_mean);
  const auto& m = params.condition_mask;
  for (bool b : {m.global, m.eyes, m.jaw, m.eyelids, m.expr}) w.u64(b ? 1 : 0);
  w.u64(params.window);
  w.u64(params.values.size());
  w.f64s(params.values);
  io::write_file_bytes(path, os.str());
}

DenoiserParams load_checkpoint(const std::string& path) {
  const auto bytes = io::read_file_bytes(path);
  std::istringstream is(std::string(bytes.begin(), bytes.end()));
  io::BinaryReader r(is, "checkpoint " + path);
  r.expect_magic("FLAPCKPT");
  if (const auto v = r.u64(); v != kCheckpointVersion) {
    throw FormatError("checkpoint " + path + ": unsupported version " + std::to_string(v));
  }
  DenoiserConfig c;
  c.dim = r.u64();
  c.hidden = r.u64();
  c.cond_hidden = r.u64();
  c.steps = r.u64();
  c.beta_min = r.f64();
  c.beta_max = r.f64();
  c.uncertainty_init = r.f64();
  c.norm_scale = r.f64();
  if (c.dim > (1u << 20) || c.hidden > (1u << 16) || c.cond_hidden > (1u << 16)) {
    throw FormatError("checkpoint " + path + ": implausible dimensions");
  }
  c.norm_mean = r.f64s(c.dim);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError("checkpoint " + path + ": " + e.what());
  }
  DenoiserParams p = zero_params(c);
  bool* flags[] = {&p.condition_mask.global, &p.condition_mask.eyes, &p.condition_mask.jaw, &p.condition_mask.eyelids,
                   &p.condition_mask.expr};
  for (bool* f : flags) {
    const auto v = r.u64();
    if (v > 1) throw FormatError("checkpoint " + path + ": bad condition mask");
    *f = v == 1;
  }
  p.window = r.u64();
  if (p.window == 0) throw FormatError("checkpoint " + path + ": window must be positive");
  const auto n = r.u64();
  if (n != p.values.size()) {
    throw FormatError("checkpoint " + path + ": expected " + std::to_string(p.values.size()) + " parameters, found " +
                      std::to_string(n));
  }
  p.values = r.f64s(n);
  r.expect_end();
  return p;
}

void write_log(const std::vector<LogRecord>& log, std::ostream& out) {
  for (const auto& rec : log) {
    out << "{\"step\":" << rec.step << ",\"stage\":\"" << rec.stage << "\",\"loss\":" << io::format_double(rec.loss)
        << "}\n";
  }
}

void append_log_file(const std::vector<LogRecord>& log, const std::string& path) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot open log file " + path);
  write_log(log, out);
  if (!out) throw Error("failed writing log file " + path);
}

}  // namespace flap
