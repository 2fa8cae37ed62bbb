#include "flap/pft_trainer.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "flap/binary_io.hpp"
#include "flap/error.hpp"
#include "flap/kv_config.hpp"

namespace flap {

namespace {

constexpr std::array<const char*, 4> kStageNames{"motion", "expression", "temporal", "joint_baseline"};

ConditionMask mask_union(const ConditionMask& a, const ConditionMask& b) {
  return {a.global || b.global, a.eyes || b.eyes, a.jaw || b.jaw, a.eyelids || b.eyelids, a.expr || b.expr};
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long x = 0;
  try {
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-') throw ConfigError("pipeline config: " + key + " needs a non-negative integer");
  return static_cast<std::size_t>(x);
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) throw ConfigError("pipeline config: " + key + " needs a number");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("pipeline config: " + key + " needs true or false");
}

void check_order(const std::vector<StageConfig>& stages) {
  bool joint = false;
  int last = -1;
  for (const auto& s : stages) {
    if (s.stage == Stage::JointBaseline) {
      joint = true;
      continue;
    }
    const int rank = static_cast<int>(s.stage);
    if (rank <= last) {
      throw ConfigError(std::string("pipeline: stage ") + stage_name(s.stage) +
                        " is out of order (expected motion -> expression -> temporal)");
    }
    last = rank;
  }
  if (joint && stages.size() != 1) throw ConfigError("pipeline: joint_baseline must run alone");
}

double tail_mean(const std::vector<LogRecord>& log, std::size_t from) {
  const std::size_t n = log.size() - from;
  if (n == 0) return 0.0;
  const std::size_t k = std::min<std::size_t>(20, n);
  double s = 0.0;
  for (std::size_t i = log.size() - k; i < log.size(); ++i) s += log[i].loss;
  return s / static_cast<double>(k);
}

std::string mask_json(const ConditionMask& m) {
  std::string s = "[";
  const std::pair<bool, const char*> parts[] = {
      {m.global, "global"}, {m.eyes, "eyes"}, {m.jaw, "jaw"}, {m.eyelids, "eyelids"}, {m.expr, "expr"}};
  bool first = true;
  for (auto [on, name] : parts) {
    if (!on) continue;
    s += first ? "\"" : ",\"";
    s += name;
    s += "\"";
    first = false;
  }
  return s + "]";
}

std::string blocks_json(const BlockMask& m) {
  std::string s = "[";
  bool first = true;
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    if (!m.on[b]) continue;
    s += first ? "\"" : ",\"";
    s += block_name(static_cast<Block>(b));
    s += "\"";
    first = false;
  }
  return s + "]";
}

}  // namespace

const char* stage_name(Stage s) { return kStageNames[static_cast<std::size_t>(s)]; }

Stage stage_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i) {
    if (name == kStageNames[i]) return static_cast<Stage>(i);
  }
  throw ConfigError("unknown stage \"" + std::string(name) + "\"");
}

StageConfig stage_defaults(Stage s) {
  StageConfig c;
  c.stage = s;
  switch (s) {
    case Stage::Motion:
      c.condition_mask = ConditionMask::motion_only();
      c.trainable = BlockMask::all();
      c.filter = {true, 0.2};
      c.steps = 2000;
      break;
    case Stage::Expression:
      c.condition_mask = ConditionMask::all();
      c.trainable = BlockMask::all().without(Block::Motion);
      c.steps = 2000;
      break;
    case Stage::Temporal:
      c.condition_mask = ConditionMask::all();
      c.trainable = BlockMask::only({Block::Temporal});
      c.window = 4;
      c.batch_size = 16;
      c.steps = 1000;
      break;
    case Stage::JointBaseline:
      c.condition_mask = ConditionMask::all();
      c.trainable = BlockMask::all();
      c.steps = 5000;
      break;
  }
  return c;
}

PipelineConfig default_pipeline(std::uint64_t seed) {
  PipelineConfig cfg;
  cfg.init_seed = seed;
  for (Stage s : {Stage::Motion, Stage::Expression, Stage::Temporal}) {
    StageConfig st = stage_defaults(s);
    st.seed = derive_seed(seed, static_cast<std::uint64_t>(s) + 1);
    cfg.stages.push_back(st);
  }
  return cfg;
}

PipelineConfig parse_pipeline_config(std::string_view text) { return pipeline_config_from(parse_kv(text)); }

PipelineConfig pipeline_config_from(const std::vector<KeyValue>& entries) {
  PipelineConfig cfg;
  std::vector<KeyValue> per_stage;
  std::uint64_t seed = 0;
  bool have_stages = false;
  std::vector<Stage> order;
  for (const auto& [key, val, line] : entries) {
    if (key == "stages") {
      have_stages = true;
      std::istringstream ss(val);
      std::string item;
      while (std::getline(ss, item, ',')) {
        const std::string name = trim(item);
        if (!name.empty()) order.push_back(stage_from_name(name));
      }
    } else if (key == "seed") {
      seed = parse_size(key, val);
    } else if (key == "withhold_motion") {
      cfg.withhold_motion = parse_bool(key, val);
    } else if (key == "hidden") {
      cfg.hidden = parse_size(key, val);
    } else if (key == "cond_hidden") {
      cfg.cond_hidden = parse_size(key, val);
    } else if (key == "diffusion_steps") {
      cfg.diffusion_steps = parse_size(key, val);
    } else if (key.find('.') != std::string::npos) {
      per_stage.push_back({key, val, line});
    } else {
      throw ConfigError("pipeline config line " + std::to_string(line) + ": unknown key \"" + key + "\"");
    }
  }
  if (!have_stages) order = {Stage::Motion, Stage::Expression, Stage::Temporal};
  cfg.init_seed = seed;
  for (Stage s : order) {
    StageConfig st = stage_defaults(s);
    st.seed = derive_seed(seed, static_cast<std::uint64_t>(s) + 1);
    cfg.stages.push_back(st);
  }
  for (const auto& [key, val, line] : per_stage) {
    const auto dot = key.find('.');
    const Stage s = stage_from_name(key.substr(0, dot));
    const std::string field = key.substr(dot + 1);
    bool found = false;
    for (auto& st : cfg.stages) {
      if (st.stage != s) continue;
      found = true;
      if (field == "steps") {
        st.steps = parse_size(key, val);
      } else if (field == "lr") {
        st.lr = parse_double(key, val);
      } else if (field == "batch_size") {
        st.batch_size = parse_size(key, val);
      } else if (field == "window") {
        st.window = parse_size(key, val);
      } else if (field == "seed") {
        st.seed = parse_size(key, val);
      } else if (field == "fraction") {
        st.filter.fraction = parse_double(key, val);
      } else {
        throw ConfigError("pipeline config line " + std::to_string(line) + ": unknown stage field \"" + key + "\"");
      }
    }
    if (!found) throw ConfigError("pipeline config: " + key + " refers to a stage that is not run");
  }
  check_order(cfg.stages);
  return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) { return parse_pipeline_config(io::read_text_file(path)); }

std::string PipelineReport::to_json() const {
  std::string s = "{\"stages\":[";
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& r = stages[i];
    if (i) s += ",";
    s += "{\"stage\":\"" + std::string(stage_name(r.stage)) + "\",\"condition_mask\":" + mask_json(r.condition_mask) +
         ",\"trainable\":" + blocks_json(r.trainable) + ",\"steps\":" + std::to_string(r.steps) +
         ",\"n_sequences\":" + std::to_string(r.n_sequences) + ",\"initial_loss\":" + io::format_double(r.initial_loss) +
         ",\"final_loss\":" + io::format_double(r.final_loss) + ",\"checkpoint\":\"" + r.checkpoint + "\"}";
  }
  return s + "]}";
}

DenoiserParams initial_params(const ModelAsset& asset, const PipelineConfig& cfg) {
  DenoiserConfig dc = denoiser_config_for(asset, cfg.camera);
  dc.hidden = cfg.hidden;
  dc.cond_hidden = cfg.cond_hidden;
  dc.steps = cfg.diffusion_steps;
  return init_params(dc, cfg.init_seed);
}

TrainingSet to_training_set(const DenoiserConfig& cfg, const Dataset& data) {
  std::vector<LandmarkFrame> refs;
  std::vector<std::vector<LandmarkFrame>> targets;
  std::vector<ConditionSequence> conds;
  for (const auto& s : data) {
    refs.push_back(s.ref_frame);
    targets.push_back(s.target_frames);
    conds.push_back(s.conditions);
  }
  return make_training_set(cfg, refs, targets, conds);
}

PipelineResult run_pipeline(const ModelAsset& asset, const Dataset& data, const PipelineConfig& cfg) {
  check_order(cfg.stages);
  PipelineResult res;
  res.params = cfg.resume ? *cfg.resume : initial_params(asset, cfg);
  // Inference sees every slice any executed stage trained with.
  ConditionMask seen = cfg.resume ? cfg.resume->condition_mask : ConditionMask{false, false, false, false, false};
  if (!cfg.stages.empty() && cfg.checkpoint_dir) std::filesystem::create_directories(*cfg.checkpoint_dir);

  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const StageConfig& st = cfg.stages[i];
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset subset = st.filter.top_variance ? select_top_variance(data, st.filter.fraction) : data;
    const TrainingSet ts = to_training_set(res.params.config, subset);

    TrainConfig tc;
    tc.steps = st.steps;
    tc.lr = st.lr;
    tc.batch_size = st.batch_size;
    tc.window = st.window;
    tc.trainable = st.trainable;
    tc.condition_mask = st.condition_mask;
    if (st.stage == Stage::Expression && cfg.withhold_motion) tc.condition_mask.global = false;
    tc.seed = st.seed;
    tc.stage = stage_name(st.stage);

    const std::size_t log_start = res.log.size();
    res.params = train(res.params, ts, tc, &res.log);
    seen = mask_union(seen, st.condition_mask);
    res.params.condition_mask = seen;

    StageReport rep;
    rep.stage = st.stage;
    rep.condition_mask = tc.condition_mask;
    rep.trainable = st.trainable;
    rep.steps = st.steps;
    rep.n_sequences = subset.size();
    rep.initial_loss = st.steps ? res.log[log_start].loss : 0.0;
    rep.final_loss = tail_mean(res.log, log_start);
    if (cfg.checkpoint_dir) {
      char name[64];
      std::snprintf(name, sizeof name, "stage%zu_%s.ckpt", i + 1, stage_name(st.stage));
      rep.checkpoint = (std::filesystem::path(*cfg.checkpoint_dir) / name).string();
      save_checkpoint(res.params, rep.checkpoint);
    }
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.report.stages.push_back(rep);
  }
  return res;
}

PipelineResult run_joint_baseline(const ModelAsset& asset, const Dataset& data, const PipelineConfig& base,
                                  const StageConfig& stage) {
  PipelineConfig cfg = base;
  StageConfig st = stage;
  st.stage = Stage::JointBaseline;
  st.condition_mask = ConditionMask::all();
  st.trainable = BlockMask::all();
  st.filter = {};
  cfg.stages = {st};
  return run_pipeline(asset, data, cfg);
}

DenoiserParams run_joint_baseline(const ModelAsset& asset, const Dataset& data, std::size_t steps, double lr,
                                  std::uint64_t seed, std::vector<LogRecord>* log) {
  PipelineConfig cfg;
  cfg.init_seed = seed;
  StageConfig st = stage_defaults(Stage::JointBaseline);
  st.steps = steps;
  st.lr = lr;
  st.seed = derive_seed(seed, static_cast<std::uint64_t>(Stage::JointBaseline) + 1);
  PipelineResult r = run_joint_baseline(asset, data, cfg, st);
  if (log) *log = std::move(r.log);
  return r.params;
}

}  // namespace flap
