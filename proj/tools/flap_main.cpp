// Command-line front end. Every subcommand is a thin shell over one library
// operation; `pipeline` chains them. Exit codes: 0 ok, 1 usage, 2 runtime.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "flap/audio2flame.hpp"
#include "flap/binary_io.hpp"
#include "flap/error.hpp"
#include "flap/eval_metrics.hpp"
#include "flap/kv_config.hpp"
#include "flap/parallel.hpp"
#include "flap/pft_trainer.hpp"

namespace fs = std::filesystem;
using namespace flap;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Seed for every random draw")->capture_default_str();
  app->add_option("--threads", c.threads, "Worker thread cap (results do not depend on it)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
}

std::string sample_name(const char* prefix, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05zu%s", prefix, i, ext);
  return buf;
}

void write_or_print(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
  } else {
    io::write_text_file(path, text);
  }
}

std::vector<Vec3> read_angles(const std::string& path) {
  std::istringstream in(io::read_text_file(path));
  std::vector<Vec3> out;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    for (char& ch : line) {
      if (ch == ',') ch = ' ';
    }
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x)) continue;
    if (!(ls >> y >> z)) throw FormatError("angles file " + path + ": each line needs three numbers");
    out.emplace_back(x, y, z);
  }
  if (out.empty()) throw FormatError("angles file " + path + ": no angles");
  return out;
}

Vec3 parse_triple(const std::string& s) {
  std::string t = s;
  for (char& ch : t) {
    if (ch == ',') ch = ' ';
  }
  std::istringstream in(t);
  double x, y, z;
  std::string rest;
  if (!(in >> x >> y >> z) || (in >> rest)) throw UsageError("expected three comma-separated numbers, got \"" + s + "\"");
  return {x, y, z};
}

// ---- data generation ------------------------------------------------------

struct SynthOptions {
  std::string asset, out;
  std::size_t sequences = 60;
  TrajectoryConfig traj;
  double gain = 0.5, threshold = 0.35;
  std::size_t audio_dim = 16;
  double audio_noise = 0.01;
};

void write_audio_for(const Dataset& data, const std::string& dir, const SynthOptions& o, std::uint64_t seed) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    AudioSynthConfig ac;
    ac.dim = o.audio_dim;
    ac.noise = o.audio_noise;
    ac.seed = derive_seed(seed, i);
    save_audio(synth_audio(data[i].clean_conditions, ac), (fs::path(dir) / sample_name("sample", i, "_audio.json")).string());
  }
}

Dataset synthesize(const ModelAsset& asset, const SynthOptions& o, std::uint64_t seed) {
  TrajectoryConfig traj = o.traj;
  traj.seed = derive_seed(seed, 1);
  LeakageConfig leak = default_leakage(asset.n_expr, derive_seed(seed, 2));
  leak.gain = o.gain;
  leak.yaw_threshold = o.threshold;
  return build_dataset(asset, o.sequences, traj, leak, default_camera());
}

void add_synth_options(CLI::App* app, SynthOptions& o) {
  app->add_option("--sequences", o.sequences, "Number of sequences")->capture_default_str();
  app->add_option("--frames", o.traj.n_frames, "Frames per sequence")->capture_default_str();
  app->add_option("--fps", o.traj.fps, "Frame rate")->capture_default_str();
  app->add_option("--pose-amp", o.traj.pose_amplitude, "Global rotation std (rad)")->capture_default_str();
  app->add_option("--expr-amp", o.traj.expr_amplitude, "Expression coefficient std")->capture_default_str();
  app->add_option("--identity-amp", o.traj.identity_amplitude, "Identity coefficient std")->capture_default_str();
  app->add_option("--smoothness", o.traj.smoothness, "Trajectory time constant (frames)")->capture_default_str();
  app->add_option("--gain", o.gain, "Leakage gain g")->capture_default_str();
  app->add_option("--threshold", o.threshold, "Leakage yaw threshold tau (rad)")->capture_default_str();
  app->add_option("--audio-dim", o.audio_dim, "Synthetic audio channels")->capture_default_str();
  app->add_option("--audio-noise", o.audio_noise, "Synthetic audio noise std")->capture_default_str();
}

// ---- pipeline ---------------------------------------------------------------

struct PipelineData {
  SynthOptions synth;
  std::size_t eval_items = 4;
  std::size_t eval_frames = 20;
};

PipelineData pipeline_data_from(const std::vector<KeyValue>& entries, std::vector<KeyValue>& rest) {
  PipelineData d;
  auto num = [](const KeyValue& kv) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(kv.value, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != kv.value.size() || kv.value.empty()) throw ConfigError("config line " + std::to_string(kv.line) + ": " + kv.key + " needs a number");
    return v;
  };
  auto count = [&](const KeyValue& kv) {
    const double v = num(kv);
    if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
      throw ConfigError("config line " + std::to_string(kv.line) + ": " + kv.key + " needs a non-negative integer");
    }
    return static_cast<std::size_t>(v);
  };
  for (const auto& kv : entries) {
    const std::string& k = kv.key;
    if (k == "seed") throw UsageError("config line " + std::to_string(kv.line) + ": the seed comes from --seed");
    if (k == "data.sequences") d.synth.sequences = count(kv);
    else if (k == "data.frames") d.synth.traj.n_frames = count(kv);
    else if (k == "data.fps") d.synth.traj.fps = num(kv);
    else if (k == "data.pose_amplitude") d.synth.traj.pose_amplitude = num(kv);
    else if (k == "data.expr_amplitude") d.synth.traj.expr_amplitude = num(kv);
    else if (k == "data.identity_amplitude") d.synth.traj.identity_amplitude = num(kv);
    else if (k == "data.smoothness") d.synth.traj.smoothness = num(kv);
    else if (k == "data.gain") d.synth.gain = num(kv);
    else if (k == "data.threshold") d.synth.threshold = num(kv);
    else if (k == "eval.items") d.eval_items = count(kv);
    else if (k == "eval.frames") d.eval_frames = count(kv);
    else if (k.rfind("data.", 0) == 0 || k.rfind("eval.", 0) == 0) throw ConfigError("config line " + std::to_string(kv.line) + ": unknown key \"" + k + "\"");
    else rest.push_back(kv);
  }
  return d;
}

int run_pipeline_cmd(const std::string& config_path, const std::string& out_dir, const Common& c) {
  std::vector<KeyValue> rest;
  const auto entries = config_path.empty() ? std::vector<KeyValue>{} : parse_kv(io::read_text_file(config_path));
  const PipelineData pd = pipeline_data_from(entries, rest);
  PipelineConfig pc = pipeline_config_from(rest);
  // Stage seeds not set explicitly follow --seed.
  std::vector<bool> explicit_seed;
  for (const auto& st : pc.stages) {
    bool ex = false;
    for (const auto& kv : rest) ex = ex || kv.key == std::string(stage_name(st.stage)) + ".seed";
    explicit_seed.push_back(ex);
  }
  pc.init_seed = derive_seed(c.seed, 3);
  for (std::size_t i = 0; i < pc.stages.size(); ++i) {
    if (!explicit_seed[i]) pc.stages[i].seed = derive_seed(c.seed, 10 + static_cast<std::uint64_t>(pc.stages[i].stage));
  }

  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  const ModelAsset asset = make_desk_asset();
  save_asset(asset, (out / "asset.bin").string());

  const Dataset data = synthesize(asset, pd.synth, c.seed);
  save_dataset(data, (out / "dataset").string());
  write_audio_for(data, (out / "dataset").string(), pd.synth, derive_seed(c.seed, 4));

  pc.checkpoint_dir = (out / "checkpoints").string();
  PipelineResult pr = run_pipeline(asset, data, pc);
  // Relative paths keep the report independent of where --out points.
  for (auto& st : pr.report.stages) st.checkpoint = fs::relative(st.checkpoint, out).generic_string();
  save_checkpoint(pr.params, (out / "model.ckpt").string());
  {
    std::ofstream log(out / "train.log", std::ios::trunc);
    write_log(pr.log, log);
    if (!log) throw Error("failed writing train.log");
  }

  // Held-out evaluation sequences.
  SynthOptions test = pd.synth;
  test.sequences = pd.eval_items;
  test.traj.n_frames = pd.eval_frames;
  const Dataset held_out = synthesize(asset, test, derive_seed(c.seed, 5));
  const NoiseSchedule schedule = make_schedule(pr.params.config.steps, pr.params.config.beta_min, pr.params.config.beta_max);
  fs::create_directories(out / "samples");
  std::vector<DecouplingItem> items;
  double pose_sum = 0.0, rmse_sum = 0.0;
  std::string per_item = "[";
  for (std::size_t i = 0; i < held_out.size(); ++i) {
    const Sample& s = held_out[i];
    const auto frames = sample(pr.params, s.ref_frame, s.conditions, schedule, derive_seed(c.seed, 100 + i));
    save_landmarks({s.conditions.fps, frames}, (out / "samples" / sample_name("item", i, ".json")).string());
    const PoseErrorReport pe = pose_error(frames, asset, s.clean_conditions);
    const double rmse = landmark_rmse(frames, s.target_frames);
    pose_sum += pe.mean;
    rmse_sum += rmse;
    per_item += (i ? ",{" : "{") + std::string("\"pose_error\":") + io::format_double(pe.mean) +
                ",\"landmark_rmse\":" + io::format_double(rmse) + "}";
    items.push_back({s.ref_frame, s.conditions});
  }
  per_item += "]";
  const DecouplingReport dr = decoupling_score(pr.params, asset, items, derive_seed(c.seed, 6));
  const double n = static_cast<double>(held_out.size());
  const std::string report = "{\"training\":" + pr.report.to_json() + ",\"evaluation\":{\"items\":" + per_item +
                             ",\"mean_pose_error\":" + io::format_double(pose_sum / n) +
                             ",\"mean_landmark_rmse\":" + io::format_double(rmse_sum / n) +
                             ",\"decoupling_shift\":" + io::format_double(dr.mean_pose_shift) + "}}\n";
  io::write_text_file((out / "report.json").string(), report);
  std::cout << "pipeline: " << pr.report.stages.size() << " stages, mean pose error " << pose_sum / n
            << " rad, decoupling shift " << dr.mean_pose_shift << " rad; outputs in " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Landmark-space talking-head toolkit: head model, fitting, conditioned diffusion and staged training"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  Common common;
  std::function<int()> action;

  // asset-gen
  auto* asset_gen = app.add_subcommand("asset-gen", "Generate the procedural head asset");
  std::string ag_out;
  DeskAssetConfig ag_cfg;
  asset_gen->add_option("--out", ag_out, "Output asset path")->required();
  asset_gen->add_option("--vertices", ag_cfg.n_vertices, "Head vertex count")->capture_default_str();
  asset_gen->add_option("--landmarks", ag_cfg.n_landmarks, "Landmark count")->capture_default_str();
  asset_gen->add_option("--shape", ag_cfg.n_shape, "Identity basis size")->capture_default_str();
  asset_gen->add_option("--expr", ag_cfg.n_expr, "Expression basis size")->capture_default_str();
  add_common(asset_gen, common);
  asset_gen->callback([&] {
    action = [&] {
      ag_cfg.seed = common.seed;
      save_asset(make_desk_asset(ag_cfg), ag_out);
      return 0;
    };
  });

  // synth
  auto* synth = app.add_subcommand("synth", "Synthesize a leakage dataset with audio features");
  std::string sy_asset, sy_out;
  SynthOptions sy;
  synth->add_option("--asset", sy_asset, "Asset path")->required();
  synth->add_option("--out", sy_out, "Output dataset directory")->required();
  add_synth_options(synth, sy);
  add_common(synth, common);
  synth->callback([&] {
    action = [&] {
      const ModelAsset asset = load_asset(sy_asset);
      const Dataset data = synthesize(asset, sy, common.seed);
      save_dataset(data, sy_out);
      write_audio_for(data, sy_out, sy, derive_seed(common.seed, 4));
      return 0;
    };
  });

  // fit
  auto* fit = app.add_subcommand("fit", "Fit head coefficients to a landmark sequence");
  std::string fit_asset, fit_lm, fit_out;
  FitConfig fit_cfg;
  fit->add_option("--asset", fit_asset, "Asset path")->required();
  fit->add_option("--landmarks", fit_lm, "Landmark sequence file")->required();
  fit->add_option("--out", fit_out, "Output condition file (.bin for binary)")->required();
  fit->add_option("--max-iters", fit_cfg.max_iters, "LM iteration cap")->capture_default_str();
  fit->add_option("--reg-psi", fit_cfg.reg_psi, "Ridge on expression")->capture_default_str();
  fit->add_option("--reg-beta", fit_cfg.reg_beta, "Ridge on identity")->capture_default_str();
  add_common(fit, common);
  fit->callback([&] {
    action = [&] {
      const ModelAsset asset = load_asset(fit_asset);
      const LandmarkSequence seq = load_landmarks(fit_lm);
      save_conditions(fit_sequence(asset, seq.frames, seq.fps, fit_cfg).conditions, fit_out);
      return 0;
    };
  });

  // edit
  auto* edit = app.add_subcommand("edit", "Edit pose or expression of a condition sequence");
  std::string ed_in, ed_out, ed_fix, ed_overlay, ed_absolute, ed_swap_from;
  bool ed_swap_idle = false;
  double ed_fps = 0.0;
  edit->add_option("--in", ed_in, "Input condition file")->required();
  edit->add_option("--out", ed_out, "Output condition file (.bin for binary)")->required();
  auto* o_fix = edit->add_option("--fix-pose", ed_fix, "Constant global rotation x,y,z (axis-angle)");
  auto* o_ov = edit->add_option("--overlay", ed_overlay, "Angles file composed onto each frame");
  auto* o_abs = edit->add_option("--absolute", ed_absolute, "Angles file replacing each frame's rotation");
  auto* o_si = edit->add_flag("--swap-idle", ed_swap_idle, "Replace expression slices with the idle condition");
  auto* o_sf = edit->add_option("--swap-from", ed_swap_from, "Take expression slices from another condition file");
  auto* o_rs = edit->add_option("--resample", ed_fps, "Resample to this frame rate")->check(CLI::PositiveNumber);
  for (auto* a : {o_fix, o_ov, o_abs, o_si, o_sf, o_rs}) {
    for (auto* b : {o_fix, o_ov, o_abs, o_si, o_sf, o_rs}) {
      if (a != b) a->excludes(b);
    }
  }
  add_common(edit, common);
  edit->callback([&] {
    action = [&] {
      const ConditionSequence in = load_conditions(ed_in);
      ConditionSequence out;
      if (!ed_fix.empty()) {
        out = apply_pose_edit(in, {PoseEditMode::Fixed, {parse_triple(ed_fix)}});
      } else if (!ed_overlay.empty()) {
        out = apply_pose_edit(in, {PoseEditMode::Overlay, read_angles(ed_overlay)});
      } else if (!ed_absolute.empty()) {
        out = apply_pose_edit(in, {PoseEditMode::Absolute, read_angles(ed_absolute)});
      } else if (ed_swap_idle) {
        out = swap_expression_idle(in);
      } else if (!ed_swap_from.empty()) {
        out = swap_expression(in, load_conditions(ed_swap_from));
      } else if (ed_fps > 0.0) {
        out = resample(in, ed_fps);
      } else {
        throw UsageError("edit: choose one of --fix-pose, --overlay, --absolute, --swap-idle, --swap-from, --resample");
      }
      save_conditions(out, ed_out);
      return 0;
    };
  });

  // a2f-train
  auto* a2f_train = app.add_subcommand("a2f-train", "Fit the audio-to-condition regressor on a dataset");
  std::string at_data, at_out;
  A2FConfig at_cfg;
  a2f_train->add_option("--dataset", at_data, "Dataset directory written by synth")->required();
  a2f_train->add_option("--out", at_out, "Output model path")->required();
  a2f_train->add_option("--context", at_cfg.context, "Frames of context on each side")->capture_default_str();
  a2f_train->add_option("--ridge", at_cfg.ridge, "Ridge strength")->capture_default_str();
  add_common(a2f_train, common);
  a2f_train->callback([&] {
    action = [&] {
      const Dataset data = load_dataset(at_data);
      std::vector<A2FPair> pairs;
      for (std::size_t i = 0; i < data.size(); ++i) {
        pairs.emplace_back(load_audio((fs::path(at_data) / sample_name("sample", i, "_audio.json")).string()),
                           data[i].clean_conditions);
      }
      save_a2f(train_a2f(pairs, at_cfg), at_out);
      return 0;
    };
  });

  // a2f-infer
  auto* a2f_infer = app.add_subcommand("a2f-infer", "Predict conditions from audio features");
  std::string ai_model, ai_audio, ai_out;
  a2f_infer->add_option("--model", ai_model, "Regressor path")->required();
  a2f_infer->add_option("--audio", ai_audio, "Audio feature file")->required();
  a2f_infer->add_option("--out", ai_out, "Output condition file (.bin for binary)")->required();
  add_common(a2f_infer, common);
  a2f_infer->callback([&] {
    action = [&] {
      save_conditions(infer_a2f(load_a2f(ai_model), load_audio(ai_audio)), ai_out);
      return 0;
    };
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "Run one training stage");
  std::string tr_asset, tr_data, tr_init, tr_out, tr_log, tr_stage = "joint_baseline";
  std::optional<std::size_t> tr_steps, tr_batch, tr_window;
  std::optional<double> tr_lr;
  bool tr_withhold = false;
  std::size_t tr_hidden = 128;
  train_cmd->add_option("--asset", tr_asset, "Asset path")->required();
  train_cmd->add_option("--dataset", tr_data, "Dataset directory")->required();
  train_cmd->add_option("--out", tr_out, "Output checkpoint")->required();
  train_cmd->add_option("--stage", tr_stage, "motion | expression | temporal | joint_baseline")->capture_default_str();
  train_cmd->add_option("--init", tr_init, "Resume from this checkpoint");
  train_cmd->add_option("--steps", tr_steps, "SGD steps (stage default when omitted)");
  train_cmd->add_option("--lr", tr_lr, "Learning rate");
  train_cmd->add_option("--batch-size", tr_batch, "Units per step");
  train_cmd->add_option("--window", tr_window, "Frames per temporal window");
  train_cmd->add_option("--hidden", tr_hidden, "Trunk width for a fresh model")->capture_default_str();
  train_cmd->add_flag("--withhold-motion", tr_withhold, "Expression stage: zero the global rotation instead of feeding it");
  train_cmd->add_option("--log", tr_log, "Append per-step loss records here");
  add_common(train_cmd, common);
  train_cmd->callback([&] {
    action = [&] {
      const ModelAsset asset = load_asset(tr_asset);
      const Dataset data = load_dataset(tr_data);
      PipelineConfig pc;
      pc.init_seed = derive_seed(common.seed, 3);
      pc.hidden = tr_hidden;
      pc.withhold_motion = tr_withhold;
      if (!tr_init.empty()) pc.resume = load_checkpoint(tr_init);
      StageConfig st = stage_defaults(stage_from_name(tr_stage));
      st.seed = derive_seed(common.seed, 10 + static_cast<std::uint64_t>(st.stage));
      if (tr_steps) st.steps = *tr_steps;
      if (tr_lr) st.lr = *tr_lr;
      if (tr_batch) st.batch_size = *tr_batch;
      if (tr_window) st.window = *tr_window;
      pc.stages = {st};
      const PipelineResult pr = run_pipeline(asset, data, pc);
      save_checkpoint(pr.params, tr_out);
      if (!tr_log.empty()) append_log_file(pr.log, tr_log);
      std::cout << pr.report.to_json() << "\n";
      return 0;
    };
  });

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "Generate landmark frames for a condition sequence");
  std::string sa_ckpt, sa_ref, sa_cond, sa_out;
  std::size_t sa_ref_frame = 0;
  sample_cmd->add_option("--checkpoint", sa_ckpt, "Model checkpoint")->required();
  sample_cmd->add_option("--ref", sa_ref, "Landmark file holding the reference frame")->required();
  sample_cmd->add_option("--ref-frame", sa_ref_frame, "Frame index inside --ref")->capture_default_str();
  sample_cmd->add_option("--conditions", sa_cond, "Condition file")->required();
  sample_cmd->add_option("--out", sa_out, "Output landmark file")->required();
  add_common(sample_cmd, common);
  sample_cmd->callback([&] {
    action = [&] {
      const DenoiserParams p = load_checkpoint(sa_ckpt);
      const LandmarkSequence ref = load_landmarks(sa_ref);
      if (sa_ref_frame >= ref.frames.size()) throw UsageError("sample: --ref-frame is past the end of the file");
      const ConditionSequence cond = load_conditions(sa_cond);
      const auto frames = sample(p, ref.frames[sa_ref_frame], cond,
                                 make_schedule(p.config.steps, p.config.beta_min, p.config.beta_max), common.seed);
      save_landmarks({cond.fps, frames}, sa_out);
      return 0;
    };
  });

  // eval
  auto* eval = app.add_subcommand("eval", "Compute a metric and print it as JSON");
  std::string ev_metric, ev_asset, ev_pred, ev_target, ev_cond, ev_audio, ev_ckpt, ev_data, ev_out;
  std::size_t ev_items = 4;
  eval->add_option("--metric", ev_metric, "pose | rmse | jaw | decoupling")
      ->required()
      ->check(CLI::IsMember({"pose", "rmse", "jaw", "decoupling"}));
  eval->add_option("--asset", ev_asset, "Asset path (pose, decoupling)");
  eval->add_option("--pred", ev_pred, "Predicted landmark file (pose, rmse)");
  eval->add_option("--target", ev_target, "Target landmark file (rmse)");
  eval->add_option("--conditions", ev_cond, "Condition file (pose, jaw)");
  eval->add_option("--audio", ev_audio, "Audio feature file (jaw)");
  eval->add_option("--checkpoint", ev_ckpt, "Model checkpoint (decoupling)");
  eval->add_option("--dataset", ev_data, "Dataset directory supplying test items (decoupling)");
  eval->add_option("--items", ev_items, "Number of dataset items to score (decoupling)")->capture_default_str();
  eval->add_option("--out", ev_out, "Write the report here instead of stdout");
  add_common(eval, common);
  eval->callback([&] {
    action = [&] {
      auto need = [&](const std::string& v, const char* flag) {
        if (v.empty()) throw UsageError("eval --metric " + ev_metric + " needs " + flag);
      };
      if (ev_metric == "pose") {
        need(ev_asset, "--asset");
        need(ev_pred, "--pred");
        need(ev_cond, "--conditions");
        const LandmarkSequence pred = load_landmarks(ev_pred);
        write_or_print(to_json(pose_error(pred.frames, load_asset(ev_asset), load_conditions(ev_cond))), ev_out);
      } else if (ev_metric == "rmse") {
        need(ev_pred, "--pred");
        need(ev_target, "--target");
        const double r = landmark_rmse(load_landmarks(ev_pred).frames, load_landmarks(ev_target).frames);
        write_or_print("{\"landmark_rmse\":" + io::format_double(r) + "}\n", ev_out);
      } else if (ev_metric == "jaw") {
        need(ev_cond, "--conditions");
        need(ev_audio, "--audio");
        const double r = jaw_sync(load_conditions(ev_cond), load_audio(ev_audio));
        write_or_print("{\"jaw_sync\":" + io::format_double(r) + "}\n", ev_out);
      } else {
        need(ev_asset, "--asset");
        need(ev_ckpt, "--checkpoint");
        need(ev_data, "--dataset");
        const Dataset data = load_dataset(ev_data);
        std::vector<DecouplingItem> items;
        for (std::size_t i = 0; i < std::min(ev_items, data.size()); ++i) items.push_back({data[i].ref_frame, data[i].conditions});
        write_or_print(to_json(decoupling_score(load_checkpoint(ev_ckpt), load_asset(ev_asset), items, common.seed)), ev_out);
      }
      return 0;
    };
  });

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "Synthesize, train all stages, sample and evaluate");
  std::string pl_cfg, pl_out;
  pipeline->add_option("--config", pl_cfg, "Key-value config (data.*, eval.*, stage sections)");
  pipeline->add_option("--out", pl_out, "Output directory")->required();
  add_common(pipeline, common);
  pipeline->callback([&] { action = [&] { return run_pipeline_cmd(pl_cfg, pl_out, common); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    set_max_threads(common.threads);
    return action();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
