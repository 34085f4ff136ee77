// elastoreg — physics-informed non-rigid point-set registration CLI.
//
// Subcommands: generate, register, train, infer, eval. Every run writes a
// manifest.json recording the command, resolved-config hash, seed and
// artifact list, so outputs are reproducible from the manifest alone.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "elastoreg/engine.hpp"
#include "elastoreg/jsoncfg.hpp"
#include "elastoreg/network.hpp"
#include "elastoreg/synthdata.hpp"
#include "elastoreg/textio.hpp"

namespace fs = std::filesystem;
using namespace elastoreg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitVersion = 3;
constexpr int kExitNumeric = 4;

struct CommonArgs {
  std::string out_dir;
  std::string config_path;
  std::optional<double> weight_w;
  std::optional<std::uint64_t> seed;
  bool no_pinn = false;
};

std::string json_opt(const std::optional<double>& v) {
  return v ? textio::format_double(*v) : std::string("null");
}

std::string loss_json(const engine::LossBreakdown& b) {
  return "{\"l_r\": " + textio::format_double(b.l_r) + ", \"l_s\": " + textio::format_double(b.l_s) +
         ", \"l_c\": " + textio::format_double(b.l_c) + ", \"l_e\": " + textio::format_double(b.l_e) +
         ", \"total\": " + textio::format_double(b.total) +
         ", \"weight_w\": " + textio::format_double(b.weight_w) + "}";
}

std::string metrics_json(const engine::Metrics& m, const engine::LossBreakdown* final_loss,
                         const engine::LossBreakdown* identity_loss) {
  std::string out = "{\n";
  out += "  \"cd\": " + textio::format_double(m.cd) + ",\n";
  out += "  \"cd_pre\": " + textio::format_double(m.cd_pre) + ",\n";
  out += "  \"cd_surface\": " + json_opt(m.cd_surface) + ",\n";
  out += "  \"dm_all\": " + textio::format_double(m.dm_all) + ",\n";
  out += "  \"dm_rigid\": " + json_opt(m.dm_rigid) + ",\n";
  out += "  \"dm_soft\": " + json_opt(m.dm_soft) + ",\n";
  out += "  \"dm_ratio\": " + json_opt(m.dm_ratio) + ",\n";
  out += "  \"tre\": " + json_opt(m.tre) + ",\n";
  out += "  \"rmse\": " + json_opt(m.rmse);
  if (final_loss) {
    out += ",\n  \"loss\": " + loss_json(*final_loss);
    out += ",\n  \"loss_identity\": " + loss_json(*identity_loss);
  }
  out += "\n}\n";
  return out;
}

std::string history_jsonl(const std::vector<engine::LossBreakdown>& history) {
  std::string out;
  for (std::size_t i = 0; i < history.size(); ++i) {
    out += "{\"step\": " + std::to_string(i) + ", \"l_r\": " + textio::format_double(history[i].l_r) +
           ", \"l_s\": " + textio::format_double(history[i].l_s) +
           ", \"l_c\": " + textio::format_double(history[i].l_c) +
           ", \"l_e\": " + textio::format_double(history[i].l_e) +
           ", \"total\": " + textio::format_double(history[i].total) +
           ", \"weight_w\": " + textio::format_double(history[i].weight_w) + "}\n";
  }
  return out;
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const std::string& config_hash, std::uint64_t seed,
                    const std::vector<std::string>& artifacts, double wall_time_s) {
  std::string out = "{\n";
  out += "  \"command\": \"" + command + "\",\n";
  out += "  \"config_hash\": \"" + config_hash + "\",\n";
  out += "  \"seed\": " + std::to_string(seed) + ",\n";
  out += "  \"artifact_paths\": [";
  for (std::size_t i = 0; i < artifacts.size(); ++i) {
    out += (i ? ", " : "") + std::string("\"") + artifacts[i] + "\"";
  }
  out += "],\n";
  out += "  \"wall_time_s\": " + textio::format_double(wall_time_s) + "\n}\n";
  textio::write_text_file(out_dir / "manifest.json", out);
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Resolves the training configuration: file config, then command-line
// overrides. Returns the config plus its canonical JSON (for hashing).
std::pair<engine::TrainConfig, jsoncfg::json> resolve_train_config(const CommonArgs& args) {
  jsoncfg::json doc = jsoncfg::json::object();
  if (!args.config_path.empty()) {
    doc = jsoncfg::parse_file(args.config_path);
  }
  engine::TrainConfig cfg = jsoncfg::train_config_from_json(doc);
  if (args.weight_w) cfg.weight_w = *args.weight_w;
  if (args.seed) cfg.seed = *args.seed;
  if (args.no_pinn) cfg.use_pde_terms = false;
  jsoncfg::json resolved = jsoncfg::to_json(cfg);
  if (doc.contains("supervised_truth")) {
    resolved["supervised_truth"] = doc["supervised_truth"];
  }
  return {std::move(cfg), std::move(resolved)};
}

engine::EvalData load_eval_data(const std::string& landmarks_path, const std::string& truth_path,
                                const geom::PointSet& source) {
  engine::EvalData eval;
  if (!landmarks_path.empty()) {
    eval.landmarks = textio::read_landmarks_csv(landmarks_path);
  }
  if (!truth_path.empty()) {
    const auto field = textio::read_displacement_csv(truth_path);
    if (field.displacements.rows() != source.points.rows()) {
      throw config_error("ground-truth displacement rows do not match the source cloud");
    }
    eval.truth_displacements = field.displacements;
  }
  return eval;
}

int cmd_generate(const std::string& scenario_path, const CommonArgs& args) {
  Stopwatch timer;
  jsoncfg::json doc = jsoncfg::parse_file(scenario_path);
  synth::Scenario scenario = jsoncfg::scenario_from_json(doc);
  if (args.seed) scenario.seed = *args.seed;
  const synth::GeneratedPair pair = synth::generate(scenario);

  const fs::path out(args.out_dir);
  fs::create_directories(out);
  textio::write_text_file(out / "source.csv", textio::pointset_csv(pair.source));
  textio::write_text_file(out / "target.csv", textio::pointset_csv(pair.target));
  textio::write_text_file(out / "truth.csv",
                          textio::displacement_csv(pair.source.points, pair.truth.displacement_field));
  textio::write_text_file(out / "landmarks.csv", textio::landmarks_csv(pair.truth.landmark_pairs));

  jsoncfg::json resolved = jsoncfg::to_json(pair.scenario);
  resolved["resolved_amplitude"] = pair.resolved_amplitude;
  resolved["realized_dm_mm"] = pair.realized_dm;
  textio::write_text_file(out / "scenario_resolved.json", resolved.dump(2) + "\n");

  write_manifest(out, "generate", jsoncfg::config_hash(jsoncfg::to_json(pair.scenario)),
                 scenario.seed,
                 {"source.csv", "target.csv", "truth.csv", "landmarks.csv", "scenario_resolved.json"},
                 timer.seconds());
  return kExitOk;
}

int cmd_register(const std::string& source_path, const std::string& target_path,
                 const std::string& landmarks_path, const std::string& truth_path,
                 const CommonArgs& args) {
  Stopwatch timer;
  auto [cfg, resolved] = resolve_train_config(args);
  const geom::PointSet source = textio::read_pointset_csv(source_path);
  const geom::PointSet target = textio::read_pointset_csv(target_path);
  const engine::EvalData eval = load_eval_data(landmarks_path, truth_path, source);
  if (resolved.contains("supervised_truth")) {
    const auto field =
        textio::read_displacement_csv(resolved["supervised_truth"].get<std::string>());
    cfg.supervised_truth = field.displacements;
  }

  const engine::RegistrationResult res = engine::train_single_pair(source, target, cfg, eval);

  const fs::path out(args.out_dir);
  fs::create_directories(out);
  textio::write_text_file(out / "warped.csv", textio::pointset_csv(res.warped));
  textio::write_text_file(out / "displacement.csv",
                          textio::displacement_csv(source.points, res.displacement));
  textio::write_text_file(out / "loss_history.jsonl", history_jsonl(res.history));
  textio::write_text_file(out / "metrics.json",
                          metrics_json(res.metrics, &res.final_loss, &res.identity_loss));
  write_manifest(out, "register", jsoncfg::config_hash(resolved), cfg.seed,
                 {"warped.csv", "displacement.csv", "loss_history.jsonl", "metrics.json"},
                 timer.seconds());
  return kExitOk;
}

std::vector<engine::Subject> discover_population(const fs::path& dir,
                                                 engine::TrainConfig& cfg) {
  if (!fs::is_directory(dir)) {
    throw config_error("population directory does not exist: " + dir.string());
  }
  std::vector<fs::path> subject_dirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "source.csv") &&
        fs::exists(entry.path() / "target.csv")) {
      subject_dirs.push_back(entry.path());
    }
  }
  std::sort(subject_dirs.begin(), subject_dirs.end());

  std::vector<engine::Subject> subjects;
  std::optional<jsoncfg::json> material_doc;
  for (const auto& sd : subject_dirs) {
    engine::Subject s;
    s.source = textio::read_pointset_csv(sd / "source.csv");
    s.target = textio::read_pointset_csv(sd / "target.csv");
    s.id = sd.filename().string();
    s.source.subject_id = s.id;
    s.target.subject_id = s.id;
    subjects.push_back(std::move(s));
    const fs::path mpath = sd / "material.json";
    if (fs::exists(mpath)) {
      jsoncfg::json m = jsoncfg::parse_file(mpath);
      if (material_doc && *material_doc != m) {
        throw config_error("inconsistent material configs across subjects (" + sd.string() + ")");
      }
      material_doc = std::move(m);
    } else if (material_doc) {
      throw config_error("material.json present for some subjects but missing in " + sd.string());
    }
  }
  if (material_doc) cfg.material = jsoncfg::material_from_json(*material_doc);
  if (subjects.size() < 2) {
    throw config_error("population training needs at least 2 subject directories with source.csv and target.csv");
  }
  return subjects;
}

int cmd_train(const std::string& population_dir, const CommonArgs& args) {
  Stopwatch timer;
  auto [cfg, resolved] = resolve_train_config(args);
  std::vector<engine::Subject> subjects = discover_population(population_dir, cfg);
  resolved["material"] = jsoncfg::to_json(cfg.material);

  std::vector<engine::EpochLoss> log;
  const net::RegModel model = engine::train_population(subjects, cfg, &log);

  const fs::path out(args.out_dir);
  fs::create_directories(out);
  net::save_checkpoint(model, out / "model.json");
  std::string jsonl;
  for (const auto& el : log) {
    jsonl += "{\"epoch\": " + std::to_string(el.epoch) +
             ", \"l_r\": " + textio::format_double(el.mean.l_r) +
             ", \"l_s\": " + textio::format_double(el.mean.l_s) +
             ", \"l_c\": " + textio::format_double(el.mean.l_c) +
             ", \"l_e\": " + textio::format_double(el.mean.l_e) +
             ", \"total\": " + textio::format_double(el.mean.total) + "}\n";
  }
  textio::write_text_file(out / "epoch_loss.jsonl", jsonl);
  write_manifest(out, "train", jsoncfg::config_hash(resolved), cfg.seed,
                 {"model.json", "epoch_loss.jsonl"}, timer.seconds());
  return kExitOk;
}

int cmd_infer(const std::string& model_path, const std::string& source_path,
              const std::string& target_path, const std::string& landmarks_path,
              const std::string& truth_path, const CommonArgs& args) {
  Stopwatch timer;
  auto [cfg, resolved] = resolve_train_config(args);
  const net::RegModel model = net::load_checkpoint(model_path);
  const geom::PointSet source = textio::read_pointset_csv(source_path);
  const geom::PointSet target = textio::read_pointset_csv(target_path);
  const engine::EvalData eval = load_eval_data(landmarks_path, truth_path, source);

  const engine::RegistrationResult res = engine::register_pair(model, source, target, cfg, eval);

  const fs::path out(args.out_dir);
  fs::create_directories(out);
  textio::write_text_file(out / "warped.csv", textio::pointset_csv(res.warped));
  textio::write_text_file(out / "displacement.csv",
                          textio::displacement_csv(source.points, res.displacement));
  textio::write_text_file(out / "metrics.json",
                          metrics_json(res.metrics, &res.final_loss, &res.identity_loss));
  write_manifest(out, "infer", jsoncfg::config_hash(resolved), cfg.seed,
                 {"warped.csv", "displacement.csv", "metrics.json"}, timer.seconds());
  return kExitOk;
}

int cmd_eval(const std::string& source_path, const std::string& target_path,
             const std::string& warped_path, const std::string& displacement_path,
             const std::string& landmarks_path, const std::string& truth_path,
             const CommonArgs& args) {
  Stopwatch timer;
  const geom::PointSet source = textio::read_pointset_csv(source_path);
  const geom::PointSet target = textio::read_pointset_csv(target_path);

  geom::Points warped;
  if (!warped_path.empty()) {
    const geom::PointSet w = textio::read_pointset_csv(warped_path);
    if (w.points.rows() != source.points.rows()) {
      throw config_error("warped cloud does not match the source cardinality");
    }
    warped = w.points;
  } else if (!displacement_path.empty()) {
    const auto field = textio::read_displacement_csv(displacement_path);
    if (field.displacements.rows() != source.points.rows()) {
      throw config_error("displacement field does not match the source cardinality");
    }
    warped = source.points + field.displacements;
  } else {
    throw config_error("eval needs --warped or --displacement");
  }

  engine::EvalData eval = load_eval_data(landmarks_path, truth_path, source);

  engine::Metrics m;
  m.cd = geom::chamfer_distance(warped, target.points);
  m.cd_pre = geom::chamfer_distance(source.points, target.points);
  const auto src_surf = source.indices_where(geom::Region::Surface);
  const auto tgt_surf = target.indices_where(geom::Region::Surface);
  if (!src_surf.empty() && !tgt_surf.empty()) {
    geom::Points ws(static_cast<Eigen::Index>(src_surf.size()), 3);
    for (std::size_t i = 0; i < src_surf.size(); ++i) {
      ws.row(static_cast<Eigen::Index>(i)) = warped.row(src_surf[i]);
    }
    m.cd_surface = geom::chamfer_distance(ws, target.rows(tgt_surf));
  }
  m.dm_all = geom::deformation_magnitude(source.points, warped);
  auto dm_of = [&](geom::Compartment c) -> std::optional<double> {
    auto idx = source.indices_where(geom::Region::Internal, c);
    if (idx.empty()) idx = source.indices_where(std::nullopt, c);
    if (idx.empty()) return std::nullopt;
    return geom::deformation_magnitude(source.points, warped, idx);
  };
  m.dm_rigid = dm_of(geom::Compartment::Rigid);
  m.dm_soft = dm_of(geom::Compartment::Soft);
  if (m.dm_rigid && m.dm_soft && *m.dm_soft > 0.0) m.dm_ratio = *m.dm_rigid / *m.dm_soft;
  if (!eval.landmarks.empty()) {
    // no model here: warp landmark clusters with the displacement of the
    // nearest source point
    const geom::Points disp = warped - source.points;
    const double t = geom::tre(eval.landmarks, [&](const geom::Vec3& p) {
      const int idx = geom::nearest_index_bruteforce(source.points, p);
      return geom::Vec3(p + disp.row(idx).transpose());
    });
    m.tre = t;
  }
  if (eval.truth_displacements) {
    m.rmse = geom::rmse(warped - source.points, *eval.truth_displacements);
  }

  const fs::path out(args.out_dir);
  fs::create_directories(out);
  textio::write_text_file(out / "metrics.json", metrics_json(m, nullptr, nullptr));
  write_manifest(out, "eval", jsoncfg::config_hash(jsoncfg::json::object()), 0,
                 {"metrics.json"}, timer.seconds());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"physics-informed elastic point-set registration"};
  app.require_subcommand(1);

  CommonArgs args;
  double weight_override = 0.0;
  std::uint64_t seed_override = 0;

  auto add_common = [&](CLI::App* sub, bool with_config = true) {
    sub->add_option("--out", args.out_dir, "output directory")->required();
    if (with_config) {
      sub->add_option("--config", args.config_path, "training config JSON");
      sub->add_option("--w", weight_override, "override the Chamfer weight w")
          ->check(CLI::PositiveNumber);
      sub->add_flag("--no-pinn", args.no_pinn, "disable the three PDE loss terms");
    }
    sub->add_option("--seed", seed_override, "override the seed");
  };

  std::string scenario_path, source_path, target_path, model_path;
  std::string landmarks_path, truth_path, warped_path, displacement_path;

  CLI::App* generate = app.add_subcommand("generate", "generate a synthetic benchmark pair");
  generate->add_option("scenario", scenario_path, "scenario JSON")->required();
  add_common(generate, false);

  CLI::App* reg = app.add_subcommand("register", "single-pair patient-specific registration");
  reg->add_option("source", source_path)->required();
  reg->add_option("target", target_path)->required();
  reg->add_option("--landmarks", landmarks_path, "landmark CSV for TRE");
  reg->add_option("--truth", truth_path, "ground-truth displacement CSV for rmse");
  add_common(reg);

  CLI::App* train = app.add_subcommand("train", "population (amortized) training");
  train->add_option("population_dir", source_path)->required();
  add_common(train);

  CLI::App* infer = app.add_subcommand("infer", "forward-only registration with a checkpoint");
  infer->add_option("model", model_path)->required();
  infer->add_option("source", source_path)->required();
  infer->add_option("target", target_path)->required();
  infer->add_option("--landmarks", landmarks_path);
  infer->add_option("--truth", truth_path);
  add_common(infer);

  CLI::App* eval = app.add_subcommand("eval", "metrics for an existing warp");
  eval->add_option("source", source_path)->required();
  eval->add_option("target", target_path)->required();
  eval->add_option("--warped", warped_path, "warped cloud CSV");
  eval->add_option("--displacement", displacement_path, "displacement CSV");
  eval->add_option("--landmarks", landmarks_path);
  eval->add_option("--truth", truth_path);
  add_common(eval, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  for (const CLI::App* sub : {generate, reg, train, infer, eval}) {
    if (!sub->parsed()) continue;
    if (const auto* o = sub->get_option_no_throw("--seed"); o && o->count()) {
      args.seed = seed_override;
    }
    if (const auto* o = sub->get_option_no_throw("--w"); o && o->count()) {
      args.weight_w = weight_override;
    }
  }

  try {
    if (generate->parsed()) return cmd_generate(scenario_path, args);
    if (reg->parsed()) return cmd_register(source_path, target_path, landmarks_path, truth_path, args);
    if (train->parsed()) return cmd_train(source_path, args);
    if (infer->parsed()) return cmd_infer(model_path, source_path, target_path, landmarks_path, truth_path, args);
    if (eval->parsed()) return cmd_eval(source_path, target_path, warped_path, displacement_path, landmarks_path, truth_path, args);
  } catch (const version_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitVersion;
  } catch (const numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return kExitInput;
}
