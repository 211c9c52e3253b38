#include "qaface/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include "qaface/checkpoint.hpp"
#include "qaface/config.hpp"
#include "qaface/experiments.hpp"

namespace qaface {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::filesystem::path prepare_out_dir(const std::string& out) {
  std::filesystem::path dir = out.empty() ? "." : out;
  std::filesystem::create_directories(dir);
  return dir;
}

RunConfig load_run_config(const std::string& config_path, bool seed_given, uint64_t seed) {
  RunConfig config = config_path.empty() ? default_run_config() : parse_config(read_file(config_path));
  if (seed_given) apply_seed(config, seed);
  return config;
}

std::vector<double> parse_cli_list(const std::string& text, const std::string& what) {
  std::vector<double> values;
  std::stringstream is(text);
  std::string part;
  while (std::getline(is, part, ',')) {
    try {
      size_t used = 0;
      values.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw InvalidValueError(what, "'" + part + "' is not a number");
    }
  }
  if (values.empty()) throw InvalidValueError(what, "empty list");
  return values;
}

std::string curve_csv(const CurveTable& table) {
  std::string out = "cos_true";
  for (double s : table.s_values) out += ",p_s" + fmt_short(s);
  for (double s : table.s_values) out += ",slope_s" + fmt_short(s);
  out += "\n";
  for (size_t g = 0; g < table.grid.size(); ++g) {
    out += fmt(table.grid[g]);
    for (size_t si = 0; si < table.s_values.size(); ++si)
      out += "," + fmt(table.p.at(static_cast<int64_t>(g), static_cast<int64_t>(si)));
    for (size_t si = 0; si < table.s_values.size(); ++si)
      out += "," + fmt(table.slope.at(static_cast<int64_t>(g), static_cast<int64_t>(si)));
    out += "\n";
  }
  return out;
}

const char* mode_name(InjectionMode mode) {
  switch (mode) {
    case InjectionMode::off: return "off";
    case InjectionMode::vpl_uniform: return "vpl_uniform";
    case InjectionMode::quality_aware: return "quality_aware";
  }
  return "off";
}

int cmd_train(const std::string& config_path, bool seed_given, uint64_t seed,
              const std::string& out, int64_t epochs_override, int64_t stop_after,
              const std::string& resume) {
  RunConfig config = load_run_config(config_path, seed_given, seed);
  if (epochs_override >= 0) {
    config.exp.train.epochs = epochs_override;
    config.explicit_keys.insert("train.epochs");
  }
  uint64_t hash = config_hash(config);
  auto dir = prepare_out_dir(out);
  write_file(dir / "run_config.txt", run_log(config));

  SyntheticDataset data = generate_dataset(config.exp.dataset);
  TrainView view = make_train_view(data);
  TrainerState state = resume.empty() ? init_trainer(config.exp.train, config.exp.dataset)
                                      : load_checkpoint(resume, hash);

  std::ofstream metrics(dir / "metrics.txt", std::ios::binary | std::ios::trunc);
  if (!metrics) throw IoError("cannot open metrics file");
  TrainOptions options;
  options.stop_after_iterations = stop_after;
  options.on_step = [&metrics](const StepMetrics& m) { metrics << format_metrics_line(m) << "\n"; };
  TrainResult result = train(state, config.exp.train, view, options);
  metrics.flush();
  if (!metrics) throw IoError("metrics write failed");

  save_checkpoint((dir / "checkpoint.ckpt").string(), state, hash);
  std::cout << "train done iterations=" << state.iteration << " epochs=" << state.epoch
            << " steps_this_run=" << result.history.size() << "\n";
  return 0;
}

int cmd_eval(const std::string& config_path, bool seed_given, uint64_t seed,
             const std::string& checkpoint, const std::string& out, int64_t pairs_override) {
  RunConfig config = load_run_config(config_path, seed_given, seed);
  if (pairs_override > 0) config.exp.eval_pairs = pairs_override;
  TrainerState state = load_checkpoint(checkpoint, config_hash(config));
  auto dir = prepare_out_dir(out);

  SyntheticDataset data = generate_dataset(config.exp.dataset);
  SeededRng rng(derive_seed(config.seed, "eval"));
  auto pairs = make_verification_pairs(data, config.exp.eval_pairs, rng);
  EvalReport report = evaluate_verification(state, pairs, config.exp.far_grid);

  std::string csv = "metric,value\n";
  csv += "verification_accuracy," + fmt(report.verification_accuracy) + "\n";
  csv += "best_threshold," + fmt(report.best_threshold) + "\n";
  for (const auto& [far, tar] : report.tar_at_far)
    csv += "tar_at_far_" + fmt_short(far) + "," + fmt(tar) + "\n";
  const char* tier_names[] = {"clean", "hard", "unrecognizable"};
  for (int t = 0; t < kNumTiers; ++t)
    csv += std::string("mean_magnitude_") + tier_names[t] + "," +
           fmt(report.mean_magnitude_per_tier[static_cast<size_t>(t)]) + "\n";
  write_file(dir / "eval_report.csv", csv);

  std::string centers_csv = "class,angular_error_rad\n";
  for (size_t j = 0; j < report.center_angular_error_rad.size(); ++j)
    centers_csv += std::to_string(j) + "," + fmt(report.center_angular_error_rad[j]) + "\n";
  write_file(dir / "center_errors.csv", centers_csv);

  std::cout << "eval verification_accuracy=" << fmt(report.verification_accuracy) << "\n";
  return 0;
}

int cmd_curves(const std::string& s_list, int64_t classes, double neg_cos, int64_t points,
               const std::string& out) {
  auto s_values = parse_cli_list(s_list, "curves.s");
  auto dir = prepare_out_dir(out);
  CurveTable fig5 = curve_p_vs_cos(s_values, classes, neg_cos, points);
  write_file(dir / "curves_p.csv", curve_csv(fig5));
  CurveTable fig7 = curve_multiclass(s_values, {-0.2, 0.0, 0.2}, points);
  write_file(dir / "curves_multiclass.csv", curve_csv(fig7));
  std::cout << "curves points=" << points << " s_count=" << s_values.size() << "\n";
  return 0;
}

int cmd_histogram(const std::string& config_path, bool seed_given, uint64_t seed,
                  const std::string& checkpoint, const std::string& levels_list, int64_t bins,
                  int64_t samples, const std::string& out) {
  RunConfig config = load_run_config(config_path, seed_given, seed);
  auto levels = parse_cli_list(levels_list, "histogram.levels");
  TrainerState state = checkpoint.empty() ? init_trainer(config.exp.train, config.exp.dataset)
                                          : load_checkpoint(checkpoint, config_hash(config));
  SyntheticDataset data = generate_dataset(config.exp.dataset);
  SeededRng rng(derive_seed(config.seed, "probe"));
  HistogramTable table = magnitude_histogram(state, data, levels, bins, samples, rng);

  auto dir = prepare_out_dir(out);
  std::string hist = "level,space,bin,lo,hi,count\n";
  auto emit = [&](const char* space, const Matrix& counts, double lo, double hi) {
    double width = (hi - lo) / static_cast<double>(table.bins);
    for (int64_t li = 0; li < counts.rows; ++li)
      for (int64_t b = 0; b < counts.cols; ++b)
        hist += fmt_short(table.levels[static_cast<size_t>(li)]) + std::string(",") + space + "," +
                std::to_string(b) + "," + fmt(lo + width * static_cast<double>(b)) + "," +
                fmt(lo + width * static_cast<double>(b + 1)) + "," +
                fmt_short(counts.at(li, b)) + "\n";
  };
  emit("raw", table.raw_counts, table.raw_lo, table.raw_hi);
  emit("normalized", table.norm_counts, table.norm_lo, table.norm_hi);
  write_file(dir / "histogram.csv", hist);

  std::string means = "level,space,mean\n";
  for (size_t li = 0; li < table.levels.size(); ++li) {
    means += fmt_short(table.levels[li]) + ",raw," + fmt(table.raw_means[li]) + "\n";
    means += fmt_short(table.levels[li]) + ",normalized," + fmt(table.norm_means[li]) + "\n";
  }
  write_file(dir / "magnitude_means.csv", means);
  std::cout << "histogram levels=" << table.levels.size()
            << " samples_per_level=" << table.samples_per_level << "\n";
  return 0;
}

int cmd_drift(const DriftConfig& drift_config, const std::string& out) {
  DriftResult result = center_drift_experiment(drift_config);
  auto dir = prepare_out_dir(out);

  const double to_deg = 180.0 / std::numbers::pi;
  int64_t dim = result.runs.empty() ? 0 : result.runs.front().variants[0].displacement.cols;
  std::string table = "seed,variant,class,angular_error_deg,effective_error_deg,writes";
  for (int64_t k = 0; k < dim; ++k) table += ",disp_" + std::to_string(k);
  table += "\n";
  for (const auto& run : result.runs) {
    for (const auto& variant : run.variants) {
      for (size_t j = 0; j < variant.angular_error_rad.size(); ++j) {
        table += std::to_string(run.seed) + "," + mode_name(variant.mode) + "," + std::to_string(j) +
                 "," + fmt(variant.angular_error_rad[j] * to_deg) + "," +
                 fmt(variant.effective_error_rad[j] * to_deg) + "," +
                 std::to_string(variant.writes_per_class[j]);
        for (int64_t k = 0; k < dim; ++k)
          table += "," + fmt(variant.displacement.at(static_cast<int64_t>(j), k));
        table += "\n";
      }
    }
  }
  write_file(dir / "drift_table.csv", table);

  std::string summary = "variant,mean_angular_error_deg\n";
  const char* names[] = {"off", "vpl_uniform", "quality_aware"};
  for (int v = 0; v < 3; ++v)
    summary += std::string(names[v]) + "," +
               fmt(result.mean_error_rad[static_cast<size_t>(v)] * to_deg) + "\n";
  summary += "quality_win_fraction," + fmt(result.quality_win_fraction) + "\n";
  write_file(dir / "drift_summary.csv", summary);

  std::cout << "drift quality_win_fraction=" << fmt(result.quality_win_fraction) << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_path, bool seed_given, uint64_t seed,
               const std::string& param_name, const std::string& values_list,
               const std::string& out) {
  RunConfig config = load_run_config(config_path, seed_given, seed);
  AblationParam param;
  if (param_name == "delta_t") param = AblationParam::delta_t;
  else if (param_name == "tau") param = AblationParam::tau;
  else if (param_name == "augment_probability") param = AblationParam::augment_probability;
  else throw InvalidValueError("ablate.param", "'" + param_name + "' is not delta_t/tau/augment_probability");
  auto values = parse_cli_list(values_list, "ablate.values");

  auto rows = ablation_harness(param, values, config.exp);
  std::string csv = "value,verification_accuracy";
  for (double far : config.exp.far_grid) csv += ",tar_at_far_" + fmt_short(far);
  csv += ",final_epoch_loss,mean_ignored_fraction\n";
  for (const auto& row : rows) {
    csv += fmt_short(row.value) + "," + fmt(row.verification_accuracy);
    for (double tar : row.tar_at_far) csv += "," + fmt(tar);
    csv += "," + fmt(row.final_epoch_loss) + "," + fmt(row.mean_ignored_fraction) + "\n";
  }
  auto dir = prepare_out_dir(out);
  write_file(dir / "ablation.csv", csv);
  std::cout << "ablate param=" << param_name << " rows=" << rows.size() << "\n";
  return 0;
}

int cmd_gradcheck(int64_t cases, uint64_t seed, const std::string& out) {
  constexpr double kTolerance = 1e-6;
  GradCheckReport report = gradcheck(cases, seed);
  auto line = [&](const char* name, double err) {
    std::cout << name << " max_rel_err=" << fmt(err) << (err <= kTolerance ? " PASS" : " FAIL")
              << "\n";
  };
  std::cout << "gradcheck cases=" << cases << " seed=" << seed << "\n";
  line("features_plain   ", report.features_plain);
  line("centers_plain    ", report.centers_plain);
  line("features_injected", report.features_injected);
  line("margin_backward  ", report.margin_backward);
  bool pass = report.worst() <= kTolerance;
  std::cout << "overall worst=" << fmt(report.worst()) << " tolerance=" << fmt_short(kTolerance)
            << (pass ? " PASS" : " FAIL") << "\n";
  if (!out.empty()) {
    std::string csv = "operation,max_rel_err\n";
    csv += "features_plain," + fmt(report.features_plain) + "\n";
    csv += "centers_plain," + fmt(report.centers_plain) + "\n";
    csv += "features_injected," + fmt(report.features_injected) + "\n";
    csv += "margin_backward," + fmt(report.margin_backward) + "\n";
    write_file(prepare_out_dir(out) / "gradcheck.csv", csv);
  }
  return pass ? 0 : 1;
}

}  // namespace

int run_command(std::vector<std::string> args) {
  CLI::App app{"QAFace numerical laboratory"};
  app.require_subcommand(1);

  std::string config_path, out = ".", checkpoint, resume;
  uint64_t seed = 0;
  bool seed_given = false;
  auto add_common = [&](CLI::App* cmd, bool with_config = true) {
    if (with_config) cmd->add_option("--config", config_path, "config file (section.key = value)");
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--seed", seed, "root seed override")->each([&](const std::string&) {
      seed_given = true;
    });
  };

  auto* train_cmd = app.add_subcommand("train", "train on the synthetic dataset");
  int64_t epochs_override = -1, stop_after = -1;
  add_common(train_cmd);
  train_cmd->add_option("--epochs", epochs_override, "override train.epochs");
  train_cmd->add_option("--stop-after-iters", stop_after, "stop after this many global iterations");
  train_cmd->add_option("--resume", resume, "checkpoint to resume from");

  auto* eval_cmd = app.add_subcommand("eval", "verification evaluation of a checkpoint");
  int64_t pairs_override = -1;
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  eval_cmd->add_option("--pairs", pairs_override, "genuine/impostor pair count override");

  auto* curves_cmd = app.add_subcommand("curves", "probability-vs-cosine curve data");
  std::string s_list = "1,8,16,32,64";
  int64_t classes = 4, points = 401;
  double neg_cos = 0.0;
  add_common(curves_cmd, false);
  curves_cmd->add_option("--s", s_list, "comma list of scale values");
  curves_cmd->add_option("--classes", classes, "number of classes");
  curves_cmd->add_option("--neg-cos", neg_cos, "shared negative-class cosine");
  curves_cmd->add_option("--points", points, "grid points over [-1, 1]");

  auto* hist_cmd = app.add_subcommand("histogram", "feature-magnitude distributions");
  std::string levels_list = "0.5,0.95";
  int64_t bins = 40, samples = 1000;
  add_common(hist_cmd);
  hist_cmd->add_option("--checkpoint", checkpoint, "checkpoint path (omit for untrained state)");
  hist_cmd->add_option("--levels", levels_list, "degradation levels");
  hist_cmd->add_option("--bins", bins, "histogram bins");
  hist_cmd->add_option("--samples", samples, "samples per level");

  auto* drift_cmd = app.add_subcommand("drift", "two-class center-drift experiment");
  DriftConfig drift_config;
  add_common(drift_cmd, false);
  drift_cmd->add_option("--seeds", drift_config.num_seeds, "number of seeds");
  drift_cmd->add_option("--base-seed", drift_config.base_seed, "first seed");
  drift_cmd->add_option("--unrec-frac", drift_config.unrecognizable_fraction,
                        "unrecognizable fraction");
  drift_cmd->add_option("--hard-frac", drift_config.hard_fraction, "hard fraction");
  drift_cmd->add_option("--classes", drift_config.num_classes, "number of classes");
  drift_cmd->add_option("--dim", drift_config.dim, "feature-space dimension");
  drift_cmd->add_option("--spc", drift_config.samples_per_class, "samples per class");
  drift_cmd->add_option("--epochs", drift_config.epochs, "epochs per variant");
  drift_cmd->add_option("--batch", drift_config.batch_size, "batch size");
  drift_cmd->add_option("--lambda", drift_config.vpl_lambda, "vpl injection weight");
  drift_cmd->add_option("--tau", drift_config.tau, "quality ignore threshold");
  drift_cmd->add_option("--start-epoch", drift_config.start_epoch, "injection start epoch");
  drift_cmd->add_option("--delta-t", drift_config.delta_t, "memory staleness threshold");
  drift_cmd->add_option("--scale", drift_config.margin.scale, "margin loss scale s");
  drift_cmd->add_option("--margin-add", drift_config.margin.additive, "additive angular margin");

  auto* ablate_cmd = app.add_subcommand("ablate", "parameter sweep tables");
  std::string param_name, values_list;
  add_common(ablate_cmd);
  ablate_cmd->add_option("--param", param_name, "delta_t | tau | augment_probability")->required();
  ablate_cmd->add_option("--values", values_list, "comma list of values")->required();

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  int64_t cases = 100;
  uint64_t grad_seed = 7;
  std::string grad_out;
  grad_cmd->add_option("--cases", cases, "randomized cases per operation");
  grad_cmd->add_option("--seed", grad_seed, "rng seed");
  grad_cmd->add_option("--out", grad_out, "optional output directory for gradcheck.csv");

  std::vector<const char*> argv;
  argv.push_back("qaface");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed())
      return cmd_train(config_path, seed_given, seed, out, epochs_override, stop_after, resume);
    if (eval_cmd->parsed())
      return cmd_eval(config_path, seed_given, seed, checkpoint, out, pairs_override);
    if (curves_cmd->parsed()) return cmd_curves(s_list, classes, neg_cos, points, out);
    if (hist_cmd->parsed())
      return cmd_histogram(config_path, seed_given, seed, checkpoint, levels_list, bins, samples, out);
    if (drift_cmd->parsed()) return cmd_drift(drift_config, out);
    if (ablate_cmd->parsed())
      return cmd_ablate(config_path, seed_given, seed, param_name, values_list, out);
    if (grad_cmd->parsed()) return cmd_gradcheck(cases, grad_seed, grad_out);
    std::cerr << "error kind=Usage detail=\"no subcommand\"\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error kind=ParseError detail=\"" << e.what() << "\"\n";
    return 2;
  } catch (const UnknownKeyError& e) {
    std::cerr << "error kind=UnknownKey detail=\"" << e.what() << "\"\n";
    return 2;
  } catch (const InvalidValueError& e) {
    std::cerr << "error kind=InvalidValue detail=\"" << e.what() << "\"\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error kind=Runtime detail=\"" << e.what() << "\"\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error kind=Unexpected detail=\"" << e.what() << "\"\n";
    return 1;
  }
}

}  // namespace qaface
