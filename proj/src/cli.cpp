#include "protosphere/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <CLI11.hpp>

#include "protosphere/assignment.hpp"
#include "protosphere/bench.hpp"
#include "protosphere/data.hpp"
#include "protosphere/error.hpp"
#include "protosphere/hypersphere.hpp"
#include "protosphere/model.hpp"
#include "protosphere/trainer.hpp"

namespace protosphere::cli {

namespace fs = std::filesystem;

namespace {

// Raised for validation failures that map to the usage exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

void print_report(std::ostream& out, const GeometryReport& r) {
  out << "apad: " << fixed(r.apad, 6) << " rad (" << fixed(r.apad * 180.0 / std::numbers::pi, 3) << " deg)\n"
      << "min_cos: " << fixed(r.min_cos, 6) << "\n"
      << "max_cos: " << fixed(r.max_cos, 6) << "\n"
      << "min_pairwise_distance: " << fixed(r.min_pairwise_distance, 6) << "\n"
      << "etf_gap: " << fixed(r.etf_gap, 6) << "\n";
}

// Angular gaps between consecutive prototypes on the circle, in degrees.
std::vector<double> circle_gaps_deg(const PrototypeMatrix& w) {
  std::vector<double> angles;
  for (std::size_t k = 0; k < w.count(); ++k) angles.push_back(std::atan2(w.column(k)(1), w.column(k)(0)));
  std::sort(angles.begin(), angles.end());
  std::vector<double> gaps;
  for (std::size_t k = 0; k < angles.size(); ++k) {
    const double next = k + 1 < angles.size() ? angles[k + 1] : angles[0] + 2.0 * std::numbers::pi;
    gaps.push_back((next - angles[k]) * 180.0 / std::numbers::pi);
  }
  return gaps;
}

std::string resolved_config(const CLI::App& sub) {
  std::string out = "# protosphere resolved config: " + sub.get_name() + "\n";
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config" || opt->get_lnames().empty()) continue;
    std::string value;
    if (opt->get_expected_min() == 0) {
      value = opt->count() > 0 ? "true" : "false";
    } else if (opt->count() > 0) {
      const auto& results = opt->results();
      for (std::size_t i = 0; i < results.size(); ++i) value += (i ? "," : "") + results[i];
    } else {
      value = opt->get_default_str();
    }
    out += name + "=" + value + "\n";
  }
  return out;
}

void write_text(const fs::path& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << contents;
}

std::map<std::string, std::string> read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#' || line[first] == ';' || line[first] == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(ln) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r\"");
      const auto b = s.find_last_not_of(" \t\r\"");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    while (!key.empty() && key.front() == '-') key.erase(key.begin());
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& key) {
  const std::string flag = "--" + key;
  for (const auto& a : args) {
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

// Flags > config file > defaults: config entries are injected ahead of the
// user's arguments only for options the user did not set.
std::vector<std::string> merge_config(const CLI::App& sub, const std::vector<std::string>& args) {
  std::vector<std::string> rest(args.begin() + 1, args.end());
  std::optional<std::string> config_path;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    if (rest[i] == "--config" && i + 1 < rest.size()) {
      config_path = rest[i + 1];
    } else if (rest[i].rfind("--config=", 0) == 0) {
      config_path = rest[i].substr(9);
    }
  }
  if (!config_path) return rest;

  std::vector<std::string> merged;
  for (const auto& [key, value] : read_config_file(*config_path)) {
    const CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (opt == nullptr) throw UsageError("unknown key '" + key + "' in config file " + *config_path);
    if (key == "config" || given_on_command_line(rest, key)) continue;
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1") merged.push_back("--" + key);
    } else {
      merged.push_back("--" + key);
      merged.push_back(value);
    }
  }
  merged.insert(merged.end(), rest.begin(), rest.end());
  return merged;
}

struct PrototypeArgs {
  std::size_t d = 0;
  std::size_t c = 0;
  UniformityConfig config;
  bool closed_form = false;
  std::string out;
};

int cmd_prototypes(const PrototypeArgs& a, const CLI::App& sub, std::ostream& out) {
  if (a.d < 2 || a.c < 2) throw UsageError("--d and --c must be at least 2");
  if (a.closed_form && a.d != 2) throw UsageError("--closed-form requires --d 2");
  if (!a.closed_form) {
    try {
      a.config.validate(a.c);
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
  }
  const PrototypeMatrix w = a.closed_form ? circle_prototypes(a.c) : estimate_prototypes(a.d, a.c, a.config);
  save_prototypes(a.out, w, {a.config.temperature, a.config.seed});
  write_text(a.out + ".config", resolved_config(sub));

  out << "wrote " << a.out << " (d=" << a.d << ", c=" << a.c << (a.closed_form ? ", closed form" : "") << ")\n";
  print_report(out, geometry_report(w));
  if (a.d == 2) {
    out << "angular gaps (deg):";
    for (const double g : circle_gaps_deg(w)) out << " " << fixed(g, 3);
    out << "\n";
  }
  return kOk;
}

struct GenDataArgs {
  MixtureSpec mixture;
  double imbalance = 1.0;
  std::size_t max_per_class = 0;
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a, const CLI::App& sub, std::ostream& out) {
  if (!(a.imbalance > 0.0 && a.imbalance <= 1.0)) throw UsageError("--imbalance must lie in (0, 1]");
  VectorDataset ds = [&] {
    try {
      return generate_gaussian_mixture(a.mixture);
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
  }();
  if (a.imbalance < 1.0) {
    const LongTailSpec lt{a.imbalance, a.max_per_class == 0 ? a.mixture.per_class : a.max_per_class};
    try {
      ds = apply_long_tail(ds, lt, a.mixture.seed + 7);
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
  }
  save_dataset(a.out, ds);
  write_text(a.out + ".config", resolved_config(sub));
  out << "wrote " << a.out << " (n=" << ds.size() << ", p=" << ds.input_dim() << ", c=" << ds.class_count() << ")\n";
  out << "per-class counts:";
  for (const auto n : ds.per_class_counts()) out << " " << n;
  out << "\n";
  return kOk;
}

struct TrainArgs {
  std::string data;
  std::string eval_data;
  std::string prototypes;
  std::string out_dir;
  TrainConfig config;
  std::string loss = "lipm";
  std::string weighting = "none";
  bool random_init = false;
};

int cmd_train(TrainArgs a, const CLI::App& sub, std::ostream& out) {
  try {
    a.config.loss_mode = parse_loss_mode(a.loss);
    a.config.class_weighting = parse_class_weighting(a.weighting);
    a.config.initial_assignment = a.random_init ? InitialAssignment::random : InitialAssignment::identity;
    a.config.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const VectorDataset data = load_dataset(a.data);
  const PrototypeMatrix w = load_prototypes(a.prototypes);
  if (data.class_count() != w.count()) {
    throw UsageError("incompatible artifacts: dataset " + a.data + " has c=" + std::to_string(data.class_count()) +
                     " but prototypes " + a.prototypes + " have c=" + std::to_string(w.count()));
  }
  std::optional<VectorDataset> eval;
  if (!a.eval_data.empty()) {
    eval = load_dataset(a.eval_data);
    if (eval->class_count() != data.class_count() || eval->input_dim() != data.input_dim()) {
      throw UsageError("incompatible artifacts: evaluation set " + a.eval_data + " does not match dataset " + a.data);
    }
  }
  for (std::size_t k = 0; k < data.class_count(); ++k) {
    if (data.per_class_counts()[k] == 0) {
      throw UsageError("dataset " + a.data + " has no samples of class " + std::to_string(k));
    }
  }

  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  const TrainState state = train(data, w, a.config, eval ? &*eval : nullptr);
  save_checkpoint(dir / "checkpoint.txt", state.params, state.classifier);
  save_assignment(dir / "assignment.txt", state.assignment);
  write_metrics_log(dir / "metrics.jsonl", state.history);
  write_text(dir / "resolved_config.txt", resolved_config(sub));

  const auto& last = state.history.back();
  out << "epochs: " << state.epoch << "\n"
      << "final train loss: " << fixed(last.train_loss, 6) << "\n"
      << "final accuracy: " << fixed(last.eval_accuracy, 2) << "\n";
  return kOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string prototypes;
  std::string assignment;
  std::string data;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  std::optional<Eigen::MatrixXd> classifier;
  const BackboneParams params = load_checkpoint(a.checkpoint, &classifier);
  const PrototypeMatrix w = load_prototypes(a.prototypes);
  const AssignmentMapping assign = load_assignment(a.assignment);
  const VectorDataset data = load_dataset(a.data);
  if (params.output_dim() != w.dim() || params.input_dim() != data.input_dim() || assign.size() != w.count() ||
      data.class_count() != w.count()) {
    throw UsageError("incompatible artifacts: checkpoint " + a.checkpoint + ", prototypes " + a.prototypes +
                     ", assignment " + a.assignment + ", dataset " + a.data);
  }
  const double acc = classifier ? evaluate_classifier(params, *classifier, assign, data)
                                : evaluate(params, w, assign, data);
  out << "accuracy: " << fixed(acc, 4) << "\n";
  return kOk;
}

struct InspectArgs {
  std::string prototypes;
  std::string assignment;
};

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
  if (a.prototypes.empty() == a.assignment.empty()) {
    throw UsageError("inspect needs exactly one of --prototypes or --assignment");
  }
  if (!a.prototypes.empty()) {
    PrototypeFileInfo info;
    const PrototypeMatrix w = load_prototypes(a.prototypes, &info);
    out << "prototypes: d=" << w.dim() << " c=" << w.count() << " t=" << info.temperature << " seed=" << info.seed
        << "\n";
    print_report(out, geometry_report(w));
    return kOk;
  }
  const AssignmentMapping m = load_assignment(a.assignment);
  const auto s = summarize_permutation(m);
  out << "assignment: c=" << m.size() << "\n"
      << "fixed points: " << s.fixed_points << "\n"
      << "cycles: " << s.cycle_lengths.size() << "\n"
      << "cycle lengths:";
  for (const auto len : s.cycle_lengths) out << " " << len;
  out << "\n";
  return kOk;
}

struct BenchArgs {
  std::vector<std::size_t> classes{100, 250, 500, 1000};
  std::size_t repeats = 4;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_bench(const BenchArgs& a, const CLI::App& sub, std::ostream& out) {
  for (const auto c : a.classes) {
    if (c < 2) throw UsageError("--c values must be at least 2");
  }
  if (a.repeats == 0) throw UsageError("--repeats must be positive");
  const std::string csv = timings_csv(benchmark_assignment(a.classes, a.repeats, a.seed));
  if (!a.out.empty()) {
    write_text(a.out, csv);
    write_text(a.out + ".config", resolved_config(sub));
  }
  out << csv;
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Classification with fixed hyperspherical prototypes and dynamic label-to-prototype assignment",
               "protosphere"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  std::string config_file;
  auto add_config = [&](CLI::App* s) { s->add_option("--config", config_file, "key=value file; flags take precedence"); };

  PrototypeArgs pa;
  auto* proto = app.add_subcommand("prototypes", "Estimate prototypes and write a prototype file");
  proto->add_option("--d", pa.d, "Prototype dimension")->required();
  proto->add_option("--c", pa.c, "Number of prototypes")->required();
  proto->add_option("--t", pa.config.temperature, "Gaussian kernel temperature");
  proto->add_option("--lr", pa.config.learning_rate, "Learning rate");
  proto->add_option("--iters", pa.config.iterations, "Iterations");
  proto->add_option("--subset", pa.config.subset_size, "Prototypes per iteration (0 = all)");
  proto->add_option("--seed", pa.config.seed, "Random seed");
  proto->add_flag("--closed-form", pa.closed_form, "Regular polygon on the circle (d=2 only)");
  proto->add_option("--out", pa.out, "Output prototype file")->required();
  add_config(proto);

  GenDataArgs ga;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic Gaussian-mixture dataset");
  gen->add_option("--c", ga.mixture.classes, "Number of classes");
  gen->add_option("--p", ga.mixture.input_dim, "Input dimension");
  gen->add_option("--per-class", ga.mixture.per_class, "Samples per class");
  gen->add_option("--spread", ga.mixture.spread, "Noise standard deviation");
  gen->add_option("--min-angle", ga.mixture.min_angle, "Minimum angle between class means (rad)");
  gen->add_option("--seed", ga.mixture.seed, "Random seed");
  gen->add_option("--imbalance", ga.imbalance, "Imbalance factor mu in (0, 1]; 1 keeps the set balanced");
  gen->add_option("--max-per-class", ga.max_per_class, "Head class size for the long tail (0 = per-class)");
  gen->add_option("--out", ga.out, "Output dataset file")->required();
  add_config(gen);

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train the backbone with dynamic label-to-prototype assignment");
  tr->add_option("--data", ta.data, "Training dataset file")->required()->check(CLI::ExistingFile);
  tr->add_option("--prototypes", ta.prototypes, "Prototype file")->required()->check(CLI::ExistingFile);
  tr->add_option("--eval-data", ta.eval_data, "Evaluation dataset (defaults to the training set)")
      ->check(CLI::ExistingFile);
  tr->add_option("--out-dir", ta.out_dir, "Output directory")->required();
  tr->add_option("--epochs", ta.config.epochs, "Training epochs");
  tr->add_option("--batch-size", ta.config.batch_size, "Batch size");
  tr->add_option("--lr", ta.config.learning_rate, "SGD learning rate");
  tr->add_option("--momentum", ta.config.sgd_momentum, "SGD momentum");
  tr->add_option("--alpha", ta.config.alpha, "Class representative momentum");
  tr->add_option("--tau-prime", ta.config.tau_prime, "Assignment updates per epoch");
  tr->add_option("--class-weighting", ta.weighting, "none | inverse-frequency");
  tr->add_option("--loss", ta.loss, "lipm | psc_ce | fixed_ce");
  tr->add_option("--hidden", ta.config.hidden_dims, "Hidden layer widths, comma separated")->delimiter(',');
  tr->add_flag("--freeze-assignment", ta.config.freeze_assignment, "Never reassign labels to prototypes");
  tr->add_flag("--random-init-assignment", ta.random_init, "Start from a seeded random assignment");
  tr->add_option("--seed", ta.config.seed, "Random seed");
  add_config(tr);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a trained checkpoint");
  ev->add_option("--checkpoint", ea.checkpoint)->required()->check(CLI::ExistingFile);
  ev->add_option("--prototypes", ea.prototypes)->required()->check(CLI::ExistingFile);
  ev->add_option("--assignment", ea.assignment)->required()->check(CLI::ExistingFile);
  ev->add_option("--data", ea.data)->required()->check(CLI::ExistingFile);
  add_config(ev);

  InspectArgs ia;
  auto* in = app.add_subcommand("inspect", "Report on a prototype or assignment file");
  in->add_option("--prototypes", ia.prototypes)->check(CLI::ExistingFile);
  in->add_option("--assignment", ia.assignment)->check(CLI::ExistingFile);
  add_config(in);

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench-assign", "Time the assignment solver; emits CSV (c, mean_ms)");
  bench->add_option("--c", ba.classes, "Class counts, comma separated")->delimiter(',');
  bench->add_option("--repeats", ba.repeats, "Runs averaged per class count");
  bench->add_option("--seed", ba.seed, "Random seed");
  bench->add_option("--out", ba.out, "Optional CSV output file");
  add_config(bench);

  try {
    std::vector<std::string> argv = args;
    if (!args.empty() && args[0].rfind("-", 0) != 0) {
      if (const CLI::App* sub = app.get_subcommand_no_throw(args[0])) {
        argv = merge_config(*sub, args);
        argv.insert(argv.begin(), args[0]);
      }
    }
    std::reverse(argv.begin(), argv.end());
    app.parse(argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kUsageError;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  }

  try {
    if (proto->parsed()) return cmd_prototypes(pa, *proto, out);
    if (gen->parsed()) return cmd_gen_data(ga, *gen, out);
    if (tr->parsed()) return cmd_train(ta, *tr, out);
    if (ev->parsed()) return cmd_eval(ea, out);
    if (in->parsed()) return cmd_inspect(ia, out);
    if (bench->parsed()) return cmd_bench(ba, *bench, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}

}  // namespace protosphere::cli
