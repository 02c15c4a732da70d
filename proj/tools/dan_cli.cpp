// Command-line front end for the danger-avoidance experiments.
//
// Every subcommand reads the JSON config given by --config (built-in defaults
// otherwise) and applies --set section.key=value overrides on top.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dan/config.hpp"
#include "dan/errors.hpp"

namespace fs = std::filesystem;
using namespace dan;
using nlohmann::json;

namespace {

struct ConfigOptions {
  std::string path;
  std::vector<std::string> sets;
};

void add_config_options(CLI::App* app, ConfigOptions& opts) {
  app->add_option("--config", opts.path, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--set", opts.sets, "override, e.g. experiment.motion_seed=101 (repeatable)");
}

LabConfig resolve_config(const ConfigOptions& opts) {
  std::string text;
  if (opts.path.empty()) {
    text = dump_config(default_lab_config());
  } else {
    std::ifstream in(opts.path);
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  json root = json::parse(text);
  for (const std::string& s : opts.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    std::string pointer = "/" + s.substr(0, eq);
    for (char& c : pointer)
      if (c == '.') c = '/';
    const std::string raw = s.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    root[json::json_pointer(pointer)] = value;
  }
  return parse_config(root.dump());
}

Vector parse_vector(const std::string& text) {
  std::vector<double> vals;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("not a number: '" + item + "'");
    }
    vals.push_back(v);
  }
  return Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

// Whitespace- or comma-separated numbers from a file.
Vector read_vector_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::vector<double> vals;
  std::string tok;
  while (in >> tok) {
    std::istringstream parts(tok);
    std::string item;
    while (std::getline(parts, item, ','))
      if (!item.empty()) vals.push_back(std::stod(item));
  }
  return Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

std::string join(const Vector& v) {
  std::ostringstream os;
  os.precision(17);
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::vector<double> as_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

DanNetwork initial_or_loaded(const LabConfig& cfg, const std::string& weights) {
  if (!weights.empty()) return load_weights_file(weights, cfg.arm.n_muscles());
  std::cerr << "training initial network (" << cfg.initial.n_samples << " samples, " << cfg.initial.epochs
            << " epochs)\n";
  return make_initial_network(cfg.initial, cfg.arm);
}

// Per-tick invariants every episode log must satisfy.
bool check_log(const EpisodeLog& log) {
  for (std::size_t i = 0; i < log.ticks.size(); ++i) {
    const TickRecord& r = log.ticks[i];
    if (r.t != static_cast<long>(i)) {
      std::cerr << "invariant violated: tick " << i << " has t=" << r.t << "\n";
      return false;
    }
    if (r.updated && !r.stored) {
      std::cerr << "invariant violated: update without a store at tick " << i << "\n";
      return false;
    }
    if (r.p_label != ((r.delta_l.array() > 0.0).any() ? 1 : 0)) {
      std::cerr << "invariant violated: label disagrees with delta_l at tick " << i << "\n";
      return false;
    }
  }
  return true;
}

int cmd_init_train(const LabConfig& cfg, const std::string& out) {
  DanNetwork net(InputNormalizer::from_arm(cfg.arm), cfg.initial.seed);
  const TrainBatch data = generate_initial_dataset(cfg.initial, cfg.arm);
  const auto losses = run_initial_training(net, data, cfg.initial);
  InitialTrainConfig held = cfg.initial;
  held.seed = cfg.initial.seed + 1000;
  held.n_samples = 4000;
  const double acc = classification_accuracy(net, generate_initial_dataset(held, cfg.arm));
  ensure_dir(fs::path(out).parent_path().string());
  save_weights_file(net, out);
  std::cout << "final_loss " << losses.back() << "\nheld_out_accuracy " << acc << "\nweights " << out << "\n";
  return 0;
}

int cmd_run_online(const LabConfig& cfg, const std::string& weights, const std::string& out_dir) {
  ensure_dir(out_dir);
  const DanNetwork initial = initial_or_loaded(cfg, weights);
  const OnlineResult r = run_online_experiment(cfg, initial);
  {
    auto out = open_out(fs::path(out_dir) / "online.jsonl");
    r.log.write_jsonl(out);
  }
  for (const Checkpoint& cp : r.checkpoints) {
    const auto name = "checkpoint_" + std::to_string(static_cast<long>(cp.time_s)) + "s.weights";
    save_weights_file(cp.net, (fs::path(out_dir) / name).string());
  }
  save_weights_file(r.final_net, (fs::path(out_dir) / "final.weights").string());
  std::cout << "danger_episodes " << r.log.danger_episodes() << "\ndanger_fraction " << r.log.danger_fraction()
            << "\nstored " << r.log.count_stored() << "\nupdates " << r.log.count_updated() << "\n";
  return check_log(r.log) ? 0 : 1;
}

int cmd_eval(const LabConfig& cfg, const std::vector<std::string>& weights) {
  const EvalScript script =
      generate_eval_script(cfg, cfg.experiment.eval_seed, cfg.experiment.eval_duration_s);
  for (const std::string& w : weights) {
    const DanNetwork net = load_weights_file(w, cfg.arm.n_muscles());
    std::cout << w << '\t' << evaluate_agreement(net, script, cfg.experiment.danger_threshold) << '\n';
  }
  return 0;
}

int cmd_modify_exp(const LabConfig& cfg, const std::string& weights, const std::string& out_dir) {
  ensure_dir(out_dir);
  const DanNetwork net = load_weights_file(weights, cfg.arm.n_muscles());
  const ModificationResult r = run_modification_experiment(cfg, net);
  if (!out_dir.empty()) {
    auto a = open_out(fs::path(out_dir) / "without.jsonl");
    r.without.write_jsonl(a);
    auto b = open_out(fs::path(out_dir) / "with.jsonl");
    r.with.write_jsonl(b);
  }
  std::cout << "danger_frequency_without " << r.freq_without << "\ndanger_frequency_with " << r.freq_with
            << "\nmodified_ticks " << r.with.count_modified() << "\n";
  const bool ok = check_log(r.without) && check_log(r.with) && r.without.ticks.size() == r.with.ticks.size();
  return ok ? 0 : 1;
}

void print_ik(const IkResult& r, bool jsonl, const std::vector<ExecutionTrace>* traces) {
  for (std::size_t k = 0; k < r.iterations.size(); ++k) {
    const IkIteration& it = r.iterations[k];
    if (jsonl) {
      json rec{{"iteration", k},         {"theta", as_std(it.theta)},
               {"p_predicted", it.p},    {"error_mm", it.error_mm},
               {"constraints_satisfied", it.constraints_satisfied}};
      if (traces) rec["danger_ticks"] = (*traces)[k].danger_ticks();
      std::cout << rec.dump() << '\n';
    } else {
      std::cout << "iteration " << k << " p " << it.p << " error_mm " << it.error_mm << " theta " << join(it.theta);
      if (traces) std::cout << " danger_ticks " << (*traces)[k].danger_ticks();
      std::cout << '\n';
    }
  }
  if (jsonl) {
    std::cout << json{{"final", true},           {"command", as_std(r.command)}, {"p_predicted", r.p},
                      {"error_mm", r.error_mm},  {"unsafe", r.unsafe},          {"infeasible", r.infeasible}}
                     .dump()
              << '\n';
  } else {
    std::cout << "command " << join(r.command) << "\np " << r.p << "\nunsafe " << r.unsafe << "\ninfeasible "
              << r.infeasible << '\n';
  }
}

int cmd_ik_exp(const LabConfig& cfg, const std::string& weights, bool jsonl) {
  const DanNetwork net = load_weights_file(weights, cfg.arm.n_muscles());
  const IkExperimentResult r = run_ik_experiment(cfg, net);
  print_ik(r.ik, jsonl, &r.executions);
  return 0;
}

int cmd_emit_plots(const LabConfig& cfg, const std::string& weights, const std::string& out_dir) {
  ensure_dir(out_dir);
  const fs::path dir(out_dir);

  SafetyParams step = cfg.safety;
  step.f_thre = cfg.step.f_thre;
  {
    auto out = open_out(dir / "step_response.tsv");
    write_step_response_tsv(
        run_step_response(step, cfg.step.elastic_k, cfg.step.contraction_mm, cfg.step.ramp_s, cfg.step.total_s), out);
  }

  const DanNetwork initial = initial_or_loaded(cfg, weights);
  const OnlineResult online = run_online_experiment(cfg, initial);
  {
    auto out = open_out(dir / "online.tsv");
    write_online_tsv(online.log, out);
  }
  const EvalScript script =
      generate_eval_script(cfg, cfg.experiment.eval_seed, cfg.experiment.eval_duration_s);
  std::vector<double> times, acc;
  for (const Checkpoint& cp : online.checkpoints) {
    times.push_back(cp.time_s);
    acc.push_back(evaluate_agreement(cp.net, script, cfg.experiment.danger_threshold));
  }
  {
    auto out = open_out(dir / "accuracy.tsv");
    write_accuracy_tsv(times, acc, out);
  }
  const ModificationResult mod = run_modification_experiment(cfg, online.final_net);
  {
    auto out = open_out(dir / "modification.tsv");
    write_modification_tsv(mod, 0, out);
  }
  const IkExperimentResult ik = run_ik_experiment(cfg, online.final_net);
  {
    auto out = open_out(dir / "ik.tsv");
    write_ik_tsv(ik, out);
  }
  std::cout << "wrote step_response.tsv online.tsv accuracy.tsv modification.tsv ik.tsv to " << out_dir << "\n";
  return check_log(online.log) && check_log(mod.without) && check_log(mod.with) ? 0 : 1;
}

int cmd_modify(const LabConfig& cfg, const std::string& weights, const std::string& goal_path,
               const std::string& current_path) {
  const DanNetwork net = load_weights_file(weights, cfg.arm.n_muscles());
  const Vector goal = read_vector_file(goal_path);
  const Vector current = read_vector_file(current_path);
  const ModifyResult r = modify(net, goal, current, cfg.modifier);
  std::cout << "command " << join(r.command) << "\np_goal " << r.p_goal << "\np_final " << r.p_final
            << "\niterations " << r.iterations << "\ntriggered " << r.triggered << '\n';
  if (r.warning) std::cerr << "warning: non-finite loss or gradient cut the search short\n";
  return r.warning ? 1 : 0;
}

int cmd_ik(const LabConfig& cfg, const std::string& weights, const std::string& target,
           const std::string& theta_init, bool jsonl) {
  const DanNetwork net = load_weights_file(weights, cfg.arm.n_muscles());
  IkProblem problem;
  const Vector t = parse_vector(target);
  if (t.size() != 3) throw ConfigError("--target needs x,y,z");
  problem.x_ref = t;
  problem.theta_init = theta_init.empty() ? MotionStream::start_pose(cfg.arm) : parse_vector(theta_init);
  problem.d_avoid = cfg.ik.d_avoid;
  problem.p_trigger = cfg.modifier.p_trigger;
  problem.max_outer = cfg.ik.max_outer;
  print_ik(solve_prioritized(problem, net, cfg.arm, cfg.ik_solver), jsonl, nullptr);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"danger avoidance network experiments"};
  app.require_subcommand(1);
  ConfigOptions copts;
  std::string weights, out, out_dir = ".", goal, current, target, theta_init;
  std::vector<std::string> weight_list;
  bool jsonl = false;

  auto* init_train = app.add_subcommand("init-train", "train the initial network from joint-limit data");
  add_config_options(init_train, copts);
  init_train->add_option("--out", out, "weights file to write")->required();

  auto* run_online = app.add_subcommand("run-online", "online learning run with checkpoints");
  add_config_options(run_online, copts);
  run_online->add_option("--weights", weights, "initial weights (trained on the fly if omitted)");
  run_online->add_option("--out-dir", out_dir, "directory for the log and checkpoints");

  auto* eval = app.add_subcommand("eval", "agreement accuracy on the evaluation script");
  add_config_options(eval, copts);
  eval->add_option("--weights", weight_list, "weights files")->required();

  auto* modify_exp = app.add_subcommand("modify-exp", "paired runs with and without command modification");
  add_config_options(modify_exp, copts);
  modify_exp->add_option("--weights", weights)->required();
  modify_exp->add_option("--out-dir", out_dir, "directory for the paired logs");

  auto* ik_exp = app.add_subcommand("ik-exp", "prioritized IK on the configured target, executed on the plant");
  add_config_options(ik_exp, copts);
  ik_exp->add_option("--weights", weights)->required();
  ik_exp->add_flag("--jsonl", jsonl, "one JSON record per outer iteration");

  auto* emit = app.add_subcommand("emit-plots", "run every experiment and write plot tables");
  add_config_options(emit, copts);
  emit->add_option("--weights", weights, "initial weights (trained on the fly if omitted)");
  emit->add_option("--out-dir", out_dir);

  auto* modify_cmd = app.add_subcommand("modify", "modify one command toward safety");
  add_config_options(modify_cmd, copts);
  modify_cmd->add_option("--weights", weights)->required();
  modify_cmd->add_option("--goal", goal, "file with the requested command")->required()->check(CLI::ExistingFile);
  modify_cmd->add_option("--current", current, "file with the current command")->required()->check(CLI::ExistingFile);

  auto* ik = app.add_subcommand("ik", "prioritized IK for one target");
  add_config_options(ik, copts);
  ik->add_option("--weights", weights)->required();
  ik->add_option("--target", target, "x,y,z in mm")->required();
  ik->add_option("--theta-init", theta_init, "comma-separated joint angles, rad");
  ik->add_flag("--jsonl", jsonl, "one JSON record per outer iteration");

  auto* dump = app.add_subcommand("dump-config", "print the resolved config");
  add_config_options(dump, copts);

  CLI11_PARSE(app, argc, argv);

  try {
    const LabConfig cfg = resolve_config(copts);
    if (*init_train) return cmd_init_train(cfg, out);
    if (*run_online) return cmd_run_online(cfg, weights, out_dir);
    if (*eval) return cmd_eval(cfg, weight_list);
    if (*modify_exp) return cmd_modify_exp(cfg, weights, out_dir);
    if (*ik_exp) return cmd_ik_exp(cfg, weights, jsonl);
    if (*emit) return cmd_emit_plots(cfg, weights, out_dir);
    if (*modify_cmd) return cmd_modify(cfg, weights, goal, current);
    if (*ik) return cmd_ik(cfg, weights, target, theta_init, jsonl);
    if (*dump) {
      std::cout << dump_config(cfg);
      return 0;
    }
  } catch (const UnreachableError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
