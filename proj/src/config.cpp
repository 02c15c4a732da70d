#include "dan/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dan/errors.hpp"

namespace dan {

namespace {

using nlohmann::json;

std::vector<double> as_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector to_vector(const json& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError("'" + key + "' must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError("'" + key + "' must be an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

std::vector<int> to_indices(const json& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError("'" + key + "' must be an array of integers");
  std::vector<int> out;
  for (const auto& e : j) {
    if (!e.is_number_integer()) throw ConfigError("'" + key + "' must be an array of integers");
    out.push_back(e.get<int>());
  }
  return out;
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("'" + section + "." + key + "' has the wrong type");
  }
}

void read_vector(const json& obj, const char* key, Vector& out, const std::string& section) {
  if (obj.contains(key)) out = to_vector(obj.at(key), section + "." + key);
}

json zone_to_json(const DangerZone& z) {
  json j;
  j["name"] = z.name;
  j["affected"] = z.affected;
  if (z.kind == DangerZone::Kind::JointBox) {
    j["kind"] = "joint_box";
    j["joints"] = z.joints;
    j["center"] = as_std(z.center);
    j["half_width"] = as_std(z.half_width);
    j["lever_mm"] = z.lever_mm;
  } else {
    j["kind"] = "muscle_pair_trap";
    j["muscles"] = {z.muscle_a, z.muscle_b};
    j["threshold_mm"] = z.threshold_mm;
  }
  return j;
}

DangerZone zone_from_json(const json& j, std::size_t index) {
  const std::string where = "arm.danger_zones[" + std::to_string(index) + "]";
  DangerZone z;
  read(j, "name", z.name, where);
  const std::string kind = j.value("kind", "");
  if (!j.contains("affected")) throw ConfigError("'" + where + ".affected' is required");
  z.affected = to_indices(j.at("affected"), where + ".affected");
  if (kind == "joint_box") {
    z.kind = DangerZone::Kind::JointBox;
    if (!j.contains("joints") || !j.contains("center") || !j.contains("half_width"))
      throw ConfigError("'" + where + "' joint_box needs joints, center and half_width");
    z.joints = to_indices(j.at("joints"), where + ".joints");
    z.center = to_vector(j.at("center"), where + ".center");
    z.half_width = to_vector(j.at("half_width"), where + ".half_width");
    read(j, "lever_mm", z.lever_mm, where);
  } else if (kind == "muscle_pair_trap") {
    z.kind = DangerZone::Kind::MusclePairTrap;
    const auto pair = j.contains("muscles") ? to_indices(j.at("muscles"), where + ".muscles") : std::vector<int>{};
    if (pair.size() != 2) throw ConfigError("'" + where + ".muscles' must name two muscles");
    z.muscle_a = pair[0];
    z.muscle_b = pair[1];
    if (!j.contains("threshold_mm")) throw ConfigError("'" + where + ".threshold_mm' is required");
    read(j, "threshold_mm", z.threshold_mm, where);
  } else {
    throw ConfigError("'" + where + ".kind' must be joint_box or muscle_pair_trap");
  }
  return z;
}

}  // namespace

LabConfig default_lab_config() {
  LabConfig cfg;
  cfg.arm = default_arm_config();
  // Reaching this target from theta_init first lands in the biceps-pectoralis
  // trap; the elbow swivel clears it.
  cfg.ik.target = Vector3(-49.0, 70.0, -418.0);
  cfg.ik.theta_init = (Vector(5) << 0.8, 0.5, 0.7, 1.4, -0.5).finished();
  return cfg;
}

LabConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  LabConfig cfg = default_lab_config();

  if (root.contains("arm")) {
    const json& a = root.at("arm");
    ArmConfig& arm = cfg.arm;
    if (a.contains("moment_arm")) {
      const json& rows = a.at("moment_arm");
      if (!rows.is_array() || rows.empty()) throw ConfigError("'arm.moment_arm' must be a non-empty matrix");
      const auto m = static_cast<Eigen::Index>(rows.size());
      const Vector first = to_vector(rows[0], "arm.moment_arm[0]");
      arm.moment_arm.resize(m, first.size());
      for (Eigen::Index i = 0; i < m; ++i) {
        const Vector r = to_vector(rows[static_cast<std::size_t>(i)], "arm.moment_arm");
        if (r.size() != first.size()) throw ConfigError("'arm.moment_arm' rows differ in length");
        arm.moment_arm.row(i) = r.transpose();
      }
    }
    read_vector(a, "natural_length", arm.natural_length, "arm");
    read_vector(a, "joint_lower", arm.joint_lower, "arm");
    read_vector(a, "joint_upper", arm.joint_upper, "arm");
    read_vector(a, "elastic_k", arm.elastic_k, "arm");
    read(a, "tension_noise_sd", arm.tension_noise_sd, "arm");
    read(a, "seed", arm.seed, "arm");
    read(a, "servo_gain", arm.servo_gain, "arm");
    if (a.contains("overtravel_deg")) {
      double deg = 0;
      read(a, "overtravel_deg", deg, "arm");
      arm.overtravel = deg2rad(deg);
    }
    read(a, "zone_ramp", arm.zone_ramp, "arm");
    read(a, "upper_arm_mm", arm.upper_arm_mm, "arm");
    read(a, "forearm_mm", arm.forearm_mm, "arm");
    if (a.contains("danger_zones")) {
      arm.danger_zones.clear();
      const json& zones = a.at("danger_zones");
      for (std::size_t i = 0; i < zones.size(); ++i) arm.danger_zones.push_back(zone_from_json(zones[i], i));
    }
  }
  if (root.contains("safety")) {
    const json& s = root.at("safety");
    read(s, "f_thre", cfg.safety.f_thre, "safety");
    read(s, "c_minus", cfg.safety.c_minus, "safety");
    read(s, "c_plus", cfg.safety.c_plus, "safety");
    read(s, "c_gain", cfg.safety.c_gain, "safety");
  }
  if (root.contains("initial_training")) {
    const json& s = root.at("initial_training");
    read(s, "margin_deg", cfg.initial.margin_deg, "initial_training");
    read(s, "noise_sd", cfg.initial.noise_sd, "initial_training");
    read(s, "n_samples", cfg.initial.n_samples, "initial_training");
    read(s, "batch", cfg.initial.batch, "initial_training");
    read(s, "epochs", cfg.initial.epochs, "initial_training");
    read(s, "seed", cfg.initial.seed, "initial_training");
  }
  if (root.contains("online")) {
    const json& s = root.at("online");
    read(s, "c_diff", cfg.online.c_diff, "online");
    read(s, "n_max", cfg.online.n_max, "online");
    read(s, "n_thre", cfg.online.n_thre, "online");
    read(s, "batch", cfg.online.batch, "online");
    read(s, "epochs", cfg.online.epochs, "online");
    read(s, "p_high", cfg.online.p_high, "online");
    read(s, "p_low", cfg.online.p_low, "online");
    read(s, "seed", cfg.online.seed, "online");
  }
  if (root.contains("modifier")) {
    const json& s = root.at("modifier");
    read(s, "c_loss", cfg.modifier.c_loss, "modifier");
    read(s, "gamma_max", cfg.modifier.gamma_max, "modifier");
    read(s, "n_batch", cfg.modifier.n_batch, "modifier");
    read(s, "n_iter", cfg.modifier.n_iter, "modifier");
    read(s, "p_trigger", cfg.modifier.p_trigger, "modifier");
  }
  if (root.contains("ik")) {
    const json& s = root.at("ik");
    read(s, "damping", cfg.ik_solver.damping, "ik");
    read(s, "step_clamp", cfg.ik_solver.step_clamp, "ik");
    read(s, "inner_iterations", cfg.ik_solver.inner_iterations, "ik");
    read(s, "tolerance_mm", cfg.ik_solver.tolerance_mm, "ik");
    read(s, "accept_mm", cfg.ik_solver.accept_mm, "ik");
    read(s, "f_thre", cfg.ik.f_thre, "ik");
    read(s, "ramp_s", cfg.ik.ramp_s, "ik");
    read(s, "execute_s", cfg.ik.execute_s, "ik");
    read(s, "d_avoid", cfg.ik.d_avoid, "ik");
    read(s, "max_outer", cfg.ik.max_outer, "ik");
    if (s.contains("target")) {
      const Vector t = to_vector(s.at("target"), "ik.target");
      if (t.size() != 3) throw ConfigError("'ik.target' must have 3 entries");
      cfg.ik.target = t;
    }
    read_vector(s, "theta_init", cfg.ik.theta_init, "ik");
  }
  if (root.contains("experiment")) {
    const json& s = root.at("experiment");
    read(s, "duration_s", cfg.experiment.duration_s, "experiment");
    read(s, "motion_seed", cfg.experiment.motion_seed, "experiment");
    read(s, "eval_seed", cfg.experiment.eval_seed, "experiment");
    read(s, "eval_duration_s", cfg.experiment.eval_duration_s, "experiment");
    read(s, "checkpoints_s", cfg.experiment.checkpoints_s, "experiment");
    read(s, "danger_threshold", cfg.experiment.danger_threshold, "experiment");
    read(s, "segment_s", cfg.experiment.motion.segment_s, "experiment");
    read(s, "pretension_max_mm", cfg.experiment.motion.pretension_max_mm, "experiment");
  }
  if (root.contains("step_response")) {
    const json& s = root.at("step_response");
    read(s, "f_thre", cfg.step.f_thre, "step_response");
    read(s, "elastic_k", cfg.step.elastic_k, "step_response");
    read(s, "contraction_mm", cfg.step.contraction_mm, "step_response");
    read(s, "ramp_s", cfg.step.ramp_s, "step_response");
    read(s, "total_s", cfg.step.total_s, "step_response");
  }
  cfg.validate();
  return cfg;
}

LabConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string dump_config(const LabConfig& cfg) {
  json root;
  json& a = root["arm"];
  a["moment_arm"] = json::array();
  for (Eigen::Index i = 0; i < cfg.arm.moment_arm.rows(); ++i)
    a["moment_arm"].push_back(as_std(cfg.arm.moment_arm.row(i).transpose()));
  a["natural_length"] = as_std(cfg.arm.natural_length);
  a["joint_lower"] = as_std(cfg.arm.joint_lower);
  a["joint_upper"] = as_std(cfg.arm.joint_upper);
  a["elastic_k"] = as_std(cfg.arm.elastic_k);
  a["tension_noise_sd"] = cfg.arm.tension_noise_sd;
  a["seed"] = cfg.arm.seed;
  a["servo_gain"] = cfg.arm.servo_gain;
  // Rounded so the default 15 degrees survives the rad -> deg -> rad trip.
  a["overtravel_deg"] = std::round(cfg.arm.overtravel * 180.0 / 3.14159265358979323846 * 1e9) / 1e9;
  a["zone_ramp"] = cfg.arm.zone_ramp;
  a["upper_arm_mm"] = cfg.arm.upper_arm_mm;
  a["forearm_mm"] = cfg.arm.forearm_mm;
  a["danger_zones"] = json::array();
  for (const DangerZone& z : cfg.arm.danger_zones) a["danger_zones"].push_back(zone_to_json(z));

  root["safety"] = {{"f_thre", cfg.safety.f_thre},
                    {"c_minus", cfg.safety.c_minus},
                    {"c_plus", cfg.safety.c_plus},
                    {"c_gain", cfg.safety.c_gain}};
  root["initial_training"] = {{"margin_deg", cfg.initial.margin_deg}, {"noise_sd", cfg.initial.noise_sd},
                              {"n_samples", cfg.initial.n_samples},   {"batch", cfg.initial.batch},
                              {"epochs", cfg.initial.epochs},         {"seed", cfg.initial.seed}};
  root["online"] = {{"c_diff", cfg.online.c_diff}, {"n_max", cfg.online.n_max},   {"n_thre", cfg.online.n_thre},
                    {"batch", cfg.online.batch},   {"epochs", cfg.online.epochs}, {"p_high", cfg.online.p_high},
                    {"p_low", cfg.online.p_low},   {"seed", cfg.online.seed}};
  root["modifier"] = {{"c_loss", cfg.modifier.c_loss}, {"gamma_max", cfg.modifier.gamma_max},
                      {"n_batch", cfg.modifier.n_batch}, {"n_iter", cfg.modifier.n_iter},
                      {"p_trigger", cfg.modifier.p_trigger}};
  root["ik"] = {{"damping", cfg.ik_solver.damping},
                {"step_clamp", cfg.ik_solver.step_clamp},
                {"inner_iterations", cfg.ik_solver.inner_iterations},
                {"tolerance_mm", cfg.ik_solver.tolerance_mm},
                {"accept_mm", cfg.ik_solver.accept_mm},
                {"f_thre", cfg.ik.f_thre},
                {"ramp_s", cfg.ik.ramp_s},
                {"execute_s", cfg.ik.execute_s},
                {"d_avoid", cfg.ik.d_avoid},
                {"max_outer", cfg.ik.max_outer},
                {"target", as_std(cfg.ik.target)},
                {"theta_init", as_std(cfg.ik.theta_init)}};
  root["experiment"] = {{"duration_s", cfg.experiment.duration_s},
                        {"motion_seed", cfg.experiment.motion_seed},
                        {"eval_seed", cfg.experiment.eval_seed},
                        {"eval_duration_s", cfg.experiment.eval_duration_s},
                        {"checkpoints_s", cfg.experiment.checkpoints_s},
                        {"danger_threshold", cfg.experiment.danger_threshold},
                        {"segment_s", cfg.experiment.motion.segment_s},
                        {"pretension_max_mm", cfg.experiment.motion.pretension_max_mm}};
  root["step_response"] = {{"f_thre", cfg.step.f_thre},
                           {"elastic_k", cfg.step.elastic_k},
                           {"contraction_mm", cfg.step.contraction_mm},
                           {"ramp_s", cfg.step.ramp_s},
                           {"total_s", cfg.step.total_s}};
  return root.dump(2) + "\n";
}

std::string shipped_config_path() { return std::string(DAN_SOURCE_DIR) + "/config/default.json"; }

}  // namespace dan
