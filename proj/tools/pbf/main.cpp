// Command-line surface: dataset generation, excitation checking, prediction,
// physics-consistent filtering, tracking MPC, and flexibility bidding.
//
// Exit codes: 0 success; 2 input/config error; 3 modeled infeasibility or
// unboundedness; 4 solver failure.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "pbf/control.hpp"
#include "pbf/errors.hpp"
#include "pbf/filter.hpp"
#include "pbf/hankel.hpp"
#include "pbf/predictor.hpp"
#include "pbf/rules.hpp"
#include "pbf/sim.hpp"
#include "pbf/trajectory.hpp"

namespace {

using nlohmann::json;

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::string system_hash(const pbf::LtiSystem& sys) {
  std::string canon = std::to_string(sys.n_x()) + "," +
                      std::to_string(sys.n_u()) + "," +
                      std::to_string(sys.n_y()) + ";";
  const auto append = [&canon](const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        canon += fmt17(m(r, c));
        canon += ',';
      }
    }
    canon += ';';
  };
  append(sys.A);
  append(sys.B);
  append(sys.C);
  append(sys.D);
  return fnv1a_hex(canon);
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw pbf::ConfigError("cannot open config file: " + path);
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& err) {
    throw pbf::ConfigError("config " + path + ": " + err.what());
  }
}

void expect_keys(const json& obj, std::initializer_list<const char*> allowed,
                 const std::string& where) {
  if (!obj.is_object()) {
    throw pbf::ConfigError(where + " must be a JSON object");
  }
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw pbf::ConfigError(where + ": unknown key \"" + item.key() + "\"");
    }
  }
}

void check_schema(const json& obj, const std::string& where) {
  if (!obj.contains("schema_version") ||
      !obj.at("schema_version").is_number_integer() ||
      obj.at("schema_version").get<int>() != 1) {
    throw pbf::ConfigError(where + ": schema_version must be the integer 1");
  }
}

double get_double(const json& obj, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_number()) {
    throw pbf::ConfigError(std::string(key) + " must be a number");
  }
  return obj.at(key).get<double>();
}

Eigen::Index get_index(const json& obj, const char* key,
                       Eigen::Index fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_number_integer()) {
    throw pbf::ConfigError(std::string(key) + " must be an integer");
  }
  return obj.at(key).get<Eigen::Index>();
}

std::uint64_t get_u64(const json& obj, const char* key,
                      std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_number_integer() ||
      (obj.at(key).is_number_integer() && obj.at(key).get<long long>() < 0)) {
    throw pbf::ConfigError(std::string(key) +
                           " must be a nonnegative integer");
  }
  return obj.at(key).get<std::uint64_t>();
}

bool get_bool(const json& obj, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_boolean()) {
    throw pbf::ConfigError(std::string(key) + " must be a boolean");
  }
  return obj.at(key).get<bool>();
}

std::string get_string(const json& obj, const char* key,
                       const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_string()) {
    throw pbf::ConfigError(std::string(key) + " must be a string");
  }
  return obj.at(key).get<std::string>();
}

Eigen::VectorXd vec_from_json(const json& arr, const std::string& what) {
  if (!arr.is_array()) {
    throw pbf::ConfigError(what + " must be an array of numbers");
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
  Eigen::Index i = 0;
  for (const auto& el : arr) {
    if (!el.is_number()) {
      throw pbf::ConfigError(what + " must contain only numbers");
    }
    v(i++) = el.get<double>();
  }
  return v;
}

Eigen::MatrixXd mat_from_json(const json& arr, const std::string& what) {
  if (!arr.is_array() || arr.empty()) {
    throw pbf::ConfigError(what + " must be a non-empty array of rows");
  }
  const Eigen::Index rows = static_cast<Eigen::Index>(arr.size());
  Eigen::Index cols = -1;
  Eigen::MatrixXd m;
  Eigen::Index r = 0;
  for (const auto& row : arr) {
    const Eigen::VectorXd v = vec_from_json(row, what + " row");
    if (cols < 0) {
      cols = v.size();
      if (cols < 1) {
        throw pbf::ConfigError(what + " rows must be non-empty");
      }
      m.resize(rows, cols);
    } else if (v.size() != cols) {
      throw pbf::ConfigError(what + " rows must have equal length");
    }
    m.row(r++) = v.transpose();
  }
  return m;
}

json vec_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw pbf::ConfigError("cannot write file: " + path);
  }
  out << text;
  if (!out.good()) {
    throw pbf::ConfigError("failed while writing file: " + path);
  }
}

void emit_json(const json& doc, const std::string& path) {
  const std::string text = doc.dump(2) + "\n";
  if (path.empty()) {
    std::cout << text;
  } else {
    write_text(path, text);
  }
}

double parse_double(const std::string& field, const std::string& where) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw pbf::MalformedData(where + ": not a number: \"" + field + "\"");
  }
  return v;
}

/// Plain numeric CSV (no header): rows of comma-separated values with equal
/// length. Used for regulation-scenario files.
Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw pbf::ConfigError("cannot open file: " + path);
  }
  std::vector<std::vector<double>> rows;
  std::string line;
  Eigen::Index line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      const std::string field = line.substr(
          pos, comma == std::string::npos ? std::string::npos : comma - pos);
      row.push_back(parse_double(
          field, path + " line " + std::to_string(line_no)));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw pbf::MalformedData(path + ": rows have unequal length");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw pbf::MalformedData(path + ": no data rows");
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
  }
  return m;
}

pbf::PredictorConfig predictor_from_json(const json& cfg) {
  pbf::PredictorConfig out;
  out.t_init = get_index(cfg, "t_init", 6);
  out.n_h = get_index(cfg, "n_h", 10);
  out.regularizer_scale = get_double(cfg, "regularizer_scale", 1e-4);
  if (cfg.contains("regularizer")) {
    out.regularizer = mat_from_json(cfg.at("regularizer"), "regularizer");
  }
  if (out.t_init < 1 || out.n_h < 1) {
    throw pbf::ConfigError("t_init and n_h must be >= 1");
  }
  return out;
}

pbf::LtiSystem system_from_json(const json& spec, std::uint64_t seed) {
  expect_keys(spec, {"matrices", "first_order", "random", "positive_gain"},
              "system");
  int forms = 0;
  for (const char* key : {"matrices", "first_order", "random",
                          "positive_gain"}) {
    if (spec.contains(key)) ++forms;
  }
  if (forms != 1) {
    throw pbf::ConfigError(
        "system: give exactly one of matrices / first_order / random / "
        "positive_gain");
  }
  if (spec.contains("matrices")) {
    const json& m = spec.at("matrices");
    expect_keys(m, {"A", "B", "C", "D"}, "system.matrices");
    pbf::LtiSystem sys;
    sys.A = mat_from_json(m.at("A"), "A");
    sys.B = mat_from_json(m.at("B"), "B");
    sys.C = mat_from_json(m.at("C"), "C");
    sys.D = mat_from_json(m.at("D"), "D");
    pbf::validate_dimensions(sys);
    return sys;
  }
  if (spec.contains("first_order")) {
    const json& m = spec.at("first_order");
    expect_keys(m, {"a", "b"}, "system.first_order");
    return pbf::first_order_system(get_double(m, "a", 0.8),
                                   get_double(m, "b", 0.5));
  }
  if (spec.contains("random")) {
    const json& m = spec.at("random");
    expect_keys(m, {"n_x", "n_u", "n_y"}, "system.random");
    return pbf::random_controllable_system(get_index(m, "n_x", 2),
                                           get_index(m, "n_u", 1),
                                           get_index(m, "n_y", 1), seed);
  }
  const json& m = spec.at("positive_gain");
  expect_keys(m, {"n_x"}, "system.positive_gain");
  return pbf::make_positive_gain_system(get_index(m, "n_x", 2), seed);
}

pbf::PhysicalRule rule_from_json(const json& cfg, const pbf::HankelSystem& h,
                                 Eigen::Index segments) {
  if (!cfg.is_object()) {
    throw pbf::ConfigError("rule must be a JSON object");
  }
  expect_keys(cfg, {"type", "u_max", "custom"}, "rule");
  const std::string type = get_string(cfg, "type", "temperature");
  const double u_max = get_double(cfg, "u_max", 6.0);
  if (type == "temperature") {
    return pbf::temperature_consistency(h, u_max, segments);
  }
  if (type == "bidding") {
    return pbf::bidding_consistency(h, u_max, segments);
  }
  if (type == "custom") {
    if (!cfg.contains("custom")) {
      throw pbf::ConfigError("rule: custom type needs a custom section");
    }
    const json& c = cfg.at("custom");
    expect_keys(c, {"Hy", "hy"}, "rule.custom");
    pbf::PhysicalRule rule = pbf::temperature_consistency(h, u_max, segments);
    rule.y_pred.H = mat_from_json(c.at("Hy"), "rule.custom.Hy");
    rule.y_pred.h = vec_from_json(c.at("hy"), "rule.custom.hy");
    rule.y_pred.lo.resize(0);
    rule.y_pred.hi.resize(0);
    if (rule.y_pred.H.rows() != rule.y_pred.h.size()) {
      throw pbf::ConfigError("rule.custom: Hy and hy disagree on row count");
    }
    return rule;
  }
  throw pbf::ConfigError("rule.type must be temperature, bidding, or custom");
}

pbf::SolverOptions solver_from_json(const json& cfg) {
  pbf::SolverOptions opts;
  if (cfg.is_null()) return opts;
  expect_keys(cfg,
              {"penalty_init", "penalty_growth", "max_outer", "tol_residual",
               "tol_objective", "verify_samples", "seed", "mccormick"},
              "solver");
  opts.penalty_init = get_double(cfg, "penalty_init", opts.penalty_init);
  opts.penalty_growth = get_double(cfg, "penalty_growth", opts.penalty_growth);
  opts.max_outer =
      static_cast<int>(get_index(cfg, "max_outer", opts.max_outer));
  opts.tol_residual = get_double(cfg, "tol_residual", opts.tol_residual);
  opts.tol_objective = get_double(cfg, "tol_objective", opts.tol_objective);
  opts.verify_samples = get_index(cfg, "verify_samples", opts.verify_samples);
  opts.seed = get_u64(cfg, "seed", opts.seed);
  if (cfg.contains("mccormick")) {
    const json& m = cfg.at("mccormick");
    expect_keys(m,
                {"enabled", "max_bilinear_terms", "gap", "data_halfwidth",
                 "dual_bound"},
                "solver.mccormick");
    opts.mccormick.enabled = get_bool(m, "enabled", false);
    opts.mccormick.max_bilinear_terms = static_cast<int>(
        get_index(m, "max_bilinear_terms", opts.mccormick.max_bilinear_terms));
    opts.mccormick.gap = get_double(m, "gap", opts.mccormick.gap);
    opts.mccormick.data_halfwidth =
        get_double(m, "data_halfwidth", opts.mccormick.data_halfwidth);
    opts.mccormick.dual_bound =
        get_double(m, "dual_bound", opts.mccormick.dual_bound);
  }
  return opts;
}

/// Resolves the initialization windows: explicit arrays win, then the tail
/// of the record when init_from_tail, otherwise zeros.
void init_windows(const json& cfg, const pbf::Trajectory& traj,
                  Eigen::Index t_init, Eigen::VectorXd& y_init,
                  Eigen::VectorXd& u_init) {
  const Eigen::Index n_y = traj.n_y();
  const Eigen::Index n_u = traj.n_u();
  y_init = Eigen::VectorXd::Zero(t_init * n_y);
  u_init = Eigen::VectorXd::Zero(t_init * n_u);
  if (get_bool(cfg, "init_from_tail", false)) {
    if (traj.length() < t_init) {
      throw pbf::SequenceTooShort(
          "init_from_tail: record shorter than t_init");
    }
    for (Eigen::Index t = 0; t < t_init; ++t) {
      const Eigen::Index src = traj.length() - t_init + t;
      y_init.segment(t * n_y, n_y) = traj.outputs.col(src);
      u_init.segment(t * n_u, n_u) = traj.inputs.col(src);
    }
  }
  if (cfg.contains("y_init")) {
    y_init = vec_from_json(cfg.at("y_init"), "y_init");
  }
  if (cfg.contains("u_init")) {
    u_init = vec_from_json(cfg.at("u_init"), "u_init");
  }
}

const char* filter_status_name(pbf::FilterStatus status) {
  switch (status) {
    case pbf::FilterStatus::Optimal:
      return "optimal";
    case pbf::FilterStatus::LocalOptimum:
      return "local_optimum";
    case pbf::FilterStatus::Infeasible:
      return "infeasible";
    default:
      return "iteration_limit";
  }
}

json report_to_json(const pbf::ConsistencyReport& report) {
  json out;
  out["n_samples"] = report.n_samples;
  out["worst_sampled_violation"] = report.worst_sampled_violation;
  out["certified_max_violation"] = report.certified_max_violation;
  out["certified_row_violations"] =
      vec_to_json(report.certified_row_violations);
  return out;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& config_path, std::string out_csv,
                 std::string out_meta) {
  const json cfg = load_json(config_path);
  expect_keys(cfg,
              {"schema_version", "seed", "length", "sample_time", "u_max",
               "excitation", "noise", "pe_order", "system", "output_csv",
               "output_meta"},
              "simulate config");
  check_schema(cfg, "simulate config");
  const std::uint64_t seed = get_u64(cfg, "seed", 0);
  const Eigen::Index length = get_index(cfg, "length", 384);
  const double sample_time = get_double(cfg, "sample_time", 1.0);
  const double u_max = get_double(cfg, "u_max", 6.0);
  const Eigen::Index pe_order = get_index(cfg, "pe_order", 8);

  const std::string excitation_name =
      get_string(cfg, "excitation", "prbs");
  pbf::Excitation excitation = pbf::Excitation::Prbs;
  if (excitation_name == "prbs") {
    excitation = pbf::Excitation::Prbs;
  } else if (excitation_name == "uniform") {
    excitation = pbf::Excitation::Uniform;
  } else if (excitation_name == "dither") {
    excitation = pbf::Excitation::ClosedLoopDither;
  } else {
    throw pbf::ConfigError("excitation must be prbs, uniform, or dither");
  }

  pbf::NoiseSpec noise;
  if (cfg.contains("noise")) {
    const json& n = cfg.at("noise");
    expect_keys(n, {"kind", "std_dev"}, "noise");
    const std::string kind = get_string(n, "kind", "gaussian");
    if (kind == "gaussian") {
      noise.kind = pbf::NoiseSpec::Kind::Gaussian;
    } else if (kind == "uniform") {
      noise.kind = pbf::NoiseSpec::Kind::Uniform;
    } else {
      throw pbf::ConfigError("noise.kind must be gaussian or uniform");
    }
    noise.std_dev = get_double(n, "std_dev", 0.0);
  }

  if (!cfg.contains("system")) {
    throw pbf::ConfigError("simulate config: system section is required");
  }
  const pbf::LtiSystem sys = system_from_json(cfg.at("system"), seed);

  if (out_csv.empty()) out_csv = get_string(cfg, "output_csv", "");
  if (out_meta.empty()) out_meta = get_string(cfg, "output_meta", "");
  if (out_csv.empty()) {
    throw pbf::ConfigError(
        "simulate: give output_csv in the config or --out on the command "
        "line");
  }

  const pbf::Trajectory traj = pbf::generate_dataset(
      sys, length, excitation, noise, pe_order, u_max, sample_time, seed);
  pbf::write_trajectory_csv(traj, out_csv);

  if (!out_meta.empty()) {
    json meta;
    meta["schema_version"] = 1;
    meta["seed"] = seed;
    meta["system_hash"] = system_hash(sys);
    meta["length"] = length;
    meta["sample_time"] = sample_time;
    meta["u_max"] = u_max;
    meta["pe_order"] = pe_order;
    meta["excitation"] = excitation_name;
    meta["noise_std_dev"] = noise.std_dev;
    meta["stable"] = pbf::is_stable(sys);
    meta["controllable"] = pbf::is_controllable(sys);
    emit_json(meta, out_meta);
  }
  return 0;
}

int cmd_check_pe(const std::string& data_path, Eigen::Index order,
                 const std::string& out_path) {
  const pbf::Trajectory traj = pbf::read_trajectory_csv(data_path);
  const pbf::ExcitationReport report =
      pbf::check_persistent_excitation(traj.inputs, order);
  json out;
  out["schema_version"] = 1;
  out["rank"] = report.rank;
  out["required"] = report.required;
  out["satisfied"] = report.satisfied;
  emit_json(out, out_path);
  if (!out_path.empty()) emit_json(out, "");
  return 0;
}

int cmd_predict(const std::string& data_path, const std::string& config_path,
                Eigen::Index split, const std::string& out_path) {
  if (split < 1) {
    throw pbf::ConfigError("--split must be >= 1");
  }
  const json cfg = load_json(config_path);
  expect_keys(cfg,
              {"schema_version", "t_init", "n_h", "regularizer_scale",
               "regularizer", "y_init", "u_init", "u_pred", "init_from_tail"},
              "predict config");
  check_schema(cfg, "predict config");
  const pbf::PredictorConfig pcfg = predictor_from_json(cfg);
  const pbf::Trajectory traj = pbf::read_trajectory_csv(data_path);
  const pbf::HankelSystem h =
      pbf::build_hankel_system(traj, pcfg.t_init, pcfg.n_h);

  pbf::PredictionRequest req;
  init_windows(cfg, traj, pcfg.t_init, req.y_init, req.u_init);
  if (!cfg.contains("u_pred")) {
    throw pbf::ConfigError("predict config: u_pred is required");
  }
  req.u_pred = vec_from_json(cfg.at("u_pred"), "u_pred");

  const pbf::PredictionResult res = split == 1
                                        ? pbf::predict(h, pcfg, req)
                                        : pbf::predict_split(h, pcfg, req);

  std::string text = "k";
  for (Eigen::Index c = 0; c < h.n_y(); ++c) {
    text += ",y" + std::to_string(c + 1);
  }
  text += "\n";
  const Eigen::Index steps = res.y_pred.size() / h.n_y();
  for (Eigen::Index t = 0; t < steps; ++t) {
    text += std::to_string(t);
    for (Eigen::Index c = 0; c < h.n_y(); ++c) {
      text += ",";
      text += fmt17(res.y_pred(t * h.n_y() + c));
    }
    text += "\n";
  }
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_text(out_path, text);
  }
  return 0;
}

int cmd_filter(const std::string& data_path, const std::string& config_path,
               const std::string& out_path, const std::string& report_path) {
  const json cfg = load_json(config_path);
  expect_keys(cfg,
              {"schema_version", "t_init", "n_h", "regularizer_scale",
               "regularizer", "segments", "rule", "norm", "solver"},
              "filter config");
  check_schema(cfg, "filter config");
  const pbf::PredictorConfig pcfg = predictor_from_json(cfg);
  const Eigen::Index segments = get_index(cfg, "segments", 1);
  const pbf::Trajectory traj = pbf::read_trajectory_csv(data_path);
  const pbf::HankelSystem h =
      pbf::build_hankel_system(traj, pcfg.t_init, pcfg.n_h);

  pbf::FilterProblem problem;
  problem.system = h;
  problem.config = pcfg;
  problem.segments = segments;
  problem.rule = rule_from_json(
      cfg.contains("rule") ? cfg.at("rule") : json::object(), h, segments);
  const std::string norm = get_string(cfg, "norm", "l2");
  if (norm == "l2") {
    problem.norm = pbf::FilterNorm::SquaredL2;
  } else if (norm == "l1") {
    problem.norm = pbf::FilterNorm::L1;
  } else {
    throw pbf::ConfigError("norm must be l2 or l1");
  }
  const pbf::SolverOptions opts = solver_from_json(
      cfg.contains("solver") ? cfg.at("solver") : json());

  const pbf::ConsistencyReport pre = pbf::verify_consistency(
      h, pcfg, problem.rule, segments, opts.verify_samples, opts.seed);
  const pbf::FilterResult res = pbf::solve_filter(problem, opts);

  if (!out_path.empty()) {
    pbf::write_trajectory_csv(pbf::with_outputs(traj, res.y_filtered),
                              out_path);
  }
  json report;
  report["schema_version"] = 1;
  report["status"] = filter_status_name(res.status);
  report["objective"] = res.objective;
  report["outer_iterations"] = res.outer_iterations;
  report["final_residual"] = res.final_residual;
  report["pre"] = report_to_json(pre);
  report["post"] = report_to_json(res.verification);
  emit_json(report, report_path);

  switch (res.status) {
    case pbf::FilterStatus::Infeasible:
      return 3;
    case pbf::FilterStatus::IterationLimit:
      return 4;
    default:
      return 0;
  }
}

int cmd_mpc(const std::string& data_path, const std::string& config_path,
            const std::string& out_path, Eigen::Index closed_steps,
            const std::string& plant_path, const std::string& log_path) {
  const json cfg = load_json(config_path);
  expect_keys(cfg,
              {"schema_version", "t_init", "n_h", "regularizer_scale",
               "regularizer", "segments", "u_max", "reference", "y_init",
               "u_init", "init_from_tail"},
              "mpc config");
  check_schema(cfg, "mpc config");
  const pbf::PredictorConfig pcfg = predictor_from_json(cfg);
  const pbf::Trajectory traj = pbf::read_trajectory_csv(data_path);
  const pbf::HankelSystem h =
      pbf::build_hankel_system(traj, pcfg.t_init, pcfg.n_h);

  pbf::MpcSpec spec;
  spec.segments = get_index(cfg, "segments", 1);
  spec.u_max = get_double(cfg, "u_max", 6.0);
  if (!cfg.contains("reference")) {
    throw pbf::ConfigError("mpc config: reference is required");
  }
  const json& ref = cfg.at("reference");
  const Eigen::Index n_out = spec.segments * pcfg.n_h * h.n_y();
  if (ref.is_object()) {
    expect_keys(ref, {"constant"}, "reference");
    spec.reference =
        Eigen::VectorXd::Constant(n_out, get_double(ref, "constant", 0.0));
  } else {
    spec.reference = vec_from_json(ref, "reference");
  }

  pbf::PredictionRequest init;
  init_windows(cfg, traj, pcfg.t_init, init.y_init, init.u_init);
  const pbf::MpcPlan plan = pbf::mpc_open_loop(h, pcfg, spec, init);

  std::string text = "k";
  for (Eigen::Index c = 0; c < h.n_u(); ++c) {
    text += ",u" + std::to_string(c + 1);
  }
  for (Eigen::Index c = 0; c < h.n_y(); ++c) {
    text += ",y" + std::to_string(c + 1);
  }
  text += "\n";
  const Eigen::Index steps = spec.segments * pcfg.n_h;
  for (Eigen::Index t = 0; t < steps; ++t) {
    text += std::to_string(t);
    for (Eigen::Index c = 0; c < h.n_u(); ++c) {
      text += ",";
      text += fmt17(plan.u_pred(t * h.n_u() + c));
    }
    for (Eigen::Index c = 0; c < h.n_y(); ++c) {
      text += ",";
      text += fmt17(plan.y_pred(t * h.n_y() + c));
    }
    text += "\n";
  }
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_text(out_path, text);
  }

  if (closed_steps > 0) {
    if (plant_path.empty() || log_path.empty()) {
      throw pbf::ConfigError(
          "--closed-loop needs both --plant and --log");
    }
    const json pj = load_json(plant_path);
    expect_keys(pj, {"schema_version", "A", "B", "C", "D", "x0"}, "plant");
    check_schema(pj, "plant");
    pbf::LtiSystem plant;
    plant.A = mat_from_json(pj.at("A"), "plant.A");
    plant.B = mat_from_json(pj.at("B"), "plant.B");
    plant.C = mat_from_json(pj.at("C"), "plant.C");
    plant.D = mat_from_json(pj.at("D"), "plant.D");
    pbf::validate_dimensions(plant);
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(plant.n_x());
    if (pj.contains("x0")) {
      x0 = vec_from_json(pj.at("x0"), "plant.x0");
    }
    const pbf::ClosedLoopResult loop =
        pbf::mpc_closed_loop(plant, x0, closed_steps, h, pcfg, spec);
    pbf::write_trajectory_csv(loop.trajectory, log_path);
  }
  return 0;
}

int cmd_bid(const std::string& data_path, const std::string& config_path,
            const std::string& scenario_path, const std::string& out_path,
            const std::string& scenario_out) {
  const json cfg = load_json(config_path);
  expect_keys(cfg,
              {"schema_version", "t_init", "n_h", "regularizer_scale",
               "regularizer", "segments", "u_max", "y_min", "y_max",
               "soft_penalty", "per_step_baseline", "y_init", "u_init",
               "init_from_tail"},
              "bid config");
  check_schema(cfg, "bid config");
  const pbf::PredictorConfig pcfg = predictor_from_json(cfg);
  const pbf::Trajectory traj = pbf::read_trajectory_csv(data_path);
  const pbf::HankelSystem h =
      pbf::build_hankel_system(traj, pcfg.t_init, pcfg.n_h);

  pbf::BidSpec spec;
  spec.segments = get_index(cfg, "segments", 1);
  spec.u_max = get_double(cfg, "u_max", 6.0);
  spec.y_min = get_double(cfg, "y_min", 0.0);
  spec.y_max = get_double(cfg, "y_max", 1.0);
  spec.soft_penalty = get_double(cfg, "soft_penalty", 1e4);
  spec.per_step_baseline = get_bool(cfg, "per_step_baseline", false);
  init_windows(cfg, traj, pcfg.t_init, spec.y_init, spec.u_init);
  spec.agc = read_matrix_csv(scenario_path);

  const pbf::BidResult res = pbf::solve_bid(h, pcfg, spec);

  json out;
  out["schema_version"] = 1;
  out["status"] = res.status == pbf::BidStatus::Feasible ? "feasible"
                  : res.status == pbf::BidStatus::SoftRelaxed
                      ? "soft_relaxed"
                      : "unbounded";
  if (res.status == pbf::BidStatus::Unbounded) {
    out["gamma"] = nullptr;
  } else {
    out["gamma"] = res.gamma;
  }
  out["baseline"] = vec_to_json(res.baseline);
  out["violation_total"] = res.violation_total;
  json scen = json::array();
  for (const Eigen::VectorXd& y : res.scenario_outputs) {
    scen.push_back(vec_to_json(y));
  }
  out["scenario_outputs"] = scen;
  emit_json(out, out_path);

  if (!scenario_out.empty() && !res.scenario_outputs.empty()) {
    std::string text;
    const Eigen::Index rows = res.scenario_outputs.front().size();
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < res.scenario_outputs.size(); ++i) {
        if (i > 0) text += ",";
        text += fmt17(res.scenario_outputs[i](r));
      }
      text += "\n";
    }
    write_text(scenario_out, text);
  }
  return res.status == pbf::BidStatus::Unbounded ? 3 : 0;
}

int classify_error(const pbf::Error& err) {
  if (dynamic_cast<const pbf::ConfigError*>(&err) ||
      dynamic_cast<const pbf::MalformedData*>(&err) ||
      dynamic_cast<const pbf::DimensionMismatch*>(&err) ||
      dynamic_cast<const pbf::SequenceTooShort*>(&err) ||
      dynamic_cast<const pbf::SplitRequiresEqualDepths*>(&err) ||
      dynamic_cast<const pbf::BoxMissing*>(&err)) {
    return 2;
  }
  if (dynamic_cast<const pbf::ExcitationFailed*>(&err) ||
      dynamic_cast<const pbf::SamplingStarved*>(&err) ||
      dynamic_cast<const pbf::UnboundedInnerProblem*>(&err)) {
    return 3;
  }
  return 4;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const pbf::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return classify_error(err);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 4;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Data-driven prediction with physics-consistent filtering and "
      "downstream control"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_path, meta_path, report_path;
  std::string plant_path, log_path, scenario_path, scenario_out;
  Eigen::Index order = 1, split = 1, closed_steps = 0;
  int exit_code = 0;

  CLI::App* sim = app.add_subcommand(
      "simulate", "Generate an excited dataset from a linear system");
  sim->add_option("--config", config_path, "Simulation config (JSON)")
      ->required();
  sim->add_option("--out", out_path, "Dataset CSV path (overrides config)");
  sim->add_option("--meta", meta_path,
                  "Metadata JSON path (overrides config)");
  sim->callback([&] {
    exit_code = guarded([&] {
      return cmd_simulate(config_path, out_path, meta_path);
    });
  });

  CLI::App* pe = app.add_subcommand(
      "check-pe", "Check persistent excitation of a dataset's inputs");
  pe->add_option("--data", data_path, "Trajectory CSV")->required();
  pe->add_option("--order", order, "Excitation order to test")->required();
  pe->add_option("--out", out_path, "Report JSON path (default: stdout)");
  pe->callback([&] {
    exit_code = guarded([&] { return cmd_check_pe(data_path, order, out_path); });
  });

  CLI::App* pred = app.add_subcommand(
      "predict", "Predict outputs for planned inputs from recorded data");
  pred->add_option("--data", data_path, "Trajectory CSV")->required();
  pred->add_option("--config", config_path, "Prediction config (JSON)")
      ->required();
  pred->add_option("--split", split,
                   "Chain this many prediction windows (default 1)");
  pred->add_option("--out", out_path, "Prediction CSV path (default: stdout)");
  pred->callback([&] {
    exit_code = guarded(
        [&] { return cmd_predict(data_path, config_path, split, out_path); });
  });

  CLI::App* filt = app.add_subcommand(
      "filter", "Minimally perturb outputs until predictions obey the rule");
  filt->add_option("--data", data_path, "Trajectory CSV")->required();
  filt->add_option("--config", config_path, "Filter config (JSON)")
      ->required();
  filt->add_option("--out", out_path, "Filtered trajectory CSV path");
  filt->add_option("--report", report_path,
                   "Consistency report JSON path (default: stdout)");
  filt->callback([&] {
    exit_code = guarded([&] {
      return cmd_filter(data_path, config_path, out_path, report_path);
    });
  });

  CLI::App* mpc = app.add_subcommand(
      "mpc", "Reference-tracking control from recorded data");
  mpc->add_option("--data", data_path, "Trajectory CSV")->required();
  mpc->add_option("--config", config_path, "Controller config (JSON)")
      ->required();
  mpc->add_option("--out", out_path, "Open-loop plan CSV (default: stdout)");
  mpc->add_option("--closed-loop", closed_steps,
                  "Also run this many receding-horizon steps");
  mpc->add_option("--plant", plant_path,
                  "Plant model JSON for the closed loop");
  mpc->add_option("--log", log_path, "Closed-loop trajectory CSV path");
  mpc->callback([&] {
    exit_code = guarded([&] {
      return cmd_mpc(data_path, config_path, out_path, closed_steps,
                     plant_path, log_path);
    });
  });

  CLI::App* bid = app.add_subcommand(
      "bid", "Maximize the flexibility margin over regulation scenarios");
  bid->add_option("--data", data_path, "Trajectory CSV")->required();
  bid->add_option("--config", config_path, "Bid config (JSON)")->required();
  bid->add_option("--scenarios", scenario_path,
                  "Regulation scenario CSV: one column per scenario, one row "
                  "per stacked input entry")
      ->required();
  bid->add_option("--out", out_path, "Bid JSON path (default: stdout)");
  bid->add_option("--scenario-out", scenario_out,
                  "Per-scenario predicted-output CSV path");
  bid->callback([&] {
    exit_code = guarded([&] {
      return cmd_bid(data_path, config_path, scenario_path, out_path,
                     scenario_out);
    });
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 2;
  }
  return exit_code;
}
