#include "pbf/trajectory.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace pbf {
namespace {

// 17 significant digits round-trip IEEE doubles exactly.
std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') {
    fields.emplace_back();
  }
  return fields;
}

double parse_double(const std::string& field, const std::string& context) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const double value = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw MalformedData("trajectory csv: bad numeric field '" + field +
                        "' in " + context);
  }
  return value;
}

}  // namespace

Eigen::VectorXd Trajectory::stacked_outputs() const {
  return outputs.reshaped();  // column-major: (y_1; y_2; ...; y_T)
}

Eigen::VectorXd Trajectory::stacked_inputs() const {
  return inputs.reshaped();
}

Trajectory make_trajectory(const Eigen::MatrixXd& inputs,
                           const Eigen::MatrixXd& outputs, double sample_time,
                           double t0) {
  if (inputs.cols() != outputs.cols()) {
    throw DimensionMismatch("make_trajectory: inputs have " +
                            std::to_string(inputs.cols()) +
                            " samples, outputs have " +
                            std::to_string(outputs.cols()));
  }
  if (inputs.cols() < 1) {
    throw DimensionMismatch("make_trajectory: need at least one sample");
  }
  if (!(sample_time > 0.0)) {
    throw DimensionMismatch("make_trajectory: sample_time must be positive");
  }
  Trajectory traj;
  traj.inputs = inputs;
  traj.outputs = outputs;
  traj.sample_time = sample_time;
  traj.timestamps =
      Eigen::VectorXd::LinSpaced(inputs.cols(), t0,
                                 t0 + sample_time * double(inputs.cols() - 1));
  if (inputs.cols() == 1) {
    traj.timestamps = Eigen::VectorXd::Constant(1, t0);
  }
  return traj;
}

Trajectory with_outputs(const Trajectory& traj,
                        const Eigen::VectorXd& stacked_outputs) {
  if (stacked_outputs.size() != traj.outputs.size()) {
    throw DimensionMismatch("with_outputs: expected " +
                            std::to_string(traj.outputs.size()) +
                            " values, got " +
                            std::to_string(stacked_outputs.size()));
  }
  Trajectory out = traj;
  out.outputs = stacked_outputs.reshaped(traj.n_y(), traj.length());
  return out;
}

Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) {
    throw MalformedData("trajectory csv: cannot open " + path.string());
  }
  std::string line;
  if (!std::getline(file, line)) {
    throw MalformedData("trajectory csv: empty file " + path.string());
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv_line(line);
  if (header.empty() || header[0] != "t") {
    throw MalformedData("trajectory csv: first header column must be 't'");
  }
  Eigen::Index n_u = 0;
  Eigen::Index n_y = 0;
  std::size_t pos = 1;
  while (pos < header.size() &&
         header[pos] == "u" + std::to_string(n_u + 1)) {
    ++n_u;
    ++pos;
  }
  while (pos < header.size() &&
         header[pos] == "y" + std::to_string(n_y + 1)) {
    ++n_y;
    ++pos;
  }
  if (pos != header.size() || n_u < 1 || n_y < 1) {
    throw MalformedData(
        "trajectory csv: header must be t,u1,...,u{n_u},y1,...,y{n_y}");
  }

  std::vector<double> times;
  std::vector<double> values;  // row-major sample records, n_u + n_y each
  Eigen::Index row = 0;
  while (std::getline(file, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    const std::string context = "row " + std::to_string(row);
    const std::vector<std::string> fields = split_csv_line(line);
    if (Eigen::Index(fields.size()) != 1 + n_u + n_y) {
      throw MalformedData("trajectory csv: wrong field count in " + context);
    }
    times.push_back(parse_double(fields[0], context));
    for (std::size_t i = 1; i < fields.size(); ++i) {
      values.push_back(parse_double(fields[i], context));
    }
  }
  const Eigen::Index t_len = Eigen::Index(times.size());
  if (t_len < 1) {
    throw MalformedData("trajectory csv: no data rows in " + path.string());
  }

  Trajectory traj;
  traj.timestamps = Eigen::Map<Eigen::VectorXd>(times.data(), t_len);
  traj.inputs.resize(n_u, t_len);
  traj.outputs.resize(n_y, t_len);
  for (Eigen::Index k = 0; k < t_len; ++k) {
    for (Eigen::Index i = 0; i < n_u; ++i) {
      traj.inputs(i, k) = values[std::size_t(k * (n_u + n_y) + i)];
    }
    for (Eigen::Index i = 0; i < n_y; ++i) {
      traj.outputs(i, k) = values[std::size_t(k * (n_u + n_y) + n_u + i)];
    }
  }

  if (t_len == 1) {
    traj.sample_time = 1.0;
    return traj;
  }
  const double dt = traj.timestamps(1) - traj.timestamps(0);
  if (!(dt > 0.0)) {
    throw DimensionMismatch("trajectory csv: timestamps must increase");
  }
  for (Eigen::Index k = 1; k < t_len; ++k) {
    const double step = traj.timestamps(k) - traj.timestamps(k - 1);
    if (std::abs(step - dt) > 1e-9 * std::max(1.0, std::abs(dt))) {
      throw DimensionMismatch(
          "trajectory csv: timestamps must form a uniform grid");
    }
  }
  traj.sample_time = dt;
  return traj;
}

void write_trajectory_csv(const Trajectory& traj,
                          const std::filesystem::path& path) {
  std::ofstream file(path);
  if (!file) {
    throw MalformedData("trajectory csv: cannot write " + path.string());
  }
  file << "t";
  for (Eigen::Index i = 0; i < traj.n_u(); ++i) {
    file << ",u" << (i + 1);
  }
  for (Eigen::Index i = 0; i < traj.n_y(); ++i) {
    file << ",y" << (i + 1);
  }
  file << "\n";
  for (Eigen::Index k = 0; k < traj.length(); ++k) {
    file << format_double(traj.timestamps(k));
    for (Eigen::Index i = 0; i < traj.n_u(); ++i) {
      file << "," << format_double(traj.inputs(i, k));
    }
    for (Eigen::Index i = 0; i < traj.n_y(); ++i) {
      file << "," << format_double(traj.outputs(i, k));
    }
    file << "\n";
  }
}

}  // namespace pbf
