#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "robinshape/error.hpp"
#include "robinshape/mala.hpp"

namespace robinshape::harness {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes to `path.tmp` and renames over `path`.
inline void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_json(const fs::path& path, const json& j) { write_atomic(path, j.dump(2) + "\n"); }

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Row-major nested arrays.
inline json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Eigen::VectorXd(m.row(i).transpose())));
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto n = static_cast<Eigen::Index>(j.size());
  if (n == 0) return {};
  const auto c = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(n, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd row = vector_from_json(j[static_cast<std::size_t>(i)]);
    if (row.size() != c) throw IoError("ragged matrix in JSON");
    m.row(i) = row.transpose();
  }
  return m;
}

/// Simple CSV table: header names and numeric rows.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  [[nodiscard]] std::string str() const {
    std::string out;
    for (std::size_t j = 0; j < header.size(); ++j) out += (j ? "," : "") + header[j];
    out += "\n";
    for (const auto& r : rows) {
      for (std::size_t j = 0; j < r.size(); ++j) {
        if (j) out += ",";
        out += format_double(r[j]);
      }
      out += "\n";
    }
    return out;
  }

  [[nodiscard]] std::size_t column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    throw IoError("CSV has no column '" + name + "'");
  }
};

/// Parses a CSV with one header row; lines starting with '#' are skipped.
inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!have_header) {
      t.header = cells;
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size()) throw IoError("CSV row has the wrong number of cells");
    std::vector<double> row;
    row.reserve(cells.size());
    for (const std::string& c : cells) {
      try {
        row.push_back(std::stod(c));
      } catch (const std::exception&) {
        throw IoError("CSV cell '" + c + "' is not a number");
      }
    }
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw IoError("CSV has no header");
  return t;
}

inline std::vector<std::string> parameter_names(Eigen::Index n_alpha, Eigen::Index n_beta) {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < n_alpha; ++i) names.push_back("alpha_" + std::to_string(i));
  for (Eigen::Index i = 1; i <= n_beta; ++i) names.push_back("beta_" + std::to_string(i));
  return names;
}

/// Streams chain rows to `path.tmp`; `commit` renames it into place.
class ChainWriter {
 public:
  ChainWriter(fs::path path, Eigen::Index n_alpha, Eigen::Index n_beta) : path_(std::move(path)) {
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    tmp_ = path_;
    tmp_ += ".tmp";
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot open '" + tmp_.string() + "' for writing");
    const auto names = parameter_names(n_alpha, n_beta);
    for (const std::string& n : names) out_ << n << ",";
    out_ << "J,accepted\n";
  }

  void write(const Eigen::VectorXd& m, double value, bool accepted) {
    for (Eigen::Index i = 0; i < m.size(); ++i) out_ << format_double(m[i]) << ",";
    out_ << format_double(value) << "," << (accepted ? 1 : 0) << "\n";
  }

  void commit() {
    out_.close();
    if (!out_) throw IoError("write to '" + tmp_.string() + "' failed");
    fs::rename(tmp_, path_);
  }

 private:
  fs::path path_, tmp_;
  std::ofstream out_;
};

/// Reads the parameter columns of a chain file.
inline SampleMatrix read_chain(const fs::path& path, Eigen::Index n_params) {
  const CsvTable t = parse_csv(read_file(path));
  if (t.header.size() != static_cast<std::size_t>(n_params) + 2) throw IoError("chain file has unexpected columns");
  SampleMatrix s(static_cast<Eigen::Index>(t.rows.size()), n_params);
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (Eigen::Index j = 0; j < n_params; ++j) s(static_cast<Eigen::Index>(i), j) = t.rows[i][static_cast<std::size_t>(j)];
  return s;
}

inline json to_json(const AdaptState& a) {
  return {{"log_tau", a.log_tau},
          {"t", a.t},
          {"regularization_events", a.regularization_events},
          {"settings",
           {{"enabled", a.settings.enabled},
            {"target_accept", a.settings.target_accept},
            {"step_exponent", a.settings.step_exponent},
            {"covariance_exponent", a.settings.covariance_exponent},
            {"covariance_offset", a.settings.covariance_offset},
            {"refresh_interval", a.settings.refresh_interval},
            {"regularization", a.settings.regularization}}},
          {"mean", to_json(a.mean)},
          {"covariance", to_json(a.cov)},
          {"proposal_covariance", to_json(a.A)}};
}

inline AdaptState adapt_state_from_json(const json& j) {
  try {
    AdaptState a;
    const json& s = j.at("settings");
    a.settings.enabled = s.at("enabled").get<bool>();
    a.settings.target_accept = s.at("target_accept").get<double>();
    a.settings.step_exponent = s.at("step_exponent").get<double>();
    a.settings.covariance_exponent = s.at("covariance_exponent").get<double>();
    a.settings.covariance_offset = s.at("covariance_offset").get<double>();
    a.settings.refresh_interval = s.at("refresh_interval").get<int>();
    a.settings.regularization = s.at("regularization").get<double>();
    a.log_tau = j.at("log_tau").get<double>();
    a.t = j.at("t").get<std::int64_t>();
    a.regularization_events = j.at("regularization_events").get<std::int64_t>();
    a.mean = vector_from_json(j.at("mean"));
    a.cov = matrix_from_json(j.at("covariance"));
    a.A = matrix_from_json(j.at("proposal_covariance"));
    const Eigen::LLT<Eigen::MatrixXd> llt(a.A);
    if (llt.info() != Eigen::Success || a.A.rows() != a.mean.size()) {
      throw IoError("adaptation snapshot proposal covariance is not SPD");
    }
    a.chol = llt.matrixL();
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed adaptation snapshot: ") + e.what());
  }
}

}  // namespace robinshape::harness
