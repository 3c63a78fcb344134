#include "hirrr/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hirrr/errors.hpp"

namespace hirrr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

Json matrix_to_json(const MatrixXd& M) {
  Json data = Json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    for (Index j = 0; j < M.cols(); ++j) data.push_back(M(i, j));
  }
  return Json{{"rows", M.rows()}, {"cols", M.cols()}, {"data", std::move(data)}};
}

MatrixXd matrix_from_json(const Json& j) {
  try {
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    const Json& data = j.at("data");
    if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols) {
      throw IoError("matrix: data length does not match rows * cols");
    }
    MatrixXd M(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index c = 0; c < cols; ++c) M(i, c) = data[static_cast<std::size_t>(i * cols + c)].get<double>();
    }
    return M;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("matrix: ") + e.what());
  }
}

Json vector_to_json(const VectorXd& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

VectorXd vector_from_json(const Json& j) {
  try {
    VectorXd v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("vector: ") + e.what());
  }
}

Json params_to_json(const ModelParams& params) {
  return Json{{"rank", params.rank()},
              {"A", matrix_to_json(params.A)},
              {"B", matrix_to_json(params.B.cols())},
              {"mu", vector_to_json(params.mu)},
              {"Ltilde", matrix_to_json(params.Ltilde)},
              {"phi", vector_to_json(params.phi)},
              {"objective_trace", params.objective_trace}};
}

ModelParams params_from_json(const Json& j) {
  try {
    ModelParams p;
    p.A = matrix_from_json(j.at("A"));
    p.B = OrthonormalFrame(matrix_from_json(j.at("B")));
    p.mu = vector_from_json(j.at("mu"));
    p.Ltilde = matrix_from_json(j.at("Ltilde"));
    p.phi = vector_from_json(j.at("phi"));
    p.objective_trace = j.at("objective_trace").get<std::vector<double>>();
    if (j.at("rank").get<Index>() != p.B.rank() || p.A.cols() != p.B.rank() || p.mu.size() != p.B.rows() ||
        p.phi.size() != p.B.rows()) {
      throw IoError("model parameters have inconsistent dimensions");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("model parameters: ") + e.what());
  } catch (const ArgumentError& e) {
    throw IoError(std::string("model parameters: ") + e.what());
  }
}

Json dataset_to_json(const Dataset& ds) {
  Json fam = Json::array();
  for (const auto& f : ds.families) fam.push_back(to_string(f.kind));
  return Json{{"X", matrix_to_json(ds.X)},
              {"Y", matrix_to_json(ds.Y)},
              {"Ytilde", matrix_to_json(ds.Ytilde)},
              {"q0", ds.q0},
              {"families", std::move(fam)},
              {"feature_names", ds.feature_names},
              {"outcome_names", ds.outcome_names}};
}

Dataset dataset_from_json(const Json& j) {
  try {
    Dataset ds;
    ds.X = matrix_from_json(j.at("X"));
    ds.Y = matrix_from_json(j.at("Y"));
    if (j.contains("Ytilde")) ds.Ytilde = matrix_from_json(j.at("Ytilde"));
    ds.q0 = j.value("q0", 1);
    for (const auto& f : j.at("families")) ds.families.push_back(parse_family(f.get<std::string>()));
    if (j.contains("feature_names")) ds.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    if (j.contains("outcome_names")) ds.outcome_names = j.at("outcome_names").get<std::vector<std::string>>();
    ds.validate();
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("dataset: ") + e.what());
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

Json read_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw IoError("CSV ends inside a quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace hirrr
