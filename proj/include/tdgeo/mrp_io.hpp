#pragma once

// .mrp.json reading and writing.
//   {"n": int, "P": [[...]], "reward": {"vector": [...]} | {"matrix": [[...]]}, "gamma": float}

#include "tdgeo/mrp.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace tdgeo::io {

using nlohmann::json;

/// Shortest form is not used on purpose: every number is written with 17
/// significant digits so files are byte-stable across platforms.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace detail {

inline std::string line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline double finite_number(const json& j, const std::string& where) {
  require(j.is_number(), ErrorCode::ParseError, where + " must be a number");
  const double x = j.get<double>();
  require(std::isfinite(x), ErrorCode::ParseError, where + " is not finite");
  return x;
}

inline std::string write_vector(const Vector& v) {
  std::string out = "[";
  for (Index i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += format_double(v(i));
  }
  return out + "]";
}

inline std::string write_matrix(const Matrix& m, const std::string& indent) {
  std::string out = "[\n";
  for (Index i = 0; i < m.rows(); ++i) {
    out += indent + "  " + write_vector(m.row(i).transpose());
    out += (i + 1 < m.rows()) ? ",\n" : "\n";
  }
  return out + indent + "]";
}

}  // namespace detail

/// Parses JSON text, converting parse failures into ParseError with line/column.
inline json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError,
                detail::line_column(text, e.byte == 0 ? 0 : e.byte - 1) + ": " + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::InvalidArgument, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::InvalidArgument, "cannot write " + path);
    out << content;
  }
  std::rename(tmp.c_str(), path.c_str());
}

inline Vector vector_from_json(const json& j, const std::string& where) {
  require(j.is_array(), ErrorCode::ParseError, where + " must be an array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v(static_cast<Index>(i)) = detail::finite_number(j[i], where + "[" + std::to_string(i) + "]");
  return v;
}

inline Matrix matrix_from_json(const json& j, const std::string& where) {
  require(j.is_array() && !j.empty(), ErrorCode::ParseError, where + " must be a nonempty array");
  const auto rows = static_cast<Index>(j.size());
  require(j[0].is_array(), ErrorCode::ParseError, where + " rows must be arrays");
  const auto cols = static_cast<Index>(j[0].size());
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const Vector row = vector_from_json(j[static_cast<std::size_t>(i)],
                                        where + "[" + std::to_string(i) + "]");
    require(row.size() == cols, ErrorCode::ShapeMismatch, where + " is ragged");
    m.row(i) = row.transpose();
  }
  return m;
}

inline json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Vector(m.row(i).transpose())));
  return rows;
}

inline MarkovRewardProcess mrp_from_json(const json& j) {
  require(j.is_object(), ErrorCode::ParseError, "MRP document must be an object");
  for (const char* key : {"n", "P", "reward", "gamma"})
    require(j.contains(key), ErrorCode::ParseError, std::string("missing field \"") + key + "\"");
  require(j["n"].is_number_integer(), ErrorCode::ParseError, "n must be an integer");
  const auto n = j["n"].get<Index>();
  Matrix p = matrix_from_json(j["P"], "P");
  require(p.rows() == n && p.cols() == n, ErrorCode::ShapeMismatch, "P must be n x n");
  const json& rj = j["reward"];
  require(rj.is_object() && (rj.contains("vector") != rj.contains("matrix")), ErrorCode::ParseError,
          "reward must be {\"vector\": ...} or {\"matrix\": ...}");
  Reward reward = rj.contains("vector") ? Reward(vector_from_json(rj["vector"], "reward.vector"))
                                        : Reward(matrix_from_json(rj["matrix"], "reward.matrix"));
  const double gamma = detail::finite_number(j["gamma"], "gamma");
  return {std::move(p), std::move(reward), gamma};
}

inline MarkovRewardProcess mrp_from_string(const std::string& text) {
  return mrp_from_json(parse_json(text));
}

inline MarkovRewardProcess load_mrp(const std::string& path) {
  return mrp_from_string(read_file(path));
}

inline std::string mrp_to_string(const MarkovRewardProcess& mrp) {
  std::string out = "{\n";
  out += "  \"n\": " + std::to_string(mrp.n()) + ",\n";
  out += "  \"P\": " + detail::write_matrix(mrp.P(), "  ") + ",\n";
  if (const auto* r = std::get_if<Vector>(&mrp.reward())) {
    out += "  \"reward\": {\"vector\": " + detail::write_vector(*r) + "},\n";
  } else {
    out += "  \"reward\": {\"matrix\": " +
           detail::write_matrix(std::get<Matrix>(mrp.reward()), "  ") + "},\n";
  }
  out += "  \"gamma\": " + format_double(mrp.gamma()) + "\n}\n";
  return out;
}

inline void save_mrp(const std::string& path, const MarkovRewardProcess& mrp) {
  write_file(path, mrp_to_string(mrp));
}

/// Finite doubles as numbers, +/-inf as the strings "inf" / "-inf".
inline json number_or_inf(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  return x;
}

inline double number_or_inf_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInfinity;
    if (s == "-inf") return -kInfinity;
    throw Error(ErrorCode::ParseError, "unexpected numeric string \"" + s + "\"");
  }
  return j.get<double>();
}

}  // namespace tdgeo::io
