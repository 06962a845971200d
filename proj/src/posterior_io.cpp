#include "wpcm/posterior_io.hpp"

#include <fstream>
#include <sstream>

namespace wpcm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

json vector_to_json(const VectorXd& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) {
    out.push_back(v(i));
  }
  return out;
}

VectorXd vector_from_json(const json& j, const char* field) {
  if (!j.contains(field) || !j.at(field).is_array()) {
    throw FormatError(std::string("missing array field '") + field + "'");
  }
  const json& arr = j.at(field);
  VectorXd v(static_cast<Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) {
      throw FormatError(std::string("non-numeric entry in '") + field + "'");
    }
    v(static_cast<Index>(i)) = arr[i].get<double>();
  }
  return v;
}

json matrix_to_json(const MatrixXd& m) {
  json out = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    out.push_back(vector_to_json(m.row(r).transpose()));
  }
  return out;
}

MatrixXd matrix_from_json(const json& j, const char* field) {
  if (!j.contains(field) || !j.at(field).is_array()) {
    throw FormatError(std::string("missing matrix field '") + field + "'");
  }
  const json& rows = j.at(field);
  const auto n = static_cast<Index>(rows.size());
  MatrixXd m(n, n);
  for (Index r = 0; r < n; ++r) {
    const json& row = rows[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != n) {
      throw FormatError(std::string("matrix field '") + field +
                        "' is not square");
    }
    for (Index c = 0; c < n; ++c) {
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

VectorXd pack_upper(const MatrixXd& m) {
  const Index p = m.rows();
  VectorXd out(p * (p - 1) / 2);
  Index k = 0;
  for (Index r = 0; r < p; ++r) {
    for (Index c = r + 1; c < p; ++c) {
      out(k++) = m(r, c);
    }
  }
  return out;
}

MatrixXd unpack_symmetric(const VectorXd& diagonal, const VectorXd& packed) {
  const Index p = diagonal.size();
  if (packed.size() != p * (p - 1) / 2) {
    throw FormatError("packed off-diagonal length does not match dimension");
  }
  MatrixXd m = diagonal.asDiagonal();
  Index k = 0;
  for (Index r = 0; r < p; ++r) {
    for (Index c = r + 1; c < p; ++c) {
      m(r, c) = packed(k);
      m(c, r) = packed(k);
      ++k;
    }
  }
  return m;
}

json posterior_to_json(const PosteriorState& state) {
  json j;
  j["t"] = state.t;
  j["u"] = vector_to_json(state.u);
  j["sigma2"] = vector_to_json(state.sigma2());
  j["sigma_offdiag"] = vector_to_json(pack_upper(state.sigma_beta));
  j["c"] = vector_to_json(state.c);
  j["d2"] = vector_to_json(state.d2);
  return j;
}

PosteriorState posterior_from_json(const json& j) {
  if (!j.is_object()) {
    throw FormatError("posterior record must be an object");
  }
  PosteriorState s;
  if (!j.contains("t") || !j.at("t").is_number_integer()) {
    throw FormatError("missing integer field 't'");
  }
  s.t = j.at("t").get<int>();
  s.u = vector_from_json(j, "u");
  const VectorXd s2 = vector_from_json(j, "sigma2");
  if (s2.size() != s.u.size()) {
    throw FormatError("'sigma2' length differs from 'u'");
  }
  s.sigma_beta = unpack_symmetric(s2, vector_from_json(j, "sigma_offdiag"));
  s.c = vector_from_json(j, "c");
  s.d2 = vector_from_json(j, "d2");
  if (s.c.size() != s.d2.size()) {
    throw FormatError("'c' and 'd2' lengths differ");
  }
  s.validate();
  return s;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot open " + path.string() + " for writing");
  }
  out << j.dump(2) << '\n';
  if (!out) {
    throw DataError("failed writing " + path.string());
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace wpcm
