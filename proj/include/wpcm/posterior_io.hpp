#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "wpcm/cvi.hpp"

namespace wpcm {

// Checkpoint record of a PosteriorState:
//   {"t": int, "u": [p], "sigma2": [p], "sigma_offdiag": [p(p-1)/2],
//    "c": [N], "d2": [N]}
// sigma_offdiag packs the strict upper triangle row by row:
// (0,1), (0,2), ..., (0,p-1), (1,2), ...
nlohmann::json posterior_to_json(const PosteriorState& state);
// Throws FormatError on missing fields or inconsistent lengths and
// NumericError when the assembled state is invalid.
PosteriorState posterior_from_json(const nlohmann::json& j);

nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j, const char* field);
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);  // array of rows
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const char* field);

Eigen::VectorXd pack_upper(const Eigen::MatrixXd& m);
// Symmetric matrix from a diagonal and a packed strict upper triangle.
Eigen::MatrixXd unpack_symmetric(const Eigen::VectorXd& diagonal,
                                 const Eigen::VectorXd& packed);

// Whole-file helpers. Output is pretty-printed with a trailing newline.
void write_json_file(const std::filesystem::path& path,
                     const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace wpcm
