#pragma once

#include <Eigen/Dense>

#include <istream>
#include <string>
#include <vector>

#include "vsem/model.hpp"

namespace vsem {

/// n x p block of complete cases with named columns.
struct Dataset {
  std::vector<std::string> names;
  Eigen::MatrixXd cases;

  Eigen::Index n() const { return cases.rows(); }
  Eigen::Index p() const { return cases.cols(); }
};

/// Reads a CSV with a header row, `,` delimiter and `.` decimals. Throws DataError on
/// ragged rows, empty or non-numeric cells.
Dataset read_csv(std::istream& in);
Dataset read_csv_file(const std::string& path);
void write_csv(std::ostream& out, const Dataset& data);

/// Columns of `data` reordered to `spec.manifest_names`. Throws DataError if a column
/// is missing, a column is constant, or n <= p.
Dataset align_to_model(const Dataset& data, const ModelSpec& spec);

/// Biased (divisor n) sample moments.
struct SampleMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::Index n = 0;
};

SampleMoments sample_moments(const Eigen::MatrixXd& cases);

}  // namespace vsem
