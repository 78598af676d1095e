#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace crashgan {

using CrashCount = std::int64_t;

// Feature matrix (one row per site) plus crash counts. Simulated data also
// carries the true Poisson means; CGAN output carries a per-row synthetic flag.
struct Dataset {
  std::vector<std::string> feature_names;
  Eigen::MatrixXd features;
  std::vector<CrashCount> counts;
  std::optional<Eigen::VectorXd> true_means;
  std::vector<std::uint8_t> synthetic;  // empty, or one flag per row

  std::size_t rows() const { return counts.size(); }
  std::size_t feature_count() const { return feature_names.size(); }
  bool empty() const { return counts.empty(); }
  bool is_synthetic(std::size_t row) const { return !synthetic.empty() && synthetic[row] != 0; }

  // Throws ValidationError when shapes disagree, counts are negative or
  // values are non-finite.
  void validate() const;

  // Column index of a named feature; throws ValidationError if absent.
  std::size_t feature_index(const std::string& name) const;
};

// Default names x1..xFS.
std::vector<std::string> default_feature_names(std::size_t feature_count);

Dataset make_dataset(std::vector<std::string> names, Eigen::MatrixXd features,
                     std::vector<CrashCount> counts);

// Rows of `first` followed by rows of `second`. Feature names must match.
// True means are kept only when both sides carry them.
Dataset concat(const Dataset& first, const Dataset& second);

Dataset select_rows(const Dataset& data, std::span<const std::size_t> indices);

// CSV schema: header `<feature names...>,count[,lambda][,synthetic]`; every
// column before `count` is a feature. `.` decimal separator, no quoting.
Dataset read_csv(std::istream& in, const std::string& source_name = "<stream>");
Dataset read_csv(const std::filesystem::path& path);
void write_csv(std::ostream& out, const Dataset& data);
void write_csv(const std::filesystem::path& path, const Dataset& data);

}  // namespace crashgan
