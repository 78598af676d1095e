#include "crashgan/dataset.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "crashgan/error.hpp"
#include "crashgan/format.hpp"

namespace crashgan {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

}  // namespace

void Dataset::validate() const {
  const auto n = counts.size();
  if (static_cast<std::size_t>(features.rows()) != n) {
    throw DimensionError("dataset: feature rows (" + std::to_string(features.rows()) +
                         ") != count rows (" + std::to_string(n) + ")");
  }
  if (static_cast<std::size_t>(features.cols()) != feature_names.size()) {
    throw DimensionError("dataset: feature columns (" + std::to_string(features.cols()) +
                         ") != feature names (" + std::to_string(feature_names.size()) + ")");
  }
  if (true_means && static_cast<std::size_t>(true_means->size()) != n) {
    throw DimensionError("dataset: true mean vector length mismatch");
  }
  if (!synthetic.empty() && synthetic.size() != n) {
    throw DimensionError("dataset: synthetic flag length mismatch");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[i] < 0) throw ValidationError("dataset: negative count at row " + std::to_string(i));
  }
  if (!features.allFinite()) throw ValidationError("dataset: non-finite feature value");
}

std::size_t Dataset::feature_index(const std::string& name) const {
  for (std::size_t j = 0; j < feature_names.size(); ++j) {
    if (feature_names[j] == name) return j;
  }
  throw ValidationError("dataset has no feature named '" + name + "'");
}

std::vector<std::string> default_feature_names(std::size_t feature_count) {
  std::vector<std::string> names;
  names.reserve(feature_count);
  for (std::size_t j = 0; j < feature_count; ++j) names.push_back("x" + std::to_string(j + 1));
  return names;
}

Dataset make_dataset(std::vector<std::string> names, Eigen::MatrixXd features,
                     std::vector<CrashCount> counts) {
  Dataset d;
  d.feature_names = std::move(names);
  d.features = std::move(features);
  d.counts = std::move(counts);
  d.validate();
  return d;
}

Dataset concat(const Dataset& first, const Dataset& second) {
  if (first.feature_names != second.feature_names) {
    throw DimensionError("concat: feature names differ");
  }
  Dataset out;
  out.feature_names = first.feature_names;
  const auto n1 = static_cast<Eigen::Index>(first.rows());
  const auto n2 = static_cast<Eigen::Index>(second.rows());
  const auto fs = static_cast<Eigen::Index>(first.feature_count());
  out.features.resize(n1 + n2, fs);
  if (n1 > 0) out.features.topRows(n1) = first.features;
  if (n2 > 0) out.features.bottomRows(n2) = second.features;
  out.counts = first.counts;
  out.counts.insert(out.counts.end(), second.counts.begin(), second.counts.end());
  if (first.true_means && second.true_means) {
    Eigen::VectorXd lam(n1 + n2);
    lam << *first.true_means, *second.true_means;
    out.true_means = std::move(lam);
  }
  if (!first.synthetic.empty() || !second.synthetic.empty()) {
    out.synthetic.assign(out.counts.size(), 0);
    for (std::size_t i = 0; i < first.rows(); ++i) out.synthetic[i] = first.is_synthetic(i);
    for (std::size_t i = 0; i < second.rows(); ++i) out.synthetic[first.rows() + i] = second.is_synthetic(i);
  }
  return out;
}

Dataset select_rows(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  out.feature_names = data.feature_names;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), data.features.cols());
  out.counts.reserve(indices.size());
  if (data.true_means) out.true_means = Eigen::VectorXd(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto i = indices[r];
    if (i >= data.rows()) throw DimensionError("select_rows: index out of range");
    out.features.row(static_cast<Eigen::Index>(r)) = data.features.row(static_cast<Eigen::Index>(i));
    out.counts.push_back(data.counts[i]);
    if (data.true_means) (*out.true_means)(static_cast<Eigen::Index>(r)) = (*data.true_means)(static_cast<Eigen::Index>(i));
    if (!data.synthetic.empty()) out.synthetic.push_back(data.synthetic[i]);
  }
  return out;
}

Dataset read_csv(std::istream& in, const std::string& source_name) {
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) -> ParseError {
    return ParseError(source_name + ":" + std::to_string(line_no) + ": " + what);
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw fail("missing header row");
  const auto header = split_commas(line);

  std::ptrdiff_t count_col = -1, lambda_col = -1, synth_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "count") count_col = static_cast<std::ptrdiff_t>(c);
    else if (header[c] == "lambda") lambda_col = static_cast<std::ptrdiff_t>(c);
    else if (header[c] == "synthetic") synth_col = static_cast<std::ptrdiff_t>(c);
  }
  if (count_col < 0) throw fail("header has no 'count' column");
  if ((lambda_col >= 0 && lambda_col < count_col) || (synth_col >= 0 && synth_col < count_col)) {
    throw fail("'lambda'/'synthetic' columns must follow 'count'");
  }
  const auto fs = static_cast<std::size_t>(count_col);

  Dataset d;
  for (std::size_t c = 0; c < fs; ++c) {
    if (header[c].empty()) throw fail("empty feature name in header");
    d.feature_names.emplace_back(header[c]);
  }

  std::vector<double> values;
  std::vector<double> lambdas;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      throw fail("expected " + std::to_string(header.size()) + " fields, found " +
                 std::to_string(cells.size()));
    }
    try {
      for (std::size_t c = 0; c < fs; ++c) values.push_back(parse_double(cells[c]));
      const auto y = parse_int(cells[static_cast<std::size_t>(count_col)]);
      if (y < 0) throw ParseError("negative count");
      d.counts.push_back(y);
      if (lambda_col >= 0) lambdas.push_back(parse_double(cells[static_cast<std::size_t>(lambda_col)]));
      if (synth_col >= 0) {
        const auto flag = parse_int(cells[static_cast<std::size_t>(synth_col)]);
        if (flag != 0 && flag != 1) throw ParseError("synthetic flag must be 0 or 1");
        d.synthetic.push_back(static_cast<std::uint8_t>(flag));
      }
    } catch (const ParseError& e) {
      throw fail(e.what());
    }
  }

  const auto n = static_cast<Eigen::Index>(d.counts.size());
  d.features.resize(n, static_cast<Eigen::Index>(fs));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(fs); ++j) {
      d.features(i, j) = values[static_cast<std::size_t>(i) * fs + static_cast<std::size_t>(j)];
    }
  }
  if (lambda_col >= 0) d.true_means = Eigen::Map<Eigen::VectorXd>(lambdas.data(), n);
  try {
    d.validate();
  } catch (const ValidationError& e) {
    throw ParseError(source_name + ": " + e.what());
  }
  return d;
}

Dataset read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  return read_csv(in, path.string());
}

void write_csv(std::ostream& out, const Dataset& data) {
  data.validate();
  for (const auto& name : data.feature_names) out << name << ',';
  out << "count";
  if (data.true_means) out << ",lambda";
  if (!data.synthetic.empty()) out << ",synthetic";
  out << '\n';
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < data.features.cols(); ++j) out << format_double(data.features(r, j)) << ',';
    out << data.counts[i];
    if (data.true_means) out << ',' << format_double((*data.true_means)(r));
    if (!data.synthetic.empty()) out << ',' << static_cast<int>(data.synthetic[i]);
    out << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  write_csv(out, data);
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace crashgan
