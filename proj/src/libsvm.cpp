#include "miso/libsvm.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <string_view>
#include <vector>

#include "miso/errors.hpp"

namespace miso {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view text, double& out) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return false;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && end == text.data() + text.size();
}

bool parse_index(std::string_view text, std::uint64_t& out) {
  if (text.empty()) return false;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && end == text.data() + text.size();
}

std::string quoted(std::string_view s) { return "'" + std::string(s) + "'"; }

double map_label(double raw, std::string_view token, const IngestConfig& config, std::size_t line) {
  switch (config.label_mapping) {
    case LabelMapping::kStrictPm1:
      if (raw == 1.0 || raw == -1.0) return raw;
      if (raw == 0.0) {
        throw ParseError(line, "label 0 is not +-1; the file looks like it uses {0,1} labels, "
                               "set label_mapping = map_01_to_pm1 to convert them");
      }
      throw ParseError(line, "label " + quoted(token) + " is not +-1");
    case LabelMapping::kMap01ToPm1:
      if (raw == 1.0) return 1.0;
      if (raw == 0.0 || raw == -1.0) return -1.0;
      throw ParseError(line, "label " + quoted(token) + " is outside {0, 1, -1, +1}");
    case LabelMapping::kThreshold:
      return raw > config.threshold ? 1.0 : -1.0;
  }
  return raw;
}

}  // namespace

Dataset parse_libsvm(std::istream& in, const IngestConfig& config) {
  std::vector<Eigen::Triplet<double>> entries;
  std::vector<double> labels;
  std::uint64_t max_index = 0;
  std::string raw_line;
  std::size_t line_no = 0;

  while (std::getline(in, raw_line)) {
    ++line_no;
    std::string_view line = raw_line;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    std::size_t pos = 0;
    auto next_token = [&]() -> std::string_view {
      while (pos < line.size() && is_space(line[pos])) ++pos;
      const std::size_t start = pos;
      while (pos < line.size() && !is_space(line[pos])) ++pos;
      return line.substr(start, pos - start);
    };

    const std::string_view label_token = next_token();
    double raw_label = 0.0;
    if (!parse_double(label_token, raw_label) || !std::isfinite(raw_label)) {
      throw ParseError(line_no, "cannot parse label " + quoted(label_token));
    }
    const auto row = static_cast<int>(labels.size());
    labels.push_back(map_label(raw_label, label_token, config, line_no));

    std::uint64_t previous = 0;
    for (std::string_view token = next_token(); !token.empty(); token = next_token()) {
      const auto colon = token.find(':');
      if (colon == std::string_view::npos) {
        throw ParseError(line_no, "expected index:value, got " + quoted(token));
      }
      std::uint64_t index = 0;
      if (!parse_index(token.substr(0, colon), index)) {
        throw ParseError(line_no, "cannot parse feature index in " + quoted(token));
      }
      if (index == 0) throw ParseError(line_no, "feature indices are 1-based, got 0");
      if (index <= previous) {
        throw ParseError(line_no, "feature indices must be strictly increasing: " + std::to_string(index) +
                                      " after " + std::to_string(previous));
      }
      double value = 0.0;
      if (!parse_double(token.substr(colon + 1), value)) {
        throw ParseError(line_no, "cannot parse feature value in " + quoted(token));
      }
      if (!std::isfinite(value)) throw ParseError(line_no, "non-finite feature value in " + quoted(token));
      previous = index;
      max_index = std::max(max_index, index);
      entries.emplace_back(row, static_cast<int>(index - 1), value);
    }
  }
  if (in.bad()) throw ConfigError("read error after line " + std::to_string(line_no));
  if (labels.empty()) throw ConfigError("no data rows: the input is empty or contains only comments");

  Eigen::Index dim = std::max<Eigen::Index>(static_cast<Eigen::Index>(max_index), config.min_dim);
  if (config.add_bias_column) {
    for (std::size_t r = 0; r < labels.size(); ++r) entries.emplace_back(static_cast<int>(r), static_cast<int>(dim), 1.0);
    ++dim;
  }
  Dataset data;
  data.labels = std::move(labels);
  data.features.resize(static_cast<Eigen::Index>(data.labels.size()), dim);
  data.features.setFromTriplets(entries.begin(), entries.end());
  data.features.makeCompressed();
  normalize(data, config.normalize);
  return data;
}

Dataset parse_libsvm(const IngestConfig& config) {
  if (config.path == "-") return parse_libsvm(std::cin, config);
  std::ifstream file(config.path);
  if (!file) throw ConfigError("cannot open dataset '" + config.path + "'");
  return parse_libsvm(file, config);
}

void normalize(Dataset& data, Normalization mode) {
  SparseRows& A = data.features;
  switch (mode) {
    case Normalization::kNone:
      return;
    case Normalization::kRowsUnitL2:
      for (Eigen::Index r = 0; r < A.outerSize(); ++r) {
        const double norm = A.row(r).norm();
        if (norm == 0.0) continue;
        for (SparseRows::InnerIterator it(A, r); it; ++it) it.valueRef() /= norm;
      }
      return;
    case Normalization::kColumnsUnitL2: {
      Vector sq = Vector::Zero(A.cols());
      for (Eigen::Index r = 0; r < A.outerSize(); ++r) {
        for (SparseRows::InnerIterator it(A, r); it; ++it) sq[it.index()] += it.value() * it.value();
      }
      const Vector norms = sq.cwiseSqrt();
      for (Eigen::Index r = 0; r < A.outerSize(); ++r) {
        for (SparseRows::InnerIterator it(A, r); it; ++it) {
          if (norms[it.index()] > 0.0) it.valueRef() /= norms[it.index()];
        }
      }
      return;
    }
  }
}

void write_libsvm(const Dataset& data, std::ostream& out) {
  char buf[64];
  for (Eigen::Index r = 0; r < data.features.rows(); ++r) {
    out << (data.labels[static_cast<std::size_t>(r)] > 0.0 ? "+1" : "-1");
    for (SparseRows::InnerIterator it(data.features, r); it; ++it) {
      const auto res = std::to_chars(buf, buf + sizeof buf, it.value());
      out << ' ' << (it.index() + 1) << ':' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
}

LabelMapping parse_label_mapping(const std::string& name) {
  if (name == "strict_pm1") return LabelMapping::kStrictPm1;
  if (name == "map_01_to_pm1") return LabelMapping::kMap01ToPm1;
  if (name == "threshold") return LabelMapping::kThreshold;
  throw ConfigError("unknown label_mapping '" + name + "' (strict_pm1, map_01_to_pm1, threshold)");
}

Normalization parse_normalization(const std::string& name) {
  if (name == "none") return Normalization::kNone;
  if (name == "rows_unit_l2") return Normalization::kRowsUnitL2;
  if (name == "columns_unit_l2") return Normalization::kColumnsUnitL2;
  throw ConfigError("unknown normalize '" + name + "' (none, rows_unit_l2, columns_unit_l2)");
}

}  // namespace miso
