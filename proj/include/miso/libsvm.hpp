#pragma once

#include <iosfwd>
#include <string>

#include "miso/objective.hpp"

namespace miso {

enum class LabelMapping {
  kStrictPm1,   ///< labels must already be -1 or +1
  kMap01ToPm1,  ///< {0, 1} -> {-1, +1}; +-1 pass through
  kThreshold    ///< label > threshold -> +1, otherwise -1
};

enum class Normalization { kNone, kRowsUnitL2, kColumnsUnitL2 };

struct IngestConfig {
  std::string path;  ///< "-" reads standard input
  LabelMapping label_mapping = LabelMapping::kStrictPm1;
  double threshold = 0.0;  ///< used by kThreshold
  Normalization normalize = Normalization::kNone;
  bool add_bias_column = false;
  /// Force the feature dimension (0 = max index seen). Useful for train/test
  /// splits whose files do not share a maximum index.
  Eigen::Index min_dim = 0;
};

/// Parses LIBSVM text: "<label> <idx>:<val> ..." with 1-based, strictly
/// increasing indices. '#' starts a comment, blank lines are skipped, CRLF
/// endings are accepted. Errors are ParseError with the 1-based line number.
Dataset parse_libsvm(const IngestConfig& config);
Dataset parse_libsvm(std::istream& in, const IngestConfig& config);

void normalize(Dataset& data, Normalization mode);

/// Inverse of parse_libsvm for +-1 labels. Values are written with the
/// shortest decimal form that round-trips.
void write_libsvm(const Dataset& data, std::ostream& out);

LabelMapping parse_label_mapping(const std::string& name);
Normalization parse_normalization(const std::string& name);

}  // namespace miso
