#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "fixture_manifest.hpp"
#include "miso/errors.hpp"
#include "miso/libsvm.hpp"
#include "test_support.hpp"

namespace {

using miso::Dataset;
using miso::IngestConfig;
using miso::LabelMapping;
using miso::Normalization;
using miso::Philox;

const std::string kCorpus = std::string(MISO_FIXTURE_DIR) + "/libsvm";

Dataset parse_text(const std::string& text, IngestConfig config = {}) {
  std::istringstream in(text);
  return miso::parse_libsvm(in, config);
}

std::size_t error_line(const std::string& text, IngestConfig config = {}) {
  try {
    parse_text(text, config);
  } catch (const miso::ParseError& e) {
    return e.line();
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Fixture corpus
// ---------------------------------------------------------------------------

class Corpus : public ::testing::TestWithParam<miso::testing::FixtureCase> {};

TEST_P(Corpus, MatchesManifest) {
  EXPECT_EQ(miso::testing::check_fixture(kCorpus, GetParam()), "");
}

INSTANTIATE_TEST_SUITE_P(Fixtures, Corpus, ::testing::ValuesIn(miso::testing::read_manifest(kCorpus)),
                         [](const auto& info) {
                           std::string name = info.param.file.substr(0, info.param.file.find('.'));
                           for (char& ch : name) {
                             if (!std::isalnum(static_cast<unsigned char>(ch))) ch = '_';
                           }
                           return "f" + name;
                         });

TEST(CorpusManifest, HasTwentyFiles) {
  const auto cases = miso::testing::read_manifest(kCorpus);
  EXPECT_EQ(cases.size(), 20u);
  std::size_t ok = 0;
  for (const auto& c : cases) ok += c.ok;
  EXPECT_EQ(ok, 10u);
}

// ---------------------------------------------------------------------------
// Format details
// ---------------------------------------------------------------------------

TEST(Parse, ExampleLine) {
  const Dataset d = parse_text("-1 3:1.5 7:-2\n");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.labels[0], -1.0);
  EXPECT_EQ(d.dim(), 7);
  EXPECT_EQ(d.features.nonZeros(), 2);
  EXPECT_EQ(d.features.coeff(0, 2), 1.5);
  EXPECT_EQ(d.features.coeff(0, 6), -2.0);
}

TEST(Parse, LabelOnlyRowIsZero) {
  const Dataset d = parse_text("+1\n-1 2:4\n");
  EXPECT_EQ(d.features.row(0).nonZeros(), 0);
  EXPECT_EQ(d.labels[0], 1.0);
}

TEST(Parse, ZeroOneLabelsMapToPlusMinusOne) {
  IngestConfig config;
  config.label_mapping = LabelMapping::kMap01ToPm1;
  const Dataset d = parse_text("1 1:1\n0 1:2\n0 2:1\n1\n", config);
  EXPECT_EQ(std::set<double>(d.labels.begin(), d.labels.end()), (std::set<double>{-1.0, 1.0}));
  EXPECT_EQ(d.labels, (std::vector<double>{1.0, -1.0, -1.0, 1.0}));
}

TEST(Parse, StrictModePointsAtTheMapping) {
  try {
    parse_text("1 1:1\n0 1:2\n");
    FAIL() << "expected a ParseError";
  } catch (const miso::ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("map_01_to_pm1"), std::string::npos);
  }
}

TEST(Parse, ThresholdMapping) {
  IngestConfig config;
  config.label_mapping = LabelMapping::kThreshold;
  config.threshold = 1.0;
  const Dataset d = parse_text("2 1:1\n1 1:1\n0.5 1:1\n7\n", config);
  EXPECT_EQ(d.labels, (std::vector<double>{1.0, -1.0, -1.0, 1.0}));
}

TEST(Parse, LineNumbersCountCommentsAndBlanks) {
  EXPECT_EQ(error_line("# c\n\n+1 1:1\n\n-1 3:1 2:1\n"), 5u);
  EXPECT_EQ(error_line("+1 1:1\r\n\r\n-1 x:1\r\n"), 3u);
  EXPECT_EQ(error_line("+1 1:1\n2 1:1\n"), 2u);
  EXPECT_EQ(error_line("abc 1:1\n"), 1u);
  EXPECT_EQ(error_line("+1 1:1:2\n"), 1u);
  EXPECT_EQ(error_line("+1 -1:2\n"), 1u);
  EXPECT_EQ(error_line("+1 1:-inf\n"), 1u);
  EXPECT_EQ(error_line("nan 1:1\n"), 1u);
}

TEST(Parse, EmptyInputIsAnError) {
  EXPECT_THROW(parse_text(""), miso::ConfigError);
  EXPECT_THROW(parse_text("# nothing\n\n"), miso::ConfigError);
}

TEST(Parse, BiasColumnAndMinimumDimension) {
  IngestConfig config;
  config.add_bias_column = true;
  config.min_dim = 5;
  const Dataset d = parse_text("+1 2:3\n-1\n", config);
  EXPECT_EQ(d.dim(), 6);
  EXPECT_EQ(d.features.coeff(0, 5), 1.0);
  EXPECT_EQ(d.features.coeff(1, 5), 1.0);
  EXPECT_EQ(d.features.coeff(0, 1), 3.0);
}

TEST(Parse, MissingFileIsConfigError) {
  IngestConfig config;
  config.path = kCorpus + "/does_not_exist.svm";
  EXPECT_THROW(miso::parse_libsvm(config), miso::ConfigError);
}

TEST(Parse, OptionNames) {
  EXPECT_EQ(miso::parse_label_mapping("map_01_to_pm1"), LabelMapping::kMap01ToPm1);
  EXPECT_EQ(miso::parse_normalization("columns_unit_l2"), Normalization::kColumnsUnitL2);
  EXPECT_THROW(miso::parse_label_mapping("auto"), miso::ConfigError);
  EXPECT_THROW(miso::parse_normalization("l1"), miso::ConfigError);
}

// ---------------------------------------------------------------------------
// Round trip
// ---------------------------------------------------------------------------

void expect_same(const Dataset& a, const Dataset& b) {
  ASSERT_EQ(a.labels, b.labels);
  ASSERT_EQ(a.features.rows(), b.features.rows());
  ASSERT_EQ(a.features.nonZeros(), b.features.nonZeros());
  for (Eigen::Index r = 0; r < a.features.rows(); ++r) {
    miso::SparseRows::InnerIterator ia(a.features, r), ib(b.features, r);
    for (; ia && ib; ++ia, ++ib) {
      EXPECT_EQ(ia.index(), ib.index());
      EXPECT_EQ(ia.value(), ib.value());
    }
    EXPECT_FALSE(ia || ib);
  }
}

TEST(RoundTrip, CorpusFilesSurviveWriteAndParse) {
  for (const auto& c : miso::testing::read_manifest(kCorpus)) {
    if (!c.ok) continue;
    IngestConfig config;
    config.path = kCorpus + "/" + c.file;
    config.label_mapping = miso::parse_label_mapping(c.mapping);
    const Dataset first = miso::parse_libsvm(config);
    std::ostringstream out;
    miso::write_libsvm(first, out);
    IngestConfig again;
    again.min_dim = first.dim();
    SCOPED_TRACE(c.file);
    expect_same(first, parse_text(out.str(), again));
  }
}

TEST(RoundTrip, RandomSparseDatasetsAreBitExact) {
  Philox rng(91);
  for (int trial = 0; trial < 30; ++trial) {
    const auto n = 1 + rng.uniform_index(20);
    const auto d = 1 + static_cast<Eigen::Index>(rng.uniform_index(50));
    std::vector<Eigen::Triplet<double>> entries;
    Dataset data;
    for (std::size_t i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        if (rng.uniform() < 0.3) {
          // Mix of awkward magnitudes: tiny, huge and ordinary values.
          const double scale = std::pow(10.0, static_cast<double>(rng.uniform_index(41)) - 20.0);
          entries.emplace_back(static_cast<int>(i), static_cast<int>(j), scale * rng.normal());
        }
      }
      data.labels.push_back(rng.uniform() < 0.5 ? -1.0 : 1.0);
    }
    data.features.resize(static_cast<Eigen::Index>(n), d);
    data.features.setFromTriplets(entries.begin(), entries.end());
    data.features.makeCompressed();

    std::ostringstream out;
    miso::write_libsvm(data, out);
    IngestConfig config;
    config.min_dim = d;
    expect_same(data, parse_text(out.str(), config));
  }
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

TEST(Normalize, RowExample) {
  Dataset d = parse_text("+1 1:3 2:4\n-1\n");
  miso::normalize(d, Normalization::kRowsUnitL2);
  EXPECT_NEAR(d.features.coeff(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(d.features.coeff(0, 1), 0.8, 1e-15);
  EXPECT_EQ(d.features.row(1).nonZeros(), 0);
}

TEST(Normalize, RowsAreIdempotent) {
  Philox rng(92);
  Dataset d = miso::testing::random_dataset(15, 6, rng, 3.0);
  miso::normalize(d, Normalization::kRowsUnitL2);
  const miso::SparseRows once = d.features;
  miso::normalize(d, Normalization::kRowsUnitL2);
  EXPECT_LE((Eigen::MatrixXd(d.features) - Eigen::MatrixXd(once)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Normalize, ColumnsHaveUnitNorm) {
  Philox rng(93);
  Dataset d = miso::testing::random_dataset(12, 4, rng, 5.0);
  miso::normalize(d, Normalization::kColumnsUnitL2);
  const Eigen::MatrixXd dense(d.features);
  for (Eigen::Index j = 0; j < 4; ++j) EXPECT_NEAR(dense.col(j).norm(), 1.0, 1e-14);
}

TEST(Normalize, UnitRowsGiveLogisticSmoothnessQuarterPlusLambda) {
  Philox rng(94);
  Dataset d = miso::testing::random_dataset(25, 5, rng, 2.0);
  miso::normalize(d, Normalization::kRowsUnitL2);
  const miso::LogisticProblem p(d, 0.03);
  EXPECT_NEAR(p.constants().L, 0.25 + 0.03, 1e-14);
  for (double li : p.constants().component_smoothness) EXPECT_NEAR(li, 0.28, 1e-14);
}

}  // namespace
