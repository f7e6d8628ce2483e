#include "enspost/data.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <sstream>

using namespace enspost;

namespace {

Dataset small_synth(int stations = 3, int days = 40, int members = 6, std::uint64_t seed = 7) {
  SynthConfig c;
  c.stations = stations;
  c.days = days;
  c.members = members;
  c.seed = seed;
  return generate_synthetic(c);
}

bool bitwise_equal(const Dataset& a, const Dataset& b) {
  if (a.size() != b.size() || a.predictor_names != b.predictor_names || a.scalar_names != b.scalar_names) return false;
  for (std::size_t t = 0; t < a.size(); ++t) {
    const auto& x = a.samples[t];
    const auto& y = b.samples[t];
    if (x.station != y.station || x.day != y.day || x.lead_hours != y.lead_hours) return false;
    if (std::memcmp(&x.obs, &y.obs, sizeof(double)) != 0) return false;
    if (x.ens.rows() != y.ens.rows() || x.ens.cols() != y.ens.cols()) return false;
    if (std::memcmp(x.ens.data(), y.ens.data(), sizeof(double) * static_cast<std::size_t>(x.ens.size())) != 0) return false;
    if (x.scalars.size() != y.scalars.size()) return false;
    if (std::memcmp(x.scalars.data(), y.scalars.data(), sizeof(double) * x.scalars.size()) != 0) return false;
  }
  return true;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST(Calendar, RoundTrip) {
  EXPECT_EQ(parse_date("1970-01-01"), 0);
  EXPECT_EQ(format_date(parse_date("2016-02-29")), "2016-02-29");
  EXPECT_EQ(month_of(parse_date("2015-12-31")), 12);
  EXPECT_EQ(day_of_year(parse_date("2015-12-31")), 365);
  EXPECT_THROW(parse_date("2015-13-01"), ConfigError);
  EXPECT_THROW(parse_date("15-1-1"), ConfigError);
}

TEST(Ndjson, SingleLineRoundTripsBitIdentically) {
  const std::string line =
      R"({"time":"2015-03-04","station":2,"lead":6,"obs":3.141592653589793,"ens":{"t2m":[1.5,0.1,-2.25],"wind":[0.3333333333333333,2.0,7.0]},"scalars":{"lat":47.5,"alt":512.0}})";
  std::istringstream in(line + "\n");
  const Dataset d = load_ndjson(in);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.stations, 3);
  EXPECT_EQ(d.samples[0].ens.rows(), 3);
  EXPECT_EQ(d.samples[0].ens.cols(), 2);
  std::ostringstream out;
  save_ndjson(d, out);
  EXPECT_EQ(out.str(), line + "\n");
}

TEST(Ndjson, ShapeContract) {
  const Dataset d = small_synth(2, 3, 20);
  std::stringstream s;
  save_ndjson(d, s);
  const Dataset back = load_ndjson(s);
  ASSERT_EQ(back.size(), d.size());
  EXPECT_EQ(back.samples[0].ens.rows(), 20);
  EXPECT_EQ(back.samples[0].ens.cols(), 5);
}

TEST(Ndjson, SaveLoadIsIdentity) {
  const Dataset d = small_synth();
  std::stringstream s;
  save_ndjson(d, s);
  const Dataset back = load_ndjson(s);
  EXPECT_TRUE(bitwise_equal(d, back));
  EXPECT_EQ(back.stations, d.stations);
}

TEST(Ndjson, EmptyFileIsError) {
  std::istringstream in("");
  EXPECT_THROW(load_ndjson(in), DomainError);
}

TEST(Ndjson, ErrorsNameLineAndField) {
  const std::string good =
      R"({"time":"2015-03-04","station":0,"lead":6,"obs":1.0,"ens":{"a":[1.0,2.0]},"scalars":{"s":1.0}})";
  auto expect_error = [&](const std::string& second, const std::string& needle) {
    std::istringstream in(good + "\n" + second + "\n");
    try {
      load_ndjson(in);
      ADD_FAILURE() << "no error for " << second;
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
      EXPECT_NE(msg.find(needle), std::string::npos) << msg;
    }
  };
  expect_error(R"({"time":"2015-03-05","station":0,"lead":6,"ens":{"a":[1.0,2.0]},"scalars":{"s":1.0}})", "obs");
  expect_error(R"({"time":"2015-03-05","station":0,"lead":6,"obs":1.0,"ens":{"a":[1.0,2.0,3.0]},"scalars":{"s":1.0}})",
               "ens");
  expect_error(R"({"time":"2015-03-05","station":0,"lead":6,"obs":"x","ens":{"a":[1.0,2.0]},"scalars":{"s":1.0}})",
               "obs");
  expect_error(R"({"time":"2015-03-05","station":-1,"lead":6,"obs":1.0,"ens":{"a":[1.0,2.0]},"scalars":{"s":1.0}})",
               "station");
  expect_error(R"({"time":"2015-03-05","station":0,"lead":6,"obs":1.0,"ens":{"b":[1.0,2.0]},"scalars":{"s":1.0}})",
               "ens");
  expect_error(R"({"time":"2015-03-05","station":0,"lead":6,"obs":1.0,"ens":{"a":[1.0,2.0]},"scalars":{"s":1.0},"x":1})",
               "x");
}

TEST(Ndjson, RejectsNonFinite) {
  std::istringstream in(
      R"({"time":"2015-03-04","station":0,"lead":6,"obs":1e999,"ens":{"a":[1.0,2.0]},"scalars":{"s":1.0}})"
      "\n");
  EXPECT_THROW(load_ndjson(in), ConfigError);
}

TEST(Ndjson, SortsByTimeThenStation) {
  std::istringstream in(
      R"({"time":"2015-03-05","station":0,"lead":6,"obs":1.0,"ens":{"a":[1.0,2.0]},"scalars":{"s":1.0}})"
      "\n"
      R"({"time":"2015-03-04","station":1,"lead":6,"obs":2.0,"ens":{"a":[1.0,2.0]},"scalars":{"s":1.0}})"
      "\n"
      R"({"time":"2015-03-04","station":0,"lead":6,"obs":3.0,"ens":{"a":[1.0,2.0]},"scalars":{"s":1.0}})"
      "\n");
  const Dataset d = load_ndjson(in);
  EXPECT_DOUBLE_EQ(d.samples[0].obs, 3.0);
  EXPECT_DOUBLE_EQ(d.samples[1].obs, 2.0);
  EXPECT_DOUBLE_EQ(d.samples[2].obs, 1.0);
}

TEST(Standardize, RefitIsIdempotent) {
  const auto [z, st] = standardize(small_synth());
  const NormalizationStats again = fit_normalization(z);
  for (std::size_t i = 0; i < again.predictor_mean.size(); ++i) {
    EXPECT_NEAR(again.predictor_mean[i], 0.0, 1e-12);
    EXPECT_NEAR(again.predictor_std[i], 1.0, 1e-12);
  }
  for (std::size_t i = 0; i < again.scalar_mean.size(); ++i) {
    EXPECT_NEAR(again.scalar_mean[i], 0.0, 1e-12);
    EXPECT_NEAR(again.scalar_std[i], 1.0, 1e-12);
  }
}

TEST(Standardize, ConstantColumnNamesPredictor) {
  Dataset d = small_synth();
  for (auto& s : d.samples) s.ens.col(3).setConstant(2.0);
  try {
    standardize(d);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("aux_skew"), std::string::npos);
  }
}

TEST(Standardize, TrainStatsDoNotZeroTestMeans) {
  const Dataset d = small_synth(3, 200);
  const Splits sp = split_temporal(d, {0.5, 0.25, 0.25});
  const auto [ztrain, st] = standardize(sp.train);
  const auto [ztest, st2] = standardize(sp.test, st);
  EXPECT_EQ(st2.predictor_mean, st.predictor_mean);
  const NormalizationStats test_fit = fit_normalization(ztest);
  double max_abs = 0.0;
  for (double m : test_fit.scalar_mean) max_abs = std::max(max_abs, std::abs(m));
  EXPECT_GT(max_abs, 1e-3);
}

TEST(Standardize, MismatchedStatsRejected) {
  NormalizationStats st;
  st.predictor_mean = {0.0};
  st.predictor_std = {1.0};
  EXPECT_THROW(standardize(small_synth(), st), ConfigError);
}

TEST(Split, Examples) {
  const Dataset d = small_synth(2, 10);
  EXPECT_THROW(split_temporal(d, {1.0, 0.0, 0.0}), DomainError);
  const Splits sp = split_temporal(d, {0.6, 0.2, 0.2});
  EXPECT_EQ(sp.train.size(), 12u);
  EXPECT_EQ(sp.val.size(), 4u);
  EXPECT_EQ(sp.test.size(), 4u);
  int max_train = -1 << 30, min_val = 1 << 30, max_val = -1 << 30, min_test = 1 << 30;
  for (const auto& s : sp.train.samples) max_train = std::max(max_train, s.day);
  for (const auto& s : sp.val.samples) {
    min_val = std::min(min_val, s.day);
    max_val = std::max(max_val, s.day);
  }
  for (const auto& s : sp.test.samples) min_test = std::min(min_test, s.day);
  EXPECT_LT(max_train, min_val);
  EXPECT_LT(max_val, min_test);
}

TEST(Split, PartitionsExactly) {
  const Dataset d = small_synth(4, 97);
  const Splits sp = split_temporal(d, {0.68, 0.16, 0.16});
  Dataset joined = sp.train;
  joined.samples.insert(joined.samples.end(), sp.val.samples.begin(), sp.val.samples.end());
  joined.samples.insert(joined.samples.end(), sp.test.samples.begin(), sp.test.samples.end());
  EXPECT_TRUE(bitwise_equal(joined, d));
}

TEST(Synthetic, SameSeedIsBitwiseIdentical) {
  EXPECT_TRUE(bitwise_equal(small_synth(), small_synth()));
  EXPECT_FALSE(bitwise_equal(small_synth(3, 40, 6, 1), small_synth(3, 40, 6, 2)));
}

TEST(Synthetic, ShapeAndMetadata) {
  const Dataset d = small_synth(5, 12, 9);
  EXPECT_EQ(d.size(), 60u);
  EXPECT_EQ(d.members(), 9);
  EXPECT_EQ(d.predictors(), 5u);
  EXPECT_EQ(d.scalars(), 4u);
  EXPECT_NO_THROW(validate(d));
  for (const auto& s : d.samples) EXPECT_GE(s.obs, 0.0);
}

TEST(Synthetic, UnknownConfigFieldNamed) {
  Json j = {{"stations", 3}, {"dayz", 5}};
  try {
    j.get<SynthConfig>();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("dayz"), std::string::npos);
  }
}

TEST(Synthetic, SkewChannelCarriesSignalOnlyThroughSkewness) {
  const Dataset d = small_synth(10, 1000, 20, 3);
  std::vector<double> mean, skew, y;
  for (const auto& s : d.samples) {
    const auto col = s.ens.col(3);
    const double m = col.mean();
    double m2 = 0, m3 = 0;
    for (Index i = 0; i < col.size(); ++i) {
      m2 += std::pow(col(i) - m, 2);
      m3 += std::pow(col(i) - m, 3);
    }
    m2 /= static_cast<double>(col.size());
    m3 /= static_cast<double>(col.size());
    mean.push_back(m);
    skew.push_back(m3 / std::pow(m2, 1.5));
    y.push_back(s.obs);
  }
  EXPECT_LT(std::abs(pearson(mean, y)), 0.05);
  EXPECT_GT(pearson(skew, y), 0.3);
}

TEST(Synthetic, SpreadChannelCarriesRegimeOnlyThroughSpread) {
  // The hidden regime also scales the primary members, so the two spreads
  // must agree while the spread channel's mean tells nothing about y.
  const Dataset d = small_synth(10, 1000, 20, 4);
  std::vector<double> mean, sd, primary_sd, y;
  auto col_sd = [](const auto& col) {
    const double m = col.mean();
    return std::sqrt((col.array() - m).square().sum() / static_cast<double>(col.size() - 1));
  };
  for (const auto& s : d.samples) {
    mean.push_back(s.ens.col(2).mean());
    sd.push_back(std::log(col_sd(s.ens.col(2))));
    primary_sd.push_back(std::log(col_sd(s.ens.col(0))));
    y.push_back(s.obs);
  }
  EXPECT_LT(std::abs(pearson(mean, y)), 0.05);
  EXPECT_GT(pearson(sd, primary_sd), 0.5);
}
