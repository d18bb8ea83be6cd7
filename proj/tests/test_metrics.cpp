#include <gtest/gtest.h>

#include "graphsym/metrics.hpp"

using namespace graphsym;

TEST(Mae, Examples) {
  EXPECT_EQ(mae({3.0, 4.0}, {3.0, 4.0}), 0.0);
  EXPECT_NEAR(mae({11.0}, {10.0}), 0.10, 1e-15);
  EXPECT_NEAR(mae({9.0, 12.0}, {10.0, 10.0}), 0.15, 1e-15);
}

TEST(Mae, ZeroGroundTruthNamesTheDesign) {
  try {
    mae({1.0, 1.0}, {1.0, 0.0}, {"add_a", "add_b"});
    FAIL() << "expected a domain error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Domain);
    EXPECT_NE(std::string(e.what()).find("add_b"), std::string::npos);
  }
}

TEST(Mae, RejectsBadShapes) {
  EXPECT_THROW(mae({1.0}, {1.0, 2.0}), Error);
  EXPECT_THROW(mae({}, {}), Error);
}

TEST(EvalSummary, AggregatesModelAndBaseline) {
  auto s = EvalSummary::from({{"a", 11.0, 10.0, 8.0, 5.0, 5.0, 4.0}, {"b", 9.0, 10.0, 10.0, 6.0, 5.0, 5.0}});
  EXPECT_NEAR(s.delay_mae, 0.10, 1e-15);
  EXPECT_NEAR(s.baseline_delay_mae, 0.10, 1e-15);
  EXPECT_NEAR(s.area_mae, 0.10, 1e-15);
  EXPECT_NEAR(s.baseline_area_mae, 0.10, 1e-15);
  auto j = s.to_json();
  EXPECT_EQ(j["num_designs"], 2);
  EXPECT_EQ(j["designs"][1]["id"], "b");
  EXPECT_EQ(j["designs"][0]["base_delay"], 8.0);
}
