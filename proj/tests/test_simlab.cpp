#include "doctest.h"

#include <cmath>
#include <sstream>

#include "vsem/simlab.hpp"

using namespace vsem;

TEST_CASE("endpoint standard deviation") {
  CHECK(endpoint_sd({2, 2, 2}, {5, 5, 5}) == 0.0);
  CHECK(endpoint_sd({1, 3, 5}, {10, 12, 14}) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(endpoint_sd({1, 2, 3}, {1, 4, 7}) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
  CHECK_THROWS_AS(endpoint_sd({1, 2}, {1}), std::invalid_argument);
  CHECK_THROWS_AS(endpoint_sd({1}, {1}), std::invalid_argument);
}

TEST_CASE("interval summaries partition the replicates") {
  IntervalSummary s = summarize_intervals({0, 1, 2, -3}, {1, 2, 3, -1}, 1.5);
  CHECK(s.coverage == doctest::Approx(0.25));
  CHECK(s.miss_low == doctest::Approx(0.5));
  CHECK(s.miss_high == doctest::Approx(0.25));
  CHECK(s.coverage + s.miss_low + s.miss_high == doctest::Approx(1.0));
  CHECK(s.mean_width == doctest::Approx(1.25));
}

TEST_CASE("population targets") {
  ModelSpec a = parse_model(kSim1ModelA), b = parse_model(kSim1ModelB);
  PopulationTarget t0 = population_bic_difference(a, b, parse_model(sim1_generator(0.0)), 500);
  CHECK(std::abs(t0.population) < 1e-6);
  CHECK(std::abs(t0.expected) < 1e-4);
  PopulationTarget t3 = population_bic_difference(a, b, parse_model(sim1_generator(0.3)), 500);
  CHECK(t3.population < -10.0);
  // Model A is correct and k = q, so both effective parameter counts are 14.
  CHECK(t3.expected == doctest::Approx(t3.population).epsilon(0.05));
}

TEST_CASE("small study runs are reproducible across thread counts") {
  SimOptions o = sim3_defaults();
  o.n_levels = {200};
  o.d_levels = {0.0, 0.1};
  o.reps = 20;
  o.threads = 1;
  auto one = run_sim3(o);
  o.threads = 3;
  auto three = run_sim3(o);
  REQUIRE(one.size() == 2);
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].reps + one[i].dropped == 20);
    for (std::size_t j = 0; j < one[i].reject_rates.size(); ++j) {
      CHECK(one[i].reject_rates[j].second == three[i].reject_rates[j].second);
      CHECK(one[i].reject_rates[j].second >= 0.0);
      CHECK(one[i].reject_rates[j].second <= 1.0);
    }
    const auto& iv = one[i].interval("vuong");
    CHECK(iv.coverage + iv.miss_low + iv.miss_high == doctest::Approx(1.0));
    CHECK(iv.mean_width == three[i].interval("vuong").mean_width);
  }
  std::ostringstream table, power;
  write_table_tsv(table, one);
  write_power_tsv(power, one);
  CHECK(table.str().find("vuong_coverage") != std::string::npos);
  CHECK(power.str().find("classical") != std::string::npos);
}

TEST_CASE("bootstrap columns appear when requested") {
  SimOptions o = sim2_defaults();
  o.n_levels = {200};
  o.reps = 3;
  o.boot_reps = 100;
  o.threads = 1;
  auto rows = run_sim2(o);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].pair == "A-B");
  CHECK(rows[0].interval("bootstrap").count == rows[0].reps);
}
