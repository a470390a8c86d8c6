#include <doctest.h>

#include <cmath>

#include "sord/simkernel.hpp"

using namespace sord;

namespace {

SimConfig medium(double load, Variant variant, std::uint64_t seed) {
  SimConfig c;
  c.n = 200;
  c.target_load = load;
  c.job_duration_mean = 300.0;
  c.horizon = 50000;
  c.seed = seed;
  c.policy.variant = variant;
  return c;
}

}  // namespace

TEST_CASE("runs are a pure function of the config") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto c = medium(0.7, Variant::query_and_advert, seed);
    CHECK(run_experiment(c) == run_experiment(c));
  }
  CHECK_FALSE(run_experiment(medium(0.7, Variant::query_only, 1)) ==
              run_experiment(medium(0.7, Variant::query_only, 2)));
}

TEST_CASE("draining completes every started job") {
  for (double load : {0.2, 0.6, 0.9}) {
    for (auto v : {Variant::query_only, Variant::query_and_advert}) {
      auto c = medium(load, v, 5);
      c.horizon = 10000;
      const auto m = run_experiment(c);
      CHECK(m.jobs_started > 0);
      CHECK(m.jobs_started == m.jobs_completed);
      CHECK(m.busy_at_end == 0);
    }
  }
}

TEST_CASE("measured load tracks the target") {
  for (double load : {0.3, 0.6, 0.85}) {
    const auto m = run_experiment(medium(load, Variant::query_only, 11));
    CAPTURE(load);
    CHECK(std::abs(m.mean_load - load) <= 0.05);
  }
}

TEST_CASE("query-only traffic respects the fanout tree bound") {
  auto c = medium(0.6, Variant::query_only, 4);
  c.policy.qttl_init = 2;
  c.policy.fanout = 3;
  const auto m = run_experiment(c);
  // depth 1: 3 queries, depth 2: 9 queries; a reply from depth d takes d hops
  const double queries = 3.0 + 9.0;
  const double replies = 3.0 * 1 + 9.0 * 2;
  const double slack = 1.02 * static_cast<double>(m.requests) + 50.0;
  CHECK(m.messages_sent.advert == 0);
  CHECK(static_cast<double>(m.messages_sent.query) <= queries * slack);
  CHECK(static_cast<double>(m.messages_sent.reply) <= replies * slack);
}

TEST_CASE("success does not improve as the network fills up") {
  for (auto v : {Variant::query_only, Variant::query_and_advert}) {
    const auto light = run_experiment(medium(0.5, v, 8));
    const auto heavy = run_experiment(medium(0.95, v, 8));
    CHECK(light.success_rate() >= heavy.success_rate());
  }
}

TEST_CASE("every request lands in exactly one load bin") {
  const auto m = run_experiment(medium(0.7, Variant::query_and_advert, 9));
  std::uint64_t requests = 0, successes = 0;
  for (const auto& b : m.per_load_bin) {
    CHECK(b.successes <= b.requests);
    requests += b.requests;
    successes += b.successes;
  }
  CHECK(requests == m.requests);
  CHECK(successes == m.successes);
}
