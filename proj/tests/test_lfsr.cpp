#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>

#include "qkd/lfsr.hpp"

using namespace qkd;

namespace {

// Brute-force the state cycle length from a given start.
uint64_t cycle_length(Lfsr reg) {
  const uint64_t start = reg.state();
  uint64_t steps = 0;
  do {
    reg.next_bit();
    ++steps;
  } while (reg.state() != start && steps < (1u << 20));
  return steps;
}

}  // namespace

TEST_CASE("maximal 4-bit register cycles through all 15 nonzero states") {
  CHECK(cycle_length(Lfsr(4, {4, 3}, 0b1000)) == 15);
  // every nonzero state lies on the same cycle
  std::set<uint64_t> visited;
  Lfsr reg(4, {4, 3}, 1);
  for (int i = 0; i < 15; ++i) {
    visited.insert(reg.state());
    reg.next_bit();
  }
  CHECK(visited.size() == 15);
}

TEST_CASE("maximal 8-bit register has period 255") {
  CHECK(cycle_length(Lfsr(8, {8, 6, 5, 4}, 0xA5)) == 255);
}

TEST_CASE("zero state is rejected") {
  CHECK_THROWS_AS(Lfsr(4, {4, 3}, 0), std::invalid_argument);
  CHECK_THROWS_AS(Lfsr(4, {4, 3}, 0b10000), std::invalid_argument);  // masked to 0
  CHECK_THROWS_AS(Lfsr(4, {}, 1), std::invalid_argument);
  CHECK_THROWS_AS(Lfsr(4, {5}, 1), std::invalid_argument);
}

TEST_CASE("same seed gives the same bit sequence") {
  auto a = lfsr_bit_source(Lfsr::default32(0xACE1));
  auto b = lfsr_bit_source(Lfsr::default32(0xACE1));
  for (int i = 0; i < 10000; ++i) REQUIRE(a() == b());
}

TEST_CASE("default 32-bit register never reaches the zero state") {
  Lfsr reg = Lfsr::default32(1);
  for (int i = 0; i < 100000; ++i) {
    reg.next_bit();
    REQUIRE(reg.state() != 0);
  }
}

TEST_CASE("bit output is balanced over a long run") {
  Lfsr reg = Lfsr::default32(0xDEADBEEF);
  int ones = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ones += reg.next_bit();
  CHECK(std::abs(ones - n / 2) < 4 * std::sqrt(n / 4.0));
}
