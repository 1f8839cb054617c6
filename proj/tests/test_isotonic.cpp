#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "regaudit/isotonic.hpp"
#include "test_util.hpp"

using namespace regaudit;
using testutil::brute_force_isotonic;

TEST_CASE("non-decreasing input with inactive anchor is unchanged") {
    const std::vector<double> v = {1.0, 1.5, 2.0, 7.25};
    CHECK(isotonic_project(v, 0.5) == v);
}

TEST_CASE("pooled violators take the block mean") {
    const std::vector<double> expected = {2.0, 2.0, 2.0};
    CHECK(isotonic_project({3.0, 1.0, 2.0}, 0.0) == expected);
}

TEST_CASE("anchor floor lifts the whole fit") {
    const std::vector<double> expected = {5.0, 5.0, 5.0};
    CHECK(isotonic_project({1.0, 2.0, 3.0}, 5.0) == expected);
}

TEST_CASE("classic PAVA sequences") {
    CHECK(isotonic_fit({4.0, 3.0, 2.0, 1.0}) == std::vector<double>{2.5, 2.5, 2.5, 2.5});
    CHECK(isotonic_fit({1.0, 3.0, 2.0, 4.0}) == std::vector<double>{1.0, 2.5, 2.5, 4.0});
    CHECK(isotonic_fit({}).empty());
    CHECK(isotonic_fit({7.0}) == std::vector<double>{7.0});
}

TEST_CASE("matches exhaustive constrained least squares on short sequences") {
    // Full exhaustive sweep (length <= 5, values in {0..3}) runs in the
    // acceptance suite; spot-check a representative slice here.
    for (double anchor : {0.0, 1.0, 2.5}) {
        for (int n = 1; n <= 4; ++n) {
            const int combos = 1 << (2 * n);
            for (int code = 0; code < combos; ++code) {
                std::vector<double> y(static_cast<std::size_t>(n));
                int c = code;
                for (int i = 0; i < n; ++i) {
                    y[static_cast<std::size_t>(i)] = static_cast<double>(c & 3);
                    c >>= 2;
                }
                const auto got = isotonic_project(y, anchor);
                const auto want = brute_force_isotonic(y, anchor);
                REQUIRE(got.size() == want.size());
                for (std::size_t i = 0; i < got.size(); ++i)
                    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
            }
        }
    }
}
