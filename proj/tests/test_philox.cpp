#include <set>

#include <gtest/gtest.h>

#include "magtomo/philox.hpp"

using namespace magtomo;

// Known-answer vectors from the Random123 distribution (kat_vectors, philox4x32_10).
TEST(Philox, ZeroCounterZeroKey) {
    const auto r = Philox4x32::block({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(r, (Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, AllOnes) {
    const auto r = Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(r, (Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, PiDigits) {
    const auto r = Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(r, (Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Philox, CompileTimeEvaluable) {
    constexpr auto r = Philox4x32::block({0, 0, 0, 0}, {0, 0});
    static_assert(r[0] == 0x6627e8d5u);
    SUCCEED();
}

TEST(Philox, SeedSplitsIntoKeyHalves) {
    const auto k = Philox4x32::key_from_seed(0x0123456789abcdefull);
    EXPECT_EQ(k[0], 0x89abcdefu);
    EXPECT_EQ(k[1], 0x01234567u);
}

TEST(Philox, UnitDoubleRange) {
    EXPECT_EQ(unit_double(0, 0), 0.0);
    const double top = unit_double(0xffffffffu, 0xffffffffu);
    EXPECT_LT(top, 1.0);
    EXPECT_EQ(top, 1.0 - 0x1.0p-53);
}

TEST(Philox, DistinctCountersGiveDistinctBlocks) {
    std::set<std::uint32_t> seen;
    for (std::uint32_t i = 0; i < 4096; ++i) seen.insert(Philox4x32::block({i, 0, 0, 0}, {7, 0})[0]);
    EXPECT_GT(seen.size(), 4090u);
}
