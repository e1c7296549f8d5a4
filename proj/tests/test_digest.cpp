#include <doctest.h>

#include <set>
#include <thread>

#include "selfcorr/digest.hpp"

using namespace selfcorr;

TEST_CASE("sha256 matches a known vector") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("stable rng is a pure function of its key parts") {
    const auto k1 = StableRng::key(7, {"answer", "ex1", "response", "0", "0", "0"});
    const auto k2 = StableRng::key(7, {"answer", "ex1", "response", "0", "0", "0"});
    CHECK(k1 == k2);
    CHECK(StableRng::uniform01(k1) == StableRng::uniform01(k2));

    const auto k3 = StableRng::key(7, {"answer", "ex1", "response", "0", "1", "0"});
    CHECK(k1 != k3);
    CHECK(StableRng::key(8, {"answer"}) != StableRng::key(7, {"answer"}));
    // Length separation: ("ab","c") and ("a","bc") must not collide.
    CHECK(StableRng::key(1, {"ab", "c"}) != StableRng::key(1, {"a", "bc"}));
}

TEST_CASE("uniform01 lands in [0,1) and spreads") {
    std::set<double> seen;
    for (int i = 0; i < 1000; ++i) {
        const double u = StableRng::uniform01(StableRng::key(3, {"u", std::to_string(i)}));
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        seen.insert(u);
    }
    CHECK(seen.size() > 990);
}

TEST_CASE("uniform_below covers all residues") {
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 300; ++i) {
        seen.insert(StableRng::uniform_below(StableRng::key(5, {"b", std::to_string(i)}), 3));
    }
    CHECK(seen == std::set<std::uint64_t>{0, 1, 2});
}
