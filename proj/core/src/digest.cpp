#include "selfcorr/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <stdexcept>

namespace selfcorr {

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int md_len = 0;
    if (EVP_Digest(data.data(), data.size(), md.data(), &md_len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256: EVP_Digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(md_len * 2);
    for (unsigned int i = 0; i < md_len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t StableRng::key(std::uint64_t seed, std::initializer_list<std::string_view> parts) {
    std::uint64_t h = splitmix64(seed ^ 0x5eedf00dULL);
    for (auto part : parts) {
        // A length separator keeps ("ab","c") distinct from ("a","bc").
        h = fnv1a64(part, h);
        h = splitmix64(h ^ part.size());
    }
    return h;
}

double StableRng::uniform01(std::uint64_t key) {
    return static_cast<double>(splitmix64(key) >> 11) * 0x1.0p-53;
}

std::uint64_t StableRng::uniform_below(std::uint64_t key, std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_below: n must be > 0");
    // Rejection sampling keeps the draw exactly uniform and platform-stable.
    const std::uint64_t limit = (UINT64_MAX / n) * n;
    std::uint64_t x = splitmix64(key);
    while (x >= limit) {
        key = splitmix64(key + 1);
        x = splitmix64(key);
    }
    return x % n;
}

}  // namespace selfcorr
