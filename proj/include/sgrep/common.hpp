// Shared error types, seeded RNG derivation and small string helpers.
#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sgrep {

inline constexpr const char* kVersion = "0.1.0";

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define SGREP_ERROR_TYPE(Name)                    \
    struct Name : Error {                         \
        using Error::Error;                       \
    };

SGREP_ERROR_TYPE(ShapeMismatch)
SGREP_ERROR_TYPE(AxisOutOfRange)
SGREP_ERROR_TYPE(AllPadded)
SGREP_ERROR_TYPE(NonScalarLoss)
SGREP_ERROR_TYPE(InvalidConfig)
SGREP_ERROR_TYPE(IdOutOfRange)
SGREP_ERROR_TYPE(LengthExceedsMaxLen)
SGREP_ERROR_TYPE(InvalidTemperature)
SGREP_ERROR_TYPE(EmptyCorpus)
SGREP_ERROR_TYPE(UnknownLanguage)
SGREP_ERROR_TYPE(ManifestError)
SGREP_ERROR_TYPE(BudgetExhausted)
SGREP_ERROR_TYPE(MissingLexicon)
SGREP_ERROR_TYPE(InvalidPercentage)
SGREP_ERROR_TYPE(EmptyTrainSet)
SGREP_ERROR_TYPE(EmptySample)
SGREP_ERROR_TYPE(EmptyBuffer)
SGREP_ERROR_TYPE(LengthMismatch)
SGREP_ERROR_TYPE(EmptyInput)
SGREP_ERROR_TYPE(KTooLarge)
SGREP_ERROR_TYPE(TooFewSentences)
SGREP_ERROR_TYPE(IoError)

#undef SGREP_ERROR_TYPE

// ---------------------------------------------------------------------------
// Deterministic RNG derivation.
//
// All randomness in the library is derived from a global seed plus a set of
// integer tags (experience index, step, sample index, ...) via splitmix64
// mixing. Derivations are stateless: the same (seed, tags) always yields the
// same engine, which is what makes experience-boundary resume and the
// "identical trajectories" invariants exact.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t seed) { return splitmix64(seed); }

template <typename... Rest>
uint64_t mix_seed(uint64_t seed, uint64_t tag, Rest... rest) {
    return mix_seed(splitmix64(seed ^ splitmix64(tag)), rest...);
}

// Tags may also be short strings (role names like "dropout", "shuffle").
inline uint64_t tag_of(std::string_view s) {
    uint64_t h = 1469598103934665603ULL;  // FNV-1a 64
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::mt19937_64 make_engine(uint64_t derived_seed) {
    return std::mt19937_64(derived_seed);
}

// Fisher-Yates with explicit draws so the permutation is identical across
// standard libraries for a given seed.
template <typename Vec>
void seeded_shuffle(Vec& v, uint64_t seed) {
    auto eng = make_engine(seed);
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(eng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

// ---------------------------------------------------------------------------
// String helpers (whitespace tokenization is the desk-scale tokenizer).

inline std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        size_t j = i;
        while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
        if (j > i) out.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

inline std::string join_ws(const std::vector<std::string>& toks) {
    std::string out;
    for (size_t i = 0; i < toks.size(); ++i) {
        if (i) out += ' ';
        out += toks[i];
    }
    return out;
}

// Trim + collapse internal whitespace runs to single spaces.
inline std::string normalize_ws(std::string_view s) {
    return join_ws(split_ws(s));
}

inline uint64_t fnv1a64(std::string_view s) { return tag_of(s); }

inline std::string to_hex(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

}  // namespace sgrep
