#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace in2 {

// Error taxonomy, mapped to CLI exit codes (validation 1, I/O 2, training abort 3).
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : ValidationError {
    using ValidationError::ValidationError;
};

struct TrainAbortError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when an inference adapter is asked to drive a model outside its
// supported input shapes (e.g. `direct` on a square-only model).
struct CapabilityError : ValidationError {
    using ValidationError::ValidationError;
};

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

// FNV-1a, used for config fingerprints in checkpoint headers.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace in2
