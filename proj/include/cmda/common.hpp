#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmda {

// Deterministic RNG. All randomness in the project flows through this so
// that runs are reproducible independent of the standard library's
// distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next_u64() {
        // splitmix64
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // inclusive bounds
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    double gaussian(double mean = 0.0, double stddev = 1.0) {
        if (has_cached_) {
            has_cached_ = false;
            return mean + stddev * cached_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return mean + stddev * r * std::cos(a);
    }

    // Derive an independent stream from a tag. Used to keep e.g. the two
    // modality datasets on disjoint seed streams.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
        std::uint64_t z = seed * 0x9e3779b97f4a7c15ull + tag + 0x2545f4914f6cdd1dull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Thrown when an operation's shape or value contract is violated.
class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite arithmetic was expected. A ContractError,
// but distinguishable: the training loops treat it as divergence.
class NumericError : public ContractError {
public:
    explicit NumericError(const std::string& msg) : ContractError(msg) {}
};

// Thrown when training produced a non-finite loss and was aborted.
class TrainingDiverged : public std::runtime_error {
public:
    explicit TrainingDiverged(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a run opens a file its mode forbids (label audit).
class AuditViolation : public std::runtime_error {
public:
    explicit AuditViolation(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void msg_append(std::ostringstream&) {}
template <typename T, typename... Rest>
void msg_append(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    msg_append(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string strmsg(const Args&... args) {
    std::ostringstream os;
    detail::msg_append(os, args...);
    return os.str();
}

template <typename... Args>
[[noreturn]] void contract_fail(const Args&... args) {
    throw ContractError(strmsg(args...));
}

// Minimal CSV writer; one header row then data rows, flushed per row so
// partial curves survive an abort.
class CsvWriter {
public:
    CsvWriter() = default;
    CsvWriter(const std::string& path, const std::vector<std::string>& columns);
    void row(const std::vector<double>& values);
    bool is_open() const { return out_.is_open(); }

private:
    std::ofstream out_;
    std::size_t ncols_ = 0;
};

// SHA-256 of a byte buffer / file, hex encoded. Used for the run
// provenance records (input content hashes).
std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_file_hex(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace cmda
