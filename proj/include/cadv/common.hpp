#ifndef CADV_COMMON_HPP
#define CADV_COMMON_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cadv {

using Vector = std::vector<double>;

/// Base class for every error the toolkit raises.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class ModelError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Deterministic random stream.
///
/// Uniform variates are derived from raw 64-bit draws rather than the
/// standard distributions so that streams are identical across standard
/// library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n). n must be positive.
    std::size_t below(std::size_t n);
    /// Standard normal (Box-Muller, no caching).
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v)
    {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::uint64_t state_[4];
};

/// splitmix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Runs fn(i) for i in [0, n) on up to `threads` workers.  fn must only write
/// to per-index state.  threads == 0 means hardware concurrency.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// 64-bit FNV-1a of a byte string.
std::uint64_t fnv1a(std::string_view bytes);

std::string hex64(std::uint64_t v);

} // namespace cadv

#endif
