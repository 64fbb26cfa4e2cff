#include "cadv/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cadv {

namespace {

constexpr const char* schema_text = R"(# name kind min max mutability
duration continuous 0 16 mutable
bytes_in continuous 0 64 mutable
bytes_out continuous 0 32 mutable
bytes_total continuous 0 128 mutable
packets integer 1 65 mutable
port_class integer 0 16 mutable
connections integer 0 64 mutable
flag_a binary 0 1 mutable
account_age continuous 0 32 immutable
region integer 0 8 immutable
rate continuous 0 1 mutable
score continuous 0 1 mutable
)";

constexpr const char* constraints_text = R"(total: bytes_total = bytes_in + bytes_out
ratio: bytes_out / packets <= 4
port: port_class in {1, 2, 4, 8, 16}
monotone: orig(connections) <= connections
burst: duration ^ 2 <= 4 * connections + 64
flag: flag_a = 1 or score <= 0.75
)";

// Rounds down to a multiple of 1/256 so sums stay exact.
double grid(double v) { return std::floor(v * 256.0) / 256.0; }

// Distance of rate/score from the midpoint: a borderline group and a main
// profile.  `high` picks the usual side.
double cluster(Rng& rng, bool high)
{
    const bool up = rng.uniform() < 0.85 ? high : !high;
    const double offset = 0.13 + 0.08 * rng.normal();
    return 0.5 + (up ? offset : -offset);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

} // namespace

FeatureSchema synthetic_schema() { return parse_schema(schema_text); }

ConstraintSet synthetic_constraints() { return parse_constraint_set(constraints_text); }

SyntheticBenchmark make_synthetic(std::size_t n_samples, std::uint64_t seed)
{
    SyntheticBenchmark b{synthetic_schema(), synthetic_constraints(), {}};
    Rng rng(seed);
    const double ports[] = {1, 2, 4, 8, 16};
    for (std::size_t n = 0; n < n_samples; ++n) {
        const double account_age = grid(std::clamp(16.0 + 6.0 * rng.normal(), 0.0, 32.0));
        const auto region = static_cast<double>(rng.below(9));
        const double rate = grid(std::clamp(cluster(rng, region < 4.0), 0.0, 1.0));
        double score = grid(std::clamp(cluster(rng, account_age >= 16.0), 0.0, 1.0));
        const double flag_a = rng.uniform() < 0.4 ? 1.0 : 0.0;
        if (flag_a == 0.0) {
            score = std::min(score, 0.75);
        }
        const double connections = std::clamp(std::round(20.0 + 8.0 * rng.normal()), 0.0, 64.0);
        double duration = grid(rng.uniform(0.0, std::min(16.0, std::sqrt(4.0 * connections + 64.0))));
        while (duration * duration > 4.0 * connections + 64.0) {
            duration -= 1.0 / 256.0;
        }
        const double packets = std::clamp(std::round(24.0 + 8.0 * rng.normal()), 1.0, 65.0);
        const double bytes_out = grid(rng.uniform(0.0, std::min(32.0, 4.0 * packets)));
        const double bytes_in = grid(std::clamp(24.0 + 8.0 * rng.normal(), 0.0, 64.0));
        const double bytes_total = bytes_in + bytes_out;
        const double port_class = ports[rng.below(5)];

        // Soft XOR of rate and score around the midpoint.
        const double x = std::tanh((rate - 0.5) / 0.06) * std::tanh((0.5 - score) / 0.06);
        const double z = 5.0 * x + 0.9 * (connections - 20.0) / 8.0 + 0.6 * (account_age - 16.0) / 6.0
                         + 0.5 * (port_class >= 8 ? 1.0 : -1.0) + 0.4 * (bytes_out / (bytes_total + 1.0) - 0.3) * 4.0
                         + 0.3 * (duration - 6.0) / 4.0;
        const int label = rng.uniform() < sigmoid(z) ? 1 : 0;

        const Vector original{duration, bytes_in,    bytes_out, bytes_total, packets, port_class,
                              connections, flag_a, account_age, region,      rate,    score};
        Sample s(original.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = b.schema.encode_exact(i, original[i]);
        }
        b.data.push_back(std::move(s), label);
    }
    return b;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double test_fraction, std::uint64_t seed)
{
    if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) {
        throw ConfigError("test fraction must lie in [0, 1]");
    }
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    const auto n_first =
        static_cast<std::size_t>(std::llround((1.0 - test_fraction) * static_cast<double>(data.size())));
    std::pair<Dataset, Dataset> out;
    for (std::size_t k = 0; k < order.size(); ++k) {
        auto& dst = k < n_first ? out.first : out.second;
        dst.push_back(data.samples[order[k]], data.labels[order[k]]);
    }
    return out;
}

} // namespace cadv
