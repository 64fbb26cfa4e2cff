#ifndef CADV_SYNTH_HPP
#define CADV_SYNTH_HPP

#include <cstdint>
#include <utility>

#include "cadv/dsl.hpp"
#include "cadv/schema.hpp"

namespace cadv {

/// Network-flow style benchmark: 12 features (two immutable), six
/// constraints (a linear equality, a ratio bound, a membership, a monotone
/// `orig` bound, a quadratic bound, a disjunction) and a label that depends
/// on an XOR of two mutable features.  Every generated row satisfies all
/// constraints exactly.
struct SyntheticBenchmark {
    FeatureSchema schema;
    ConstraintSet constraints;
    Dataset data;
};

FeatureSchema synthetic_schema();
ConstraintSet synthetic_constraints();
SyntheticBenchmark make_synthetic(std::size_t n_samples, std::uint64_t seed);

/// Shuffled split; the first part holds round((1 - test_fraction) * n) rows.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double test_fraction, std::uint64_t seed);

} // namespace cadv

#endif
