#ifndef CADV_SCHEMA_HPP
#define CADV_SCHEMA_HPP

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cadv/common.hpp"

namespace cadv {

enum class FeatureKind { Continuous, Integer, Binary };

std::string_view to_string(FeatureKind kind);
std::optional<FeatureKind> parse_feature_kind(std::string_view text);

struct FeatureSpec {
    std::string name;
    FeatureKind kind{FeatureKind::Continuous};
    double min{0.0};
    double max{1.0};
    bool is_mutable{true};

    [[nodiscard]] bool degenerate() const { return min == max; }
    [[nodiscard]] bool discrete() const { return kind != FeatureKind::Continuous; }
};

/// A point of the attack space: one coordinate per feature, in [0,1].
using Sample = Vector;

enum class NormOrder { L1, L2, Linf };

std::string_view to_string(NormOrder p);
/// Accepts "1", "2", "inf" (also "l1", "l2", "linf").
NormOrder parse_norm(std::string_view text);

/// Ordered feature descriptors.  Index order is the canonical vector order.
///
/// The schema doubles as the scaler between original units and the [0,1]
/// attack space: s = (v - min) / (max - min), v = min + s * (max - min).
/// Degenerate features (min == max) map to 0 and are never mutable.
/// Decoded integer and binary values within 1e-9 of an integer are returned
/// as that integer, so every grid point decodes exactly.
class FeatureSchema {
public:
    FeatureSchema() = default;
    /// Validates invariants; throws SchemaError.
    explicit FeatureSchema(std::vector<FeatureSpec> features);

    [[nodiscard]] std::size_t size() const { return features_.size(); }
    [[nodiscard]] const FeatureSpec& operator[](std::size_t i) const { return features_[i]; }
    [[nodiscard]] const std::vector<FeatureSpec>& features() const { return features_; }
    [[nodiscard]] std::optional<std::size_t> index_of(std::string_view name) const;

    /// True for features the attacker may move (mutable and non-degenerate).
    [[nodiscard]] bool movable(std::size_t i) const;
    [[nodiscard]] std::vector<bool> mutable_mask() const;
    [[nodiscard]] std::size_t movable_count() const;

    [[nodiscard]] double to_scaled(std::size_t i, double v) const;
    [[nodiscard]] double to_original(std::size_t i, double s) const;
    [[nodiscard]] Sample to_scaled(std::span<const double> original) const;
    [[nodiscard]] Vector to_original(std::span<const double> scaled) const;

    /// Scaled value whose image under to_original is exactly v when such a
    /// double exists near the direct transform (searched a few ulps wide);
    /// otherwise the direct transform.
    [[nodiscard]] double encode_exact(std::size_t i, double v) const;

    /// Snaps an integer/binary coordinate to the nearest in-bounds grid point.
    /// Continuous coordinates are returned unchanged.
    [[nodiscard]] double snap(std::size_t i, double s) const;

    /// Stable textual form, one feature per line (the schema file format).
    [[nodiscard]] std::string to_text() const;
    [[nodiscard]] std::string hash() const;

private:
    std::vector<FeatureSpec> features_;
    std::unordered_map<std::string, std::size_t> index_;
};

FeatureSchema parse_schema(std::string_view text);
FeatureSchema load_schema(const std::filesystem::path& path);
void save_schema(const std::filesystem::path& path, const FeatureSchema& schema);

struct Dataset {
    std::vector<Sample> samples;
    std::vector<int> labels;

    [[nodiscard]] std::size_t size() const { return samples.size(); }
    [[nodiscard]] bool empty() const { return samples.empty(); }
    void push_back(Sample s, int label);
};

/// CSV, header = feature names (any order) plus `label`, values in original units.
Dataset parse_dataset(std::string_view text, const FeatureSchema& schema);
Dataset load_dataset(const std::filesystem::path& path, const FeatureSchema& schema);
void save_dataset(const std::filesystem::path& path, const FeatureSchema& schema, const Dataset& data);

/// Lp norm of x - x0.
double distance(std::span<const double> x, std::span<const double> x0, NormOrder p);

/// Projects x onto the eps-ball around x0 intersected with the unit box.
/// Immutable coordinates are restored to x0.  The result satisfies
/// distance(result, x0, p) <= eps and is a fixed point of the projection.
Sample project_ball(std::span<const double> x, std::span<const double> x0, double eps, NormOrder p,
                    const FeatureSchema& schema);

/// Clips every coordinate to [0, 1].
void clip_box(std::span<double> x);

} // namespace cadv

#endif
