#include "cadv/schema.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "text_util.hpp"

namespace cadv {

std::string_view to_string(FeatureKind kind)
{
    switch (kind) {
    case FeatureKind::Continuous: return "continuous";
    case FeatureKind::Integer: return "integer";
    case FeatureKind::Binary: return "binary";
    }
    return "?";
}

std::optional<FeatureKind> parse_feature_kind(std::string_view text)
{
    if (text == "continuous") return FeatureKind::Continuous;
    if (text == "integer") return FeatureKind::Integer;
    if (text == "binary") return FeatureKind::Binary;
    return std::nullopt;
}

std::string_view to_string(NormOrder p)
{
    switch (p) {
    case NormOrder::L1: return "1";
    case NormOrder::L2: return "2";
    case NormOrder::Linf: return "inf";
    }
    return "?";
}

NormOrder parse_norm(std::string_view text)
{
    if (text == "1" || text == "l1" || text == "L1") return NormOrder::L1;
    if (text == "2" || text == "l2" || text == "L2") return NormOrder::L2;
    if (text == "inf" || text == "linf" || text == "Linf") return NormOrder::Linf;
    throw ConfigError("unknown norm order '" + std::string(text) + "' (expected 1, 2 or inf)");
}

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> features) : features_(std::move(features))
{
    for (std::size_t i = 0; i < features_.size(); ++i) {
        const auto& f = features_[i];
        if (!detail::is_identifier(f.name)) {
            throw SchemaError("invalid feature name '" + f.name + "'");
        }
        if (detail::is_reserved_word(f.name)) {
            throw SchemaError("feature name '" + f.name + "' is reserved");
        }
        if (!std::isfinite(f.min) || !std::isfinite(f.max)) {
            throw SchemaError("feature " + f.name + ": bounds must be finite");
        }
        if (f.min > f.max) {
            throw SchemaError("feature " + f.name + ": min > max");
        }
        if (f.kind == FeatureKind::Binary && !(f.min == 0.0 && f.max == 1.0)) {
            throw SchemaError("feature " + f.name + ": binary features must have bounds [0, 1]");
        }
        if (f.kind == FeatureKind::Integer && (std::floor(f.min) != f.min || std::floor(f.max) != f.max)) {
            throw SchemaError("feature " + f.name + ": integer features need integral bounds");
        }
        if (!index_.emplace(f.name, i).second) {
            throw SchemaError("duplicate feature " + f.name);
        }
    }
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view name) const
{
    auto it = index_.find(std::string(name));
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

bool FeatureSchema::movable(std::size_t i) const
{
    return features_[i].is_mutable && !features_[i].degenerate();
}

std::vector<bool> FeatureSchema::mutable_mask() const
{
    std::vector<bool> mask(size());
    for (std::size_t i = 0; i < size(); ++i) {
        mask[i] = movable(i);
    }
    return mask;
}

std::size_t FeatureSchema::movable_count() const
{
    std::size_t n = 0;
    for (std::size_t i = 0; i < size(); ++i) {
        n += movable(i) ? 1 : 0;
    }
    return n;
}

double FeatureSchema::to_scaled(std::size_t i, double v) const
{
    const auto& f = features_[i];
    if (f.degenerate()) {
        return 0.0;
    }
    return (v - f.min) / (f.max - f.min);
}

double FeatureSchema::to_original(std::size_t i, double s) const
{
    const auto& f = features_[i];
    const double v = f.min + s * (f.max - f.min);
    if (f.discrete()) {
        // Grid points of ranges that are not powers of two may have no exact
        // scaled encoding; clean up the last-bit noise.
        const double r = std::round(v);
        if (std::abs(v - r) <= 1e-9 * std::max(1.0, std::abs(r))) {
            return r;
        }
    }
    return v;
}

Sample FeatureSchema::to_scaled(std::span<const double> original) const
{
    if (original.size() != size()) {
        throw DataError("vector length " + std::to_string(original.size()) + " does not match schema size "
                        + std::to_string(size()));
    }
    Sample s(size());
    for (std::size_t i = 0; i < size(); ++i) {
        s[i] = to_scaled(i, original[i]);
    }
    return s;
}

Vector FeatureSchema::to_original(std::span<const double> scaled) const
{
    if (scaled.size() != size()) {
        throw DataError("vector length " + std::to_string(scaled.size()) + " does not match schema size "
                        + std::to_string(size()));
    }
    Vector v(size());
    for (std::size_t i = 0; i < size(); ++i) {
        v[i] = to_original(i, scaled[i]);
    }
    return v;
}

double FeatureSchema::encode_exact(std::size_t i, double v) const
{
    const double s = to_scaled(i, v);
    if (features_[i].degenerate() || to_original(i, s) == v) {
        return s;
    }
    double up = s;
    double down = s;
    for (int k = 0; k < 8; ++k) {
        up = std::nextafter(up, 2.0);
        if (to_original(i, up) == v) {
            return up;
        }
        down = std::nextafter(down, -1.0);
        if (to_original(i, down) == v) {
            return down;
        }
    }
    return s;
}

double FeatureSchema::snap(std::size_t i, double s) const
{
    const auto& f = features_[i];
    if (!f.discrete() || f.degenerate()) {
        return s;
    }
    const double v = std::clamp(std::round(to_original(i, s)), f.min, f.max);
    return encode_exact(i, v);
}

std::string FeatureSchema::to_text() const
{
    std::string out;
    for (const auto& f : features_) {
        out += f.name;
        out += ' ';
        out += to_string(f.kind);
        out += ' ';
        out += detail::format_double(f.min);
        out += ' ';
        out += detail::format_double(f.max);
        out += f.is_mutable ? " mutable\n" : " immutable\n";
    }
    return out;
}

std::string FeatureSchema::hash() const { return hex64(fnv1a(to_text())); }

FeatureSchema parse_schema(std::string_view text)
{
    std::vector<FeatureSpec> features;
    std::unordered_map<std::string, std::size_t> seen;
    std::size_t line_no = 0;
    for (auto raw : detail::split_lines(text)) {
        ++line_no;
        auto line = detail::trim(detail::strip_comment(raw));
        if (line.empty()) {
            continue;
        }
        auto fail = [&](const std::string& msg) -> SchemaError {
            return SchemaError("schema line " + std::to_string(line_no) + ": " + msg);
        };
        auto tokens = detail::split_ws(line);
        if (tokens.size() != 5) {
            throw fail("expected 'name kind min max mutable|immutable'");
        }
        FeatureSpec f;
        f.name = std::string(tokens[0]);
        auto kind = parse_feature_kind(tokens[1]);
        if (!kind) {
            throw fail("unknown kind '" + std::string(tokens[1]) + "'");
        }
        f.kind = *kind;
        auto lo = detail::parse_double(tokens[2]);
        auto hi = detail::parse_double(tokens[3]);
        if (!lo || !hi) {
            throw fail("bounds must be numeric");
        }
        f.min = *lo;
        f.max = *hi;
        if (tokens[4] == "mutable") {
            f.is_mutable = true;
        } else if (tokens[4] == "immutable") {
            f.is_mutable = false;
        } else {
            throw fail("expected mutable or immutable, got '" + std::string(tokens[4]) + "'");
        }
        if (!seen.emplace(f.name, line_no).second) {
            throw fail("duplicate feature " + f.name);
        }
        try {
            FeatureSchema probe({f});
        } catch (const SchemaError& e) {
            throw fail(e.what());
        }
        features.push_back(std::move(f));
    }
    return FeatureSchema(std::move(features));
}

FeatureSchema load_schema(const std::filesystem::path& path)
{
    return parse_schema(detail::read_file(path));
}

void save_schema(const std::filesystem::path& path, const FeatureSchema& schema)
{
    detail::write_file(path, schema.to_text());
}

void Dataset::push_back(Sample s, int label)
{
    samples.push_back(std::move(s));
    labels.push_back(label);
}

Dataset parse_dataset(std::string_view text, const FeatureSchema& schema)
{
    auto lines = detail::split_lines(text);
    std::size_t first = 0;
    while (first < lines.size() && detail::trim(lines[first]).empty()) {
        ++first;
    }
    if (first == lines.size()) {
        throw DataError("dataset: missing header row");
    }
    auto header = detail::split_csv(detail::trim(lines[first]));
    std::vector<std::size_t> column_of(schema.size(), header.size());
    std::size_t label_col = header.size();
    for (std::size_t c = 0; c < header.size(); ++c) {
        auto name = detail::trim(header[c]);
        if (name == "label") {
            label_col = c;
        } else if (auto idx = schema.index_of(name)) {
            column_of[*idx] = c;
        }
    }
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (column_of[i] == header.size()) {
            throw DataError("dataset: missing column " + schema[i].name);
        }
    }
    if (label_col == header.size()) {
        throw DataError("dataset: missing column label");
    }

    Dataset data;
    for (std::size_t li = first + 1; li < lines.size(); ++li) {
        auto line = detail::trim(lines[li]);
        if (line.empty()) {
            continue;
        }
        const std::string where = "dataset line " + std::to_string(li + 1);
        auto cells = detail::split_csv(line);
        if (cells.size() != header.size()) {
            throw DataError(where + ": expected " + std::to_string(header.size()) + " cells, got "
                            + std::to_string(cells.size()));
        }
        Sample s(schema.size());
        for (std::size_t i = 0; i < schema.size(); ++i) {
            const auto& f = schema[i];
            auto cell = detail::trim(cells[column_of[i]]);
            auto v = detail::parse_double(cell);
            if (!v) {
                throw DataError(where + ": non-numeric value '" + std::string(cell) + "' for " + f.name);
            }
            if (*v < f.min || *v > f.max) {
                throw DataError(where + ": value " + std::string(cell) + " of " + f.name + " out of bounds ["
                                + detail::format_double(f.min) + ", " + detail::format_double(f.max) + "]");
            }
            if (f.discrete() && std::floor(*v) != *v) {
                throw DataError(where + ": non-integral value " + std::string(cell) + " for " + f.name);
            }
            s[i] = schema.encode_exact(i, *v);
        }
        auto label_cell = detail::trim(cells[label_col]);
        auto label = detail::parse_double(label_cell);
        if (!label || (*label != 0.0 && *label != 1.0)) {
            throw DataError(where + ": label must be 0 or 1, got '" + std::string(label_cell) + "'");
        }
        data.push_back(std::move(s), static_cast<int>(*label));
    }
    return data;
}

Dataset load_dataset(const std::filesystem::path& path, const FeatureSchema& schema)
{
    return parse_dataset(detail::read_file(path), schema);
}

void save_dataset(const std::filesystem::path& path, const FeatureSchema& schema, const Dataset& data)
{
    std::string out;
    for (std::size_t i = 0; i < schema.size(); ++i) {
        out += schema[i].name;
        out += ',';
    }
    out += "label\n";
    for (std::size_t r = 0; r < data.size(); ++r) {
        for (std::size_t i = 0; i < schema.size(); ++i) {
            out += detail::format_double(schema.to_original(i, data.samples[r][i]));
            out += ',';
        }
        out += data.labels[r] ? "1\n" : "0\n";
    }
    detail::write_file(path, out);
}

double distance(std::span<const double> x, std::span<const double> x0, NormOrder p)
{
    if (x.size() != x0.size()) {
        throw DataError("distance: length mismatch (" + std::to_string(x.size()) + " vs "
                        + std::to_string(x0.size()) + ")");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = std::abs(x[i] - x0[i]);
        switch (p) {
        case NormOrder::L1: acc += d; break;
        case NormOrder::L2: acc += d * d; break;
        case NormOrder::Linf: acc = std::max(acc, d); break;
        }
    }
    return p == NormOrder::L2 ? std::sqrt(acc) : acc;
}

void clip_box(std::span<double> x)
{
    for (auto& v : x) {
        v = std::clamp(v, 0.0, 1.0);
    }
}

namespace {

// Euclidean projection of v onto the L1 ball of radius r (sort-based).
void project_l1(Vector& v, double r)
{
    double total = 0.0;
    for (double d : v) {
        total += std::abs(d);
    }
    if (total <= r) {
        return;
    }
    Vector u(v.size());
    std::transform(v.begin(), v.end(), u.begin(), [](double d) { return std::abs(d); });
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumsum = 0.0;
    double theta = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        cumsum += u[k];
        const double t = (cumsum - r) / static_cast<double>(k + 1);
        if (u[k] > t) {
            theta = t;
        }
    }
    for (auto& d : v) {
        const double m = std::max(0.0, std::abs(d) - theta);
        d = d < 0 ? -m : m;
    }
}

} // namespace

Sample project_ball(std::span<const double> x, std::span<const double> x0, double eps, NormOrder p,
                    const FeatureSchema& schema)
{
    if (x.size() != x0.size() || x.size() != schema.size()) {
        throw DataError("project_ball: length mismatch");
    }
    const std::size_t n = x.size();
    Sample y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = schema.movable(i) ? std::clamp(x[i], 0.0, 1.0) : x0[i];
    }
    // Points already inside the ball are returned as-is so the projection is a
    // true fixed point on its range.
    if (distance(y, x0, p) <= eps) {
        return y;
    }

    Vector delta(n);
    for (std::size_t i = 0; i < n; ++i) {
        delta[i] = schema.movable(i) ? x[i] - x0[i] : 0.0;
    }
    switch (p) {
    case NormOrder::L2: {
        double norm = 0.0;
        for (double d : delta) {
            norm += d * d;
        }
        norm = std::sqrt(norm);
        if (norm > eps) {
            const double c = eps / norm;
            for (auto& d : delta) {
                d *= c;
            }
        }
        break;
    }
    case NormOrder::Linf:
        for (auto& d : delta) {
            d = std::clamp(d, -eps, eps);
        }
        break;
    case NormOrder::L1: project_l1(delta, eps); break;
    }

    auto assemble = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = schema.movable(i) ? std::clamp(x0[i] + delta[i], 0.0, 1.0) : x0[i];
        }
    };
    assemble();
    // Rounding in x0 + delta can overshoot the radius by an ulp; shrink until exact.
    for (int guard = 0; guard < 200 && distance(y, x0, p) > eps; ++guard) {
        for (auto& d : delta) {
            d *= 1.0 - 1e-15 * (guard + 1);
        }
        assemble();
    }
    return y;
}

} // namespace cadv
