#ifndef CADV_DSL_HPP
#define CADV_DSL_HPP

#include <cstddef>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "cadv/common.hpp"
#include "cadv/schema.hpp"

namespace cadv {

struct SourcePos {
    std::size_t line{1};
    std::size_t column{1};
};

class ParseError : public Error {
public:
    ParseError(SourcePos pos, const std::string& message);
    [[nodiscard]] SourcePos pos() const { return pos_; }

private:
    SourcePos pos_;
};

enum class BinaryOp { Add, Sub, Mul, Div, Pow };
enum class Relation { Less, LessEqual, Equal, NotEqual, GreaterEqual, Greater };

std::string_view to_string(BinaryOp op);
std::string_view to_string(Relation rel);

inline constexpr std::size_t unbound = std::numeric_limits<std::size_t>::max();

struct NumericExpr;
struct ConstraintExpr;
using NumericPtr = std::shared_ptr<const NumericExpr>;
using ConstraintPtr = std::shared_ptr<const ConstraintExpr>;

/// Numeric expression tree.  Nodes are immutable once built.
struct NumericExpr {
    struct Const {
        double value;
    };
    /// Candidate value of a feature.
    struct Feature {
        std::string name;
        SourcePos pos{};
        std::size_t index{unbound};
    };
    /// Value of the feature in the original (unperturbed) input, `orig(name)`.
    struct Original {
        std::string name;
        SourcePos pos{};
        std::size_t index{unbound};
    };
    struct Binary {
        BinaryOp op;
        NumericPtr lhs;
        NumericPtr rhs;
    };

    std::variant<Const, Feature, Original, Binary> node;
};

/// Constraint formula tree.
struct ConstraintExpr {
    struct And {
        ConstraintPtr lhs;
        ConstraintPtr rhs;
    };
    struct Or {
        ConstraintPtr lhs;
        ConstraintPtr rhs;
    };
    struct Compare {
        Relation rel;
        NumericPtr lhs;
        NumericPtr rhs;
    };
    /// `feature in {c1, ..., ck}`; `feature` always holds a Feature node.
    struct Membership {
        NumericPtr feature;
        std::vector<NumericPtr> candidates;
    };

    std::variant<And, Or, Compare, Membership> node;
};

namespace expr {
NumericPtr constant(double v);
NumericPtr feature(std::string name, SourcePos pos = {});
NumericPtr original(std::string name, SourcePos pos = {});
NumericPtr binary(BinaryOp op, NumericPtr lhs, NumericPtr rhs);
ConstraintPtr conj(ConstraintPtr lhs, ConstraintPtr rhs);
ConstraintPtr disj(ConstraintPtr lhs, ConstraintPtr rhs);
ConstraintPtr compare(Relation rel, NumericPtr lhs, NumericPtr rhs);
ConstraintPtr member(NumericPtr feature, std::vector<NumericPtr> candidates);
} // namespace expr

/// Parses one constraint formula.
///
/// Precedence, tightest first: `^` (right associative), unary `-`, `* /`,
/// `+ -`, comparisons, `and`, `or`.  `orig(name)` refers to the original
/// input, `name in {e1, ..., ek}` is membership.  Throws ParseError.
ConstraintPtr parse_constraint(std::string_view text);
NumericPtr parse_numeric(std::string_view text);

/// Fully parenthesized text that parses back to the same tree.
std::string to_string(const NumericExpr& e);
std::string to_string(const ConstraintExpr& c);

/// Structural equality; ignores source positions and bound indices.
bool structurally_equal(const NumericExpr& a, const NumericExpr& b);
bool structurally_equal(const ConstraintExpr& a, const ConstraintExpr& b);

struct Diagnostic {
    SourcePos pos;
    std::string message;
};

/// Reports unresolved feature references.  Never throws, never mutates.
std::vector<Diagnostic> validate(const ConstraintExpr& c, const FeatureSchema& schema);

/// Copy of the tree with every feature reference resolved to its schema index.
/// Throws SchemaError on unknown names.
ConstraintPtr bind(const ConstraintPtr& c, const FeatureSchema& schema);

/// True if the expression mentions the feature (candidate or orig) by name.
bool references(const NumericExpr& e, std::string_view name);
bool references(const ConstraintExpr& c, std::string_view name);

enum class ConstraintClass { Smooth, Repairable, Opaque };
std::string_view to_string(ConstraintClass cls);

/// `f = c1 and g1 or f = c2 and g2 or ...`: the constraint fixes feature f to
/// the constant of whichever guard holds.  Guards never mention f.
struct GuardedAssignment {
    NumericPtr target;
    std::vector<std::pair<double, ConstraintPtr>> branches;
};
std::optional<GuardedAssignment> match_guarded_assignment(const ConstraintExpr& c);

/// `f = expr` where expr does not mention f.
std::optional<std::pair<NumericPtr, NumericPtr>> match_assignment(const ConstraintExpr& c);

/// Smooth: penalty differentiable almost everywhere (no membership, no !=).
/// Repairable: membership, lone-feature equality or guarded assignment.
/// Repair rules are checked first, so `f = g + h` is Repairable.
ConstraintClass classify(const ConstraintExpr& c);

struct NamedConstraint {
    std::string name;
    ConstraintPtr expr;
    ConstraintClass cls{ConstraintClass::Opaque};
};

/// Ordered, named constraint list (Omega).
class ConstraintSet {
public:
    ConstraintSet() = default;
    explicit ConstraintSet(std::vector<NamedConstraint> items);

    [[nodiscard]] std::size_t size() const { return items_.size(); }
    [[nodiscard]] bool empty() const { return items_.empty(); }
    [[nodiscard]] const NamedConstraint& operator[](std::size_t i) const { return items_[i]; }
    [[nodiscard]] auto begin() const { return items_.begin(); }
    [[nodiscard]] auto end() const { return items_.end(); }

    void add(std::string name, ConstraintPtr expr);

    /// Resolves all references against the schema; throws SchemaError listing
    /// every unknown feature.
    [[nodiscard]] ConstraintSet bind(const FeatureSchema& schema) const;

    /// Constraint file text: `name: formula` per line.
    [[nodiscard]] std::string to_text() const;

private:
    std::vector<NamedConstraint> items_;
};

/// One constraint per line, optional `name:` prefix, `#` comments.
/// Unnamed constraints are called c1, c2, ... by line order.
ConstraintSet parse_constraint_set(std::string_view text);
ConstraintSet load_constraints(const std::filesystem::path& path);
void save_constraints(const std::filesystem::path& path, const ConstraintSet& set);

} // namespace cadv

#endif
