#include "cadv/dsl.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

#include "text_util.hpp"

namespace cadv {

ParseError::ParseError(SourcePos pos, const std::string& message)
    : Error("line " + std::to_string(pos.line) + ", column " + std::to_string(pos.column) + ": " + message)
    , pos_(pos)
{
}

std::string_view to_string(BinaryOp op)
{
    switch (op) {
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Pow: return "^";
    }
    return "?";
}

std::string_view to_string(Relation rel)
{
    switch (rel) {
    case Relation::Less: return "<";
    case Relation::LessEqual: return "<=";
    case Relation::Equal: return "=";
    case Relation::NotEqual: return "!=";
    case Relation::GreaterEqual: return ">=";
    case Relation::Greater: return ">";
    }
    return "?";
}

std::string_view to_string(ConstraintClass cls)
{
    switch (cls) {
    case ConstraintClass::Smooth: return "smooth";
    case ConstraintClass::Repairable: return "repairable";
    case ConstraintClass::Opaque: return "opaque";
    }
    return "?";
}

namespace expr {

NumericPtr constant(double v) { return std::make_shared<NumericExpr>(NumericExpr{NumericExpr::Const{v}}); }

NumericPtr feature(std::string name, SourcePos pos)
{
    return std::make_shared<NumericExpr>(NumericExpr{NumericExpr::Feature{std::move(name), pos}});
}

NumericPtr original(std::string name, SourcePos pos)
{
    return std::make_shared<NumericExpr>(NumericExpr{NumericExpr::Original{std::move(name), pos}});
}

NumericPtr binary(BinaryOp op, NumericPtr lhs, NumericPtr rhs)
{
    return std::make_shared<NumericExpr>(NumericExpr{NumericExpr::Binary{op, std::move(lhs), std::move(rhs)}});
}

ConstraintPtr conj(ConstraintPtr lhs, ConstraintPtr rhs)
{
    return std::make_shared<ConstraintExpr>(ConstraintExpr{ConstraintExpr::And{std::move(lhs), std::move(rhs)}});
}

ConstraintPtr disj(ConstraintPtr lhs, ConstraintPtr rhs)
{
    return std::make_shared<ConstraintExpr>(ConstraintExpr{ConstraintExpr::Or{std::move(lhs), std::move(rhs)}});
}

ConstraintPtr compare(Relation rel, NumericPtr lhs, NumericPtr rhs)
{
    return std::make_shared<ConstraintExpr>(
        ConstraintExpr{ConstraintExpr::Compare{rel, std::move(lhs), std::move(rhs)}});
}

ConstraintPtr member(NumericPtr feature, std::vector<NumericPtr> candidates)
{
    if (!feature || !std::holds_alternative<NumericExpr::Feature>(feature->node)) {
        throw Error("membership subject must be a feature");
    }
    if (candidates.empty()) {
        throw Error("membership candidate list must not be empty");
    }
    return std::make_shared<ConstraintExpr>(
        ConstraintExpr{ConstraintExpr::Membership{std::move(feature), std::move(candidates)}});
}

} // namespace expr

// ---------------------------------------------------------------------------
// Lexer

namespace {

enum class Tok {
    Number,
    Ident,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
    And,
    Or,
    In,
    Orig,
    End,
};

struct Token {
    Tok kind;
    std::string text;
    SourcePos pos;
    double number{0.0};
};

std::vector<Token> lex(std::string_view src)
{
    std::vector<Token> out;
    std::size_t line = 1;
    std::size_t col = 1;
    std::size_t i = 0;
    auto advance = [&](std::size_t k) {
        for (std::size_t j = 0; j < k; ++j) {
            if (src[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
            ++i;
        }
    };
    while (i < src.size()) {
        const char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            advance(1);
            continue;
        }
        const SourcePos pos{line, col};
        if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && i + 1 < src.size()
                                                           && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
            std::size_t j = i;
            while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
            if (j < src.size() && src[j] == '.') {
                ++j;
                while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
            }
            if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
                if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
                    while (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) ++k;
                    j = k;
                }
            }
            std::string text(src.substr(i, j - i));
            auto value = detail::parse_double(text);
            if (!value) {
                throw ParseError(pos, "invalid number '" + text + "'");
            }
            out.push_back({Tok::Number, text, pos, *value});
            advance(j - i);
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
            std::string text(src.substr(i, j - i));
            Tok kind = Tok::Ident;
            if (text == "and") kind = Tok::And;
            else if (text == "or") kind = Tok::Or;
            else if (text == "in") kind = Tok::In;
            else if (text == "orig") kind = Tok::Orig;
            out.push_back({kind, text, pos});
            advance(j - i);
            continue;
        }
        auto two = src.substr(i, 2);
        auto emit = [&](Tok kind, std::size_t len) {
            out.push_back({kind, std::string(src.substr(i, len)), pos});
            advance(len);
        };
        if (two == "<=") { emit(Tok::Le, 2); continue; }
        if (two == ">=") { emit(Tok::Ge, 2); continue; }
        if (two == "!=") { emit(Tok::Ne, 2); continue; }
        if (two == "==") { emit(Tok::Eq, 2); continue; }
        switch (c) {
        case '+': emit(Tok::Plus, 1); continue;
        case '-': emit(Tok::Minus, 1); continue;
        case '*': emit(Tok::Star, 1); continue;
        case '/': emit(Tok::Slash, 1); continue;
        case '^': emit(Tok::Caret, 1); continue;
        case '(': emit(Tok::LParen, 1); continue;
        case ')': emit(Tok::RParen, 1); continue;
        case '{': emit(Tok::LBrace, 1); continue;
        case '}': emit(Tok::RBrace, 1); continue;
        case ',': emit(Tok::Comma, 1); continue;
        case '<': emit(Tok::Lt, 1); continue;
        case '>': emit(Tok::Gt, 1); continue;
        case '=': emit(Tok::Eq, 1); continue;
        default: break;
        }
        throw ParseError(pos, std::string("unexpected character '") + c + "'");
    }
    out.push_back({Tok::End, "end of input", {line, col}});
    return out;
}

std::optional<Relation> relation_of(Tok t)
{
    switch (t) {
    case Tok::Lt: return Relation::Less;
    case Tok::Le: return Relation::LessEqual;
    case Tok::Eq: return Relation::Equal;
    case Tok::Ne: return Relation::NotEqual;
    case Tok::Ge: return Relation::GreaterEqual;
    case Tok::Gt: return Relation::Greater;
    default: return std::nullopt;
    }
}

// ---------------------------------------------------------------------------
// Recursive-descent parser.  A parenthesis at the start of a formula is
// ambiguous (grouped formula vs. grouped numeric operand); the parser tries
// the comparison reading first and backtracks.

class SyntaxError : public ParseError {
public:
    SyntaxError(SourcePos pos, const std::string& msg, std::size_t token_index)
        : ParseError(pos, msg), token_index(token_index)
    {
    }
    std::size_t token_index;
};

class Parser {
public:
    explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

    ConstraintPtr formula()
    {
        auto c = parse_or();
        expect(Tok::End, "end of input");
        return c;
    }

    NumericPtr numeric()
    {
        auto e = parse_sum();
        expect(Tok::End, "end of input");
        return e;
    }

private:
    const Token& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }

    const Token& take() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

    [[noreturn]] void fail(const std::string& expected) const
    {
        const auto& t = peek();
        throw SyntaxError(t.pos, "syntax error at token '" + t.text + "': expected " + expected, pos_);
    }

    const Token& expect(Tok kind, const std::string& what)
    {
        if (peek().kind != kind) {
            fail(what);
        }
        return take();
    }

    ConstraintPtr parse_or()
    {
        auto lhs = parse_and();
        while (peek().kind == Tok::Or) {
            take();
            lhs = expr::disj(lhs, parse_and());
        }
        return lhs;
    }

    ConstraintPtr parse_and()
    {
        auto lhs = parse_atom();
        while (peek().kind == Tok::And) {
            take();
            lhs = expr::conj(lhs, parse_atom());
        }
        return lhs;
    }

    ConstraintPtr parse_atom()
    {
        if (peek().kind != Tok::LParen) {
            return parse_comparison();
        }
        const std::size_t save = pos_;
        try {
            return parse_comparison();
        } catch (const SyntaxError& as_comparison) {
            pos_ = save;
            try {
                take();
                auto inner = parse_or();
                expect(Tok::RParen, "')'");
                return inner;
            } catch (const SyntaxError& as_group) {
                // Report whichever reading got further into the input.
                if (as_group.token_index >= as_comparison.token_index) {
                    throw;
                }
                throw as_comparison;
            }
        }
    }

    ConstraintPtr parse_comparison()
    {
        if (peek().kind == Tok::Ident && peek(1).kind == Tok::In) {
            const auto& name = take();
            auto subject = expr::feature(name.text, name.pos);
            take();
            expect(Tok::LBrace, "'{'");
            std::vector<NumericPtr> candidates;
            candidates.push_back(parse_sum());
            while (peek().kind == Tok::Comma) {
                take();
                candidates.push_back(parse_sum());
            }
            expect(Tok::RBrace, "',' or '}'");
            return expr::member(subject, std::move(candidates));
        }
        auto lhs = parse_sum();
        auto rel = relation_of(peek().kind);
        if (!rel) {
            fail("comparison operator");
        }
        take();
        auto rhs = parse_sum();
        return expr::compare(*rel, lhs, rhs);
    }

    NumericPtr parse_sum()
    {
        auto lhs = parse_product();
        while (peek().kind == Tok::Plus || peek().kind == Tok::Minus) {
            const auto op = take().kind == Tok::Plus ? BinaryOp::Add : BinaryOp::Sub;
            lhs = expr::binary(op, lhs, parse_product());
        }
        return lhs;
    }

    NumericPtr parse_product()
    {
        auto lhs = parse_unary();
        while (peek().kind == Tok::Star || peek().kind == Tok::Slash) {
            const auto& op_tok = take();
            auto rhs = parse_unary();
            if (op_tok.kind == Tok::Slash) {
                if (const auto* c = std::get_if<NumericExpr::Const>(&rhs->node); c && c->value == 0.0) {
                    throw SyntaxError(op_tok.pos, "division by literal zero", pos_);
                }
                lhs = expr::binary(BinaryOp::Div, lhs, rhs);
            } else {
                lhs = expr::binary(BinaryOp::Mul, lhs, rhs);
            }
        }
        return lhs;
    }

    NumericPtr parse_unary()
    {
        if (peek().kind == Tok::Minus) {
            take();
            auto operand = parse_unary();
            if (const auto* c = std::get_if<NumericExpr::Const>(&operand->node)) {
                return expr::constant(-c->value);
            }
            return expr::binary(BinaryOp::Sub, expr::constant(0.0), operand);
        }
        return parse_power();
    }

    NumericPtr parse_power()
    {
        auto base = parse_primary();
        if (peek().kind == Tok::Caret) {
            take();
            return expr::binary(BinaryOp::Pow, base, parse_unary());
        }
        return base;
    }

    NumericPtr parse_primary()
    {
        const auto& t = peek();
        switch (t.kind) {
        case Tok::Number: take(); return expr::constant(t.number);
        case Tok::Ident: take(); return expr::feature(t.text, t.pos);
        case Tok::Orig: {
            take();
            expect(Tok::LParen, "'(' after orig");
            const auto& name = expect(Tok::Ident, "feature name");
            auto node = expr::original(name.text, name.pos);
            expect(Tok::RParen, "')'");
            return node;
        }
        case Tok::LParen: {
            take();
            auto inner = parse_sum();
            expect(Tok::RParen, "')'");
            return inner;
        }
        default: fail("expression");
        }
    }

    std::vector<Token> toks_;
    std::size_t pos_{0};
};

} // namespace

ConstraintPtr parse_constraint(std::string_view text)
{
    Parser p(lex(text));
    try {
        return p.formula();
    } catch (const SyntaxError& e) {
        throw ParseError(e.pos(), std::string(e.what()).substr(std::string(e.what()).find(": ") + 2));
    }
}

NumericPtr parse_numeric(std::string_view text)
{
    Parser p(lex(text));
    try {
        return p.numeric();
    } catch (const SyntaxError& e) {
        throw ParseError(e.pos(), std::string(e.what()).substr(std::string(e.what()).find(": ") + 2));
    }
}

// ---------------------------------------------------------------------------
// Printing, equality, traversal

std::string to_string(const NumericExpr& e)
{
    return std::visit(
        [](const auto& n) -> std::string {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, NumericExpr::Const>) {
                auto s = detail::format_double(n.value);
                return std::signbit(n.value) ? "(" + s + ")" : s;
            } else if constexpr (std::is_same_v<T, NumericExpr::Feature>) {
                return n.name;
            } else if constexpr (std::is_same_v<T, NumericExpr::Original>) {
                return "orig(" + n.name + ")";
            } else {
                return "(" + to_string(*n.lhs) + " " + std::string(to_string(n.op)) + " " + to_string(*n.rhs) + ")";
            }
        },
        e.node);
}

std::string to_string(const ConstraintExpr& c)
{
    return std::visit(
        [](const auto& n) -> std::string {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, ConstraintExpr::And>) {
                return "(" + to_string(*n.lhs) + " and " + to_string(*n.rhs) + ")";
            } else if constexpr (std::is_same_v<T, ConstraintExpr::Or>) {
                return "(" + to_string(*n.lhs) + " or " + to_string(*n.rhs) + ")";
            } else if constexpr (std::is_same_v<T, ConstraintExpr::Compare>) {
                return to_string(*n.lhs) + " " + std::string(to_string(n.rel)) + " " + to_string(*n.rhs);
            } else {
                std::string out = to_string(*n.feature) + " in {";
                for (std::size_t i = 0; i < n.candidates.size(); ++i) {
                    if (i) out += ", ";
                    out += to_string(*n.candidates[i]);
                }
                return out + "}";
            }
        },
        c.node);
}

bool structurally_equal(const NumericExpr& a, const NumericExpr& b)
{
    if (a.node.index() != b.node.index()) {
        return false;
    }
    if (const auto* ca = std::get_if<NumericExpr::Const>(&a.node)) {
        return ca->value == std::get<NumericExpr::Const>(b.node).value;
    }
    if (const auto* fa = std::get_if<NumericExpr::Feature>(&a.node)) {
        return fa->name == std::get<NumericExpr::Feature>(b.node).name;
    }
    if (const auto* oa = std::get_if<NumericExpr::Original>(&a.node)) {
        return oa->name == std::get<NumericExpr::Original>(b.node).name;
    }
    const auto& ba = std::get<NumericExpr::Binary>(a.node);
    const auto& bb = std::get<NumericExpr::Binary>(b.node);
    return ba.op == bb.op && structurally_equal(*ba.lhs, *bb.lhs) && structurally_equal(*ba.rhs, *bb.rhs);
}

bool structurally_equal(const ConstraintExpr& a, const ConstraintExpr& b)
{
    if (a.node.index() != b.node.index()) {
        return false;
    }
    if (const auto* x = std::get_if<ConstraintExpr::And>(&a.node)) {
        const auto& y = std::get<ConstraintExpr::And>(b.node);
        return structurally_equal(*x->lhs, *y.lhs) && structurally_equal(*x->rhs, *y.rhs);
    }
    if (const auto* x = std::get_if<ConstraintExpr::Or>(&a.node)) {
        const auto& y = std::get<ConstraintExpr::Or>(b.node);
        return structurally_equal(*x->lhs, *y.lhs) && structurally_equal(*x->rhs, *y.rhs);
    }
    if (const auto* x = std::get_if<ConstraintExpr::Compare>(&a.node)) {
        const auto& y = std::get<ConstraintExpr::Compare>(b.node);
        return x->rel == y.rel && structurally_equal(*x->lhs, *y.lhs) && structurally_equal(*x->rhs, *y.rhs);
    }
    const auto& x = std::get<ConstraintExpr::Membership>(a.node);
    const auto& y = std::get<ConstraintExpr::Membership>(b.node);
    if (!structurally_equal(*x.feature, *y.feature) || x.candidates.size() != y.candidates.size()) {
        return false;
    }
    for (std::size_t i = 0; i < x.candidates.size(); ++i) {
        if (!structurally_equal(*x.candidates[i], *y.candidates[i])) {
            return false;
        }
    }
    return true;
}

namespace {

template <typename Fn>
void for_each_reference(const NumericExpr& e, Fn&& fn)
{
    if (const auto* f = std::get_if<NumericExpr::Feature>(&e.node)) {
        fn(f->name, f->pos);
    } else if (const auto* o = std::get_if<NumericExpr::Original>(&e.node)) {
        fn(o->name, o->pos);
    } else if (const auto* b = std::get_if<NumericExpr::Binary>(&e.node)) {
        for_each_reference(*b->lhs, fn);
        for_each_reference(*b->rhs, fn);
    }
}

template <typename Fn>
void for_each_reference(const ConstraintExpr& c, Fn&& fn)
{
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, ConstraintExpr::And> || std::is_same_v<T, ConstraintExpr::Or>) {
                for_each_reference(*n.lhs, fn);
                for_each_reference(*n.rhs, fn);
            } else if constexpr (std::is_same_v<T, ConstraintExpr::Compare>) {
                for_each_reference(*n.lhs, fn);
                for_each_reference(*n.rhs, fn);
            } else {
                for_each_reference(*n.feature, fn);
                for (const auto& cand : n.candidates) {
                    for_each_reference(*cand, fn);
                }
            }
        },
        c.node);
}

template <typename Pred>
bool any_node(const ConstraintExpr& c, Pred&& pred)
{
    if (pred(c)) {
        return true;
    }
    if (const auto* a = std::get_if<ConstraintExpr::And>(&c.node)) {
        return any_node(*a->lhs, pred) || any_node(*a->rhs, pred);
    }
    if (const auto* o = std::get_if<ConstraintExpr::Or>(&c.node)) {
        return any_node(*o->lhs, pred) || any_node(*o->rhs, pred);
    }
    return false;
}

NumericPtr bind_numeric(const NumericPtr& e, const FeatureSchema& schema, std::vector<std::string>& missing)
{
    return std::visit(
        [&](const auto& n) -> NumericPtr {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, NumericExpr::Const>) {
                return e;
            } else if constexpr (std::is_same_v<T, NumericExpr::Binary>) {
                return expr::binary(n.op, bind_numeric(n.lhs, schema, missing), bind_numeric(n.rhs, schema, missing));
            } else {
                T copy = n;
                if (auto idx = schema.index_of(n.name)) {
                    copy.index = *idx;
                } else {
                    missing.push_back(n.name);
                }
                return std::make_shared<NumericExpr>(NumericExpr{copy});
            }
        },
        e->node);
}

ConstraintPtr bind_constraint(const ConstraintPtr& c, const FeatureSchema& schema, std::vector<std::string>& missing)
{
    return std::visit(
        [&](const auto& n) -> ConstraintPtr {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, ConstraintExpr::And>) {
                return expr::conj(bind_constraint(n.lhs, schema, missing), bind_constraint(n.rhs, schema, missing));
            } else if constexpr (std::is_same_v<T, ConstraintExpr::Or>) {
                return expr::disj(bind_constraint(n.lhs, schema, missing), bind_constraint(n.rhs, schema, missing));
            } else if constexpr (std::is_same_v<T, ConstraintExpr::Compare>) {
                return expr::compare(n.rel, bind_numeric(n.lhs, schema, missing),
                                     bind_numeric(n.rhs, schema, missing));
            } else {
                std::vector<NumericPtr> cands;
                for (const auto& cand : n.candidates) {
                    cands.push_back(bind_numeric(cand, schema, missing));
                }
                return expr::member(bind_numeric(n.feature, schema, missing), std::move(cands));
            }
        },
        c->node);
}

void flatten_or(const ConstraintPtr& c, std::vector<ConstraintPtr>& out)
{
    if (const auto* o = std::get_if<ConstraintExpr::Or>(&c->node)) {
        flatten_or(o->lhs, out);
        flatten_or(o->rhs, out);
    } else {
        out.push_back(c);
    }
}

void flatten_and(const ConstraintPtr& c, std::vector<ConstraintPtr>& out)
{
    if (const auto* a = std::get_if<ConstraintExpr::And>(&c->node)) {
        flatten_and(a->lhs, out);
        flatten_and(a->rhs, out);
    } else {
        out.push_back(c);
    }
}

const NumericExpr::Feature* as_feature(const NumericPtr& e)
{
    return std::get_if<NumericExpr::Feature>(&e->node);
}

} // namespace

std::vector<Diagnostic> validate(const ConstraintExpr& c, const FeatureSchema& schema)
{
    std::vector<Diagnostic> out;
    for_each_reference(c, [&](const std::string& name, SourcePos pos) {
        if (!schema.index_of(name)) {
            out.push_back({pos, "unknown feature " + name});
        }
    });
    return out;
}

ConstraintPtr bind(const ConstraintPtr& c, const FeatureSchema& schema)
{
    std::vector<std::string> missing;
    auto bound = bind_constraint(c, schema, missing);
    if (!missing.empty()) {
        std::string msg = "unknown feature";
        for (const auto& m : missing) {
            msg += " " + m;
        }
        throw SchemaError(msg);
    }
    return bound;
}

bool references(const NumericExpr& e, std::string_view name)
{
    bool found = false;
    for_each_reference(e, [&](const std::string& n, SourcePos) { found = found || n == name; });
    return found;
}

bool references(const ConstraintExpr& c, std::string_view name)
{
    bool found = false;
    for_each_reference(c, [&](const std::string& n, SourcePos) { found = found || n == name; });
    return found;
}

std::optional<std::pair<NumericPtr, NumericPtr>> match_assignment(const ConstraintExpr& c)
{
    const auto* cmp = std::get_if<ConstraintExpr::Compare>(&c.node);
    if (!cmp || cmp->rel != Relation::Equal) {
        return std::nullopt;
    }
    const auto* target = as_feature(cmp->lhs);
    if (!target || references(*cmp->rhs, target->name)) {
        return std::nullopt;
    }
    return std::make_pair(cmp->lhs, cmp->rhs);
}

std::optional<GuardedAssignment> match_guarded_assignment(const ConstraintExpr& c)
{
    if (!std::holds_alternative<ConstraintExpr::Or>(c.node)) {
        return std::nullopt;
    }
    std::vector<ConstraintPtr> alternatives;
    const auto& o = std::get<ConstraintExpr::Or>(c.node);
    flatten_or(o.lhs, alternatives);
    flatten_or(o.rhs, alternatives);

    GuardedAssignment result;
    for (const auto& alt : alternatives) {
        std::vector<ConstraintPtr> conjuncts;
        flatten_and(alt, conjuncts);
        std::optional<std::size_t> pin;
        for (std::size_t k = 0; k < conjuncts.size() && !pin; ++k) {
            const auto* cmp = std::get_if<ConstraintExpr::Compare>(&conjuncts[k]->node);
            if (!cmp || cmp->rel != Relation::Equal || !as_feature(cmp->lhs)
                || !std::holds_alternative<NumericExpr::Const>(cmp->rhs->node)) {
                continue;
            }
            if (!result.target || as_feature(cmp->lhs)->name == as_feature(result.target)->name) {
                pin = k;
            }
        }
        if (!pin) {
            return std::nullopt;
        }
        const auto* cmp = std::get_if<ConstraintExpr::Compare>(&conjuncts[*pin]->node);
        if (!result.target) {
            result.target = cmp->lhs;
        }
        const std::string& target_name = as_feature(result.target)->name;
        ConstraintPtr guard;
        for (std::size_t k = 0; k < conjuncts.size(); ++k) {
            if (k == *pin) {
                continue;
            }
            if (references(*conjuncts[k], target_name)) {
                return std::nullopt;
            }
            guard = guard ? expr::conj(guard, conjuncts[k]) : conjuncts[k];
        }
        if (!guard) {
            return std::nullopt;
        }
        result.branches.emplace_back(std::get<NumericExpr::Const>(cmp->rhs->node).value, guard);
    }
    return result;
}

ConstraintClass classify(const ConstraintExpr& c)
{
    if (std::holds_alternative<ConstraintExpr::Membership>(c.node) || match_assignment(c)
        || match_guarded_assignment(c)) {
        return ConstraintClass::Repairable;
    }
    const bool kinked = any_node(c, [](const ConstraintExpr& n) {
        if (std::holds_alternative<ConstraintExpr::Membership>(n.node)) {
            return true;
        }
        const auto* cmp = std::get_if<ConstraintExpr::Compare>(&n.node);
        return cmp && cmp->rel == Relation::NotEqual;
    });
    return kinked ? ConstraintClass::Opaque : ConstraintClass::Smooth;
}

// ---------------------------------------------------------------------------
// Constraint sets

ConstraintSet::ConstraintSet(std::vector<NamedConstraint> items) : items_(std::move(items))
{
    std::set<std::string> names;
    for (auto& item : items_) {
        if (!names.insert(item.name).second) {
            throw Error("duplicate constraint name " + item.name);
        }
        item.cls = classify(*item.expr);
    }
}

void ConstraintSet::add(std::string name, ConstraintPtr expr)
{
    for (const auto& item : items_) {
        if (item.name == name) {
            throw Error("duplicate constraint name " + name);
        }
    }
    const auto cls = classify(*expr);
    items_.push_back({std::move(name), std::move(expr), cls});
}

ConstraintSet ConstraintSet::bind(const FeatureSchema& schema) const
{
    std::vector<NamedConstraint> bound;
    std::string problems;
    for (const auto& item : items_) {
        for (const auto& d : validate(*item.expr, schema)) {
            problems += "\n  " + item.name + ": " + d.message + " (column " + std::to_string(d.pos.column) + ")";
        }
    }
    if (!problems.empty()) {
        throw SchemaError("constraints reference unknown features:" + problems);
    }
    for (const auto& item : items_) {
        bound.push_back({item.name, cadv::bind(item.expr, schema), item.cls});
    }
    return ConstraintSet(std::move(bound));
}

std::string ConstraintSet::to_text() const
{
    std::string out;
    for (const auto& item : items_) {
        out += item.name + ": " + to_string(*item.expr) + "\n";
    }
    return out;
}

ConstraintSet parse_constraint_set(std::string_view text)
{
    std::vector<NamedConstraint> items;
    std::size_t line_no = 0;
    for (auto raw : detail::split_lines(text)) {
        ++line_no;
        auto line = detail::strip_comment(raw);
        if (detail::trim(line).empty()) {
            continue;
        }
        std::string name = "c" + std::to_string(items.size() + 1);
        std::size_t offset = 0;
        if (auto colon = line.find(':'); colon != std::string_view::npos) {
            auto candidate = detail::trim(line.substr(0, colon));
            if (!detail::is_identifier(candidate)) {
                throw ParseError({line_no, 1}, "invalid constraint name '" + std::string(candidate) + "'");
            }
            name = std::string(candidate);
            offset = colon + 1;
        }
        try {
            items.push_back({name, parse_constraint(line.substr(offset)), ConstraintClass::Opaque});
        } catch (const ParseError& e) {
            const SourcePos pos{line_no, e.pos().column + offset};
            std::string what = e.what();
            throw ParseError(pos, "constraint " + name + ": " + what.substr(what.find(": ") + 2));
        }
    }
    return ConstraintSet(std::move(items));
}

ConstraintSet load_constraints(const std::filesystem::path& path)
{
    return parse_constraint_set(detail::read_file(path));
}

void save_constraints(const std::filesystem::path& path, const ConstraintSet& set)
{
    detail::write_file(path, set.to_text());
}

} // namespace cadv
