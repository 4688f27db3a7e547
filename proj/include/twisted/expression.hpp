#pragma once

#include <cctype>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "errors.hpp"

namespace twisted {

// Closed-form scalar expressions over ambient coordinates x0, x1, ...
// (aliases x, y, z for the first three). Grammar: + - * / ^, unary minus,
// parentheses, numbers, pi, and the functions sin cos tan exp log sqrt
// tanh cosh sinh abs.
class Expression {
public:
    Expression() = default;
    explicit Expression(std::string text) : text_(std::move(text)) {
        pos_ = 0;
        root_ = parse_sum();
        skip();
        if (pos_ != text_.size()) fail("unexpected trailing input");
    }

    double operator()(const double* x, std::size_t n) const { return eval(*root_, x, n); }

    const std::string& text() const { return text_; }

private:
    enum class Op { num, var, add, sub, mul, div, pow, neg, call };
    struct Node {
        Op op;
        double value = 0;
        std::size_t index = 0;
        std::string fn;
        std::unique_ptr<Node> a, b;
    };

    std::string text_;
    std::size_t pos_ = 0;
    std::shared_ptr<Node> root_;

    [[noreturn]] void fail(const std::string& what) const {
        throw ConfigurationError("expression '" + text_ + "' at column " + std::to_string(pos_ + 1) + ": " + what);
    }
    void skip() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    bool eat(char c) {
        skip();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    static std::unique_ptr<Node> make(Op op, std::unique_ptr<Node> a = {}, std::unique_ptr<Node> b = {}) {
        auto n = std::make_unique<Node>();
        n->op = op;
        n->a = std::move(a);
        n->b = std::move(b);
        return n;
    }
    std::shared_ptr<Node> parse_sum() { return std::shared_ptr<Node>(sum().release()); }

    std::unique_ptr<Node> sum() {
        auto lhs = product();
        for (;;) {
            if (eat('+')) lhs = make(Op::add, std::move(lhs), product());
            else if (eat('-')) lhs = make(Op::sub, std::move(lhs), product());
            else return lhs;
        }
    }
    std::unique_ptr<Node> product() {
        auto lhs = unary();
        for (;;) {
            if (eat('*')) lhs = make(Op::mul, std::move(lhs), unary());
            else if (eat('/')) lhs = make(Op::div, std::move(lhs), unary());
            else return lhs;
        }
    }
    std::unique_ptr<Node> unary() {
        if (eat('-')) return make(Op::neg, unary());
        if (eat('+')) return unary();
        return power();
    }
    std::unique_ptr<Node> power() {
        auto base = atom();
        if (eat('^')) return make(Op::pow, std::move(base), unary());
        return base;
    }
    std::unique_ptr<Node> atom() {
        skip();
        if (pos_ >= text_.size()) fail("unexpected end of input");
        if (eat('(')) {
            auto e = sum();
            if (!eat(')')) fail("expected ')'");
            return e;
        }
        char c = text_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t used = 0;
            double v = std::stod(text_.substr(pos_), &used);
            pos_ += used;
            auto n = make(Op::num);
            n->value = v;
            return n;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t start = pos_;
            while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) ++pos_;
            std::string id = text_.substr(start, pos_ - start);
            if (eat('(')) {
                static const char* known[] = {"sin", "cos", "tan", "exp", "log", "sqrt", "tanh", "cosh", "sinh", "abs"};
                bool ok = false;
                for (auto k : known) ok = ok || id == k;
                if (!ok) fail("unknown function '" + id + "'");
                auto n = make(Op::call, sum());
                n->fn = id;
                if (!eat(')')) fail("expected ')'");
                return n;
            }
            auto n = make(Op::var);
            if (id == "pi") {
                n->op = Op::num;
                n->value = 3.14159265358979323846;
            } else if (id == "x" || id == "y" || id == "z") {
                n->index = static_cast<std::size_t>(id[0] - 'x');
            } else if (id.size() > 1 && id[0] == 'x' && id.find_first_not_of("0123456789", 1) == std::string::npos) {
                n->index = std::stoul(id.substr(1));
            } else {
                fail("unknown identifier '" + id + "'");
            }
            return n;
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    static double eval(const Node& n, const double* x, std::size_t dim) {
        switch (n.op) {
        case Op::num: return n.value;
        case Op::var:
            if (n.index >= dim) throw InputDomainError("expression uses a coordinate beyond the ambient dimension");
            return x[n.index];
        case Op::add: return eval(*n.a, x, dim) + eval(*n.b, x, dim);
        case Op::sub: return eval(*n.a, x, dim) - eval(*n.b, x, dim);
        case Op::mul: return eval(*n.a, x, dim) * eval(*n.b, x, dim);
        case Op::div: return eval(*n.a, x, dim) / eval(*n.b, x, dim);
        case Op::pow: return std::pow(eval(*n.a, x, dim), eval(*n.b, x, dim));
        case Op::neg: return -eval(*n.a, x, dim);
        case Op::call: {
            double v = eval(*n.a, x, dim);
            const std::string& f = n.fn;
            if (f == "sin") return std::sin(v);
            if (f == "cos") return std::cos(v);
            if (f == "tan") return std::tan(v);
            if (f == "exp") return std::exp(v);
            if (f == "log") return std::log(v);
            if (f == "sqrt") return std::sqrt(v);
            if (f == "tanh") return std::tanh(v);
            if (f == "cosh") return std::cosh(v);
            if (f == "sinh") return std::sinh(v);
            return std::abs(v);
        }
        }
        return 0.0;
    }
};

} // namespace twisted
