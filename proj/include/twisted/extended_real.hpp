#pragma once

#include <cmath>
#include <limits>
#include <ostream>

#include "errors.hpp"

namespace twisted {

// Value in (-inf, +inf]. Only +inf is representable; it absorbs every
// operation below and turns into NotApplicable when a finite value is needed.
class Extended {
public:
    constexpr Extended() = default;
    constexpr Extended(double v) : v_(v) {}

    static constexpr Extended infinity() { return Extended(std::numeric_limits<double>::infinity()); }

    bool is_infinite() const { return std::isinf(v_) && v_ > 0; }
    bool is_finite() const { return std::isfinite(v_); }

    // Raw IEEE value; +inf for the infinite branch.
    double raw() const { return v_; }

    double value() const {
        if (!is_finite()) throw NotApplicable("twisted coefficient is infinite");
        return v_;
    }

    Extended pow(double e) const { return is_infinite() ? *this : Extended(std::pow(v_, e)); }

    friend Extended operator*(Extended a, double b) { return a.is_infinite() ? a : Extended(a.v_ * b); }
    friend Extended operator+(Extended a, double b) { return a.is_infinite() ? a : Extended(a.v_ + b); }
    friend bool operator==(Extended a, Extended b) { return a.v_ == b.v_; }
    friend std::ostream& operator<<(std::ostream& os, Extended e) {
        return e.is_infinite() ? (os << "inf") : (os << e.v_);
    }

private:
    double v_ = 0.0;
};

} // namespace twisted
