#pragma once

// Forward-mode dual numbers. Assembly code is templated on the scalar so the
// same path yields exact directional derivatives of every matrix entry.

#include <cmath>
#include <ostream>

namespace spdegp {

struct Dual {
    double v = 0.0; // value
    double d = 0.0; // tangent

    constexpr Dual() = default;
    constexpr Dual(double value) : v(value) {} // NOLINT(google-explicit-constructor)
    constexpr Dual(double value, double tangent) : v(value), d(tangent) {}

    Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
    Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
    Dual& operator*=(const Dual& o) { d = d * o.v + v * o.d; v *= o.v; return *this; }
    Dual& operator/=(const Dual& o) {
        d = (d * o.v - v * o.d) / (o.v * o.v);
        v /= o.v;
        return *this;
    }
};

inline Dual operator-(const Dual& a) { return {-a.v, -a.d}; }
inline Dual operator+(Dual a, const Dual& b) { return a += b; }
inline Dual operator-(Dual a, const Dual& b) { return a -= b; }
inline Dual operator*(Dual a, const Dual& b) { return a *= b; }
inline Dual operator/(Dual a, const Dual& b) { return a /= b; }

inline bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
inline bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
inline bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
inline bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }
inline bool operator==(const Dual& a, const Dual& b) { return a.v == b.v && a.d == b.d; }
inline bool operator!=(const Dual& a, const Dual& b) { return !(a == b); }

inline Dual exp(const Dual& a) { const double e = std::exp(a.v); return {e, e * a.d}; }
inline Dual log(const Dual& a) { return {std::log(a.v), a.d / a.v}; }
inline Dual log1p(const Dual& a) { return {std::log1p(a.v), a.d / (1.0 + a.v)}; }
inline Dual sqrt(const Dual& a) { const double s = std::sqrt(a.v); return {s, a.d / (2.0 * s)}; }
inline Dual tanh(const Dual& a) {
    const double t = std::tanh(a.v);
    return {t, (1.0 - t * t) * a.d};
}
inline Dual abs(const Dual& a) { return a.v < 0.0 ? -a : a; }

inline std::ostream& operator<<(std::ostream& os, const Dual& a) {
    return os << a.v << "+" << a.d << "e";
}

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.v; }
inline double tangent_of(double) { return 0.0; }
inline double tangent_of(const Dual& x) { return x.d; }

template <class T>
T positive_part(const T& x) { return value_of(x) > 0.0 ? x : T(0.0); }

template <class T>
T negative_part(const T& x) { return value_of(x) < 0.0 ? x : T(0.0); }

} // namespace spdegp
