#pragma once

// IEEE binary128 scalar (via libquadmath) usable as the scalar type of the
// numeric templates. Only the gradient checker instantiates it.

#include <compare>
#include <type_traits>

#include <quadmath.h>

namespace corrfusion {

class Quad {
 public:
  constexpr Quad() = default;
  template <typename A>
    requires std::is_arithmetic_v<A>
  constexpr Quad(A v) : v_(static_cast<__float128>(v)) {}

  template <typename A>
    requires std::is_arithmetic_v<A>
  explicit constexpr operator A() const { return static_cast<A>(v_); }

  friend Quad operator+(Quad a, Quad b) { return raw(a.v_ + b.v_); }
  friend Quad operator-(Quad a, Quad b) { return raw(a.v_ - b.v_); }
  friend Quad operator*(Quad a, Quad b) { return raw(a.v_ * b.v_); }
  friend Quad operator/(Quad a, Quad b) { return raw(a.v_ / b.v_); }
  friend Quad operator-(Quad a) { return raw(-a.v_); }
  Quad& operator+=(Quad b) { v_ += b.v_; return *this; }
  Quad& operator-=(Quad b) { v_ -= b.v_; return *this; }
  Quad& operator*=(Quad b) { v_ *= b.v_; return *this; }
  Quad& operator/=(Quad b) { v_ /= b.v_; return *this; }

  friend bool operator==(Quad a, Quad b) { return a.v_ == b.v_; }
  friend std::partial_ordering operator<=>(Quad a, Quad b) {
    if (a.v_ < b.v_) return std::partial_ordering::less;
    if (a.v_ > b.v_) return std::partial_ordering::greater;
    if (a.v_ == b.v_) return std::partial_ordering::equivalent;
    return std::partial_ordering::unordered;
  }

  friend Quad sqrt(Quad a) { return raw(sqrtq(a.v_)); }
  friend Quad exp(Quad a) { return raw(expq(a.v_)); }
  friend Quad log(Quad a) { return raw(logq(a.v_)); }
  friend Quad tanh(Quad a) { return raw(tanhq(a.v_)); }
  friend Quad abs(Quad a) { return raw(fabsq(a.v_)); }
  friend bool isfinite(Quad a) { return finiteq(a.v_) != 0; }

 private:
  static Quad raw(__float128 v) {
    Quad q;
    q.v_ = v;
    return q;
  }
  __float128 v_ = 0;
};

}  // namespace corrfusion
