#pragma once

#include <cmath>
#include <vector>

namespace dynmech {

// Bivariate polynomial  sum_k c_k x^i_k y^j_k.
struct Poly2 {
  struct Term {
    double c = 0.0;
    int i = 0;
    int j = 0;
  };
  std::vector<Term> terms;

  Poly2() = default;
  Poly2(std::initializer_list<Term> ts) : terms(ts) {}

  static Poly2 constant(double c) { return Poly2{{c, 0, 0}}; }

  double operator()(double x, double y) const {
    double s = 0.0;
    for (const auto& t : terms) s += t.c * ipow(x, t.i) * ipow(y, t.j);
    return s;
  }

  Poly2 d_dx() const {
    Poly2 d;
    for (const auto& t : terms)
      if (t.i > 0) d.terms.push_back({t.c * t.i, t.i - 1, t.j});
    return d;
  }

  Poly2 d_dy() const {
    Poly2 d;
    for (const auto& t : terms)
      if (t.j > 0) d.terms.push_back({t.c * t.j, t.i, t.j - 1});
    return d;
  }

  bool uses_y() const {
    for (const auto& t : terms)
      if (t.j > 0 && t.c != 0.0) return true;
    return false;
  }

  Poly2 scaled(double k) const {
    Poly2 p = *this;
    for (auto& t : p.terms) t.c *= k;
    return p;
  }

  static double ipow(double x, int n) {
    double r = 1.0;
    for (int k = 0; k < n; ++k) r *= x;
    return r;
  }
};

}  // namespace dynmech
