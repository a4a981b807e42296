#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace shelab {

// Adaptive Gauss-Kronrod (31 points) with relative tolerance; infinite limits allowed.
template <class F>
double integrate(F&& f, double a, double b, double rel_tol = 1e-8, unsigned max_depth = 25) {
    double err = 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, max_depth, rel_tol, &err);
}

}  // namespace shelab
