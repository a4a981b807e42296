#pragma once

// Constants the theory only asserts to exist. Each value was fixed by a dense
// numeric scan (see the named test) and is frozen here.
namespace shelab::constants {

// |dG/dx| <= (c/sqrt t) G(2t,x) and |dG/dt| <= (c/t) G(2t,x).
// Scan t in [0.1,2], x in [-4,4]: max ratios 0.858 (space), 0.810 (time);
// analytic sups sqrt(2) e^{-1/2} and sqrt(2)*2e^{-5/4}. test: HeatKernel.GradBoundScan
inline constexpr double kernel_grad_c = 2.0;

// I_space <= C|x-y|, I_time <= C|t-s|^{1/2}, I_tail <= C|t-s|^{1/2}.
// Scan sups: I_space/|x-y| -> 1/2 as t -> inf, I_time -> 0.165, I_tail = 0.399.
// test: HeatKernel.StandardIntegralScan
inline constexpr double standard_integral_C = 0.5;

// E[(N0(p)-N0(q))^2] <= C Delta(p-q)^2 on [1/2,2]x[-2,2]. Scan max 0.700 at
// |x-y| = Delta^2, |t-s| = Delta^4. test: HeatKernel.CanonicalMetricScan
inline constexpr double canonical_metric_C = 0.75;

}  // namespace shelab::constants
