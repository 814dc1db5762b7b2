"""Weibull counts with beta = 0.55 and unit exponential claims.

The plain heavy-N approximation P[N > x] drifts away from the exact tail
as x grows, while the exponential correction keeps the ratio near one.
"""
import numpy as np

import compound_tails as ct

count = ct.make_discretized_weibull(0.55)
x = np.geomspace(10, 1e8, 15)

exact = ct.poisson_inversion_tail(count, x, 1.0)
raw = ct.heavy_n_approx(count, 1.0, x)
corrected = ct.foss_corrected(0.55, x)

print(f"{'x':>10}  {'log10 P[S>x]':>13}  {'exact/raw':>10}  {'exact/corr':>10}")
for xi, e, r, c in zip(x, exact.log_tail, raw.log_tail, corrected.log_tail):
    print(f"{xi:10.3g}  {e / np.log(10):13.3f}  {np.exp(e - r):10.4f}  {np.exp(e - c):10.4f}")

print()
print("predicted regime:", ct.classify(count, ct.make_severity_exponential(1.0)).predicted)
