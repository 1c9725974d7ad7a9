"""The MEX operator as one dial from min through mean to max.

Run: python3 demos/01_mex_operator.py
"""

import numpy as np

from simnets.mex import mex, mex_grad

values = np.array([1.0, 2.0, 3.0, 7.0])
print("values:", values)
for xi in (-np.inf, -100.0, -1.0, 0.0, 1.0, 100.0, np.inf):
    print(f"  xi = {xi:>6}:  MEX = {mex(values, xi): .6f}")

# Nesting MEX over equal-size groups is the same as one MEX over everything.
rng = np.random.default_rng(0)
c = rng.uniform(-5, 5, (4, 6))
for xi in (0.3, 5.0, -2.0):
    nested = mex(mex(c, xi, axis=1), xi)
    flat = mex(c.ravel(), xi)
    print(f"collapsing at xi={xi}: nested {nested:.15f}  flat {flat:.15f}")

# Gradients are softmax weights, and d/dxi at the mean-limit is half the variance.
w, dxi = mex_grad(values, 0.0)
print("weights at xi=0:", w, " d/dxi:", dxi, " Var/2:", values.var() / 2)
w, dxi = mex_grad(values, 2.0)
print("weights at xi=2:", np.round(w, 4), " d/dxi:", round(float(dxi), 6))
