"""Geodesic coordinates on a chart, computed three ways.

For the line with Christoffel symbol Gamma = c the geodesics are explicit, so
the transition exp_2^{-1} o exp_1 from the flat connection is (e^{cv} - 1)/c.
Run with ``python demos/04_geodesic_jets.py``.
"""
import numpy as np
from gmpy2 import mpq

from fedosov import Connection, Poly, compare_with_pbw, geodesic_jet, transition_jet
from fedosov.geodesic import closed_form_transition_1d, rk4_exp, rk4_transition

c = mpq(3, 2)
origin = (mpq(0),)
gamma = {(0, 0, 0): Poly.const(1, c)}

# %% Exact jets
jet = transition_jet({}, gamma, origin, 6)
print("transition jet:", jet.to_json()["0"])
print("matches (e^{cv}-1)/c:", jet == closed_form_transition_1d(c, 6))

# %% Three pipelines side by side
rep = compare_with_pbw(Connection(), Connection({(0, 0): {0: Poly.const(1, c)}}), origin, 6, 1)
print("geodesic jet = pbw_2^{-1} pbw_1 = e^Y:", rep["ok"])

# %% Floating point sanity layer
vs = np.linspace(-0.2, 0.2, 5)
exact = np.expm1(float(c) * vs) / float(c)
numeric = np.array([rk4_transition({}, gamma, origin, [v])[0] for v in vs])
truncated = np.array([jet.evaluate([v])[0] for v in vs])
print("\n   v      closed form     RK4 + inversion   jet (N=6)")
for row in zip(vs, exact, numeric, truncated):
    print("{:6.2f}  {:14.10f}  {:16.10f}  {:11.8f}".format(*row))
print("max relative RK4 error:", np.max(np.abs(numeric - exact) / np.maximum(np.abs(exact), 1e-300)))

# %% A non-constant connection
g = {(0, 0, 0): Poly.var(1, 0)}
p = (mpq(1, 2),)
print("\nexp_p for Gamma = x at p = 1/2:", geodesic_jet(g, p, 4).to_json()["0"])
print("value at v = 0.1, jet vs RK4:", geodesic_jet(g, p, 12).evaluate([0.1])[0], rk4_exp(g, p, [0.1])[0])
