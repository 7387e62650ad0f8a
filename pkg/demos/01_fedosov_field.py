"""Fedosov vector field of the two-dimensional solvable pair.

Run with ``python demos/01_fedosov_field.py``.
"""
from fedosov import FormalFunction, assemble_Q, shipped
from fedosov.functions import basis_functions

pres = shipped("solvable")
pair, conn = pres.pair, pres.connection1
print(f"pair: {pair.name}  (frame: b~ = 0, a = 1)")
print("connection:", conn)

# %% The correction term X
# X lives in filtration order >= 2.  For this pair its first piece is a single
# zeta (eta)^2 d/d eta term whose coefficient is fixed by the curvature.
q = assemble_Q(pair, conn, order=6)
print("\nX up to eta^6:")
print(" ", q.X)
print("quadratic piece:", q.X.homogeneous(2))

# %% Q squares to zero
# Q^2 is checked on every monomial whose symmetric degree leaves room for one
# more application of Q inside the truncation.
funcs = list(basis_functions(pair.shape, 6, 5))
print(f"\nchecking Q^2 = 0 on {len(funcs)} basis monomials ...", q.verify_Q_squared(funcs))

eta = FormalFunction.eta(pair.shape, 6, 0)
print("Q(eta)      =", q.apply(eta))
print("Q(Q(eta))   =", q.apply(q.apply(eta)).project(5) or 0)
