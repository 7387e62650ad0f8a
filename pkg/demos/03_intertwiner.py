"""Comparing two Fedosov fields: the intertwiner phi, its logarithm, and pushforwards.

Run with ``python demos/03_intertwiner.py``.
"""
from fedosov import FormalFunction, assemble_Q, exp_field, log_phi, pushforward_polydiff, shipped, solve_phi
from fedosov.fedosov import contraction_for
from fedosov.operators import log_from_fedosov

N = 5
pres = shipped("solvable")
pair = pres.pair
q1 = assemble_Q(pair, pres.connection1, order=N)
q2 = assemble_Q(pair, pres.connection2, order=N)

# %% The fixed-point solve
sol = solve_phi(q1, q2)
print(f"phi stabilized after {sol.iterations} sweeps")
print("phi =", sol.phi)
print("fixed-point residual:", sol.fixed_point_residual() or 0)
print("phi Q2 - Q1 phi on monomials below degree N:", len(sol.intertwining_residuals()), "failures")

# the other splitting's homotopy lands on the same operator
other = solve_phi(q1, q2, contraction_for(pair, pres.splitting2)).phi
print("same phi from the second homotopy:", other.to_records() == sol.phi.to_records())

# %% phi is the exponential of a vertical vector field
y = log_phi(sol.phi)  # both backends, cross-checked
print("\nY = log phi =", y)
print("exp(Y) == phi:", exp_field(y) == sol.phi)
print("series built from the Fedosov data agrees:", log_from_fedosov(sol) == y)

eta = FormalFunction.eta(pair.shape, N, 0)
print("phi(eta) =", sol.phi.apply(eta))

# %% Pushing a polydifferential operator forward along phi
# phi_*(eta (x) d (x) d^2) splits into a leading part and a remainder that
# sits strictly deeper in the filtration.
out = pushforward_polydiff(y, (1,), [(1,), (2,)])
print("\nremainder filtration order:", out["remainder"].filtration_order(), "(needs > 1)")
print("psi^-1 of the two derivative slots:", out["psi_inverse"])
