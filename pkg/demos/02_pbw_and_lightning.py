"""PBW map of a Lie pair with a nonabelian A, and what it says about Q.

Run with ``python demos/02_pbw_and_lightning.py``.
"""
from fedosov import PBW, PolySection, comultiply, shipped, verify_Q_equals_dL_lightning
from fedosov.enveloping import coalgebra_residual, tensor_map
from fedosov.functions import sym_upto

pres = shipped("sl2_borel")
pair = pres.pair
print(f"{pair.name}: rank L = {pair.rank}, rank B = {pair.r}")

P = PBW(pair, pres.connection2, 5, pres.splitting2)

# %% Images of the symmetric basis
# pbw(b^J) is a quotient class in U(L)/U(L)Gamma(A); only words that do not end
# in an A-letter survive.
for j in sym_upto(pair.r, 3):
    print(f"  pbw(b^{list(j)}) = {P.basis(j)}")

# %% pbw is a coalgebra map
s = PolySection.basis(pair.r, (3,))
lhs = comultiply(P(s))
rhs = tensor_map(P.basis, P.basis, comultiply(s), pair.shape)
print("\nDelta(pbw(b^3)) == (pbw x pbw)(Delta b^3):", lhs == rhs)
bad = [j for j in sym_upto(pair.r, 5) if coalgebra_residual(P, j)]
print("coalgebra residuals up to degree 5:", bad or "none")

# %% The Kapranov action of A
for a in range(pair.r, pair.rank):
    print(f"  rho_{a}(b) = {P.kapranov_action(a, PolySection.letter(pair.r, 0))}")

# %% Q against the lightning covariant derivative
rep = verify_Q_equals_dL_lightning(pair, pres.connection2, 5, splitting=pres.splitting2)
print("\nQ = d_L^lightning through order 5:", rep["ok"])
