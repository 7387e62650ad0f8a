"""Verification suites behind the command-line front-end, and the JSON report they produce."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

from gmpy2 import mpq
from pathlib import Path
from typing import Callable, Dict, List, Optional

from .coefficients import CoefficientError, Poly, Rational, parse_rational, rational_to_str
from .enveloping import (PBW, coalgebra_residual, coderivation_residual, flatness_residual,
                         verify_Q_equals_dL_lightning)
from .fedosov import Contraction, assemble_Q, contraction_for, h_natural, homotopy_residual
from .functions import FormalFunction, PolySection, basis_functions, ff_mul, sym_upto
from .geodesic import (GeodesicError, check_symmetric, closed_form_transition_1d, compare_with_pbw,
                       parse_christoffel, rk4_transition, transition_jet)
from .liepair import (Connection, LiePair, Presentation, PresentationError, TorsionError, bott_check,
                      cE_differential, covariant_derivative_functions, curvature, dual_connection_eta,
                      is_torsion_free, presentation_to_dict, validate)
from .operators import (dual_of_coalgebra_map, exp_field, linear_slice_is_identity, log_from_fedosov,
                        log_phi, operator_homotopy_residuals, solve_phi)
from .presentations import resolve

log = logging.getLogger("fedosov")

COMMANDS = ("validate", "fedosov", "pbw", "phi", "log", "geodesic", "verify-all")

# Every check name maps to the identity it certifies.  Keys ending in a dot take a ".1"/".2" suffix.
TAGS: Dict[str, str] = {
    "antisymmetry": "c_uv^w = -c_vu^w",
    "jacobi": "[u,[v,w]] + [v,[w,u]] + [w,[u,v]] = 0",
    "a_closure": "[Gamma(A), Gamma(A)] in Gamma(A)",
    "anchor": "rho([u,v]) = [rho(u), rho(v)]",
    "d_L_squared": "d_L o d_L = 0",
    "torsion_free.": "T^nabla = 0",
    "bott.": "nabla_a p(l) = p([a,l])",
    "curvature.": "d_L^nabla o d_L^nabla = R^nabla",
    "homotopy_functions.": "kh + hk = id - sigma0",
    "gauge.": "h_nat(X) = 0",
    "filtration.": "X in L^v (x) S^{>=2}B^v (x) B",
    "Q_squared.": "Q o Q = 0",
    "pbw_roundtrip.": "pbw^{-1} o pbw = id",
    "coalgebra.": "Delta o pbw = (pbw (x) pbw) o Delta",
    "lightning_flat.": "[nabla_u, nabla_v] = nabla_[u,v] (lightning)",
    "kapranov_coderivation.": "Delta o rho_a = (rho_a (x) 1 + 1 (x) rho_a) o Delta",
    "Q_equals_d_lightning.": "Q = d_L^{nabla lightning}",
    "fixed_point": "phi = 1 + h_nat eth(phi)",
    "intertwining": "phi o Q2 = Q1 o phi",
    "uniqueness": "phi is independent of the contraction",
    "multiplicative": "phi(fg) = phi(f) phi(g)",
    "linear_slice": "pr_1 phi = id on B^v",
    "pbw_formula": "<phi(f), theta> = <f, pbw2^{-1} pbw1(theta)>",
    "operator_homotopy": "delta h + h delta = id - sigma0, delta^2 = h^2 = 0, h delta h = h",
    "log_backends": "log via degreewise recursion = log via operator series",
    "log_fedosov_series": "Y = sum (-1)^{k+1}/k T_{n1}...T_{nk}",
    "exp_log": "exp(log phi) = phi",
    "geodesic_vs_pbw": "exp_2^{-1} exp_1 = pbw_2^{-1} pbw_1",
    "geodesic_vs_phi": "exp_2^{-1} exp_1 = e^Y",
    "pbw_vs_phi": "pbw_2^{-1} pbw_1 = e^Y",
    "closed_form": "exp_2^{-1} exp_1 = (e^{cv} - 1)/c",
    "rk4": "RK4 + numerical inversion matches the exact jet",
}


class InputError(ValueError):
    """Bad configuration or a presentation that fails its preconditions (exit status 2)."""


def tag_for(name: str) -> str:
    if name in TAGS:
        return TAGS[name]
    head = name.rsplit(".", 1)[0] + "."
    return TAGS[head]


def _jsonable(x):
    if isinstance(x, FormalFunction):
        return x.to_records()
    if isinstance(x, (Fraction, Rational)):
        return rational_to_str(x)
    if isinstance(x, tuple):
        return list(x)
    return x


def check(name: str, failures: List, witness: Callable | None = None) -> dict:
    """A named check; ``failures`` lists offending items, the first becomes the witness."""
    out = {"name": name, "tag": tag_for(name), "status": "pass" if not failures else "fail",
           "residual": len(failures)}
    if failures:
        first = failures[0]
        out["witness"] = witness(first) if witness else _jsonable(first)
    return out


@dataclass
class Report:
    command: str
    inputs: dict
    checks: List[dict] = field(default_factory=list)
    results: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c["status"] == "pass" for c in self.checks)

    @property
    def inputs_digest(self) -> str:
        blob = json.dumps(self.inputs, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def payload(self) -> dict:
        return {
            "command": self.command,
            "inputs_digest": self.inputs_digest,
            "status": "pass" if self.ok else "fail",
            "checks": self.checks,
            "results": self.results,
        }

    def to_json(self) -> str:
        return json.dumps(self.payload(), sort_keys=True, indent=2) + "\n"

    def summary(self) -> str:
        lines = [f"{c['status'].upper():4}  {c['name']:<28} {c['tag']}" for c in self.checks]
        lines.append(f"{self.command}: {'pass' if self.ok else 'FAIL'} ({len(self.checks)} checks)")
        return "\n".join(lines)


@dataclass
class RunConfig:
    command: str
    config: Optional[str] = None
    order: Optional[int] = None
    splitting: int = 1
    report: Optional[str] = None
    json: bool = False
    verbosity: int = 0
    connection1: Optional[str] = None
    connection2: Optional[str] = None
    point: Optional[str] = None


# ---------------------------------------------------------------------------------------
# shared state for one run


class Context:
    """Lazily computed objects shared between suites of one run."""

    def __init__(self, pres: Presentation, order: int, splitting: int = 1):
        self.pres = pres
        self.pair: LiePair = pres.pair
        self.order = order
        self.splitting = splitting

    def connection(self, k) -> Connection:
        return self.pres.connection(k)

    def contraction(self, k) -> Contraction:
        return contraction_for(self.pair, self.pres.splitting(k))

    @cached_property
    def Q(self):
        return {k: assemble_Q(self.pair, self.connection(k), order=self.order, splitting=self.pres.splitting(k))
                for k in (1, 2)}

    @cached_property
    def pbw(self):
        return {k: PBW(self.pair, self.connection(k), self.order, self.pres.splitting(k)) for k in (1, 2)}

    @cached_property
    def solution(self):
        return solve_phi(self.Q[1], self.Q[2], self.contraction(self.splitting))

    @cached_property
    def log_Y(self):
        return log_phi(self.solution.phi, backend="iteration")


def _records(f):
    return f.to_records()


def _with_input(item):
    f, res = item
    return {"input": f.to_records(), "residual": res.to_records()}


# ---------------------------------------------------------------------------------------
# suites


def suite_validate(ctx: Context) -> List[dict]:
    p = ctx.pair
    rep = validate(p)
    out = []
    for kind in ("antisymmetry", "jacobi", "a_closure", "anchor"):
        bad = [{"frames": i["frames"], "detail": i["detail"]} for i in rep.issues if i["check"] == kind]
        out.append(check(kind, bad))
    if not rep.ok:
        return out
    shape = p.shape
    coeffs = [shape.coeff(1)]
    if shape.chart_dim:
        coeffs += [Poly.var(shape.chart_dim, mu) for mu in range(shape.chart_dim)]
        coeffs += [Poly.var(shape.chart_dim, mu, 2) for mu in range(shape.chart_dim)]
    bad = []
    for f in basis_functions(shape, 0):
        for c in coeffs:
            g = f.map_coefficients(lambda x, c=c: x * c)
            if cE_differential(p, cE_differential(p, g)):
                bad.append(g)
    out.append(check("d_L_squared", bad, _records))
    for k in (1, 2):
        conn = ctx.connection(k)
        tf = is_torsion_free(p, conn)
        out.append(check(f"torsion_free.{k}", [] if tf else [f"connection{k}"]))
        try:
            bott = bott_check(p, conn)
        except TorsionError:
            bott = [f"connection{k} has torsion"]
        out.append(check(f"bott.{k}", bott))
        order = max(ctx.order, 1)
        R = curvature(p, conn, order)
        bad = []
        for j in range(p.r):
            dd = covariant_derivative_functions(p, conn, dual_connection_eta(p, conn, order, j))
            if dd != R.components[j]:
                bad.append({"component": j, "difference": (dd - R.components[j]).to_records()})
        out.append(check(f"curvature.{k}", bad))
    return out


def suite_fedosov(ctx: Context) -> List[dict]:
    out = []
    for k in (1, 2):
        ctr = ctx.contraction(k)
        bad = [(f, r) for f in basis_functions(ctx.pair.shape, ctx.order) for r in [homotopy_residual(f, ctr)] if r]
        out.append(check(f"homotopy_functions.{k}", bad, _with_input))
        q = ctx.Q[k]
        gauge = h_natural(q.X, ctr)
        out.append(check(f"gauge.{k}", [] if gauge.is_zero() else [gauge.to_records()]))
        fo = q.X.filtration_order()
        out.append(check(f"filtration.{k}", [] if fo >= 2 else [f"filtration order {fo}"]))
        out.append(check(f"Q_squared.{k}", q.square_residuals(), _with_input))
    return out


def results_fedosov(ctx: Context) -> dict:
    return {f"X{k}": ctx.Q[k].X.to_records() for k in (1, 2)}


def suite_pbw(ctx: Context) -> List[dict]:
    p, n = ctx.pair, ctx.order
    r, chart = p.r, p.shape.chart_dim
    out = []
    for k in (1, 2):
        P = ctx.pbw[k]
        bad = []
        for j in sym_upto(r, n):
            if P.inverse(P.basis(j)) != PolySection.basis(r, j, chart, p.shape.coeff(1)):
                bad.append({"J": list(j)})
        out.append(check(f"pbw_roundtrip.{k}", bad))
        bad = [{"J": list(j)} for j in sym_upto(r, n) if coalgebra_residual(P, j)]
        out.append(check(f"coalgebra.{k}", bad))
        bad = []
        for j in sym_upto(r, n - 2):
            s = PolySection.basis(r, j, chart, p.shape.coeff(1))
            for u in range(p.rank):
                for v in range(u + 1, p.rank):
                    if flatness_residual(P, u, v, s):
                        bad.append({"u": u, "v": v, "J": list(j)})
        out.append(check(f"lightning_flat.{k}", bad))
        bad = [{"a": a, "J": list(j)} for a in range(r, p.rank) for j in sym_upto(r, n - 1)
               if coderivation_residual(P, a, j)]
        out.append(check(f"kapranov_coderivation.{k}", bad))
        rep = verify_Q_equals_dL_lightning(p, ctx.connection(k), n, ctx.pres.splitting(k), Q=ctx.Q[k])
        out.append(check(f"Q_equals_d_lightning.{k}", rep["mismatches"]))
    return out


def results_pbw(ctx: Context) -> dict:
    r = ctx.pair.r
    return {f"pbw{k}": [{"J": list(j), "image": ctx.pbw[k].basis(j).to_records()} for j in sym_upto(r, ctx.order)]
            for k in (1, 2)}


def _multiplicative_failures(phi, shape, order):
    bad = []
    monos = [m for m in basis_functions(shape, order) if not any(i for (i, _j) in m.terms)]
    for a in monos:
        for b in monos:
            if phi.apply(ff_mul(a, b)) != ff_mul(phi.apply(a), phi.apply(b)):
                bad.append((a, b))
    return bad


def suite_phi(ctx: Context) -> List[dict]:
    sol = ctx.solution
    p, n = ctx.pair, ctx.order
    out = [check("fixed_point", [] if sol.fixed_point_residual().is_zero() else ["phi != 1 + h_nat eth(phi)"]),
           check("intertwining", sol.intertwining_residuals(), _with_input)]
    other = 2 if ctx.splitting == 1 else 1
    alt = solve_phi(ctx.Q[1], ctx.Q[2], ctx.contraction(other))
    out.append(check("uniqueness", [] if alt.phi == sol.phi else [f"splitting {other} contraction gives another phi"]))
    out.append(check("linear_slice", [] if linear_slice_is_identity(sol.phi) else ["pr_1 phi != id"]))
    out.append(check("multiplicative", _multiplicative_failures(sol.phi, p.shape, n),
                     lambda ab: [ab[0].to_records(), ab[1].to_records()]))
    p1, p2 = ctx.pbw[1], ctx.pbw[2]
    dual = dual_of_coalgebra_map(lambda j: p2.inverse(p1.basis(j)), p.shape, n)
    out.append(check("pbw_formula", [] if dual == sol.phi else ["dual of pbw2^{-1} pbw1 differs from phi"]))
    res = operator_homotopy_residuals(sol.phi, ctx.contraction(ctx.splitting))
    out.append(check("operator_homotopy", [k for k, v in sorted(res.items()) if not v.is_zero()]))
    return out


def results_phi(ctx: Context) -> dict:
    return {"phi": ctx.solution.phi.to_records(), "iterations": ctx.solution.iterations,
            "delta_Q": ctx.solution.delta_Q.to_records()}


def suite_log(ctx: Context) -> List[dict]:
    sol = ctx.solution
    y = ctx.log_Y
    ys = log_phi(sol.phi, backend="series")
    yf = log_from_fedosov(sol)
    return [
        check("log_backends", [] if y == ys else ["recursion and series disagree"]),
        check("log_fedosov_series", [] if y == yf else ["series in h_nat eth applied to h_nat(dQ) disagrees"]),
        check("exp_log", [] if exp_field(y) == sol.phi else ["exp(log phi) != phi"]),
    ]


def results_log(ctx: Context) -> dict:
    return {"Y": ctx.log_Y.to_records()}


# ---------------------------------------------------------------------------------------
# geodesic comparison


def is_tangent(pair: LiePair) -> bool:
    """``(T_M, 0)`` in the coordinate frame."""
    n = pair.shape.chart_dim
    if n is None or pair.ra != 0 or pair.r != n or pair.bracket:
        return False
    return all(pair.anchor.get(u, {}) == {u: Poly.const(n, 1)} for u in range(n))


def christoffel_to_connection(gamma) -> Connection:
    conn: Dict = {}
    for (k, i, j), c in gamma.items():
        if c:
            conn.setdefault((i, j), {})[k] = c
    return Connection(conn)


def _parse_connection_flag(value: str, n: int):
    path = Path(value)
    if path.suffix == ".json" or path.exists():
        if not path.exists():
            raise InputError(f"{value}: no such file")
        data = json.loads(path.read_text())
    elif value.lstrip().startswith("{"):
        data = json.loads(value)
    else:
        data = value
    return parse_christoffel(data, n)


def _parse_point(text: str):
    return tuple(parse_rational(t) for t in text.replace(" ", "").split(",") if t)


def suite_geodesic(conn1: Connection, conn2: Connection, point, order: int) -> (List[dict], dict):
    from .geodesic import christoffel_from_connection

    n = len(point)
    g1, g2 = christoffel_from_connection(conn1, n), christoffel_from_connection(conn2, n)
    check_symmetric(g1, n)
    check_symmetric(g2, n)
    rep = compare_with_pbw(conn1, conn2, point, order, n)
    out = []
    for a, b in (("geodesic_jet", "pbw"), ("geodesic_jet", "phi"), ("pbw", "phi")):
        name = {"pbw": "geodesic_vs_pbw", "phi": "geodesic_vs_phi"}[b] if a == "geodesic_jet" else "pbw_vs_phi"
        bad = [m for m in rep["mismatches"] if m["pair"] == [a, b]]
        out.append(check(name, bad))
    out.append(check("exp_log", [] if rep["exp_of_log_matches_phi"] else ["exp(log phi) != phi"]))
    results = {"pipelines": rep["pipelines"]}
    if n == 1 and not g1 and all(c.degree() <= 0 for c in g2.values()):
        c = next(iter(g2.values())).evaluate([0]) if g2 else mpq(0)
        if c:
            jet = transition_jet(g1, g2, point, order)
            closed = closed_form_transition_1d(c, order)
            bad = [{"k": k, "value": str(jet.coefficient(0, (k,))), "expected": str(closed.coefficient(0, (k,)))}
                   for k in range(1, order + 1) if jet.coefficient(0, (k,)) != closed.coefficient(0, (k,))]
            out.append(check("closed_form", bad))
    # floating-point sanity layer, a few sample directions inside |v| <= 0.1
    jet = transition_jet(g1, g2, point, order)
    samples = [[0.05 * (1 if i % 2 == 0 else -1) / (i + 1) for i in range(n)], [0.02] * n]
    bad = []
    for v in samples:
        exact = jet.evaluate(v)
        numeric = rk4_transition(g1, g2, point, v)
        err = float(max(abs(exact - numeric)))
        scale = float(max(abs(numeric)))
        # truncating the jet at order N leaves an O(|v|^{N+1}) tail; compare at that scale too
        tol = max(1e-8 * scale, 10 * (max(abs(x) for x in v) ** (order + 1)))
        if err > tol:
            bad.append({"v": v, "abs_error": f"{err:.3e}"})
    out.append(check("rk4", bad))
    return out, results


# ---------------------------------------------------------------------------------------
# dispatch


def _load(cfg: RunConfig) -> Presentation:
    if not cfg.config:
        raise InputError("--config is required for this command")
    try:
        return resolve(cfg.config)
    except (PresentationError, CoefficientError, json.JSONDecodeError) as exc:
        raise InputError(str(exc)) from exc


def _require_valid(ctx: Context):
    rep = validate(ctx.pair)
    if not rep.ok:
        first = rep.issues[0]
        raise InputError(f"presentation fails validation: {first['check']} at frames {first['frames']}")
    for k in (1, 2):
        if not is_torsion_free(ctx.pair, ctx.connection(k)):
            raise InputError(f"connection{k} has nonzero torsion")


SUITES = {
    "fedosov": (suite_fedosov, results_fedosov),
    "pbw": (suite_pbw, results_pbw),
    "phi": (suite_phi, results_phi),
    "log": (suite_log, results_log),
}


def run(cfg: RunConfig) -> Report:
    if cfg.command not in COMMANDS:
        raise InputError(f"unknown command {cfg.command!r}")
    if cfg.splitting not in (1, 2):
        raise InputError("--splitting must be 1 or 2")
    if cfg.command == "geodesic" and (cfg.connection1 is not None or cfg.connection2 is not None):
        return _run_geodesic_flags(cfg)
    pres = _load(cfg)
    order = cfg.order if cfg.order is not None else pres.order
    if order < 0:
        raise InputError("--order must be nonnegative")
    if cfg.command not in ("validate", "pbw") and order < 2:
        raise InputError("this command needs truncation order N >= 2")
    inputs = {"presentation": presentation_to_dict(pres), "order": order, "splitting": cfg.splitting,
              "command": cfg.command}
    report = Report(cfg.command, inputs)
    ctx = Context(pres, order, cfg.splitting)
    if cfg.command == "validate":
        report.checks = suite_validate(ctx)
        return report
    _require_valid(ctx)
    if cfg.command == "geodesic":
        if not is_tangent(ctx.pair):
            raise InputError("geodesic needs a (T_M, 0) presentation in the coordinate frame")
        point = pres.base_point or tuple(mpq(0) for _ in range(ctx.pair.r))
        report.checks, report.results = suite_geodesic(pres.connection1, pres.connection2, point, order)
        return report
    names = list(SUITES) if cfg.command == "verify-all" else [cfg.command]
    if cfg.command == "verify-all":
        report.checks.extend(suite_validate(ctx))
    for name in names:
        suite, results = SUITES[name]
        log.info("running %s suite", name)
        report.checks.extend(suite(ctx))
        if cfg.command != "verify-all":
            report.results = results(ctx)
    if cfg.command == "verify-all" and is_tangent(ctx.pair):
        point = pres.base_point or tuple(mpq(0) for _ in range(ctx.pair.r))
        checks, _ = suite_geodesic(pres.connection1, pres.connection2, point, order)
        report.checks.extend(checks)
    return report


def _run_geodesic_flags(cfg: RunConfig) -> Report:
    if cfg.point:
        point = _parse_point(cfg.point)
    else:
        point = (mpq(0),)
    n = len(point)
    order = cfg.order if cfg.order is not None else 6
    if order < 2:
        raise InputError("geodesic needs truncation order N >= 2")
    try:
        g1 = _parse_connection_flag(cfg.connection1 or "0", n)
        g2 = _parse_connection_flag(cfg.connection2 or "0", n)
        check_symmetric(g1, n)
        check_symmetric(g2, n)
    except (GeodesicError, CoefficientError, json.JSONDecodeError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    conn1, conn2 = christoffel_to_connection(g1), christoffel_to_connection(g2)
    inputs = {"command": "geodesic", "order": order, "point": [str(x) for x in point],
              "connection1": sorted([list(k), str(v)] for k, v in g1.items()),
              "connection2": sorted([list(k), str(v)] for k, v in g2.items())}
    report = Report("geodesic", inputs)
    report.checks, report.results = suite_geodesic(conn1, conn2, point, order)
    return report
