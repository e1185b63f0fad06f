"""Lie point symmetries of the eikonal equations ``u_mu u_mu = c``, ``c in {0, 1}``.

Contractions over repeated Greek indices use the Minkowski metric
``diag(1, -1, ..., -1)``.  Partial derivatives of operator coefficients
(``xi^nu_mu = d xi^nu / d x_mu``) carry no metric factor.

An operator ``X = xi^mu d_mu + eta d_u`` is a symmetry when the prolonged
action on ``F = u_mu u_mu - c`` is a multiple of ``F``::

    X1 F = 2 zeta^mu u_mu = lambda * F,   lambda = lambda_0 + lambda^nu u_nu

The ``u_nu``-linear part of ``lambda`` is forced by the terms ``xi^nu_u``,
which make the residual cubic in the derivatives; for polynomial
coefficients the check is exact.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .algebra import Poly, base_names, jet_names, parse_poly

__all__ = [
    "EikonalProblem",
    "VectorField",
    "SampledField",
    "Prolongation1",
    "ResidualDecomposition",
    "SymmetryVerdict",
    "DiscreteMap",
    "FlowError",
    "prolong1",
    "invariance_residual",
    "is_symmetry",
    "sampled_symmetry_check",
    "flow_map",
    "discrete_catalog",
    "commutator",
    "symmeik1_catalog",
    "symmeik0_operator",
    "random_symmeik0",
    "negative_controls",
    "load_catalog",
    "dump_catalog",
]


@dataclass(frozen=True)
class EikonalProblem:
    n: int
    c: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one space variable")
        if self.c not in (0, 1):
            raise ValueError("right-hand side must be 0 or 1")

    @property
    def metric(self) -> tuple[int, ...]:
        return (1,) + (-1,) * self.n

    @property
    def nvars(self) -> int:
        return self.n + 2

    @property
    def jet_nvars(self) -> int:
        return 2 * self.n + 3

    @property
    def u_index(self) -> int:
        return self.n + 1

    def du_index(self, mu: int) -> int:
        return self.n + 2 + mu


@dataclass(frozen=True)
class VectorField:
    """``X = xi^mu d_mu + eta d_u`` with polynomial coefficients in (x, u)."""

    xi: tuple[Poly, ...]
    eta: Poly
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "xi", tuple(self.xi))
        nv = len(self.xi) + 1
        for p in self.components:
            if p.nvars != nv:
                raise ValueError(f"{self.name or 'field'}: component has nvars={p.nvars}, expected {nv}")

    @property
    def n(self) -> int:
        return len(self.xi) - 1

    @property
    def nvars(self) -> int:
        return len(self.xi) + 1

    @property
    def components(self) -> tuple[Poly, ...]:
        return self.xi + (self.eta,)

    @classmethod
    def from_components(cls, comps: Sequence[Poly], name: str = "") -> "VectorField":
        comps = list(comps)
        return cls(tuple(comps[:-1]), comps[-1], name)

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField.from_components([a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField.from_components([a - b for a, b in zip(self.components, other.components)])

    def __neg__(self) -> "VectorField":
        return VectorField.from_components([-a for a in self.components])

    def scale(self, c) -> "VectorField":
        return VectorField.from_components([a.scale(c) for a in self.components])

    def named(self, name: str) -> "VectorField":
        return VectorField(self.xi, self.eta, name)

    def apply(self, p: Poly) -> Poly:
        """Act on ``p(x, u)`` as a derivation."""
        out = Poly.zero(self.nvars)
        for i, coef in enumerate(self.components):
            if coef:
                out = out + coef * p.diff(i)
        return out

    def velocity(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return np.stack([c.evaluate(pts) for c in self.components], axis=-1)

    def format(self) -> dict:
        names = base_names(self.n)
        return {
            "name": self.name,
            "xi": [p.format(names) for p in self.xi],
            "eta": self.eta.format(names),
        }


def commutator(a: VectorField, b: VectorField) -> VectorField:
    """Lie bracket ``[a, b] = a b - b a``."""
    return VectorField.from_components([a.apply(q) - b.apply(p) for p, q in zip(a.components, b.components)])


@dataclass(frozen=True)
class Prolongation1:
    base: VectorField
    zeta: tuple[Poly, ...]


@dataclass(frozen=True)
class ResidualDecomposition:
    """``2 zeta^mu u_mu`` split by degree in the formal symbols ``u_mu``.

    ``Q`` (symmetric), ``L`` and ``C`` are polynomials in (x, u); ``cubic`` is
    the degree-three part kept as a jet-space polynomial.
    """

    n: int
    Q: tuple[tuple[Poly, ...], ...]
    L: tuple[Poly, ...]
    C: Poly
    cubic: Poly

    def total(self) -> Poly:
        nv = 2 * self.n + 3
        du = [Poly.var(self.n + 2 + m, nv) for m in range(self.n + 1)]
        out = self.cubic + self.C.extend(nv)
        for mu in range(self.n + 1):
            out = out + self.L[mu].extend(nv) * du[mu]
            for nu in range(self.n + 1):
                out = out + self.Q[mu][nu].extend(nv) * du[mu] * du[nu]
        return out


@dataclass(frozen=True)
class SymmetryVerdict:
    holds: bool
    multiplier: Poly | None
    violated: str | None
    decomposition: ResidualDecomposition

    def __bool__(self) -> bool:
        return self.holds


def _check_dims(fld: VectorField, problem: EikonalProblem):
    if fld.n != problem.n:
        raise ValueError(f"field has n={fld.n}, problem has n={problem.n}")


def prolong1(fld: VectorField, problem: EikonalProblem) -> Prolongation1:
    _check_dims(fld, problem)
    n, nv, ui = problem.n, problem.jet_nvars, problem.u_index
    xi = [p.extend(nv) for p in fld.xi]
    eta = fld.eta.extend(nv)
    du = [Poly.var(problem.du_index(m), nv) for m in range(n + 1)]
    eta_u = eta.diff(ui)
    xi_u_dot = Poly.zero(nv)
    for nu in range(n + 1):
        xi_u_dot = xi_u_dot + xi[nu].diff(ui) * du[nu]
    zeta = []
    for mu in range(n + 1):
        z = eta.diff(mu) + (eta_u - xi_u_dot) * du[mu]
        for nu in range(n + 1):
            z = z - xi[nu].diff(mu) * du[nu]
        zeta.append(z)
    return Prolongation1(fld, tuple(zeta))


def invariance_residual(prolonged: Prolongation1, problem: EikonalProblem) -> ResidualDecomposition:
    n, nv = problem.n, problem.jet_nvars
    g = problem.metric
    du_idx = [problem.du_index(m) for m in range(n + 1)]
    total = Poly.zero(nv)
    for mu in range(n + 1):
        total = total + prolonged.zeta[mu] * Poly.var(du_idx[mu], nv).scale(2 * g[mu])

    base = problem.nvars
    zero = Poly.zero(base)
    Q = [[zero] * (n + 1) for _ in range(n + 1)]
    L = [zero] * (n + 1)
    C = zero
    cubic = {}
    for key, coef in total.split(du_idx).items():
        deg = sum(key)
        if deg == 3:
            for e, c in coef.items():
                cubic[e[:base] + key] = c
            continue
        coef = coef.truncate(base)
        if deg == 0:
            C = coef
        elif deg == 1:
            L[key.index(1)] = coef
        elif deg == 2:
            if 2 in key:
                m = key.index(2)
                Q[m][m] = coef
            else:
                m, k = [i for i, e in enumerate(key) if e]
                half = coef.scale(Fraction(1, 2))
                Q[m][k] = half
                Q[k][m] = half
        else:
            raise AssertionError("residual of a first prolongation has degree <= 3")
    return ResidualDecomposition(n, tuple(tuple(r) for r in Q), tuple(L), C, Poly(nv, cubic))


def is_symmetry(fld: VectorField, problem: EikonalProblem) -> SymmetryVerdict:
    """Exact test that the prolonged residual vanishes on ``u_mu u_mu = c``.

    On success ``multiplier`` is the jet polynomial ``lambda``; on failure
    ``violated`` names the first component that breaks proportionality.
    """
    dec = invariance_residual(prolong1(fld, problem), problem)
    n, nv, base = problem.n, problem.jet_nvars, problem.nvars
    g = problem.metric
    du_idx = [problem.du_index(m) for m in range(n + 1)]

    # lambda^nu from the coefficient of u_0^2 u_nu (u_0^3 for nu = 0)
    groups = dec.cubic.split(du_idx)
    lam_lin = []
    for nu in range(n + 1):
        key = [0] * (n + 1)
        key[0] += 2
        key[nu] += 1
        coef = groups.get(tuple(key))
        lam_lin.append(coef.truncate(base) if coef is not None else Poly.zero(base))
    lam0 = dec.Q[0][0]

    def verdict(ok, name=None):
        mult = None
        if ok:
            mult = lam0.extend(nv)
            for nu in range(n + 1):
                mult = mult + lam_lin[nu].extend(nv) * Poly.var(du_idx[nu], nv)
        return SymmetryVerdict(ok, mult, name, dec)

    du = [Poly.var(i, nv) for i in du_idx]
    square = Poly.zero(nv)
    for mu in range(n + 1):
        square = square + (du[mu] * du[mu]).scale(g[mu])
    linear = Poly.zero(nv)
    for nu in range(n + 1):
        linear = linear + lam_lin[nu].extend(nv) * du[nu]
    if dec.cubic != linear * square:
        return verdict(False, "cubic")
    for mu in range(n + 1):
        for nu in range(mu, n + 1):
            expected = lam0.scale(g[mu]) if mu == nu else Poly.zero(base)
            if dec.Q[mu][nu] != expected:
                return verdict(False, f"Q[{mu},{nu}]")
    for mu in range(n + 1):
        if dec.L[mu] != lam_lin[mu].scale(-problem.c):
            return verdict(False, f"L[{mu}]")
    if dec.C != lam0.scale(-problem.c):
        return verdict(False, "C")
    return verdict(True)


# -- sampled check -------------------------------------------------------------


@dataclass(frozen=True)
class SampledField:
    """Operator with closed-form (not necessarily polynomial) coefficients.

    ``xi(x, u)`` returns shape ``(S, n+1)`` and ``eta(x, u)`` shape ``(S,)``
    for ``x`` of shape ``(S, n+1)``.  Without ``jacobian`` the derivatives
    are taken by complex-step differentiation, so the callables must accept
    complex input (numpy ufuncs do).  ``jacobian(x, u)`` if given returns
    ``(S, n+2, n+2)``: component index first, derivative variable second.
    """

    n: int
    xi: Callable
    eta: Callable
    jacobian: Callable | None = None
    name: str = ""

    def _components(self, x, u):
        xi = np.asarray(self.xi(x, u))
        eta = np.asarray(self.eta(x, u))
        return np.concatenate([xi, eta[:, None]], axis=1)

    def derivatives(self, x, u) -> np.ndarray:
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x, u), dtype=float)
        h = 1e-30
        S, N = x.shape
        out = np.empty((S, N + 1, N + 1))
        for var in range(N + 1):
            xc = x.astype(complex)
            uc = u.astype(complex)
            if var < N:
                xc[:, var] += 1j * h
            else:
                uc += 1j * h
            out[:, :, var] = self._components(xc, uc).imag / h
        return out


def _poly_derivatives(fld: VectorField, x, u) -> np.ndarray:
    pts = np.concatenate([x, u[:, None]], axis=1)
    comps = fld.components
    out = np.empty((len(u), len(comps), fld.nvars))
    for i, c in enumerate(comps):
        for var in range(fld.nvars):
            out[:, i, var] = c.diff(var).evaluate(pts)
    return out


def sampled_symmetry_check(fld, problem: EikonalProblem, samples: int = 1000, seed: int = 0,
                           scale: float = 2.0) -> float:
    """Max ``|X1 (u_mu u_mu)|`` over random points of the equation manifold.

    Coordinates, ``u`` and the spatial gradient are uniform on
    ``[-scale, scale]``; ``u_0 = sqrt(c + u_a u_a)`` closes the constraint.
    """
    _check_dims(fld, problem)
    n = problem.n
    rng = np.random.default_rng(seed)
    x = rng.uniform(-scale, scale, size=(samples, n + 1))
    u = rng.uniform(-scale, scale, size=samples)
    grad = np.empty((samples, n + 1))
    grad[:, 1:] = rng.uniform(-scale, scale, size=(samples, n))
    rad = problem.c + np.sum(grad[:, 1:] ** 2, axis=1)
    if np.any(rad < 0):
        raise ValueError("cannot place samples on the manifold")
    grad[:, 0] = np.sqrt(rad)

    if isinstance(fld, VectorField):
        jac = _poly_derivatives(fld, x, u)
    else:
        jac = fld.derivatives(x, u)
    ui = n + 1
    # zeta^mu = eta_mu + eta_u u_mu - xi^nu_mu u_nu - xi^nu_u u_mu u_nu
    eta_x = jac[:, ui, : n + 1]
    eta_u = jac[:, ui, ui]
    xi_x = jac[:, : n + 1, : n + 1]  # [s, nu, mu]
    xi_u = jac[:, : n + 1, ui]
    xi_u_dot = np.einsum("sn,sn->s", xi_u, grad)
    zeta = eta_x + (eta_u - xi_u_dot)[:, None] * grad - np.einsum("snm,sn->sm", xi_x, grad)
    g = np.array(problem.metric, dtype=float)
    res = 2.0 * np.einsum("m,sm,sm->s", g, zeta, grad)
    return float(np.max(np.abs(res)))


# -- flows ---------------------------------------------------------------------


class FlowError(RuntimeError):
    pass


def flow_map(fld, epsilon: float, points, steps: int = 64, max_local_error: float = 1e-9) -> np.ndarray:
    """Transport graph points ``(x_0..x_n, u)`` along ``X`` for time ``epsilon``.

    Classical RK4 with a fixed step.  Each step is compared against two half
    steps and the more accurate result is kept; a disagreement above
    ``max_local_error`` raises :class:`FlowError`.
    """
    if steps < 1:
        raise ValueError("steps must be positive")
    velocity = fld.velocity if isinstance(fld, VectorField) else fld
    y = np.array(points, dtype=float)
    if y.ndim == 1:
        y = y[None, :]
    h = epsilon / steps

    def rk4(z, dt):
        k1 = velocity(z)
        k2 = velocity(z + 0.5 * dt * k1)
        k3 = velocity(z + 0.5 * dt * k2)
        k4 = velocity(z + dt * k3)
        return z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    for step in range(steps):
        full = rk4(y, h)
        half = rk4(rk4(y, 0.5 * h), 0.5 * h)
        err = float(np.max(np.abs(full - half))) / 15.0 if y.size else 0.0
        if not np.isfinite(err) or err > max_local_error:
            raise FlowError(f"local error {err:.3g} exceeds {max_local_error:.3g} at step {step}")
        y = half + (half - full) / 15.0
    return y


# -- discrete symmetries ---------------------------------------------------------


@dataclass(frozen=True)
class DiscreteMap:
    """Point map acting on ``(x, u, grad u)``; works on float or Fraction arrays."""

    name: str
    action: Callable

    def apply(self, x, u, grad):
        return self.action(np.asarray(x), np.asarray(u), np.asarray(grad))


def _reflect(axis):
    def act(x, u, grad):
        x2, g2 = x.copy(), grad.copy()
        x2[..., axis] = -x2[..., axis]
        g2[..., axis] = -g2[..., axis]
        return x2, u.copy(), g2

    return act


def _swap(a, b):
    def act(x, u, grad):
        x2, g2 = x.copy(), grad.copy()
        x2[..., [a, b]] = x[..., [b, a]]
        g2[..., [a, b]] = grad[..., [b, a]]
        return x2, u.copy(), g2

    return act


def _u_reflect(x, u, grad):
    return x.copy(), -u, -grad


def _hodograph_swap(x, u, grad):
    # x'_1 = u, u' = x_1; u'_1 = 1/u_1, u'_mu = -u_mu/u_1 otherwise
    u1 = grad[..., 1]
    if np.any(u1 == 0):
        raise ValueError("hodograph swap needs u_1 != 0")
    x2 = x.copy()
    x2[..., 1] = u
    g2 = -grad / u1[..., None]
    g2[..., 1] = 1 / u1
    return x2, x[..., 1].copy(), g2


def discrete_catalog(problem: EikonalProblem) -> list[DiscreteMap]:
    maps = [DiscreteMap("T", _reflect(0))]
    maps += [DiscreteMap(f"P{a}", _reflect(a)) for a in range(1, problem.n + 1)]
    maps.append(DiscreteMap("U", _u_reflect))
    maps += [DiscreteMap(f"S{a}{a + 1}", _swap(a, a + 1)) for a in range(1, problem.n)]
    if problem.c == 1:
        maps.append(DiscreteMap("H1", _hodograph_swap))
    return maps


# -- catalogs ------------------------------------------------------------------


def _ring(n):
    nv = n + 2
    xs = [Poly.var(i, nv) for i in range(n + 1)]
    u = Poly.var(n + 1, nv)
    return nv, xs, u


def symmeik1_catalog(n: int) -> list[VectorField]:
    """Basis of the conformal algebra admitted by ``u_mu u_mu = 1``."""
    nv, xs, u = _ring(n)
    zero, one = Poly.zero(nv), Poly.const(1, nv)

    def vf(name, xi=None, eta=None):
        comps = [zero] * (n + 1)
        for i, p in (xi or {}).items():
            comps[i] = p
        return VectorField(tuple(comps), eta if eta is not None else zero, name)

    ops = [vf(f"P{m}", {m: one}) for m in range(n + 1)]
    ops.append(vf("Pu", eta=one))
    for a in range(1, n + 1):
        for b in range(a + 1, n + 1):
            ops.append(vf(f"J{a}{b}", {b: xs[a], a: -xs[b]}))
    for a in range(1, n + 1):
        ops.append(vf(f"J0{a}", {a: xs[0], 0: xs[a]}))
    ops.append(vf("Ju0", {0: u}, xs[0]))
    for a in range(1, n + 1):
        ops.append(vf(f"Ju{a}", {a: u}, -xs[a]))
    dil = {m: xs[m] for m in range(n + 1)}
    ops.append(vf("D", dil, u))
    s2 = xs[0] * xs[0] - u * u
    for a in range(1, n + 1):
        s2 = s2 - xs[a] * xs[a]
    for a in range(1, n + 1):
        xi = {m: (xs[a] * xs[m]).scale(2) for m in range(n + 1)}
        xi[a] = xi[a] + s2
        ops.append(vf(f"K{a}", xi, (xs[a] * u).scale(2)))
    ops.append(vf("Ku", {m: (u * xs[m]).scale(2) for m in range(n + 1)}, (u * u).scale(2) + s2))
    xi = {m: (xs[0] * xs[m]).scale(2) for m in range(n + 1)}
    xi[0] = xi[0] - s2
    ops.append(vf("K0", xi, (xs[0] * u).scale(2)))
    return ops


def negative_controls(n: int) -> list[VectorField]:
    nv, xs, _ = _ring(n)
    zero = Poly.zero(nv)
    ops = []
    for name, coef in (("x0P0", xs[0]), ("x1P0", xs[1])):
        comps = [zero] * (n + 1)
        comps[0] = coef
        ops.append(VectorField(tuple(comps), zero, name))
    return ops


def _lift_u(p: Poly, n: int) -> Poly:
    nv = n + 2
    if p.nvars == 1:
        return Poly(nv, {(0,) * (n + 1) + e: c for e, c in p.items()})
    if p.nvars != nv:
        raise ValueError("coefficient must be univariate in u or live in the (x, u) ring")
    if any(p.depends_on(i) for i in range(n + 1)):
        raise ValueError("coefficient must depend on u only")
    return p


def symmeik0_operator(n: int, c, b, d, a, eta, name: str = "") -> VectorField:
    """Member of the infinite family admitted by ``u_mu u_mu = 0``.

    ``c`` and ``a`` are length ``n+1``, ``b`` is ``(n+1) x (n+1)``; all
    entries are polynomials in ``u`` (univariate, or in the (x, u) ring).
    Only the antisymmetric part of ``b`` generates symmetries.
    """
    nv, xs, _ = _ring(n)
    g = (1,) + (-1,) * n
    c = [_lift_u(p, n) for p in c]
    a = [_lift_u(p, n) for p in a]
    b = [[_lift_u(p, n) for p in row] for row in b]
    d = _lift_u(d, n)
    eta = _lift_u(eta, n)
    cx = Poly.zero(nv)
    xx = Poly.zero(nv)
    for m in range(n + 1):
        cx = cx + (c[m] * xs[m]).scale(g[m])
        xx = xx + (xs[m] * xs[m]).scale(g[m])
    xi = []
    for beta in range(n + 1):
        comp = (cx * xs[beta]).scale(2) - xx * c[beta] + d * xs[beta] + a[beta]
        for m in range(n + 1):
            comp = comp + (b[m][beta] * xs[m]).scale(g[m])
        xi.append(comp)
    return VectorField(tuple(xi), eta, name)


def random_symmeik0(n: int, rng: np.random.Generator, degree: int = 3, name: str = "") -> VectorField:
    """Random instance with small rational coefficients of degree <= ``degree`` in u."""

    def rand_poly():
        coefs = rng.integers(-4, 5, size=degree + 1)
        dens = rng.integers(1, 5, size=degree + 1)
        return Poly(1, {(k,): Fraction(int(coefs[k]), int(dens[k])) for k in range(degree + 1)})

    c = [rand_poly() for _ in range(n + 1)]
    a = [rand_poly() for _ in range(n + 1)]
    zero = Poly.zero(1)
    b = [[zero] * (n + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        for j in range(i + 1, n + 1):
            p = rand_poly()
            b[i][j] = p
            b[j][i] = -p
    return symmeik0_operator(n, c, b, rand_poly(), a, rand_poly(), name)


# -- JSON catalog --------------------------------------------------------------


def dump_catalog(ops: Sequence[VectorField], problem: EikonalProblem, expect: str | Sequence[str] = "yes") -> dict:
    if isinstance(expect, str):
        expect = [expect] * len(ops)
    entries = []
    for op, ex in zip(ops, expect):
        entry = op.format()
        entry["expect"] = ex
        entries.append(entry)
    return {"n": problem.n, "c": problem.c, "operators": entries}


def load_catalog(source) -> tuple[EikonalProblem, list[tuple[VectorField, str]]]:
    """Read a catalog from a path or an already-decoded dict.

    Raises ``ValueError`` (including ``PolyParseError``) on malformed input.
    """
    if isinstance(source, (str, Path)):
        data = json.loads(Path(source).read_text())
    else:
        data = source
    try:
        problem = EikonalProblem(int(data["n"]), int(data.get("c", 1)))
        names = base_names(problem.n)
        ops = []
        for i, entry in enumerate(data["operators"]):
            xi = entry["xi"]
            if len(xi) != problem.n + 1:
                raise ValueError(f"operator {i}: expected {problem.n + 1} xi components")
            fld = VectorField(
                tuple(parse_poly(s, names) for s in xi),
                parse_poly(entry.get("eta", "0"), names),
                entry.get("name", f"op{i}"),
            )
            expect = entry.get("expect", "yes")
            if expect not in ("yes", "no"):
                raise ValueError(f"operator {i}: expect must be 'yes' or 'no'")
            ops.append((fld, expect))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed catalog: {exc}") from exc
    return problem, ops


def multiplier_text(verdict: SymmetryVerdict, n: int) -> str:
    if verdict.multiplier is None:
        return ""
    return verdict.multiplier.format(jet_names(n))
