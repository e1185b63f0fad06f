"""Exact solutions of ``u_mu u_mu = 1`` from the rank-parameterised general solution.

For Hessian rank ``k`` (``1 <= k <= n``) a solution is the envelope over
parameters ``tau_1..tau_k`` of::

    u(x; tau) = -x_b tau_b + x_0 R + w_m x_{k+m} + Psi(tau),
    R = sqrt(1 + tau_d tau_d + w_m w_m),

with ``w_m(tau)`` and ``Psi(tau)`` polynomials.  At a stationary point
``du/dtau = 0`` the gradient is ``u_0 = R``, ``u_b = -tau_b``,
``u_{k+m} = w_m`` and satisfies the equation identically.  Rank 0 solutions
are the planes ``u = c_mu x_mu + c0`` with ``c_mu c_mu = 1``.

The two-variable Euclidean equation ``u_1^2 + u_2^2 = 1`` has the analogous
one-parameter family ``u = x_1 tau + x_2 sqrt(1 - tau^2) + Psi(tau)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .algebra import Poly, parse_poly, tau_names
from .grid import GridField, central_gradient

__all__ = [
    "Rank0Solution",
    "ParametricSolution",
    "Euclid2Solution",
    "EnvelopeRoot",
    "DegenerateEnvelopeError",
    "eval_rank0",
    "stationarity",
    "solve_envelope",
    "solve_envelope_many",
    "eval_euclid2",
    "eval_euclid2_many",
    "envelope_gradient",
    "envelope_residual",
    "residual",
    "select_branch",
    "sample_branch",
]

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
DEDUP_RADIUS = 1e-8
MAX_ROOTS = 64
DEFAULT_BOX = (-5.0, 5.0)
DEFAULT_GRID = 7


class DegenerateEnvelopeError(RuntimeError):
    pass


@dataclass(frozen=True)
class Rank0Solution:
    c: tuple[float, ...]
    c0: float = 0.0

    def __post_init__(self):
        c = tuple(float(v) for v in self.c)
        object.__setattr__(self, "c", c)
        norm = c[0] ** 2 - sum(v * v for v in c[1:])
        if abs(norm - 1.0) > 1e-14:
            raise ValueError(f"c_mu c_mu = {norm!r}, expected 1")

    @property
    def gradient(self) -> np.ndarray:
        g = np.array(self.c)
        g[1:] = -g[1:]
        return g


def eval_rank0(s: Rank0Solution, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    u = x @ s.gradient + s.c0
    return float(u) if np.ndim(u) == 0 else u


@dataclass(frozen=True)
class EnvelopeRoot:
    tau: tuple[float, ...]
    u: float
    converged: bool
    newton_iters: int
    branch_id: int
    stationarity_norm: float = 0.0


def _jet_polys(p: Poly):
    k = p.nvars
    grad = [p.diff(b) for b in range(k)]
    hess = [[grad[b].diff(c) for c in range(k)] for b in range(k)]
    return p, grad, hess


def _eval_jet(polys, tau):
    p, grad, hess = polys
    B, k = tau.shape
    val = p.evaluate(tau)
    g = np.empty((B, k))
    h = np.empty((B, k, k))
    for b in range(k):
        g[:, b] = grad[b].evaluate(tau)
        for c in range(b, k):
            h[:, b, c] = hess[b][c].evaluate(tau)
            h[:, c, b] = h[:, b, c]
    return val, g, h


@dataclass(frozen=True)
class ParametricSolution:
    """Rank-``k`` envelope family in ``n`` space variables."""

    n: int
    k: int
    psi: Poly
    w: tuple[Poly, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(self.w))
        if not 1 <= self.k <= self.n:
            raise ValueError("rank must satisfy 1 <= k <= n")
        if len(self.w) != self.n - self.k:
            raise ValueError(f"need {self.n - self.k} reduction functions w, got {len(self.w)}")
        for p in (self.psi,) + self.w:
            if p.nvars != self.k:
                raise ValueError(f"Psi and w must be polynomials in {self.k} parameters")

    @classmethod
    def from_strings(cls, n: int, k: int, psi: str, w: Sequence[str] = ()) -> "ParametricSolution":
        names = tau_names(k)
        return cls(n, k, parse_poly(psi, names), tuple(parse_poly(s, names) for s in w))

    @cached_property
    def _jets(self):
        return _jet_polys(self.psi), [_jet_polys(p) for p in self.w]

    def _functions(self, tau):
        psi_jet, w_jets = self._jets
        B, k = tau.shape
        m = len(w_jets)
        W = np.empty((B, m))
        Wg = np.empty((B, m, k))
        Wh = np.empty((B, m, k, k))
        for i, jet in enumerate(w_jets):
            W[:, i], Wg[:, i], Wh[:, i] = _eval_jet(jet, tau)
        P, Pg, Ph = _eval_jet(psi_jet, tau)
        return W, Wg, Wh, P, Pg, Ph

    def value(self, x, tau) -> np.ndarray:
        """``u(x; tau)`` before elimination of ``tau``; batched over rows."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        tau = np.atleast_2d(np.asarray(tau, dtype=float))
        W, _, _, P, _, _ = self._functions(tau)
        k = self.k
        R = np.sqrt(1.0 + np.sum(tau**2, axis=1) + np.sum(W**2, axis=1))
        return -np.sum(x[:, 1 : k + 1] * tau, axis=1) + x[:, 0] * R + np.sum(W * x[:, k + 1 :], axis=1) + P

    def system(self, x, tau):
        """Stationarity ``S_b = du/dtau_b`` and its Jacobian, batched over rows."""
        k = self.k
        W, Wg, Wh, P, Pg, Ph = self._functions(tau)
        x0 = x[:, 0]
        xb = x[:, 1 : k + 1]
        R = np.sqrt(1.0 + np.sum(tau**2, axis=1) + np.sum(W**2, axis=1))
        A = tau.copy()
        Abc = np.broadcast_to(np.eye(k), (len(tau), k, k)).copy()
        extra_S = Pg
        extra_J = Ph
        if W.shape[1]:
            xw = x[:, k + 1 :]
            A += np.einsum("bm,bmk->bk", W, Wg)
            Abc += np.einsum("bmi,bmj->bij", Wg, Wg) + np.einsum("bm,bmij->bij", W, Wh)
            extra_S = extra_S + np.einsum("bmk,bm->bk", Wg, xw)
            extra_J = extra_J + np.einsum("bmij,bm->bij", Wh, xw)
        S = -xb + (x0 / R)[:, None] * A + extra_S
        outer = A[:, :, None] * A[:, None, :]
        J = x0[:, None, None] * (Abc / R[:, None, None] - outer / (R**3)[:, None, None]) + extra_J
        return S, J

    def gradient(self, tau) -> np.ndarray:
        """Gradient ``(u_0, ..., u_n)`` at stationary parameters (envelope identities)."""
        tau = np.atleast_2d(np.asarray(tau, dtype=float))
        W, *_ = self._functions(tau)
        R = np.sqrt(1.0 + np.sum(tau**2, axis=1) + np.sum(W**2, axis=1))
        return np.concatenate([R[:, None], -tau, W], axis=1)


@dataclass(frozen=True)
class Euclid2Solution:
    """``u = x_1 tau + x_2 sqrt(1 - tau^2) + Psi(tau)`` for ``u_1^2 + u_2^2 = 1``."""

    psi: Poly

    def __post_init__(self):
        if self.psi.nvars != 1:
            raise ValueError("Psi must be univariate")

    k = 1
    n = 1

    @cached_property
    def _jet(self):
        return _jet_polys(self.psi)

    def value(self, x, tau) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        t = np.atleast_2d(np.asarray(tau, dtype=float))[:, 0]
        return x[:, 0] * t + x[:, 1] * np.sqrt(1.0 - t * t) + self.psi.evaluate(t[:, None])

    def system(self, x, tau):
        t = tau[:, 0]
        inside = np.abs(t) < 1.0
        tt = np.where(inside, t, 0.0)
        q = np.sqrt(1.0 - tt * tt)
        _, pg, ph = _eval_jet(self._jet, tt[:, None])
        S = x[:, 0] - x[:, 1] * tt / q + pg[:, 0]
        J = -x[:, 1] / q**3 + ph[:, 0, 0]
        S = np.where(inside, S, np.nan)
        return S[:, None], J[:, None, None]

    def gradient(self, tau) -> np.ndarray:
        t = np.atleast_2d(np.asarray(tau, dtype=float))[:, 0]
        return np.stack([t, np.sqrt(1.0 - t * t)], axis=1)


def stationarity(s: ParametricSolution | Euclid2Solution, x, tau):
    """Return ``(S, J)`` at a single point and parameter vector."""
    x = np.asarray(x, dtype=float)[None, :]
    tau = np.asarray(tau, dtype=float).reshape(1, -1)
    S, J = s.system(x, tau)
    return S[0], J[0]


# -- multistart damped Newton -----------------------------------------------------


def _newton_directions(J, S):
    B, k = S.shape
    if k == 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            return -S / J[:, :, 0]
    try:
        return -np.linalg.solve(J, S[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        out = np.full((B, k), np.nan)
        for i in range(B):
            try:
                out[i] = -np.linalg.solve(J[i], S[i])
            except np.linalg.LinAlgError:
                pass
        return out


def _damped_newton(system: Callable, x, tau0, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER, max_halvings=40):
    """Batched Newton with step halving on ``||S||^2`` (Armijo, c = 1e-4).

    Non-finite ``S`` marks parameters outside the admissible domain and
    forces further halving.
    """
    tau = np.array(tau0, dtype=float)
    B = len(tau)
    iters = np.zeros(B, dtype=int)
    state = np.zeros(B, dtype=int)  # 0 active, 1 converged, 2 failed
    S, J = system(x, tau)
    norm2 = np.sum(S * S, axis=1)
    state[~np.isfinite(norm2)] = 2
    for it in range(max_iter + 1):
        conv = (state == 0) & (norm2 <= tol * tol)
        state[conv] = 1
        act = np.flatnonzero(state == 0)
        if act.size == 0 or it == max_iter:
            break
        with np.errstate(all="ignore"):
            d = _newton_directions(J[act], S[act])
        good = np.all(np.isfinite(d), axis=1)
        state[act[~good]] = 2
        act, d = act[good], d[good]
        alpha = np.ones(len(act))
        pending = np.arange(len(act))
        for _ in range(max_halvings):
            rows = act[pending]
            trial = tau[rows] + alpha[pending, None] * d[pending]
            with np.errstate(all="ignore"):
                St, Jt = system(x[rows], trial)
                n2 = np.sum(St * St, axis=1)
                ok = np.isfinite(n2) & (n2 <= (1.0 - 2e-4 * alpha[pending]) * norm2[rows])
            done = rows[ok]
            tau[done] = trial[ok]
            S[done] = St[ok]
            J[done] = Jt[ok]
            norm2[done] = n2[ok]
            pending = pending[~ok]
            if pending.size == 0:
                break
            alpha[pending] *= 0.5
        state[act[pending]] = 2
        iters[act] += 1
    state[state == 0] = 2
    return tau, state == 1, iters, np.sqrt(norm2)


def _normalise_box(box, k):
    if box is None:
        box = DEFAULT_BOX
    box = np.asarray(box, dtype=float)
    if box.shape == (2,):
        box = np.tile(box, (k, 1))
    if box.shape != (k, 2) or not np.all(np.isfinite(box)) or np.any(box[:, 0] > box[:, 1]):
        raise ValueError(f"box must be finite (lo, hi) pairs for {k} parameters")
    return box


def _starts(box, grid, seed, extra_starts):
    if grid < 1:
        raise ValueError("grid must be >= 1 start per axis")
    axes = [np.linspace(lo, hi, grid) if grid > 1 else np.array([0.5 * (lo + hi)]) for lo, hi in box]
    starts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(box))
    if extra_starts:
        rng = np.random.default_rng(seed)
        starts = np.concatenate([starts, rng.uniform(box[:, 0], box[:, 1], size=(extra_starts, len(box)))])
    return starts


def _collect(s, xi, taus, conv, iters, norms):
    # greedy clustering in start order; the first start of a cluster represents it
    idx = np.flatnonzero(conv)
    reps = []
    while idx.size:
        first = idx[0]
        reps.append((taus[first], int(iters[first]), float(norms[first])))
        if len(reps) > MAX_ROOTS:
            raise DegenerateEnvelopeError(
                f"degenerate envelope at x={tuple(float(v) for v in xi)}: more than {MAX_ROOTS} distinct roots"
            )
        dist = np.sqrt(np.sum((taus[idx] - taus[first]) ** 2, axis=1))
        idx = idx[dist > DEDUP_RADIUS]
    if not reps:
        return []
    tau_arr = np.array([r[0] for r in reps])
    us = s.value(np.tile(xi, (len(reps), 1)), tau_arr)
    order = sorted(range(len(reps)), key=lambda i: (float(us[i]), tuple(float(v) for v in tau_arr[i])))
    return [
        EnvelopeRoot(tuple(float(v) for v in tau_arr[i]), float(us[i]), True, reps[i][1], bid, reps[i][2])
        for bid, i in enumerate(order)
    ]


def solve_envelope_many(s, X, box=None, grid: int = DEFAULT_GRID, seed: int | None = None, extra_starts: int = 0,
                        on_degenerate: str = "raise"):
    """Solve the stationarity system at every row of ``X``.

    Returns one sorted root list per point.  With ``on_degenerate="mark"``
    a degenerate point yields ``None`` instead of raising.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != s.n + 1:
        raise ValueError(f"points need {s.n + 1} coordinates")
    box = _normalise_box(box, s.k)
    starts = _starts(box, grid, seed, extra_starts)
    ns = len(starts)
    out = []
    # chunk to bound memory
    chunk = max(1, 200_000 // ns)
    for lo in range(0, len(X), chunk):
        Xc = X[lo : lo + chunk]
        rows_x = np.repeat(Xc, ns, axis=0)
        tau0 = np.tile(starts, (len(Xc), 1))
        taus, conv, iters, norms = _damped_newton(s.system, rows_x, tau0)
        for i, xi in enumerate(Xc):
            sl = slice(i * ns, (i + 1) * ns)
            try:
                out.append(_collect(s, xi, taus[sl], conv[sl], iters[sl], norms[sl]))
            except DegenerateEnvelopeError:
                if on_degenerate == "raise":
                    raise
                out.append(None)
    return out


def solve_envelope(s, x, box=None, grid: int = DEFAULT_GRID, seed: int | None = None,
                   extra_starts: int = 0) -> list[EnvelopeRoot]:
    """All distinct converged envelope roots at ``x``, sorted by ``u`` then ``tau``.

    An empty list means no start converged.
    """
    return solve_envelope_many(s, np.asarray(x, dtype=float)[None, :], box, grid, seed, extra_starts)[0]


EUCLID_BOX = (-0.95, 0.95)


def _euclid_box(box):
    box = EUCLID_BOX if box is None else box
    lo, hi = np.asarray(box, dtype=float).reshape(-1)[:2]
    if not (-1.0 < lo <= hi < 1.0):
        raise ValueError("search box must lie inside (-1, 1)")
    return (lo, hi)


def eval_euclid2_many(psi: Poly, X, box=None, grid: int = DEFAULT_GRID, seed: int | None = None,
                      on_degenerate: str = "raise"):
    return solve_envelope_many(Euclid2Solution(psi), X, _euclid_box(box), grid, seed, on_degenerate=on_degenerate)


def eval_euclid2(psi: Poly, x, box=None, grid: int = DEFAULT_GRID, seed: int | None = None) -> list[EnvelopeRoot]:
    return eval_euclid2_many(psi, np.asarray(x, dtype=float)[None, :], box, grid, seed)[0]


# -- residuals -------------------------------------------------------------------


def envelope_gradient(s, root: EnvelopeRoot) -> np.ndarray:
    return s.gradient(np.array(root.tau)[None, :])[0]


def envelope_residual(s, root: EnvelopeRoot) -> float:
    """``|u_mu u_mu - 1|`` from the envelope gradient (Euclidean for the 2-D family)."""
    g = envelope_gradient(s, root)
    if isinstance(s, Euclid2Solution):
        return abs(float(g @ g) - 1.0)
    return abs(float(g[0] ** 2 - g[1:] @ g[1:]) - 1.0)


def residual(field: GridField, c: float = 1.0, signature: Sequence[int] | None = None) -> float:
    """Max ``|g_i u_i u_i - c|`` over interior nodes using central differences.

    ``signature`` defaults to Minkowski ``(+1, -1, ..., -1)`` with axis 0 as
    time; pass ``(1, 1)`` for the Euclidean two-variable equation.
    """
    grads = central_gradient(field)
    sig = signature if signature is not None else (1,) + (-1,) * (field.d - 1)
    if len(sig) != field.d:
        raise ValueError("signature length must match grid dimension")
    q = sum(s * g * g for s, g in zip(sig, grads))
    dev = np.abs(q - c)
    if np.all(np.isnan(dev)):
        return float("nan")
    return float(np.nanmax(dev))


def select_branch(roots: list[EnvelopeRoot] | None, branch: str) -> list[EnvelopeRoot]:
    if not roots:
        return []
    if branch == "min-u":
        return [roots[0]]
    if branch == "max-u":
        return [roots[-1]]
    if branch == "all":
        return list(roots)
    raise ValueError(f"unknown branch policy {branch!r}")


def sample_branch(s, geometry: GridField, branch: str = "min-u", **solve_kw) -> GridField:
    """Evaluate one branch over a lattice; nodes without a root become ``nan``."""
    if branch == "all":
        raise ValueError("a sampled field needs a single branch")
    pts = geometry.nodes().reshape(-1, geometry.d)
    if isinstance(s, Euclid2Solution):
        all_roots = solve_envelope_many(s, pts, _euclid_box(solve_kw.pop("box", None)), on_degenerate="mark", **solve_kw)
    else:
        all_roots = solve_envelope_many(s, pts, on_degenerate="mark", **solve_kw)
    vals = np.array([sel[0].u if (sel := select_branch(r, branch)) else np.nan for r in all_roots])
    return geometry.with_values(vals.reshape(geometry.shape))
