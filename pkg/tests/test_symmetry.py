import json
import math
from fractions import Fraction

import numpy as np
import pytest

from eikonal.algebra import Poly, base_names, jet_names, parse_poly
from eikonal.symmetry import (
    EikonalProblem,
    FlowError,
    SampledField,
    VectorField,
    commutator,
    discrete_catalog,
    dump_catalog,
    flow_map,
    invariance_residual,
    is_symmetry,
    load_catalog,
    negative_controls,
    prolong1,
    random_symmeik0,
    sampled_symmetry_check,
    symmeik0_operator,
    symmeik1_catalog,
)


def field(n, xi=(), eta="0", name=""):
    names = base_names(n)
    xi = list(xi) + ["0"] * (n + 1 - len(xi))
    return VectorField(tuple(parse_poly(s, names) for s in xi), parse_poly(eta, names), name)


def catalog(n):
    return {op.name: op for op in symmeik1_catalog(n)}


def jet(n, text):
    return parse_poly(text, jet_names(n))


# -- problem -----------------------------------------------------------------------


def test_problem_validation():
    assert EikonalProblem(3, 1).metric == (1, -1, -1, -1)
    with pytest.raises(ValueError):
        EikonalProblem(2, 2)
    with pytest.raises(ValueError):
        EikonalProblem(0, 1)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        prolong1(field(2, ["1"]), EikonalProblem(3, 1))


# -- prolongation ------------------------------------------------------------------


def test_translation_prolongs_to_zero():
    pr = prolong1(field(2, ["1"]), EikonalProblem(2, 1))
    assert all(z.is_zero() for z in pr.zeta)


def test_u_scaling_prolongs_to_derivatives():
    pr = prolong1(field(2, eta="u"), EikonalProblem(2, 1))
    assert list(pr.zeta) == [jet(2, f"u{m}") for m in range(3)]


def test_rotation_prolongation_by_hand():
    # xi^1 = -x2, xi^2 = x1: zeta^mu = -xi^nu_mu u_nu
    pr = prolong1(catalog(2)["J12"], EikonalProblem(2, 1))
    assert pr.zeta[0].is_zero()
    assert pr.zeta[1] == jet(2, "-u2")
    assert pr.zeta[2] == jet(2, "u1")


def test_rotation_prolongation_matches_transformed_solution():
    # rotate u = 0.6 x1 + 0.8 x2 + 2 x0 ... by a small angle, compare gradient change
    n = 2
    pr = prolong1(catalog(n)["J12"], EikonalProblem(n, 1))
    grad = np.array([1.3, 0.6, 0.8])
    eps = 1e-6
    # flow of J12 rotates x: (x1, x2) -> (x1 cos e - x2 sin e, x1 sin e + x2 cos e); gradient co-rotates
    c, s = math.cos(eps), math.sin(eps)
    new = np.array([grad[0], c * grad[1] - s * grad[2], s * grad[1] + c * grad[2]])
    fd = (new - grad) / eps
    pt = (0.1, 0.2, 0.3, 0.4) + tuple(grad)
    exact = np.array([float(z.eval(pt)) for z in pr.zeta])
    assert np.allclose(fd, exact, atol=1e-5)


# -- residual decomposition ---------------------------------------------------------


def test_u_translation_residual_vanishes():
    p = EikonalProblem(3, 1)
    dec = invariance_residual(prolong1(field(3, eta="1"), p), p)
    assert dec.total().is_zero()


def test_time_scaling_residual():
    p = EikonalProblem(2, 1)
    dec = invariance_residual(prolong1(field(2, ["x0"]), p), p)
    assert dec.Q[0][0] == Poly.const(-2, 4)
    assert all(dec.Q[i][j].is_zero() for i in range(3) for j in range(3) if (i, j) != (0, 0))
    assert all(l.is_zero() for l in dec.L) and dec.C.is_zero() and dec.cubic.is_zero()


def test_dilation_residual_vanishes():
    p = EikonalProblem(3, 1)
    dec = invariance_residual(prolong1(catalog(3)["D"], p), p)
    assert dec.total().is_zero()


def test_decomposition_reassembles():
    p = EikonalProblem(2, 1)
    fld = field(2, ["x0*u + x1^2", "u^2", "x0*x2"], "x1*u")
    pr = prolong1(fld, p)
    dec = invariance_residual(pr, p)
    direct = Poly.zero(p.jet_nvars)
    for m in range(3):
        direct = direct + pr.zeta[m] * Poly.var(p.du_index(m), p.jet_nvars).scale(2 * p.metric[m])
    assert dec.total() == direct
    assert all(dec.Q[i][j] == dec.Q[j][i] for i in range(3) for j in range(3))


# -- exact verdicts ------------------------------------------------------------------


@pytest.mark.parametrize("n", [2, 3, 4])
def test_conformal_catalog_passes(n):
    p = EikonalProblem(n, 1)
    ops = symmeik1_catalog(n)
    assert len(ops) == (n + 3) * (n + 4) // 2
    for op in ops:
        v = is_symmetry(op, p)
        assert v.holds, op.name
        # the residual equals lambda (u.u - c)
        square = sum((Poly.var(p.du_index(m), p.jet_nvars) ** 2).scale(p.metric[m]) for m in range(n + 1))
        assert v.decomposition.total() == v.multiplier * (square - Poly.const(p.c, p.jet_nvars))


def test_multipliers():
    p = EikonalProblem(3, 1)
    ops = catalog(3)
    for name in ("P0", "P1", "Pu", "J12", "J01"):
        assert is_symmetry(ops[name], p).multiplier.is_zero()
    assert not is_symmetry(ops["Ku"], p).multiplier.is_zero()
    assert is_symmetry(ops["D"], p).multiplier.is_zero()


def test_conformal_operators_fail_for_null_equation():
    p = EikonalProblem(3, 0)
    ops = catalog(3)
    assert not is_symmetry(ops["Ku"], p)
    assert is_symmetry(ops["J12"], p)


@pytest.mark.parametrize("c", [0, 1])
def test_negative_controls_fail_with_named_component(c):
    p = EikonalProblem(3, c)
    verdicts = {op.name: is_symmetry(op, p) for op in negative_controls(3)}
    assert not verdicts["x0P0"] and verdicts["x0P0"].violated == "Q[1,1]"
    assert not verdicts["x1P0"] and verdicts["x1P0"].violated == "Q[0,1]"
    assert all(v.multiplier is None for v in verdicts.values())


def test_null_family_simple_member():
    # c^0(u) = u, everything else zero
    n = 3
    zero, u = Poly.zero(1), Poly.var(0, 1)
    op = symmeik0_operator(n, [u, zero, zero, zero], [[zero] * 4 for _ in range(4)], zero, [zero] * 4, zero)
    assert is_symmetry(op, EikonalProblem(n, 0))
    assert not is_symmetry(op, EikonalProblem(n, 1))


def test_null_family_needs_antisymmetric_b():
    n = 2
    zero, one = Poly.zero(1), Poly.const(1, 1)
    b = [[zero] * 3 for _ in range(3)]
    b[1][2] = one
    sym = symmeik0_operator(n, [zero] * 3, b, zero, [zero] * 3, zero)
    assert not is_symmetry(sym, EikonalProblem(n, 0))
    b[2][1] = -one
    assert is_symmetry(symmeik0_operator(n, [zero] * 3, b, zero, [zero] * 3, zero), EikonalProblem(n, 0))


def test_random_null_family_members():
    rng = np.random.default_rng(5)
    p = EikonalProblem(2, 0)
    for _ in range(5):
        assert is_symmetry(random_symmeik0(2, rng), p)


def test_linear_combinations_stay_symmetries():
    rng = np.random.default_rng(1)
    p = EikonalProblem(3, 1)
    ops = symmeik1_catalog(3)
    for _ in range(5):
        combo = VectorField.from_components([Poly.zero(5)] * 5)
        for op in ops:
            combo = combo + op.scale(Fraction(int(rng.integers(-3, 4)), int(rng.integers(1, 4))))
        assert is_symmetry(combo, p)


def _random_field(rng, n, degree=2):
    names_count = n + 2

    def rand():
        terms = {}
        for _ in range(int(rng.integers(0, 4))):
            e = [0] * names_count
            for _ in range(int(rng.integers(0, degree + 1))):
                e[int(rng.integers(0, names_count))] += 1
            terms[tuple(e)] = Fraction(int(rng.integers(-3, 4)), int(rng.integers(1, 3)))
        return Poly(names_count, terms)

    return VectorField(tuple(rand() for _ in range(n + 1)), rand())


def test_exact_and_sampled_verdicts_agree():
    rng = np.random.default_rng(2)
    n = 2
    ops = [op for op in symmeik1_catalog(n) if op.name[0] != "K"]
    yes = 0
    for trial in range(200):
        p = EikonalProblem(n, int(trial % 2))
        fld = VectorField.from_components([Poly.zero(n + 2)] * (n + 2))
        for op in ops:
            if rng.random() < 0.3:
                fld = fld + op.scale(int(rng.integers(-2, 3)))
        if rng.random() < 0.5:
            fld = fld + _random_field(rng, n)
        exact = is_symmetry(fld, p).holds
        sampled = sampled_symmetry_check(fld, p, samples=200, seed=trial) <= 1e-8
        assert exact == sampled, (trial, fld.format())
        yes += exact
    assert 20 < yes < 180


# -- sampled verdicts -----------------------------------------------------------------


def test_sampled_function_of_u_null_equation():
    fld = SampledField(2, lambda x, u: np.zeros_like(x), lambda x, u: np.sin(u) + u**3 / 7)
    assert sampled_symmetry_check(fld, EikonalProblem(2, 0), samples=1000) <= 1e-12


def test_sampled_catalog_operator():
    assert sampled_symmetry_check(catalog(3)["Ju1"], EikonalProblem(3, 1), samples=1000) <= 1e-12


def test_sampled_negative_control():
    assert sampled_symmetry_check(negative_controls(3)[1], EikonalProblem(3, 1), samples=1000, scale=1.0) > 0.1


def test_sampled_explicit_jacobian_matches_complex_step():
    n = 1

    def xi(x, u):
        return np.stack([u * x[:, 0], x[:, 1] ** 2], axis=1)

    def eta(x, u):
        return x[:, 0] * u

    def jac(x, u):
        S = len(u)
        J = np.zeros((S, 3, 3))
        J[:, 0, 0], J[:, 0, 2] = u, x[:, 0]
        J[:, 1, 1] = 2 * x[:, 1]
        J[:, 2, 0], J[:, 2, 2] = u, x[:, 0]
        return J

    p = EikonalProblem(n, 1)
    a = sampled_symmetry_check(SampledField(n, xi, eta), p, samples=50)
    b = sampled_symmetry_check(SampledField(n, xi, eta, jac), p, samples=50)
    assert a == pytest.approx(b, rel=1e-12)


# -- flows ------------------------------------------------------------------------------


def test_translation_flow():
    pts = np.array([[0.5, 1.0, -2.0, 3.0]])
    out = flow_map(catalog(2)["P1"], 1.0, pts)
    assert np.allclose(out, pts + [0, 1, 0, 0], atol=1e-14)


def test_dilation_flow_is_exponential():
    pts = np.random.default_rng(0).normal(size=(10, 4))
    out = flow_map(catalog(2)["D"], 0.7, pts)
    assert np.allclose(out, math.exp(0.7) * pts, rtol=1e-12)


def test_boost_flow_matches_hyperbolic_rotation():
    phi = 0.3
    pts = np.random.default_rng(1).normal(size=(10, 4))
    out = flow_map(catalog(2)["J01"], phi, pts)
    ch, sh = math.cosh(phi), math.sinh(phi)
    want = pts.copy()
    want[:, 0] = ch * pts[:, 0] + sh * pts[:, 1]
    want[:, 1] = sh * pts[:, 0] + ch * pts[:, 1]
    assert np.max(np.abs(out - want)) <= 1e-10


def test_flow_rejects_inaccurate_steps():
    with pytest.raises(FlowError):
        flow_map(catalog(2)["Ku"], 1.0, np.array([[2.0, 1.0, 1.0, 1.0]]), steps=1)


# -- commutators --------------------------------------------------------------------------


def test_commutator_of_boost_and_rotation():
    ops = catalog(3)
    assert commutator(ops["J01"], ops["J12"]) == ops["J02"]


def test_commutator_antisymmetry_and_jacobi():
    ops = catalog(2)
    a, b, c = ops["K1"], ops["Ju0"], ops["J12"]
    assert commutator(a, b) == -commutator(b, a)
    total = commutator(a, commutator(b, c)) + commutator(b, commutator(c, a)) + commutator(c, commutator(a, b))
    assert all(p.is_zero() for p in total.components)


def test_commutators_close_in_catalog_span():
    p = EikonalProblem(2, 1)
    ops = catalog(2)
    for x, y in [("K1", "K2"), ("D", "Ku"), ("Ju1", "J02"), ("P0", "K0")]:
        assert is_symmetry(commutator(ops[x], ops[y]), p)


# -- discrete maps -------------------------------------------------------------------------


def _manifold_points(n, c, rng, count=20):
    x = rng.normal(size=(count, n + 1))
    u = rng.normal(size=count)
    grad = np.empty((count, n + 1))
    grad[:, 1:] = rng.normal(size=(count, n))
    grad[:, 0] = np.sqrt(c + np.sum(grad[:, 1:] ** 2, axis=1))
    return x, u, grad


@pytest.mark.parametrize("c", [0, 1])
def test_discrete_maps_preserve_equation(c):
    p = EikonalProblem(3, c)
    x, u, grad = _manifold_points(3, c, np.random.default_rng(c))
    names = [m.name for m in discrete_catalog(p)]
    assert ("H1" in names) == (c == 1)
    for m in discrete_catalog(p):
        _, _, g2 = m.apply(x, u, grad)
        assert np.allclose(g2[:, 0] ** 2 - np.sum(g2[:, 1:] ** 2, axis=1), c, atol=1e-12), m.name


def test_time_reflection_of_time_solution():
    T = discrete_catalog(EikonalProblem(1, 1))[0]
    x = np.array([[2.0, 5.0]])
    x2, u2, g2 = T.apply(x, x[:, 0], np.array([[1.0, 0.0]]))
    # the image graph point (x', u) lies on u' = -x'_0
    assert np.allclose(u2, -x2[:, 0]) and np.allclose(g2, [[-1.0, 0.0]])


def test_permutation_of_space_solution():
    S = {m.name: m for m in discrete_catalog(EikonalProblem(2, 1))}["S12"]
    x = np.array([[0.0, 3.0, 4.0]])
    x2, u2, g2 = S.apply(x, x[:, 1], np.array([[0.0, 1.0, 0.0]]))
    assert np.allclose(u2, x2[:, 2]) and np.allclose(g2, [[0.0, 0.0, 1.0]])


def test_hodograph_swap_on_plane_wave():
    H = {m.name: m for m in discrete_catalog(EikonalProblem(1, 1))}["H1"]
    r2 = math.sqrt(2)
    x = np.array([[1.0, 2.0]])
    u = r2 * x[:, 0] + x[:, 1]
    x2, u2, g2 = H.apply(x, u, np.array([[r2, 1.0]]))
    # image graph: u' = x_1 = x'_1 - sqrt2 x'_0
    assert np.allclose(u2, x2[:, 1] - r2 * x2[:, 0])
    assert np.allclose(g2, [[-r2, 1.0]])
    assert abs(g2[0, 0] ** 2 - g2[0, 1] ** 2 - 1) < 1e-14
    with pytest.raises(ValueError):
        H.apply(x, u, np.array([[1.0, 0.0]]))


# -- catalog I/O -------------------------------------------------------------------------------


def test_catalog_json_round_trip(tmp_path):
    p = EikonalProblem(3, 1)
    ops = symmeik1_catalog(3)
    path = tmp_path / "cat.json"
    path.write_text(json.dumps(dump_catalog(ops, p)))
    p2, loaded = load_catalog(path)
    assert p2 == p
    assert [f for f, _ in loaded] == ops
    assert [f.name for f, _ in loaded] == [o.name for o in ops]


@pytest.mark.parametrize(
    "data",
    [
        {"n": 1, "operators": [{"xi": ["x0 +", "0"]}]},
        {"n": 1, "operators": [{"xi": ["1"]}]},
        {"n": 1},
        {"n": 1, "operators": [{"xi": ["1", "0"], "expect": "maybe"}]},
    ],
)
def test_malformed_catalogs(data):
    with pytest.raises(ValueError):
        load_catalog(data)
