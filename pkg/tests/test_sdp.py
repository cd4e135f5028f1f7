import numpy as np
import pytest

from conecert.linalg import hermitian_to_real, psd_check
from conecert.sdp import (
    FeasibilityProblem,
    HermitianVarBlock,
    InfeasibilityWitness,
    ParametricFeasibility,
    UnboundedMarginError,
    maximize_margin,
    solve_feasibility,
)


def test_feasible_trace_one():
    p = FeasibilityProblem()
    p.add_psd_var("X", 2)
    p.add_eq({"X": np.eye(2)}, 1.0)
    out = solve_feasibility(p)
    assert out.feasible
    x = out.assignment["X"]
    assert np.trace(x) == pytest.approx(1.0, abs=1e-8)
    assert psd_check(x).positive
    assert out.margin > 0


def test_infeasible_negative_trace():
    p = FeasibilityProblem()
    p.add_psd_var("X", 2)
    p.add_eq({"X": np.eye(2)}, -1.0)
    out = solve_feasibility(p)
    assert out.infeasible
    assert out.witness is not None
    # re-verify the witness by hand: Z PSD, pairing with rhs negative
    assert out.witness.verify(p)
    y = out.witness.y
    z = y[0] * np.eye(2)
    assert psd_check(z).positive
    assert y[0] * (-1.0) < 0


def test_feasible_from_known_psd_point():
    # constraints generated by evaluating random functionals at a PSD
    # matrix, so the instance is feasible by construction
    rng = np.random.default_rng(21)
    for _ in range(10):
        d = int(rng.integers(2, 5))
        g = rng.normal(size=(d, d))
        x0 = g @ g.T
        p = FeasibilityProblem()
        p.add_psd_var("X", d)
        for _ in range(5):
            a = rng.normal(size=(d, d))
            a = (a + a.T) / 2
            p.add_eq({"X": a}, float(np.sum(a * x0)))
        out = solve_feasibility(p)
        assert out.feasible
        assert psd_check(out.assignment["X"]).positive


def test_verified_residuals_tight():
    rng = np.random.default_rng(22)
    g = rng.normal(size=(3, 3))
    x0 = g @ g.T
    p = FeasibilityProblem()
    p.add_psd_var("X", 3)
    rows = []
    for _ in range(4):
        a = rng.normal(size=(3, 3))
        a = (a + a.T) / 2
        rows.append((a, float(np.sum(a * x0))))
        p.add_eq({"X": a}, rows[-1][1])
    out = solve_feasibility(p)
    assert out.feasible
    x = out.assignment["X"]
    for a, rhs in rows:
        assert np.sum(a * x) == pytest.approx(rhs, abs=1e-8 * max(1, abs(rhs)))


def test_maximize_margin_min_eigenvalue():
    # maximize t with tI <= diag(1, 2): optimum is the smallest eigenvalue
    p = FeasibilityProblem()
    p.add_psd_var("S", 2)
    p.add_free_var("t")
    target = np.diag([1.0, 2.0])
    for i in range(2):
        for j in range(i, 2):
            e = np.zeros((2, 2))
            e[i, j] = e[j, i] = 1.0
            p.add_eq({"S": e / (1 if i == j else 2), "t": 1.0 if i == j else 0.0},
                     target[i, j])
    out = maximize_margin(p, {"t": 1.0})
    assert out.feasible
    assert out.objective_value == pytest.approx(1.0, abs=1e-6)


def test_maximize_margin_forced_zero():
    # t I <= X, X >= 0, trace X = 0 forces X = 0 and t <= 0
    p = FeasibilityProblem()
    p.add_psd_var("X", 2)
    p.add_psd_var("S", 2)  # S = X - tI
    p.add_free_var("t")
    for i in range(2):
        for j in range(i, 2):
            e = np.zeros((2, 2))
            e[i, j] = e[j, i] = 1.0
            w = 1.0 if i == j else 0.5
            p.add_eq(
                {"X": w * e, "S": -w * e, "t": -1.0 if i == j else 0.0}, 0.0
            )
    p.add_eq({"X": np.eye(2)}, 0.0)
    out = maximize_margin(p, {"t": 1.0})
    assert out.feasible
    assert out.objective_value == pytest.approx(0.0, abs=1e-6)
    assert np.max(np.abs(out.assignment["X"])) < 1e-6


def test_maximize_margin_matches_eigenvalue_oracle():
    # archimedean-slack pattern: max t with u - tI >= 0 equals lambda_min(u)
    rng = np.random.default_rng(23)
    for _ in range(5):
        g = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        u = (g + g.conj().T) / 2
        p = FeasibilityProblem()
        blk = HermitianVarBlock(p, "Y", 3)  # Y = u - tI
        p.add_free_var("t")
        for i in range(3):
            for j in range(3):
                G = np.zeros((3, 3), dtype=complex)
                G[j, i] = 1.0  # Tr(G Y) = Y_ij
                for coeffs, rhs in blk.eq_rows(G, complex(u[i, j])):
                    coeffs = dict(coeffs)
                    if i == j:
                        coeffs["t"] = 2.0
                    rr = rhs
                    p.add_eq(coeffs, rr)
        out = maximize_margin(p, {"t": 1.0})
        assert out.feasible
        lam = np.linalg.eigvalsh(u)[0]
        assert out.objective_value == pytest.approx(lam, abs=1e-6)


def test_unbounded_direction_raises():
    p = FeasibilityProblem()
    p.add_psd_var("X", 2)
    with pytest.raises(UnboundedMarginError):
        maximize_margin(p, {"X": np.eye(2)})


def test_monotone_no_flip_to_feasible():
    # adding rows only shrinks the feasible set: an infeasible instance
    # must never become feasible after more constraints
    rng = np.random.default_rng(24)
    for trial in range(10):
        p = FeasibilityProblem()
        p.add_psd_var("X", 3)
        p.add_eq({"X": np.eye(3)}, -1.0 - trial * 0.1)
        out = solve_feasibility(p)
        assert not out.feasible
        a = rng.normal(size=(3, 3))
        p.add_eq({"X": (a + a.T) / 2}, rng.normal())
        out2 = solve_feasibility(p)
        assert not out2.feasible


def test_inconsistent_rows_linear_farkas():
    p = FeasibilityProblem()
    p.add_psd_var("X", 2)
    a = np.eye(2)
    p.add_eq({"X": a}, 1.0)
    p.add_eq({"X": a}, 2.0)  # same functional, different value
    out = solve_feasibility(p)
    assert out.infeasible
    assert out.witness.verify(p)


def test_near_boundary_never_reports_feasible():
    # X_11 pinned slightly negative: any verdict except "feasible" is
    # acceptable, and an infeasible verdict must carry a valid witness
    p = FeasibilityProblem()
    p.add_psd_var("X", 2)
    e11 = np.zeros((2, 2))
    e11[0, 0] = 1.0
    p.add_eq({"X": e11}, -1e-7)
    out = solve_feasibility(p)
    assert out.status != "feasible"
    if out.infeasible:
        assert out.witness.verify(p)


def test_inequality_rows():
    p = FeasibilityProblem()
    p.add_psd_var("X", 2)
    p.add_eq({"X": np.eye(2)}, 1.0)
    p.add_ineq({"X": np.diag([1.0, 0.0])}, 0.25)
    out = solve_feasibility(p)
    assert out.feasible
    assert out.assignment["X"][0, 0] <= 0.25 + 1e-7


def test_hermitian_block_roundtrip():
    rng = np.random.default_rng(25)
    g = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    c0 = g @ g.conj().T
    p = FeasibilityProblem()
    blk = HermitianVarBlock(p, "C", 3)
    probes = []
    for _ in range(6):
        G = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        blk.add_eq(p, G, np.trace(G @ c0))
        probes.append(G)
    out = solve_feasibility(p)
    assert out.feasible
    h = blk.decode(out.assignment)
    assert np.allclose(h, h.conj().T)
    assert psd_check(h).positive
    for G in probes:
        assert np.trace(G @ h) == pytest.approx(np.trace(G @ c0), abs=1e-7)


def test_hermitian_objective_matrix():
    rng = np.random.default_rng(26)
    g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    h = (g + g.conj().T) / 2
    blk_p = FeasibilityProblem()
    blk = HermitianVarBlock(blk_p, "C", 2)
    obj = blk.objective_matrix(h)
    # pairing of the real objective with an embedded matrix equals Tr(G C)
    gg = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    c = gg @ gg.conj().T
    lhs = float(np.sum(obj * hermitian_to_real(c)))
    assert lhs == pytest.approx(np.trace(h @ c).real, abs=1e-10)


def test_parametric_matches_one_shot():
    rng = np.random.default_rng(27)
    base = FeasibilityProblem()
    base.add_psd_var("X", 3)
    mats = []
    for _ in range(4):
        a = rng.normal(size=(3, 3))
        a = (a + a.T) / 2
        mats.append(a)
        base.add_eq({"X": a}, 0.0)
    para = ParametricFeasibility(base)
    for _ in range(8):
        g = rng.normal(size=(3, 3))
        x0 = g @ g.T
        b = np.array([float(np.sum(a * x0)) for a in mats])
        out = para.solve(b=b)
        assert out.feasible
        for a, rhs in zip(mats, b):
            assert np.sum(a * out.assignment["X"]) == pytest.approx(
                rhs, abs=1e-7 * max(1, abs(rhs))
            )


def test_parametric_objective():
    # minimize <C, X> over trace-one PSD: optimum is lambda_min(C)
    rng = np.random.default_rng(28)
    base = FeasibilityProblem()
    base.add_psd_var("X", 3)
    base.add_eq({"X": np.eye(3)}, 1.0)
    para = ParametricFeasibility(base, objective_var="X", sense="min")
    for _ in range(5):
        a = rng.normal(size=(3, 3))
        c = (a + a.T) / 2
        out = para.solve(objective=c)
        assert out.feasible
        assert out.objective_value == pytest.approx(
            np.linalg.eigvalsh(c)[0], abs=1e-6
        )


def test_json_roundtrip_solves_same():
    p = FeasibilityProblem()
    p.add_psd_var("X", 2)
    p.add_free_var("t")
    p.add_eq({"X": np.eye(2), "t": 1.0}, 1.0)
    p.add_ineq({"t": 1.0}, 0.3)
    p.set_objective({"t": 1.0})
    q = FeasibilityProblem.loads(p.dumps())
    out_p = maximize_margin(p)
    out_q = maximize_margin(q)
    assert out_p.feasible and out_q.feasible
    assert out_p.objective_value == pytest.approx(out_q.objective_value, abs=1e-7)
    assert out_p.objective_value == pytest.approx(0.3, abs=1e-6)


def test_witness_rejects_wrong_vector():
    p = FeasibilityProblem()
    p.add_psd_var("X", 2)
    p.add_eq({"X": np.eye(2)}, -1.0)
    bogus = InfeasibilityWitness(y=np.array([-1.0]))  # wrong sign: Z not PSD
    assert not bogus.verify(p)


def test_rejects_nonsymmetric_coefficient():
    p = FeasibilityProblem()
    p.add_psd_var("X", 2)
    with pytest.raises(Exception):
        p.add_eq({"X": np.array([[0.0, 1.0], [0.0, 0.0]])}, 0.0)
