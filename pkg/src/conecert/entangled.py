"""The maximally entangled element of a system with its dual, cp
factorizations extracted from its certificates, and min/max coincidence
probes.

For a system S with basis s_1..s_n and dual basis delta_1..delta_n, the
element sum_t s_t (x) delta_t is independent of the basis choice and
corresponds to the identity map S -> S, hence is positive in the minimal
tensor cone of S with its dual.  A two-sided factorization

    x* (T_ij) (x) (f_ij) x  =  sum_t s_t (x) delta_t + eps (1 (x) delta)

with (T_ij) a positive matrix of operators, [f_ij] a positive matrix of
functionals and delta a faithful state yields completely positive maps
phi(s) = (f_ij(s)) into M_q and psi(A) = x*((T_ij) (x) A)x back into the
system whose composition is the identity up to eps -- the engine behind
nuclearity-style factorization arguments.

The dual side never needs a concrete ambient: functionals are stored by
their values on the basis, and positivity of a matrix of functionals is
certified through the dual cone machinery.  On the primal side the
certificates produced here draw their entries from the system span.
Whether such a span-coefficient certificate exists at a given eps is
decidable: under the bilinear coefficient pairing <x, y> = sum x_ij y_ij
the dual of S is the dual of its ambient algebra modulo the annihilator
of S, so membership reduces to finding an ambient-positive lift of the
entangled element modulo annihilator shifts -- a small feasibility
program with an exact infeasibility witness.  A verified witness rules
out span coefficients only; certificates over larger coefficient
algebras may still exist, so the negative verdict is reported as
"no_span_certificate" rather than as a property of the system.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import cvxpy as cp

from .linalg import (
    AmbientAlgebra,
    BlockMatrix,
    NotPositiveError,
    PsdVerdict,
    ShapeError,
    carray_from_json,
    carray_to_json,
    psd_check,
)
from .catalog import (
    OperatorSystem,
    full_algebra_system,
    realize_matrix_of_elements,
    system_from_name,
)
from .duality import FunctionalMatrix, dual_positive, faithful_state
from .tensors import (
    TensorElement,
    max_inner_nuclear_factor,
    max_inner_search,
    max_outer_refute,
    min_positive,
)

__all__ = [
    "MaxEntangled",
    "me_element",
    "me_in_basis",
    "me_concrete_element",
    "MeCertificate",
    "MeCheck",
    "MeObstruction",
    "MeOutcome",
    "exact_me_certificate",
    "nuclear_me_certificate",
    "me_span_decision",
    "FactorizationPair",
    "extract_factorization",
    "basis_conditioning",
    "basis_conditioning_bound",
    "coincidence_probe",
    "ProbeReport",
]


def _quiet(prob: cp.Problem, solver: str, **kwargs) -> None:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        try:
            prob.solve(solver=solver, **kwargs)
        except cp.error.SolverError:
            pass


# ---------------------------------------------------------------------------
# the element itself


def me_in_basis(system: OperatorSystem, gmat: np.ndarray) -> np.ndarray:
    """Recompute the entangled element in the transformed basis
    t_j = sum_a gmat[a, j] s_a and express it back against the original
    (basis, dual basis) pair.

    The transformed dual basis is recovered the pedestrian way, by least
    squares against the realized transformed basis, so agreement with the
    identity is an honest numerical check of basis independence rather
    than an algebraic tautology."""
    gmat = np.asarray(gmat, dtype=complex)
    n = system.dim
    if gmat.shape != (n, n):
        raise ShapeError(f"change of basis has shape {gmat.shape}")
    stacks = np.stack([s.vec() for s in system.basis], axis=1)  # (V, n)
    new_vecs = stacks @ gmat
    out = np.zeros((n, n), dtype=complex)
    for b in range(n):
        # coordinates of s_b in the t-basis, computed from realizations
        cb, *_ = np.linalg.lstsq(new_vecs, stacks[:, b], rcond=None)
        out[:, b] = gmat @ cb
    return out


class MaxEntangled:
    """sum_t s_t (x) delta_t, stored as its coefficient matrix against
    the (basis, dual basis) pair -- the identity matrix, in any basis."""

    def __init__(self, system: OperatorSystem, coefficients=None):
        self.system = system
        n = system.dim
        if coefficients is None:
            coefficients = np.eye(n)
        self.coefficients = np.asarray(coefficients, dtype=complex)
        if self.coefficients.shape != (n, n):
            raise ShapeError(f"coefficient shape {self.coefficients.shape}")

    def basis_change_defect(self, gmat: np.ndarray) -> float:
        """Max-abs difference between the element recomputed in the basis
        gmat and this one, compared as bilinear forms."""
        return float(
            np.max(np.abs(me_in_basis(self.system, gmat) - self.coefficients))
        )

    def identity_map_defect(self) -> float:
        """Distance of the associated map S -> S from the identity; zero
        exactly when the element is the entangled one, and the identity
        map being cp is what makes it min-positive."""
        return float(np.max(np.abs(self.coefficients - np.eye(self.system.dim))))

    def state_pairing(self, rho: BlockMatrix, x: BlockMatrix) -> float:
        """Pairing against f (x) x-hat, with f = Tr(rho .) a state on the
        system and x-hat the dual-side evaluation at x; works out to f(x)
        through the coefficient matrix, hence is nonnegative for rho >= 0
        and x >= 0 -- the sampling face of min-positivity."""
        fvals = np.array([np.vdot(rho.vec(), s.vec()) for s in self.system.basis])
        xc = self.system.coords(x)
        return float(np.real(fvals @ self.coefficients @ xc))

    def perturbed_coefficients(self, eps: float) -> np.ndarray:
        """Coefficients of the element plus eps (unit (x) trace-state)."""
        s = self.system
        state = faithful_state(s).values
        return self.coefficients + float(eps) * np.outer(s.coords(s.unit), state)

    def concrete(self) -> TensorElement:
        """The element realized over (S, ambient algebra) through the
        dual-basis lifts of the coefficient pairing."""
        return me_concrete_element(self.system)


def me_element(system: OperatorSystem) -> MaxEntangled:
    """The maximally entangled element of the system with its dual."""
    return MaxEntangled(system)


def me_concrete_element(system: OperatorSystem) -> TensorElement:
    """The entangled element as an honest tensor element over the system
    and the full algebra of its ambient, with the dual basis lifted
    through the coefficient pairing.  For a full-algebra system this IS
    the element over S (x) S*; in general it is one lift among many."""
    lifts, _, _ = _lift_data(system)
    fullsys = full_algebra_system(system.ambient.dims)
    coeffs = np.zeros((1, 1, system.dim, fullsys.dim), dtype=complex)
    for t, d in enumerate(lifts):
        coeffs[0, 0, t, :] = fullsys.coords(d)
    u = TensorElement(system, fullsys, coeffs)
    return (u + u.adjoint()) * 0.5


# ---------------------------------------------------------------------------
# dual-sided certificates


@dataclass
class MeCheck:
    ok: bool
    residual: float
    w_verdict: Optional[PsdVerdict] = None
    f_status: str = ""
    report: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.ok


class MeCertificate:
    """A factorization of the perturbed entangled element: positive
    (P x P) matrix over the system, positive (Q x Q) matrix of
    functionals (stored by their values on the basis), pairing vector x
    of length P*Q, and the strictness eps.  The dual-side state is fixed
    to the normalized trace throughout."""

    def __init__(self, system, w_coeffs, fvals, x, eps: float):
        self.system = system
        self.w_coeffs = np.asarray(w_coeffs, dtype=complex)
        self.fvals = np.asarray(fvals, dtype=complex)
        self.x = np.asarray(x, dtype=complex).reshape(-1)
        self.eps = float(eps)
        n = system.dim
        p, q = self.w_coeffs.shape[0], self.fvals.shape[0]
        if self.w_coeffs.shape != (p, p, n):
            raise ShapeError(f"w_coeffs shape {self.w_coeffs.shape}")
        if self.fvals.shape != (q, q, n):
            raise ShapeError(f"fvals shape {self.fvals.shape}")
        if self.x.shape != (p * q,):
            raise ShapeError(f"x has {self.x.shape[0]} entries, expected {p * q}")

    @property
    def p(self) -> int:
        return self.w_coeffs.shape[0]

    @property
    def q(self) -> int:
        return self.fvals.shape[0]

    def reconstruction(self) -> np.ndarray:
        x3 = self.x.reshape(self.p, self.q)
        return np.einsum(
            "IK,JL,IJa,KLb->ab",
            np.conj(x3),
            x3,
            self.w_coeffs,
            self.fvals,
            optimize=True,
        )

    def verify(self, tol: float = 1e-8) -> MeCheck:
        """Positivity of both factors plus the coefficient identity;
        nothing from the producing computation is trusted."""
        report = {}
        wv = psd_check(realize_matrix_of_elements(self.system, self.w_coeffs))
        report["w_min_eig"] = wv.min_eig
        fv = dual_positive(FunctionalMatrix(self.system, self.fvals))
        report["f_status"] = fv.status
        target = me_element(self.system).perturbed_coefficients(self.eps)
        resid = float(np.max(np.abs(self.reconstruction() - target)))
        report["residual"] = resid
        scale = max(1.0, float(np.max(np.abs(target))))
        ok = bool(wv) and fv.positive and resid <= tol * scale and self.eps >= 0.0
        return MeCheck(ok, resid, wv, fv.status, report)

    def to_json_obj(self) -> dict:
        return {
            "system": self.system.name,
            "eps": self.eps,
            "w": carray_to_json(self.w_coeffs),
            "f": carray_to_json(self.fvals),
            "x": carray_to_json(self.x),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "MeCertificate":
        system = system_from_name(obj["system"])
        return cls(
            system,
            carray_from_json(obj["w"]),
            carray_from_json(obj["f"]),
            carray_from_json(obj["x"]),
            float(obj["eps"]),
        )


def exact_me_certificate(system: OperatorSystem) -> MeCertificate:
    """Closed-form certificate at eps = 0 for full-algebra systems.

    Primal side: the gram matrix of matrix units (block diagonal over the
    summands), whose realization is a direct sum of rank ones.  Dual
    side: the entry-extraction functionals, whose matrix implements the
    cp embedding x -> (blocks of x).  The identity pairing vector traces
    both factors along the diagonal and the reconstruction is exact."""
    if not system.is_full_algebra:
        raise ValueError("closed form needs a full-algebra system")
    amb = system.ambient
    dtot = amb.total
    n = system.dim
    idx = [(bi, i) for bi, d in enumerate(amb.dims) for i in range(d)]

    w = np.zeros((dtot, dtot, n), dtype=complex)
    fv = np.zeros((dtot, dtot, n), dtype=complex)
    for a, (bi, i) in enumerate(idx):
        for b, (bj, j) in enumerate(idx):
            if bi != bj:
                continue
            unit_blocks = [np.zeros((d, d), dtype=complex) for d in amb.dims]
            unit_blocks[bi][i, j] = 1.0
            w[a, b, :] = system.coords(BlockMatrix(amb, unit_blocks))
            for t, s in enumerate(system.basis):
                fv[a, b, t] = s.block(bi)[i, j]
    x = np.eye(dtot, dtype=complex).reshape(-1)
    return MeCertificate(system, w, fv, x, 0.0)


def nuclear_me_certificate(system: OperatorSystem, eps: float = 0.0) -> MeCertificate:
    """Certificate for a full-algebra system produced by the exact
    maximal-cone factorization of the concrete entangled element (the
    rearrangement route), independent of the closed form."""
    if not system.is_full_algebra:
        raise ValueError("the rearrangement route needs a full-algebra system")
    lifts, _, _ = _lift_data(system)
    cert = _certificate_from_lift(system, lifts, [], [], np.zeros(0), float(eps))
    if cert is None:
        raise NotPositiveError("concrete entangled element failed factorization")
    return cert


# ---------------------------------------------------------------------------
# span-coefficient decision via ambient lifts


def _block_from_vec(algebra: AmbientAlgebra, v: np.ndarray) -> BlockMatrix:
    v = np.asarray(v, dtype=complex).reshape(-1)
    blocks, off = [], 0
    for d in algebra.dims:
        blocks.append(v[off : off + d * d].reshape(d, d))
        off += d * d
    return BlockMatrix(algebra, blocks)


def _sa_generators(vecs, algebra: AmbientAlgebra):
    """A real basis of the self-adjoint part of a *-closed complex span,
    given vectorizations of a spanning set."""
    cands = []
    for v in vecs:
        m = _block_from_vec(algebra, v)
        cands.append((m + m.adjoint()) * 0.5)
        cands.append((m - m.adjoint()) * (-0.5j))
    if not cands:
        return []
    mat = np.stack(
        [np.concatenate([c.vec().real, c.vec().imag]) for c in cands], axis=0
    )
    _, svals, vt = np.linalg.svd(mat, full_matrices=False)
    keep = svals > 1e-10 * max(1.0, float(svals[0]) if svals.size else 1.0)
    out = []
    for row in vt[keep]:
        half = row.shape[0] // 2
        out.append(_block_from_vec(algebra, row[:half] + 1j * row[half:]))
    return out


def _lift_data(system: OperatorSystem):
    """Fixed dual-basis lifts plus the shift directions of the lift
    program.

    Pairing throughout is the bilinear coefficient pairing
    <x, y> = sum x_ij y_ij, under which the ambient algebra is its own
    dual and the system's dual is the quotient by the annihilator
    J = {y : <s_t, y> = 0 for all t}."""
    amb = system.ambient
    n = system.dim
    bmat = np.stack([s.vec() for s in system.basis], axis=0)  # (n, V)
    dvecs = np.linalg.pinv(bmat)  # column t pairs to delta_t
    lifts = [_block_from_vec(amb, dvecs[:, t]) for t in range(n)]

    _, svals, vt = np.linalg.svd(bmat, full_matrices=True)
    rank = int(np.sum(svals > 1e-12 * max(1.0, float(svals[0]))))
    null = vt[rank:]
    ann = _sa_generators([row.conj() for row in null], amb) if null.shape[0] else []
    sa_sys = _sa_generators([s.vec() for s in system.basis], amb)
    return lifts, ann, sa_sys


def _pair_kron(a: BlockMatrix, b: BlockMatrix) -> dict:
    """Realized blocks of a (x) b, block pair by block pair."""
    out = {}
    for bi in range(len(a.algebra.dims)):
        for bj in range(len(b.algebra.dims)):
            out[(bi, bj)] = np.kron(a.block(bi), b.block(bj))
    return out


def _lift_terms(system: OperatorSystem, lifts, ann, sa_sys, eps: float):
    """Realized fixed part (hermitized) and shift directions of the lift
    program, per ambient block pair.  Any PSD lift is self-adjoint, and
    the hermitized fixed lift restricts to the same element, so searching
    fixed + real span of (sa system) x (sa annihilator) captures every
    positive lift."""
    fixed = None
    for s, d in zip(system.basis, lifts):
        term = _pair_kron(s, d)
        fixed = term if fixed is None else {k: fixed[k] + term[k] for k in fixed}
    amb = system.ambient
    state_lift = amb.identity() * (1.0 / amb.total)
    bump = _pair_kron(system.unit, state_lift)
    fixed = {k: fixed[k] + eps * bump[k] for k in fixed}
    fixed = {k: (v + v.conj().T) / 2.0 for k, v in fixed.items()}
    shifts = [_pair_kron(h, j) for h in sa_sys for j in ann]
    return fixed, shifts


class MeObstruction:
    """A positive functional on the realized ambient product that
    annihilates every lift-shift direction yet is strictly negative on
    the fixed lift: no span-coefficient certificate can exist at this
    eps.  Everything is re-checkable from the stored blocks; the verify
    report includes the leak-to-value ratio quantifying how far the
    shift annihilation is from exact."""

    def __init__(self, system: OperatorSystem, eps: float, blocks: dict):
        self.system = system
        self.eps = float(eps)
        self.blocks = {k: np.asarray(v, dtype=complex) for k, v in blocks.items()}

    def verify(self, tol_null: float = 1e-8, tol_neg: float = 1e-6) -> dict:
        lifts, ann, sa_sys = _lift_data(self.system)
        fixed, shifts = _lift_terms(self.system, lifts, ann, sa_sys, self.eps)
        for key, y in self.blocks.items():
            v = psd_check(y)
            if not v:
                return {"ok": False, "reason": "witness-not-psd", "block": key}
        tr = sum(float(np.real(np.trace(y))) for y in self.blocks.values())
        if abs(tr - 1.0) > 1e-6:
            return {"ok": False, "reason": "trace", "trace": tr}
        leak = 0.0
        for mats in shifts:
            val = sum(
                float(np.real(np.sum(np.conj(self.blocks[k]) * mats[k])))
                for k in mats
            )
            leak = max(leak, abs(val))
        if leak > tol_null:
            return {"ok": False, "reason": "shift-leak", "leak": leak}
        value = sum(
            float(np.real(np.sum(np.conj(self.blocks[k]) * fixed[k]))) for k in fixed
        )
        ok = value < -tol_neg
        return {
            "ok": ok,
            "value": value,
            "shift_leak": leak,
            "trace": tr,
            "leak_ratio": leak / max(abs(value), 1e-300),
        }

    def to_json_obj(self) -> dict:
        return {
            "system": self.system.name,
            "eps": self.eps,
            "blocks": {
                f"{k[0]},{k[1]}": carray_to_json(v) for k, v in self.blocks.items()
            },
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "MeObstruction":
        system = system_from_name(obj["system"])
        blocks = {}
        for key, val in obj["blocks"].items():
            bi, bj = (int(t) for t in key.split(","))
            blocks[(bi, bj)] = carray_from_json(val)
        return cls(system, float(obj["eps"]), blocks)


@dataclass
class MeOutcome:
    status: str  # "certified" | "no_span_certificate" | "undecided"
    certificate: Optional[MeCertificate] = None
    obstruction: Optional[MeObstruction] = None
    report: dict = field(default_factory=dict)


def _witness_polish(blocks: dict, shifts, iters: int = 200) -> dict:
    """Alternate projections between the PSD cone and the affine set
    {trace one, all shift pairings zero}.  Both sets are convex and the
    true dual optimum lies in their intersection, so the iteration tamps
    the solver's equality slack down to working precision."""
    keys = sorted(blocks)

    def to_p(bl):
        return np.concatenate(
            [np.concatenate([bl[k].real.ravel(), bl[k].imag.ravel()]) for k in keys]
        )

    def from_p(p):
        out, off = {}, 0
        for k in keys:
            d = blocks[k].shape[0]
            re = p[off : off + d * d].reshape(d, d)
            off += d * d
            im = p[off : off + d * d].reshape(d, d)
            off += d * d
            out[k] = re + 1j * im
        return out

    rows = [to_p(mats) for mats in shifts]
    rows.append(to_p({k: np.eye(blocks[k].shape[0]) for k in keys}))
    amat = np.stack(rows, axis=0)
    target = np.zeros(amat.shape[0])
    target[-1] = 1.0
    apinv = np.linalg.pinv(amat)

    cur = {k: np.array(v) for k, v in blocks.items()}
    for _ in range(iters):
        worst_eig = 0.0
        for k in keys:
            h = (cur[k] + cur[k].conj().T) / 2.0
            vals, vecs = np.linalg.eigh(h)
            if vals.size:
                worst_eig = min(worst_eig, float(vals[0]))
            cur[k] = (vecs * np.clip(vals, 0.0, None)) @ vecs.conj().T
        p = to_p(cur)
        resid = amat @ p - target
        if np.max(np.abs(resid)) <= 1e-13 and worst_eig >= -1e-13:
            break
        cur = from_p(p - apinv @ resid)
    for k in keys:
        h = (cur[k] + cur[k].conj().T) / 2.0
        vals, vecs = np.linalg.eigh(h)
        cur[k] = (vecs * np.clip(vals, 0.0, None)) @ vecs.conj().T
    return cur


def me_span_decision(system: OperatorSystem, eps: float, tol: float = 1e-7) -> MeOutcome:
    """Decide whether the perturbed entangled element admits a
    certificate with primal coefficients drawn from the system span.

    Existence is equivalent to an ambient-positive lift (fixed part plus
    a real combination of shift directions PSD), because the ambient is
    a full algebra, where inner factorization is exact.  A margin
    program finds lifts; when none exists its dual produces the
    obstruction functional.  Both answers are re-verified outside the
    solver before being reported -- an unverifiable solve comes back
    "undecided"."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    lifts, ann, sa_sys = _lift_data(system)
    fixed, shifts = _lift_terms(system, lifts, ann, sa_sys, eps)
    keys = sorted(fixed.keys())
    report = {"shift_dims": len(shifts), "eps": float(eps)}

    # margin program: maximize the PSD margin of the lifted element
    lam = cp.Variable(len(shifts)) if shifts else None
    gam = cp.Variable()
    cons = [gam <= 1.0]
    for k in keys:
        expr = cp.Constant(fixed[k])
        if lam is not None:
            for r, mats in enumerate(shifts):
                expr = expr + lam[r] * cp.Constant(mats[k])
        cons.append(expr >> gam * np.eye(fixed[k].shape[0]))
    prob = cp.Problem(cp.Maximize(gam), cons)
    for solver, kwargs in (("CLARABEL", {}), ("SCS", {"eps": 1e-9, "max_iters": 200000})):
        _quiet(prob, solver, **kwargs)
        if prob.status == cp.OPTIMAL:
            break
    report["margin"] = None if gam.value is None else float(gam.value)

    if (
        prob.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)
        and gam.value is not None
        and gam.value > -tol
    ):
        lamv = np.zeros(0) if lam is None else np.asarray(lam.value, dtype=float)
        cert = _certificate_from_lift(system, lifts, ann, sa_sys, lamv, eps)
        if cert is not None:
            check = cert.verify()
            report["certificate_residual"] = check.residual
            if check.ok:
                return MeOutcome("certified", certificate=cert, report=report)
        return MeOutcome("undecided", report=report)

    # dual program: hunt for the obstruction functional
    yvars = {k: cp.Variable(fixed[k].shape, hermitian=True) for k in keys}
    cons = [yvars[k] >> 0 for k in keys]
    cons.append(sum(cp.real(cp.trace(yvars[k])) for k in keys) == 1.0)
    for mats in shifts:
        cons.append(
            sum(
                cp.real(cp.sum(cp.multiply(cp.conj(yvars[k]), mats[k])))
                for k in keys
            )
            == 0
        )
    objective = sum(
        cp.real(cp.sum(cp.multiply(cp.conj(yvars[k]), fixed[k]))) for k in keys
    )
    dprob = cp.Problem(cp.Minimize(objective), cons)
    for solver, kwargs in (("CLARABEL", {}), ("SCS", {"eps": 1e-9, "max_iters": 200000})):
        _quiet(dprob, solver, **kwargs)
        if dprob.status == cp.OPTIMAL:
            break
    if dprob.value is None or any(y.value is None for y in yvars.values()):
        return MeOutcome("undecided", report=report)
    report["witness_value"] = float(dprob.value)

    blocks = _witness_polish({k: np.asarray(yvars[k].value) for k in keys}, shifts)
    tr = sum(float(np.real(np.trace(b))) for b in blocks.values())
    if tr <= 0:
        return MeOutcome("undecided", report=report)
    blocks = {k: b / tr for k, b in blocks.items()}
    obs = MeObstruction(system, eps, blocks)
    chk = obs.verify()
    report["witness_check"] = chk
    if chk["ok"]:
        return MeOutcome("no_span_certificate", obstruction=obs, report=report)
    return MeOutcome("undecided", report=report)


def _certificate_from_lift(system, lifts, ann, sa_sys, lam, eps):
    """Turn a feasible lift into a verified dual-sided certificate via
    the exact factorization over the ambient algebra, then restrict the
    ambient-side gram entries to functionals on the system.  The
    restriction kills the shift directions and sends the dual-basis
    lifts back to the dual basis, so the reconstruction lands exactly on
    the perturbed entangled element."""
    amb = system.ambient
    fullsys = full_algebra_system(amb.dims)
    n = system.dim

    coeffs = np.zeros((1, 1, n, fullsys.dim), dtype=complex)
    for t, d in enumerate(lifts):
        coeffs[0, 0, t, :] += fullsys.coords(d)
    u = TensorElement(system, fullsys, coeffs)
    u = (u + u.adjoint()) * 0.5
    if lam.size:
        kc = np.zeros((1, 1, n, fullsys.dim), dtype=complex)
        pairs = [(h, j) for h in sa_sys for j in ann]
        for w, (h, j) in zip(lam, pairs):
            kc[0, 0, :, :] += w * np.outer(system.coords(h), fullsys.coords(j))
        u = u + TensorElement(system, fullsys, kc)
    state_lift = amb.identity() * (1.0 / amb.total)
    bump = np.zeros((1, 1, n, fullsys.dim), dtype=complex)
    bump[0, 0, :, :] = np.outer(system.coords(system.unit), fullsys.coords(state_lift))
    u = u + TensorElement(system, fullsys, float(eps) * bump)

    if not min_positive(u, tol=1e-7):
        return None
    out = max_inner_nuclear_factor(u, tol=1e-7)
    if out.status != "member":
        return None
    cert = out.certificate

    q = cert.a_coeffs.shape[0]
    fvals = np.zeros((q, q, n), dtype=complex)
    svecs = np.stack([s.vec() for s in system.basis], axis=0)
    for k in range(q):
        for l in range(q):
            ent = fullsys.reconstruct(cert.a_coeffs[k, l]).vec()
            fvals[k, l, :] = svecs @ ent
    return MeCertificate(system, cert.w_coeffs, fvals, cert.x[:, 0], eps)


# ---------------------------------------------------------------------------
# factorization maps


class FactorizationPair:
    """The cp pair extracted from a dual-sided certificate: phi sends the
    system into M_q by the functional matrix, psi sends M_q back through
    the primal factor; the composition is the identity plus
    eps * state(s) * unit, up to the certificate residual."""

    def __init__(self, cert: MeCertificate):
        check = cert.verify()
        if not check.ok:
            raise NotPositiveError(f"certificate does not verify: {check.report}")
        self.cert = cert
        self.system = cert.system
        self.eps = cert.eps
        self.phi = FunctionalMatrix(cert.system, cert.fvals)
        x3 = cert.x.reshape(cert.p, cert.q)
        self.psi_coeffs = np.einsum(
            "IK,JL,IJs->KLs", np.conj(x3), x3, cert.w_coeffs, optimize=True
        )
        self.report = {"certificate": check.report, "eps": cert.eps}
        self._certify_maps()
        self._basis_defects()

    def phi_apply(self, x) -> np.ndarray:
        """phi(x) = [f_ij(x)]."""
        return self.phi.apply(x)

    def psi_apply(self, a: np.ndarray) -> BlockMatrix:
        """psi(A) = x*((T_ij) (x) A)x as an element of the system span."""
        a = np.asarray(a, dtype=complex)
        if a.shape != (self.cert.q, self.cert.q):
            raise ShapeError(f"psi takes a {self.cert.q} x {self.cert.q} matrix")
        coeff = np.einsum("KLs,KL->s", self.psi_coeffs, a)
        return self.system.reconstruct(coeff)

    def psi_choi(self) -> BlockMatrix:
        return realize_matrix_of_elements(self.system, self.psi_coeffs)

    def compose(self, x) -> BlockMatrix:
        return self.psi_apply(self.phi_apply(x))

    def _certify_maps(self):
        fv = dual_positive(self.phi)
        choi = psd_check(self.psi_choi())
        self.report["phi_cp"] = fv.status
        self.report["psi_choi_min_eig"] = choi.min_eig
        if not (fv.positive and bool(choi)):
            raise NotPositiveError("extracted maps failed cp certification")

    def _basis_defects(self):
        s = self.system
        state = faithful_state(s)
        defects, residuals = [], []
        for sl in s.basis:
            out = self.compose(sl)
            defects.append((out - sl).norm())
            pure = out - sl - self.eps * complex(state(sl)) * s.unit
            residuals.append(pure.norm())
        self.basis_defects = defects
        self.report["max_basis_defect"] = max(defects)
        self.report["max_basis_residual"] = max(residuals)

    def bound_check(self, samples: int = 20, seed: int = 0) -> dict:
        """Numerical check of the unit-ball estimate: for ||s|| <= 1,
        ||psi(phi(s)) - s|| <= eps + C * r with C the rigorous basis
        conditioning bound and r the worst pure basis residual."""
        rng = np.random.default_rng(seed)
        cbound = basis_conditioning_bound(self.system)
        limit = self.eps + cbound * self.report["max_basis_residual"] + 1e-9
        worst = 0.0
        for _ in range(samples):
            s = self.system.random_self_adjoint(rng)
            nrm = s.norm()
            if nrm < 1e-12:
                continue
            s = (1.0 / nrm) * s
            worst = max(worst, (self.compose(s) - s).norm())
        return {"worst_defect": worst, "limit": limit, "ok": worst <= limit, "C": cbound}


def extract_factorization(cert: MeCertificate) -> FactorizationPair:
    """Validate the certificate and return the cp pair with its defect
    report; invalid certificates are rejected."""
    return FactorizationPair(cert)


def basis_conditioning_bound(system: OperatorSystem) -> float:
    """Rigorous (if crude) bound on sup ||coords(s)||_1 over the operator
    norm unit ball: coordinate-row norms against the Frobenius inflation
    sqrt(total dim)."""
    rows = np.linalg.norm(system.coords_matrix, axis=1)
    return float(np.sum(rows) * np.sqrt(system.ambient.total))


def basis_conditioning(system: OperatorSystem, starts: int = 4, seed: int = 0) -> float:
    """Multi-start estimate of the basis conditioning constant
    sup { ||coords(s)||_1 : s self-adjoint, ||s|| <= 1 }.

    Alternates between fixing the coordinate phases and maximizing the
    resulting real-linear objective over the operator-norm ball (a small
    SDP per start); the reported value is the best found, a lower bound
    on the true constant."""
    rng = np.random.default_rng(seed)
    _, _, sa_sys = _lift_data(system)
    coords_h = np.stack([system.coords(h) for h in sa_sys], axis=1)  # (n, nh)
    nh = len(sa_sys)
    best = 0.0

    def inner(phases):
        alpha = cp.Variable(nh)
        cons = []
        for bi, d in enumerate(system.ambient.dims):
            expr = sum(alpha[a] * cp.Constant(sa_sys[a].block(bi)) for a in range(nh))
            eye = np.eye(d)
            cons += [expr << eye, expr >> -eye]
        obj = cp.real(cp.conj(phases) @ (coords_h @ alpha))
        prob = cp.Problem(cp.Maximize(obj), cons)
        _quiet(prob, "CLARABEL")
        if alpha.value is None:
            _quiet(prob, "SCS", eps=1e-8)
        return None if alpha.value is None else np.asarray(alpha.value)

    for _ in range(starts):
        s = system.random_self_adjoint(rng)
        if s.norm() < 1e-12:
            continue
        c = system.coords((1.0 / s.norm()) * s)
        best = max(best, float(np.sum(np.abs(c))))
        for _ in range(4):
            mod = np.abs(c)
            phases = np.where(mod > 1e-12, c / np.maximum(mod, 1e-12), 1.0)
            alpha = inner(phases)
            if alpha is None:
                break
            c = coords_h @ alpha
            val = float(np.sum(np.abs(c)))
            if val <= best + 1e-10:
                break
            best = val
    return best


# ---------------------------------------------------------------------------
# coincidence probe


@dataclass
class ProbeReport:
    left: str
    right: str
    counts: dict
    records: list
    seed: int

    def to_json_obj(self) -> dict:
        return {
            "left": self.left,
            "right": self.right,
            "counts": dict(self.counts),
            "records": list(self.records),
            "seed": self.seed,
        }


def _random_min_positive(left, right, rng, level: int) -> TensorElement:
    """Random element of the spatial cone: a self-adjoint draw shifted
    just past its most negative realized eigenvalue."""
    u = TensorElement.random_self_adjoint(left, right, rng, level=level)
    lam = min(float(np.min(np.linalg.eigvalsh(b))) for b in u.realize().blocks)
    return u.shift(-lam + float(rng.uniform(0.1, 1.0)))


def coincidence_probe(
    left: OperatorSystem,
    right: OperatorSystem,
    levels: Sequence[int] = (1, 2),
    samples: int = 10,
    seed: int = 0,
    search_kwargs: Optional[dict] = None,
) -> ProbeReport:
    """Sample spatially positive elements and put each through the
    maximal-cone machinery: certification (exact rearrangement when the
    right factor is a full algebra, bounded search otherwise) and,
    independently, attempted refutation.  Tabulates certified / refuted
    / undecided; a sample both certified and refuted would expose an
    unsound component and raises immediately."""
    rng = np.random.default_rng(seed)
    counts = {"certified": 0, "refuted": 0, "undecided": 0}
    records = []
    skw = dict(width=2, starts=2, sweeps=15)
    skw.update(search_kwargs or {})
    for level in levels:
        for k in range(samples):
            u = _random_min_positive(left, right, rng, level)
            if right.is_full_algebra:
                inner = max_inner_nuclear_factor(u)
                got = inner.status == "member"
            else:
                inner = max_inner_search(u, seed=seed + 97 * k, **skw)
                got = inner.status == "certified"
            outer = max_outer_refute(u)
            refuted = outer.status == "refuted"
            if got and refuted:
                raise RuntimeError(
                    "sample certified and refuted at once -- soundness bug"
                )
            status = "certified" if got else ("refuted" if refuted else "undecided")
            counts[status] += 1
            records.append(
                {
                    "level": int(level),
                    "sample": k,
                    "status": status,
                    "refuter_value": float(outer.value),
                }
            )
    return ProbeReport(left.name, right.name, counts, records, seed)
