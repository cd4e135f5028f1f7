"""Dual cones of operator systems and positivity in quotients.

Two sides of one pairing.  On the dual side, a p x p matrix of linear
functionals on a system S is positive when it comes from a completely
positive map into M_p, which for concrete systems reduces to a positive
semidefinite Choi block on the ambient algebra.  On the quotient side, a
coset X + J is positive when some kernel correction lifts X (plus an
Archimedean shift) to a genuine PSD matrix.  Both decisions run through
the feasibility engine and return re-checkable certificates: a Choi
matrix or a PSD lift when positive, and a separating object when not --
a positive matrix of span elements on which the functional matrix fails,
or a PSD annihilator of the kernel that is negative on the coset.

``pairing_crosscheck`` ties the two sides together numerically: matrices
over the equal-diagonal system paired against cosets modulo diagonal
traceless matrices must receive identical verdicts under the conjugate
trace pairing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .linalg import (
    AmbientAlgebra,
    BlockMatrix,
    NotPositiveError,
    NotSelfAdjointError,
    ShapeError,
    psd_check,
    real_to_hermitian,
)
from .catalog import (
    KernelSubspace,
    OperatorSystem,
    diagonal_traceless_kernel,
    equal_diagonal_system,
    realize_matrix_of_elements,
)
from .sdp import (
    FeasibilityProblem,
    HermitianVarBlock,
    TOL_FEAS,
    joint_complex_eq,
    solve_feasibility,
)

__all__ = [
    "Functional",
    "FunctionalMatrix",
    "DualWitness",
    "DualVerdict",
    "dual_positive",
    "faithful_state",
    "QuotientVerdict",
    "QuotientSystem",
    "ArchimedeanResult",
    "CrosscheckReport",
    "pairing_crosscheck",
    "ExtensionResult",
    "approx_extension",
    "trace_pairing",
]


def trace_pairing(a: BlockMatrix, b: BlockMatrix, convention: str = "conjugate") -> complex:
    """Pairing of two ambient elements.

    ``conjugate`` (the frozen default): <a, b> = sum_ij a_ij * conj(b_ij),
    i.e. Tr(a b*).  ``transpose``: the bilinear variant Tr(a b^T) =
    sum_ij a_ij * b_ij.
    """
    if a.algebra != b.algebra:
        raise ShapeError("pairing needs a common ambient algebra")
    if convention == "conjugate":
        return complex(np.vdot(b.vec(), a.vec()))
    if convention == "transpose":
        return complex(a.vec() @ b.vec())
    raise ValueError(f"unknown pairing convention {convention!r}")


class Functional:
    """A linear functional on an operator system, stored by its values on
    the basis."""

    def __init__(self, system: OperatorSystem, values: Sequence[complex]):
        self.system = system
        self.values = np.asarray(values, dtype=complex).reshape(system.dim)

    @classmethod
    def from_matrix(
        cls,
        system: OperatorSystem,
        b: BlockMatrix,
        convention: str = "conjugate",
    ) -> "Functional":
        """The functional s |-> <s, b> under the chosen pairing."""
        vals = [trace_pairing(s, b, convention) for s in system.basis]
        return cls(system, vals)

    def __call__(self, x) -> complex:
        if isinstance(x, BlockMatrix):
            c = self.system.coords(x)
        else:
            c = np.asarray(x, dtype=complex).reshape(self.system.dim)
        return complex(self.values @ c)

    def adjoint(self) -> "Functional":
        """f*(s) = conj(f(s*)); f is self-adjoint when f* = f."""
        vals = np.conj(self.system.adjoint_mat.T @ self.values)
        return Functional(self.system, vals)

    def is_self_adjoint(self, tol: float = 1e-10) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.values))))
        return bool(np.max(np.abs(self.values - self.adjoint().values)) <= tol * scale)

    def matrix_representative(self) -> BlockMatrix:
        """Minimal-Frobenius ambient matrix b with f = <., b> under the
        conjugate trace pairing."""
        m = self.system.basis_matrix
        sol, *_ = np.linalg.lstsq(m.T, self.values, rcond=None)
        vec = np.conj(sol)
        blocks = []
        pos = 0
        for d in self.system.ambient.dims:
            blocks.append(vec[pos : pos + d * d].reshape(d, d))
            pos += d * d
        return BlockMatrix(self.system.ambient, blocks)

    def __repr__(self):
        return f"Functional({self.system.name or 'system'}, dim={self.system.dim})"


class FunctionalMatrix:
    """A p x p matrix F = [f_ij] of functionals on one system.

    ``values[i, j, t] = f_ij(s_t)``.  F is positive when s |-> [f_ij(s)]
    is completely positive, which :func:`dual_positive` decides.
    """

    def __init__(self, system: OperatorSystem, values: np.ndarray):
        values = np.asarray(values, dtype=complex)
        if values.ndim != 3 or values.shape[0] != values.shape[1]:
            raise ShapeError(f"values shape {values.shape}")
        if values.shape[2] != system.dim:
            raise ShapeError(
                f"values cover {values.shape[2]} basis elements, system has {system.dim}"
            )
        self.system = system
        self.values = values

    @property
    def p(self) -> int:
        return self.values.shape[0]

    def entry(self, i: int, j: int) -> Functional:
        return Functional(self.system, self.values[i, j])

    def apply(self, x) -> np.ndarray:
        """[f_ij(x)] as a dense p x p matrix."""
        if isinstance(x, BlockMatrix):
            c = self.system.coords(x)
        else:
            c = np.asarray(x, dtype=complex).reshape(self.system.dim)
        return np.einsum("ijt,t->ij", self.values, c)

    def adjoint(self) -> "FunctionalMatrix":
        """(F*)_ij = (f_ji)*; positivity presupposes F* = F."""
        adj = np.empty_like(self.values)
        amt = self.system.adjoint_mat
        for i in range(self.p):
            for j in range(self.p):
                adj[i, j] = np.conj(amt.T @ self.values[j, i])
        return FunctionalMatrix(self.system, adj)

    def is_self_adjoint(self, tol: float = 1e-10) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.values))))
        return bool(
            np.max(np.abs(self.values - self.adjoint().values)) <= tol * scale
        )

    @classmethod
    def from_choi(cls, system: OperatorSystem, choi: BlockMatrix) -> "FunctionalMatrix":
        """The functional matrix of the map with the given Choi block.

        ``choi`` lives on blocks of side d_beta * p; entry ((k,i),(l,j)) of
        block beta is the (i,j) matrix element of the image of the (k,l)
        matrix unit of that block.
        """
        dims = system.ambient.dims
        if len(choi.algebra.dims) != len(dims):
            raise ShapeError("Choi block count does not match ambient")
        p = choi.algebra.dims[0] // dims[0]
        if p < 1 or any(cd != d * p for cd, d in zip(choi.algebra.dims, dims)):
            raise ShapeError("Choi block sides are not d_beta * p")
        values = np.zeros((p, p, system.dim), dtype=complex)
        for bi, d in enumerate(dims):
            c4 = choi.block(bi).reshape(d, p, d, p)
            stack = np.stack([s.block(bi) for s in system.basis], axis=0)
            values += np.einsum("tkl,kilj->ijt", stack, c4)
        return cls(system, values)

    @classmethod
    def from_representative(
        cls,
        system: OperatorSystem,
        big: BlockMatrix,
        p: int,
        convention: str = "conjugate",
    ) -> "FunctionalMatrix":
        """F = [<., b_ij>] where b_ij are the p x p sub-blocks of ``big``
        (which lives on blocks of side d_beta * p, (i, a) ordering)."""
        dims = system.ambient.dims
        if any(bd != d * p for bd, d in zip(big.algebra.dims, dims)):
            raise ShapeError("representative block sides are not d_beta * p")
        values = np.zeros((p, p, system.dim), dtype=complex)
        for bi, d in enumerate(dims):
            b4 = big.block(bi).reshape(p, d, p, d)
            stack = np.stack([s.block(bi) for s in system.basis], axis=0)
            if convention == "conjugate":
                values += np.einsum("tab,iajb->ijt", stack, np.conj(b4))
            elif convention == "transpose":
                values += np.einsum("tab,iajb->ijt", stack, b4)
            else:
                raise ValueError(f"unknown pairing convention {convention!r}")
        return cls(system, values)

    def __repr__(self):
        return (
            f"FunctionalMatrix(p={self.p}, {self.system.name or 'system'},"
            f" dim={self.system.dim})"
        )


@dataclass
class DualWitness:
    """A positive q x q matrix of span elements on which a functional
    matrix fails to be positive.

    ``coeffs[k, l, t]`` gives the (k, l) entry as a combination of basis
    elements; ``vector`` is the fixed contraction w = vec(I_q) with
    w* [F(y_kl)] w = violation < 0.
    """

    system: OperatorSystem
    coeffs: np.ndarray
    violation: float = 0.0

    @property
    def q(self) -> int:
        return self.coeffs.shape[0]

    @property
    def vector(self) -> np.ndarray:
        return np.eye(self.q, dtype=complex).reshape(-1)

    def element(self) -> BlockMatrix:
        return realize_matrix_of_elements(self.system, self.coeffs)

    def evaluation(self, fmat: FunctionalMatrix) -> np.ndarray:
        """[F(y_kl)] as a dense (q p) x (q p) matrix, (k, i) ordering."""
        q, p = self.q, fmat.p
        big = np.einsum("klt,ijt->kilj", self.coeffs, fmat.values)
        return big.reshape(q * p, q * p)

    def verify(self, fmat: FunctionalMatrix, tol: float = 1e-10) -> bool:
        """Independent check: the element is PSD and the contracted
        evaluation is decisively negative."""
        if fmat.system is not self.system and fmat.system.name != self.system.name:
            return False
        y = self.element()
        try:
            if not psd_check(y):
                return False
        except NotSelfAdjointError:
            return False
        v = complex(np.einsum("klt,klt->", self.coeffs, fmat.values))
        scale = max(1.0, float(np.max(np.abs(fmat.values))))
        if abs(v.imag) > 1e-8 * scale:
            return False
        self.violation = v.real
        if self.q == fmat.p:
            # consistency: v is exactly w* [F(y)] w for the paired-index vector
            n = self.evaluation(fmat)
            w = self.vector_p(fmat.p)
            quad = complex(np.conj(w) @ n @ w)
            if abs(quad - v) > 1e-7 * max(1.0, abs(v)) * scale:
                return False
        return v.real < -tol * scale

    def vector_p(self, p: int) -> np.ndarray:
        """w = sum_k e_k (x) e_k in the (k, i) ordering of evaluation()."""
        w = np.zeros(self.q * p, dtype=complex)
        for k in range(min(self.q, p)):
            w[k * p + k] = 1.0
        return w


@dataclass
class DualVerdict:
    status: str  # "positive" | "not_positive" | "inconclusive"
    choi: Optional[BlockMatrix] = None
    witness: Optional[DualWitness] = None
    report: dict = field(default_factory=dict)

    @property
    def positive(self) -> bool:
        return self.status == "positive"

    @property
    def not_positive(self) -> bool:
        return self.status == "not_positive"


def _choi_constraint_blocks(
    system: OperatorSystem, p: int
) -> Tuple[List[int], List[np.ndarray]]:
    """Per-ambient-block basis stacks used by the Choi feasibility rows."""
    stacks = []
    for bi, d in enumerate(system.ambient.dims):
        stacks.append(np.stack([s.block(bi) for s in system.basis], axis=0))
    return list(system.ambient.dims), stacks


def dual_positive(fmat: FunctionalMatrix, tol_feas: float = TOL_FEAS) -> DualVerdict:
    """Decide whether a self-adjoint matrix of functionals is positive.

    Positive means: some PSD Choi block on the ambient algebra restricts
    to the given values, i.e. the matrix extends to a completely positive
    map on the whole algebra (exact for these concrete targets -- no
    relaxation is involved).  Returns the Choi certificate, or a verified
    q x q witness with q = p.
    """
    system, p = fmat.system, fmat.p
    if not fmat.is_self_adjoint():
        raise NotSelfAdjointError("functional matrix is not self-adjoint")
    dims, stacks = _choi_constraint_blocks(system, p)

    prob = FeasibilityProblem()
    blocks = [
        HermitianVarBlock(prob, f"choi{bi}", d * p) for bi, d in enumerate(dims)
    ]
    units = np.eye(p)
    for t in range(system.dim):
        for i in range(p):
            for j in range(p):
                parts = []
                for bi, d in enumerate(dims):
                    g = np.kron(
                        stacks[bi][t].T, np.outer(units[j], units[i])
                    )
                    parts.append((blocks[bi], g))
                joint_complex_eq(prob, parts, fmat.values[i, j, t])

    outcome = solve_feasibility(prob)
    report = {"rows": len(prob.eqs), "engine": outcome.status, "margin": outcome.margin}

    if outcome.feasible:
        choi = BlockMatrix(
            AmbientAlgebra([d * p for d in dims]),
            [b.decode(outcome.assignment) for b in blocks],
        )
        verdict = psd_check(choi)
        recon = FunctionalMatrix.from_choi(system, choi)
        resid = float(np.max(np.abs(recon.values - fmat.values)))
        scale = max(1.0, float(np.max(np.abs(fmat.values))))
        report["choi_residual"] = resid
        if verdict and resid <= 10 * tol_feas * scale:
            return DualVerdict("positive", choi=choi, report=report)
        return DualVerdict("inconclusive", choi=choi, report=report)

    if outcome.infeasible and outcome.witness is not None:
        zs = outcome.witness.combination(prob)
        zhat = [real_to_hermitian(zs[b.name]) for b in blocks]
        # expand the separating block in the spanning family conj(s_t) (x) e_ij
        cols = []
        for t in range(system.dim):
            for i in range(p):
                for j in range(p):
                    col = np.concatenate(
                        [
                            np.kron(
                                np.conj(stacks[bi][t]), np.outer(units[i], units[j])
                            ).reshape(-1)
                            for bi in range(len(dims))
                        ]
                    )
                    cols.append(col)
        amat = np.stack(cols, axis=1)
        zvec = np.concatenate([z.reshape(-1) for z in zhat])
        m, *_ = np.linalg.lstsq(amat, zvec, rcond=None)
        expand_resid = float(np.linalg.norm(amat @ m - zvec))
        m = m.reshape(system.dim, p, p)
        ycoeffs = np.conj(np.transpose(m, (1, 2, 0)))  # [k, l, t] = conj(M_t[k,l])
        ybig = realize_matrix_of_elements(system, ycoeffs)
        ynorm = ybig.norm()
        if ynorm > 0:
            ycoeffs = ycoeffs / ynorm
            ybig = (1.0 / ynorm) * ybig
        # solver duals carry eigenvalues of order -1e-9; absorb them into
        # the unit direction so the witness element is PSD outright
        lam = min(float(np.linalg.eigvalsh((bl + bl.conj().T) / 2)[0]) for bl in ybig.blocks)
        if lam < 0:
            for k in range(p):
                ycoeffs[k, k, 0] += -lam * (1 + 1e-9)
        witness = DualWitness(system, ycoeffs)
        report["witness_expansion_residual"] = expand_resid
        report["farkas_gap"] = outcome.witness.gap
        if witness.verify(fmat):
            report["violation"] = witness.violation
            return DualVerdict("not_positive", witness=witness, report=report)
        return DualVerdict("inconclusive", witness=witness, report=report)

    return DualVerdict("inconclusive", report=report)


def faithful_state(system: OperatorSystem) -> Functional:
    """The normalized trace as a functional on the system: unital,
    positive, and strictly positive on nonzero PSD span elements."""
    total = system.ambient.total
    vals = [s.trace() / total for s in system.basis]
    return Functional(system, vals)


@dataclass
class QuotientVerdict:
    status: str  # "positive" | "not_positive" | "inconclusive"
    eps: float = 0.0
    level: int = 1
    lift: Optional[BlockMatrix] = None
    kernel_part: Optional[BlockMatrix] = None
    separator: Optional[BlockMatrix] = None
    report: dict = field(default_factory=dict)

    @property
    def positive(self) -> bool:
        return self.status == "positive"

    @property
    def not_positive(self) -> bool:
        return self.status == "not_positive"


@dataclass
class ArchimedeanResult:
    eps_star: float
    interval: Tuple[float, float]
    verdict: QuotientVerdict
    iterations: int
    inconclusive: int = 0


class QuotientSystem:
    """The quotient of an ambient algebra by a kernel subspace, with
    positivity decided through PSD lifts.

    A level-q coset representative X (on blocks of side q * d_beta) is
    eps-positive when X + eps * 1 + j is PSD for some j in M_q(J).  The
    verdict carries the lift or a PSD separator that annihilates M_q(J)
    and is strictly negative on the shifted representative.
    """

    def __init__(self, kernel: KernelSubspace, name: str = ""):
        self.kernel = kernel
        self.ambient = kernel.ambient
        self.name = name or f"{'+'.join(map(str, self.ambient.dims))}/{kernel.name or 'J'}"
        self._perp = kernel.orth_complement_vecs()

    def __repr__(self):
        return f"QuotientSystem({self.name})"

    def level_algebra(self, q: int) -> AmbientAlgebra:
        return AmbientAlgebra([q * d for d in self.ambient.dims])

    def _infer_level(self, x: BlockMatrix) -> int:
        dims = self.ambient.dims
        q = x.algebra.dims[0] // dims[0]
        if q < 1 or list(x.algebra.dims) != [q * d for d in dims]:
            raise ShapeError("representative does not sit over the quotient ambient")
        return q

    def positive(
        self, x: BlockMatrix, eps: float = 0.0, tol_feas: float = TOL_FEAS
    ) -> QuotientVerdict:
        q = self._infer_level(x)
        if not x.is_self_adjoint():
            raise NotSelfAdjointError("coset representative is not self-adjoint")
        dims = self.ambient.dims
        lvl = self.level_algebra(q)
        xprime = x + eps * lvl.identity()

        prob = FeasibilityProblem()
        blocks = [
            HermitianVarBlock(prob, f"lift{bi}", q * d) for bi, d in enumerate(dims)
        ]
        units = np.eye(q)
        nperp = self._perp.shape[1]
        offsets = [0]
        for d in dims:
            offsets.append(offsets[-1] + d * d)
        for r in range(nperp):
            gmats = []
            for bi, d in enumerate(dims):
                gmats.append(self._perp[offsets[bi] : offsets[bi + 1], r].reshape(d, d))
            for u in range(q):
                for v in range(q):
                    parts = []
                    rhs = 0.0 + 0.0j
                    for bi, d in enumerate(dims):
                        e_vu = np.outer(units[v], units[u])
                        parts.append((blocks[bi], np.kron(e_vu, gmats[bi].conj().T)))
                        xb = xprime.block(bi).reshape(q, d, q, d)
                        rhs += complex(
                            np.sum(np.conj(gmats[bi]) * xb[u, :, v, :])
                        )
                    joint_complex_eq(prob, parts, rhs)

        outcome = solve_feasibility(prob)
        report = {
            "rows": len(prob.eqs),
            "engine": outcome.status,
            "margin": outcome.margin,
            "level": q,
        }

        if outcome.feasible:
            lift = BlockMatrix(lvl, [b.decode(outcome.assignment) for b in blocks])
            if not psd_check(lift):
                return QuotientVerdict("inconclusive", eps=eps, level=q, report=report)
            j = lift - xprime
            resid = self._kernel_residual(j, q)
            report["kernel_residual"] = resid
            scale = max(1.0, lift.norm(), xprime.norm())
            if resid <= 100 * tol_feas * scale:
                return QuotientVerdict(
                    "positive", eps=eps, level=q, lift=lift, kernel_part=j,
                    report=report,
                )
            return QuotientVerdict("inconclusive", eps=eps, level=q, report=report)

        if outcome.infeasible and outcome.witness is not None:
            zs = outcome.witness.combination(prob)
            # clip away solver-dual noise at the -1e-9 level; the clipped
            # matrix is the certificate and is what gets verified below
            clipped = []
            for b in blocks:
                z = real_to_hermitian(zs[b.name])
                vals, vecs = np.linalg.eigh((z + z.conj().T) / 2)
                clipped.append((vecs * np.clip(vals, 0.0, None)) @ vecs.conj().T)
            sep = BlockMatrix(lvl, clipped)
            nrm = sep.norm()
            if nrm > 0:
                sep = (1.0 / nrm) * sep
            report["farkas_gap"] = outcome.witness.gap
            ok, info = self._check_separator(sep, xprime, q)
            report.update(info)
            if ok:
                return QuotientVerdict(
                    "not_positive", eps=eps, level=q, separator=sep, report=report
                )
            return QuotientVerdict("inconclusive", eps=eps, level=q, report=report)

        return QuotientVerdict("inconclusive", eps=eps, level=q, report=report)

    def _kernel_residual(self, j: BlockMatrix, q: int) -> float:
        """Max distance of the (u, v) entry blocks of j from the kernel span."""
        worst = 0.0
        dims = self.ambient.dims
        for u in range(q):
            for v in range(q):
                blocks = []
                for bi, d in enumerate(dims):
                    jb = j.block(bi).reshape(q, d, q, d)
                    blocks.append(jb[u, :, v, :])
                entry = BlockMatrix(self.ambient, blocks)
                worst = max(worst, self.kernel.membership(entry).residual)
        return worst

    def _check_separator(
        self, sep: BlockMatrix, xprime: BlockMatrix, q: int
    ) -> Tuple[bool, dict]:
        """A valid separator is PSD, kills e_uv (x) j for every kernel basis
        element, and pairs strictly negatively with the representative."""
        info: dict = {}
        try:
            if not psd_check(sep):
                return False, info
        except NotSelfAdjointError:
            return False, info
        dims = self.ambient.dims
        units = np.eye(q)
        worst = 0.0
        for jb in self.kernel.basis:
            for u in range(q):
                for v in range(q):
                    val = 0.0 + 0.0j
                    for bi in range(len(dims)):
                        a = np.kron(np.outer(units[u], units[v]), jb.block(bi))
                        val += np.trace(sep.block(bi) @ a)
                    worst = max(worst, abs(val))
        info["separator_kernel_defect"] = worst
        pairing = complex(
            sum(np.trace(sep.block(bi) @ xprime.block(bi)) for bi in range(len(dims)))
        )
        info["separator_value"] = pairing.real
        scale = max(1.0, xprime.norm())
        ok = worst <= 1e-7 * scale and pairing.real < -1e-10 * scale
        return ok, info

    def archimedean(
        self,
        x: BlockMatrix,
        tol: float = 1e-8,
        hi: Optional[float] = None,
        max_iter: int = 80,
    ) -> ArchimedeanResult:
        """Bisect for the infimal eps with X + eps * 1 positive.

        The upper bracket defaults to the norm shift, which is always
        feasible with the zero kernel correction.  Bisection moves on
        confirmed verdicts only; engine hiccups widen the reported
        interval instead of corrupting it.
        """
        q = self._infer_level(x)
        if hi is None:
            lam = min(np.linalg.eigvalsh((b + b.conj().T) / 2)[0] for b in x.blocks)
            hi = max(0.0, -float(lam)) + 1e-6
        verdict_hi = self.positive(x, eps=hi)
        if not verdict_hi.positive:
            raise NotPositiveError(
                f"norm shift eps={hi} did not certify; engine said {verdict_hi.status}"
            )
        lo = 0.0
        v0 = self.positive(x, eps=0.0)
        if v0.positive:
            return ArchimedeanResult(0.0, (0.0, 0.0), v0, 1)
        iterations, bad = 1, 0
        while hi - lo > tol * max(1.0, hi) and iterations < max_iter:
            mid = 0.5 * (lo + hi)
            v = self.positive(x, eps=mid)
            iterations += 1
            if v.positive:
                hi, verdict_hi = mid, v
            elif v.not_positive:
                lo = mid
            else:
                bad += 1
                if bad >= 3:
                    break
                lo = lo + 0.25 * (mid - lo)
        return ArchimedeanResult(hi, (lo, hi), verdict_hi, iterations, bad)


@dataclass
class CrosscheckReport:
    n: int
    convention: str
    samples: int
    per_level: Dict[int, dict] = field(default_factory=dict)

    @property
    def total_disagreements(self) -> int:
        return sum(v["disagree"] for v in self.per_level.values())

    @property
    def total_inconclusive(self) -> int:
        return sum(v["inconclusive"] for v in self.per_level.values())

    @property
    def all_agree(self) -> bool:
        return self.total_disagreements == 0 and self.total_inconclusive == 0


def _random_coset_representative(
    n: int, q: int, rng: np.random.Generator, kernel: KernelSubspace, positive: bool
) -> np.ndarray:
    """Hermitian (qn) x (qn) sample; when ``positive`` the sample is PSD
    plus an M_q(kernel) perturbation, so its coset is positive by
    construction."""
    m = q * n
    g = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    if not positive:
        h = (g + g.conj().T) / 2
        return h / max(1.0, np.linalg.norm(h, 2))
    base = g @ g.conj().T / m
    pert = np.zeros((m, m), dtype=complex)
    nj = len(kernel.basis)
    for u in range(q):
        for v in range(u, q):
            c = rng.normal(size=nj) + 1j * rng.normal(size=nj)
            jm = sum(ci * jb.block(0) for ci, jb in zip(c, kernel.basis))
            pert[u * n : (u + 1) * n, v * n : (v + 1) * n] += jm
            pert[v * n : (v + 1) * n, u * n : (u + 1) * n] += jm.conj().T
    h = base + (pert + pert.conj().T) / 2
    return h / max(1.0, np.linalg.norm(h, 2))


def pairing_crosscheck(
    n: int,
    levels: Sequence[int] = (1, 2),
    samples: int = 25,
    seed: int = 0,
    convention: str = "conjugate",
) -> CrosscheckReport:
    """Check that dual-cone and quotient-cone verdicts coincide.

    A Hermitian B on blocks of side q*n is read two ways: as a matrix of
    functionals on the equal-diagonal system via the trace pairing, and
    as a coset representative modulo M_q(diagonal traceless).  Under the
    conjugate pairing the two cones are each other's duals entry by
    entry, so the verdicts must match at every level; the transpose
    variant flips one side by a partial transpose and is only guaranteed
    to match at level 1.
    """
    system = equal_diagonal_system(n)
    kernel = diagonal_traceless_kernel(n)
    quotient = QuotientSystem(kernel)
    rng = np.random.default_rng(seed)
    report = CrosscheckReport(n=n, convention=convention, samples=samples)
    for q in levels:
        lvl = AmbientAlgebra([q * n])
        agree = disagree = inconclusive = 0
        records = []
        for s in range(samples):
            want_positive = s % 2 == 0
            h = _random_coset_representative(n, q, rng, kernel, want_positive)
            x = BlockMatrix(lvl, [h])
            fmat = FunctionalMatrix.from_representative(system, x, q, convention)
            dv = dual_positive(fmat)
            qv = quotient.positive(x, eps=0.0)
            if dv.status == "inconclusive" or qv.status == "inconclusive":
                inconclusive += 1
                records.append((s, dv.status, qv.status))
            elif dv.positive == qv.positive:
                agree += 1
            else:
                disagree += 1
                records.append((s, dv.status, qv.status))
        report.per_level[q] = {
            "samples": samples,
            "agree": agree,
            "disagree": disagree,
            "inconclusive": inconclusive,
            "records": records,
        }
    return report


@dataclass
class ExtensionResult:
    extension: FunctionalMatrix
    distance_upper: float
    distance_lower: float
    defects: np.ndarray
    level: int
    choi: Optional[BlockMatrix] = None


def approx_extension(
    fmat: FunctionalMatrix,
    big: OperatorSystem,
    level: Optional[int] = None,
    starts: int = 20,
    seed: int = 0,
    choi: Optional[BlockMatrix] = None,
) -> ExtensionResult:
    """Extend a positive functional matrix to a larger system on the same
    ambient algebra, with certified distance bounds on the restriction.

    The extension reuses the Choi certificate, so it is completely
    positive by construction and restricts to the original values up to
    solver accuracy.  ``distance_upper`` bounds the completely bounded
    distance at the given matrix level through the basis defects and the
    coordinate functional norms; ``distance_lower`` is a sampled bound
    from random contractive matrices over the small system.
    """
    small = fmat.system
    if big.ambient != small.ambient:
        raise ShapeError("extension target must share the ambient algebra")
    if not big.contains_system(small):
        raise ShapeError("target system does not contain the source span")
    if choi is None:
        verdict = dual_positive(fmat)
        if not verdict.positive:
            raise NotPositiveError(
                "input functional matrix is not completely positive"
            )
        choi = verdict.choi
    psi = FunctionalMatrix.from_choi(big, choi)
    if level is None:
        level = max(small.ambient.dims)

    # restriction values of psi on the small basis
    restr = np.zeros_like(fmat.values)
    for t, s in enumerate(small.basis):
        restr[:, :, t] = psi.apply(big.coords(s))
    diff = restr - fmat.values
    defects = np.array(
        [np.linalg.norm(diff[:, :, t], 2) for t in range(small.dim)]
    )
    sqrt_dim = float(np.sqrt(small.ambient.total))
    kappas = np.linalg.norm(small.coords_matrix, axis=1)
    upper = float(level * sqrt_dim * np.sum(defects * kappas))

    rng = np.random.default_rng(seed)
    lower = 0.0
    d = level
    for _ in range(starts):
        c = rng.normal(size=(d, d, small.dim)) + 1j * rng.normal(
            size=(d, d, small.dim)
        )
        for u in range(d):
            for v in range(u, d):
                if u == v:
                    c[u, u] = small.selfadjointize(c[u, u])
                else:
                    c[v, u] = small.adjoint_coeffs(c[u, v])
        xbig = realize_matrix_of_elements(small, c)
        nrm = xbig.norm()
        if nrm <= 0:
            continue
        c = c / nrm
        gap = np.einsum("uvt,ijt->uivj", c, diff).reshape(
            d * fmat.p, d * fmat.p
        )
        lower = max(lower, float(np.linalg.norm(gap, 2)))
    return ExtensionResult(
        extension=psi,
        distance_upper=upper,
        distance_lower=lower,
        defects=defects,
        level=level,
        choi=choi,
    )
