"""Tensor elements over two catalog systems and the two extreme cones.

An element carries a coefficient tensor ``c[u, v, s, t]``: (u, v) index
the matrix level, s the left basis, t the right basis.  Concretely it
lives on a block algebra with one block per (left block, right block)
pair, and every cone question at level n is flattened to level 1 over
the amplified left system, which is an exact reformulation.

Two cones are implemented:

* the spatial cone -- positivity of the concrete realization, decided by
  an eigenvalue check (:func:`min_positive`);
* the maximal cone -- elements of the form ``X*(W (x) A)X`` up to an
  ``eps`` multiple of the unit, with W positive over the left system and
  A positive over the right one.  :class:`MaxCertificate` stores such a
  factorization and re-verifies it from scratch with plain numpy.

Membership in the maximal cone is produced two ways: an exact
factorization when the right factor is a full matrix algebra
(:func:`max_inner_nuclear_factor`, no solver involved), and an
alternating least-squares search over the two factors
(:func:`max_inner_search`), whose output is only ever reported after the
independent certificate check passes.  Non-membership is produced by
:func:`max_outer_refute`: a completely positive map into the right
ambient algebra induces a functional that is provably nonnegative on the
whole maximal cone, so a strictly negative value on the element is
conclusive.  The search failing is reported as ``not_found``, never as
non-membership.

The last section handles elements written over a free product of cyclic
groups (:class:`FreeCyclicElement`): sampling finite-dimensional unitary
representations can only refute positivity (a negative eigenvalue in a
concrete representation is a counterexample), so the outcome is either
``refuted`` with the representation attached or ``no_refutation``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .linalg import (
    RANK_CUTOFF,
    AmbientAlgebra,
    BlockMatrix,
    NotSelfAdjointError,
    PsdVerdict,
    ShapeError,
    carray_from_json,
    carray_to_json,
    psd_check,
)
from .catalog import (
    OperatorSystem,
    amplified_system,
    amplify_coeffs,
    deamplify_coeffs,
    realize_matrix_of_elements,
    system_from_name,
)
from .duality import FunctionalMatrix, dual_positive

TOL_REFUTE = 1e-6
EPS_SCHEDULE = tuple(float(x) for x in np.geomspace(1e-2, 1e-8, 7))


def _quiet_solve(prob, solver: str, **kwargs):
    """Solve while muting cvxpy's chatty UserWarnings (its complex
    rewriting emits one unconditionally); failures still surface through
    the returned status."""
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return prob.solve(solver=solver, **kwargs)


def _basis_stack(system: OperatorSystem, bi: int) -> np.ndarray:
    """(dim, d, d) stack of one ambient block across the basis."""
    return np.stack([b.block(bi) for b in system.basis])


class TensorElement:
    """A level-n element of the tensor product of two catalog systems."""

    def __init__(self, left: OperatorSystem, right: OperatorSystem, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim == 2:
            coeffs = coeffs.reshape(1, 1, *coeffs.shape)
        if (
            coeffs.ndim != 4
            or coeffs.shape[0] != coeffs.shape[1]
            or coeffs.shape[2] != left.dim
            or coeffs.shape[3] != right.dim
        ):
            raise ShapeError(
                f"coefficient tensor shape {coeffs.shape}, expected "
                f"(n, n, {left.dim}, {right.dim})"
            )
        self.left = left
        self.right = right
        self.coeffs = coeffs

    @property
    def level(self) -> int:
        return self.coeffs.shape[0]

    # -- constructors ------------------------------------------------

    @classmethod
    def unit(cls, left: OperatorSystem, right: OperatorSystem, level: int = 1):
        """The unit 1 (x) 1 at the given level (identity on the diagonal)."""
        lc = left.coords(left.unit)
        rc = right.coords(right.unit)
        c = np.zeros((level, level, left.dim, right.dim), dtype=complex)
        for u in range(level):
            c[u, u] = np.outer(lc, rc)
        return cls(left, right, c)

    @classmethod
    def simple(cls, left: OperatorSystem, right: OperatorSystem, lc, rc):
        """The elementary tensor with the given coefficient vectors."""
        lc = np.asarray(lc, dtype=complex).reshape(left.dim)
        rc = np.asarray(rc, dtype=complex).reshape(right.dim)
        return cls(left, right, np.outer(lc, rc))

    @classmethod
    def random_self_adjoint(
        cls,
        left: OperatorSystem,
        right: OperatorSystem,
        rng: np.random.Generator,
        level: int = 1,
        scale: float = 1.0,
    ):
        shape = (level, level, left.dim, right.dim)
        c = rng.normal(scale=scale, size=shape) + 1j * rng.normal(
            scale=scale, size=shape
        )
        x = cls(left, right, c)
        return (x + x.adjoint()) * 0.5

    # -- algebra -----------------------------------------------------

    def _compatible(self, other: "TensorElement") -> None:
        if (
            self.left.dim != other.left.dim
            or self.right.dim != other.right.dim
            or self.level != other.level
            or tuple(self.left.ambient.dims) != tuple(other.left.ambient.dims)
            or tuple(self.right.ambient.dims) != tuple(other.right.ambient.dims)
        ):
            raise ShapeError("tensor elements live over different systems")

    def __add__(self, other: "TensorElement") -> "TensorElement":
        self._compatible(other)
        return TensorElement(self.left, self.right, self.coeffs + other.coeffs)

    def __sub__(self, other: "TensorElement") -> "TensorElement":
        self._compatible(other)
        return TensorElement(self.left, self.right, self.coeffs - other.coeffs)

    def __mul__(self, a) -> "TensorElement":
        return TensorElement(self.left, self.right, self.coeffs * complex(a))

    __rmul__ = __mul__

    def shift(self, eps: float) -> "TensorElement":
        """self + eps * unit, the standard slack direction."""
        return self + float(eps) * TensorElement.unit(self.left, self.right, self.level)

    def adjoint(self) -> "TensorElement":
        al = self.left.adjoint_mat
        ar = self.right.adjoint_mat
        c = np.einsum("sa,vuab,tb->uvst", al, np.conj(self.coeffs), ar)
        return TensorElement(self.left, self.right, c)

    @property
    def is_self_adjoint(self) -> bool:
        d = self.coeffs - self.adjoint().coeffs
        scale = max(1.0, float(np.max(np.abs(self.coeffs))))
        return float(np.max(np.abs(d))) <= 1e-12 * scale

    # -- realization -------------------------------------------------

    def pair_algebra(self) -> AmbientAlgebra:
        n = self.level
        dims = [
            n * dl * dr
            for dl in self.left.ambient.dims
            for dr in self.right.ambient.dims
        ]
        return AmbientAlgebra(dims)

    def realize(self) -> BlockMatrix:
        """Concrete matrix on the (left block, right block) pair algebra;
        block entry ((u,a,b),(v,a',b')) is sum_st c[u,v,s,t] s^i[a,a'] t^j[b,b']."""
        n = self.level
        blocks = []
        for bi, dl in enumerate(self.left.ambient.dims):
            ls = _basis_stack(self.left, bi)
            for bj, dr in enumerate(self.right.ambient.dims):
                rs = _basis_stack(self.right, bj)
                dense = np.einsum("uvst,sij,tkl->uikvjl", self.coeffs, ls, rs)
                blocks.append(dense.reshape(n * dl * dr, n * dl * dr))
        return BlockMatrix(self.pair_algebra(), blocks)

    def flatten(self) -> "TensorElement":
        """The same element as a level-1 element over the amplified left
        system; realizations agree block by block."""
        n = self.level
        if n == 1:
            return self
        big = amplified_system(self.left, n)
        flat = np.stack(
            [
                amplify_coeffs(self.left, self.coeffs[:, :, :, t], n)
                for t in range(self.right.dim)
            ],
            axis=-1,
        )
        return TensorElement(big, self.right, flat.reshape(1, 1, big.dim, self.right.dim))

    # -- serialization -----------------------------------------------

    def to_json_obj(self) -> dict:
        c = self.coeffs
        if self.level == 1:
            c = c[0, 0]
        return {
            "left": self.left.name,
            "right": self.right.name,
            "level": self.level,
            "coeffs": carray_to_json(c),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "TensorElement":
        left = system_from_name(obj["left"])
        right = system_from_name(obj["right"])
        arr = carray_from_json(obj["coeffs"])
        level = int(obj.get("level", 1 if arr.ndim == 2 else arr.shape[0]))
        if level == 1 and arr.ndim == 2:
            arr = arr.reshape(1, 1, *arr.shape)
        return cls(left, right, arr)


def min_positive(x: TensorElement, tol: Optional[float] = None) -> PsdVerdict:
    """Membership in the spatial cone: positivity of the realization.
    Exact for this cone -- the realization is faithful."""
    return psd_check(x.realize(), tol)


# ---------------------------------------------------------------------------
# maximal-cone certificates


@dataclass
class CertificateCheck:
    ok: bool
    residual: float
    w_verdict: PsdVerdict
    a_verdict: PsdVerdict
    report: dict = field(default_factory=dict)


class MaxCertificate:
    """A factorization ``u + eps*1 = X*(W (x) A)X`` with W a positive
    P x P matrix over the left system, A a positive Q x Q matrix over the
    right one, and X a scalar (P*Q) x n matrix.

    ``verify`` recomputes everything from the stored data: positivity of
    the two realized factors and the reconstruction residual measured on
    the realized difference.  Nothing from the producing search is
    trusted.
    """

    def __init__(
        self,
        left: OperatorSystem,
        right: OperatorSystem,
        level: int,
        eps: float,
        w_coeffs: np.ndarray,
        a_coeffs: np.ndarray,
        x: np.ndarray,
    ):
        self.left = left
        self.right = right
        self.level = int(level)
        self.eps = float(eps)
        self.w_coeffs = np.asarray(w_coeffs, dtype=complex)
        self.a_coeffs = np.asarray(a_coeffs, dtype=complex)
        self.x = np.asarray(x, dtype=complex)
        P = self.w_coeffs.shape[0]
        Q = self.a_coeffs.shape[0]
        if self.w_coeffs.shape != (P, P, left.dim):
            raise ShapeError(f"W coefficient shape {self.w_coeffs.shape}")
        if self.a_coeffs.shape != (Q, Q, right.dim):
            raise ShapeError(f"A coefficient shape {self.a_coeffs.shape}")
        if self.x.shape != (P * Q, self.level):
            raise ShapeError(
                f"X shape {self.x.shape}, expected {(P * Q, self.level)}"
            )

    def reconstruction(self) -> TensorElement:
        """The element X*(W (x) A)X - eps*1 this certificate encodes."""
        P = self.w_coeffs.shape[0]
        Q = self.a_coeffs.shape[0]
        x3 = self.x.reshape(P, Q, self.level)
        c = np.einsum(
            "IJu,KLv,IKs,JLt->uvst",
            np.conj(x3),
            x3,
            self.w_coeffs,
            self.a_coeffs,
            optimize=True,
        )
        rec = TensorElement(self.left, self.right, c)
        return rec.shift(-self.eps)

    def verify(self, u: TensorElement, tol: float = 1e-8) -> CertificateCheck:
        if u.left.dim != self.left.dim or u.right.dim != self.right.dim:
            raise ShapeError("certificate built over different systems")
        if u.level != self.level:
            raise ShapeError(
                f"certificate is for level {self.level}, element has {u.level}"
            )
        wv = psd_check(realize_matrix_of_elements(self.left, self.w_coeffs))
        av = psd_check(realize_matrix_of_elements(self.right, self.a_coeffs))
        target = u.realize()
        diff = self.reconstruction().realize() - target
        residual = diff.norm()
        scale = max(1.0, target.norm())
        ok = (
            wv.positive
            and av.positive
            and self.eps >= 0.0
            and residual <= tol * scale
        )
        report = {
            "residual": float(residual),
            "scale": float(scale),
            "w_min_eig": wv.min_eig,
            "a_min_eig": av.min_eig,
            "eps": self.eps,
        }
        return CertificateCheck(ok, float(residual), wv, av, report)

    def to_json_obj(self) -> dict:
        return {
            "left": self.left.name,
            "right": self.right.name,
            "level": self.level,
            "eps": self.eps,
            "w": carray_to_json(self.w_coeffs),
            "a": carray_to_json(self.a_coeffs),
            "x": carray_to_json(self.x),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "MaxCertificate":
        left = system_from_name(obj["left"])
        right = system_from_name(obj["right"])
        return cls(
            left,
            right,
            int(obj["level"]),
            float(obj["eps"]),
            carray_from_json(obj["w"]),
            carray_from_json(obj["a"]),
            carray_from_json(obj["x"]),
        )


@dataclass
class InnerOutcome:
    """Result of a maximal-cone membership attempt.

    ``member`` / ``not_member`` are exact verdicts (full-algebra right
    factor); ``certified`` / ``not_found`` come from the search, where a
    failure to find a factorization decides nothing.
    """

    status: str
    certificate: Optional[MaxCertificate] = None
    report: dict = field(default_factory=dict)


def max_inner_nuclear_factor(
    u: TensorElement, tol: Optional[float] = None
) -> InnerOutcome:
    """Exact maximal-cone membership when the right factor is a full
    matrix algebra.

    Rearranging the coefficients of a level-n element over S (x) M_d
    gives an (n*d) x (n*d) matrix over S alone, and membership in the
    maximal cone is exactly positivity of that matrix's realization (one
    such matrix per right block).  On success the rearrangement itself is
    packaged as a certificate with eps = 0; on failure the negative
    eigenvalue direction is a proof of non-membership.
    """
    right = u.right
    if not right.is_full_algebra:
        raise ValueError(
            "exact factorization needs a full matrix-algebra right factor; "
            "use max_inner_search for general systems"
        )
    left = u.left
    n = u.level
    drs = list(right.ambient.dims)
    D = sum(drs)

    hats = []
    min_eigs = []
    for bj, dr in enumerate(drs):
        rs = _basis_stack(right, bj)
        hat = np.einsum("uvst,tkl->ukvls", u.coeffs, rs).reshape(
            n * dr, n * dr, left.dim
        )
        hats.append(hat)
        verdict = psd_check(realize_matrix_of_elements(left, hat), tol)
        min_eigs.append(verdict.min_eig)
        if not verdict.positive:
            return InnerOutcome(
                "not_member",
                report={
                    "right_block": bj,
                    "min_eig": verdict.min_eig,
                    "verdict": verdict,
                    "block_min_eigs": min_eigs,
                },
            )

    # assemble the rearrangement as an explicit certificate
    P = n * D
    Q = D
    ofsJ = np.concatenate([[0], np.cumsum(drs)])[:-1]
    w = np.zeros((P, P, left.dim), dtype=complex)
    a = np.zeros((Q, Q, right.dim), dtype=complex)
    x = np.zeros((P * Q, n), dtype=complex)
    for bj, dr in enumerate(drs):
        oi = n * ofsJ[bj]
        oj = ofsJ[bj]
        w[oi : oi + n * dr, oi : oi + n * dr, :] = hats[bj]
        for k in range(dr):
            for l in range(dr):
                unit_blocks = [np.zeros((d, d), dtype=complex) for d in drs]
                unit_blocks[bj][k, l] = 1.0
                e = BlockMatrix(right.ambient, unit_blocks)
                a[oj + k, oj + l, :] = right.coords(e)
        for wlev in range(n):
            for k in range(dr):
                I = oi + wlev * dr + k
                J = oj + k
                x[I * Q + J, wlev] = 1.0
    cert = MaxCertificate(left, right, n, 0.0, w, a, x)
    return InnerOutcome(
        "member", cert, report={"block_min_eigs": min_eigs, "eps": 0.0}
    )


# ---------------------------------------------------------------------------
# alternating search for general right factors


def _span_perp(system: OperatorSystem, p: int) -> List[np.ndarray]:
    """Orthonormal complement (as stacked per-block vec pieces, column-major
    vec to match the solver) of the realized span of p x p matrices over
    the system."""
    dims = list(system.ambient.dims)
    sizes = [(p * d) ** 2 for d in dims]
    cols = []
    for i in range(p):
        for j in range(p):
            e = np.zeros((p, p))
            e[i, j] = 1.0
            for s in range(system.dim):
                pieces = [
                    np.kron(e, system.basis[s].block(bi)).flatten(order="F")
                    for bi in range(len(dims))
                ]
                cols.append(np.concatenate(pieces))
    span = np.stack(cols, axis=1)
    q, sv, _ = np.linalg.svd(span, full_matrices=True)
    rank = int(np.sum(sv > RANK_CUTOFF * (sv[0] if len(sv) else 1.0)))
    perp = q[:, rank:]
    out = []
    off = 0
    for sz in sizes:
        out.append(perp[off : off + sz, :])
        off += sz
    return out


def _half_step(
    var_sys: OperatorSystem,
    p: int,
    fixed_blocks: List[np.ndarray],
    var_on_left: bool,
    targets: List[np.ndarray],
    other_dims: Sequence[int],
    perp: List[np.ndarray],
):
    """One least-squares sweep: optimize the PSD factor over ``var_sys``
    with the other factor held fixed.  ``targets`` are indexed left-major
    by (left block, right block).  Returns the realized blocks."""
    import cvxpy as cp

    dims = list(var_sys.ambient.dims)
    Vb = [cp.Variable((p * d, p * d), hermitian=True) for d in dims]
    cons = [V >> 0 for V in Vb]
    if perp[0].shape[1]:
        acc = sum(
            perp[bi].conj().T @ cp.vec(Vb[bi], order="F")
            for bi in range(len(dims))
        )
        cons.append(acc == 0)
    terms = []
    for bi, d in enumerate(dims):
        for bj, do in enumerate(other_dims):
            if var_on_left:
                K = cp.kron(Vb[bi], fixed_blocks[bj])
                da, db = d, do
                tindex = bi * len(other_dims) + bj
            else:
                K = cp.kron(fixed_blocks[bj], Vb[bi])
                da, db = do, d
                tindex = bj * len(dims) + bi
            # contract the paired p-indices: recon[(a,b),(a',b')] =
            # sum_i K[((i,a),(i,b)), ((i',a'),(i',b'))]
            Xc = np.zeros((p * da * p * db, da * db))
            for i in range(p):
                for av in range(da):
                    for bv in range(db):
                        Xc[(i * da + av) * p * db + i * db + bv, av * db + bv] = 1.0
            recon = Xc.T @ K @ Xc
            terms.append(cp.sum_squares(recon - targets[tindex]))
    prob = cp.Problem(cp.Minimize(sum(terms)), cons)
    for solver, kwargs in (
        ("CLARABEL", {}),
        ("SCS", {"eps_abs": 1e-8, "eps_rel": 1e-8, "max_iters": 20000}),
    ):
        try:
            _quiet_solve(prob, solver, **kwargs)
        except cp.error.SolverError:
            continue
        if prob.status == cp.OPTIMAL:
            break
    if prob.value is None or Vb[0].value is None:
        return None, float("inf")
    vals = [np.asarray(V.value) for V in Vb]
    vals = [(v + v.conj().T) / 2.0 for v in vals]
    return vals, float(prob.value)


def _pair_targets(flat: TensorElement) -> List[np.ndarray]:
    return [np.asarray(b) for b in flat.realize().blocks]


def _recon_residual(
    wblocks, ablocks, p, ldims, rdims, targets
) -> float:
    total = 0.0
    idx = 0
    for bi, dl in enumerate(ldims):
        for bj, dr in enumerate(rdims):
            w4 = wblocks[bi].reshape(p, dl, p, dl)
            a4 = ablocks[bj].reshape(p, dr, p, dr)
            rec = np.einsum("iajc,ibjd->abcd", w4, a4).reshape(dl * dr, dl * dr)
            total += float(np.sum(np.abs(rec - targets[idx]) ** 2))
            idx += 1
    return np.sqrt(total)


def _extract_coeffs(system: OperatorSystem, blocks, p) -> Tuple[np.ndarray, float]:
    dims = list(system.ambient.dims)
    out = np.zeros((p, p, system.dim), dtype=complex)
    worst = 0.0
    for i in range(p):
        for j in range(p):
            piece = BlockMatrix(
                system.ambient,
                [
                    blocks[bi][i * d : (i + 1) * d, j * d : (j + 1) * d]
                    for bi, d in enumerate(dims)
                ],
            )
            # least-squares projection; solver span residue is measured,
            # not gated -- the certificate check decides
            out[i, j] = system.coords_matrix @ piece.vec()
            res = (system.reconstruct(out[i, j]) - piece).norm()
            worst = max(worst, res)
    return out, worst


def max_inner_search(
    u: TensorElement,
    width: int = 2,
    eps_schedule: Optional[Sequence[float]] = None,
    sweeps: int = 25,
    starts: int = 3,
    seed: int = 0,
    warm_a: Optional[np.ndarray] = None,
    warm_w: Optional[np.ndarray] = None,
    tol_cert: float = 1e-7,
) -> InnerOutcome:
    """Alternating least-squares search for a maximal-cone factorization.

    Tries the slack values in ``eps_schedule`` from largest to smallest,
    warm-starting each attempt from the previous factors (the largest
    slack gets ``starts`` independent initializations), and returns the
    certificate for the smallest slack that passes independent
    verification.  A miss is reported as ``not_found`` -- this routine
    can never conclude non-membership.
    """
    if not u.is_self_adjoint:
        raise NotSelfAdjointError("searching a factorization of a non-self-adjoint element")
    flat = u.flatten()
    S, T = flat.left, flat.right
    p = int(width)
    rng = np.random.default_rng(seed)
    if eps_schedule is None:
        eps_schedule = EPS_SCHEDULE
    schedule = sorted(set(float(e) for e in eps_schedule), reverse=True)

    ldims = list(S.ambient.dims)
    rdims = list(T.ambient.dims)
    perp_w = _span_perp(S, p)
    perp_a = _span_perp(T, p)

    def unit_seed():
        # identity-anchored start with a positive kick to break symmetry
        base = [np.eye(p * d, dtype=complex) for d in rdims]
        kick = amplified_system(T, p).random_positive(rng) if p > 1 else T.random_positive(rng)
        return [b + 0.2 * np.asarray(k) for b, k in zip(base, kick.blocks)]

    inits = []
    if warm_a is not None:
        inits.append(
            [np.asarray(b) for b in realize_matrix_of_elements(T, np.asarray(warm_a, dtype=complex)).blocks]
        )
    inits.append(unit_seed())
    while len(inits) < max(1, int(starts)):
        src = amplified_system(T, p).random_positive(rng) if p > 1 else T.random_positive(rng)
        inits.append([np.asarray(b) for b in src.blocks])
    warm_wblocks = None
    if warm_w is not None:
        warm_wblocks = [
            np.asarray(b)
            for b in realize_matrix_of_elements(S, np.asarray(warm_w, dtype=complex)).blocks
        ]

    def anneal(ablocks, targets, tscale, wseed=None):
        """Alternate until stall or convergence; returns blocks + residual."""
        wblocks = wseed
        resid = float("inf")
        stall = 0
        if wblocks is not None:
            ablocks, _ = _half_step(T, p, wblocks, False, targets, ldims, perp_a)
            if ablocks is None:
                return None, None, float("inf")
        for _ in range(sweeps):
            wblocks, _ = _half_step(S, p, ablocks, True, targets, rdims, perp_w)
            if wblocks is None:
                return None, None, float("inf")
            ablocks_new, _ = _half_step(T, p, wblocks, False, targets, ldims, perp_a)
            if ablocks_new is None:
                return None, None, float("inf")
            # renormalize the scale split between the factors; the product
            # is invariant and the least-squares steps condition better
            nrm = max(float(np.linalg.norm(b, 2)) for b in ablocks_new)
            if nrm > 0:
                ablocks = [b / nrm for b in ablocks_new]
                wblocks = [b * nrm for b in wblocks]
            else:
                ablocks = ablocks_new
            new = _recon_residual(wblocks, ablocks, p, ldims, rdims, targets)
            if new > resid - 1e-12 * tscale:
                stall += 1
            else:
                stall = 0
            resid = min(resid, new)
            if resid <= 0.2 * tol_cert * tscale or stall >= 3:
                break
        return wblocks, ablocks, resid

    best: Optional[Tuple[float, MaxCertificate, CertificateCheck]] = None
    history = []
    state = None
    for step, eps in enumerate(schedule):
        target = flat.shift(eps)
        targets = _pair_targets(target)
        tscale = max(1.0, max(np.max(np.abs(t)) for t in targets))
        tries = inits if state is None else [state] + inits
        got = None
        for ablocks0 in tries:
            wb, ab, resid = anneal(
                ablocks0, targets, tscale, wseed=warm_wblocks if state is None else None
            )
            if wb is not None and resid <= tol_cert * tscale:
                got = (wb, ab, resid)
                break
        history.append({"eps": eps, "residual": resid if got is None else got[2]})
        if got is None:
            break
        wblocks, ablocks, resid = got
        state = ablocks
        w_coeffs, wres = _extract_coeffs(S, wblocks, p)
        a_coeffs, ares = _extract_coeffs(T, ablocks, p)
        x = np.zeros((p * p, 1), dtype=complex)
        for i in range(p):
            x[i * p + i, 0] = 1.0
        cert_flat = MaxCertificate(S, T, 1, eps, w_coeffs, a_coeffs, x)
        check = cert_flat.verify(flat, tol=tol_cert)
        history[-1]["span_residual"] = max(wres, ares)
        history[-1]["verified"] = check.ok
        if not check.ok:
            break
        cert = _unflatten_certificate(cert_flat, u) if u.level > 1 else cert_flat
        cand = (eps, cert, cert.verify(u, tol=tol_cert))
        if not cand[2].ok:  # translation must re-verify; treat as a miss
            break
        best = cand
    if best is None:
        return InnerOutcome("not_found", report={"history": history})
    eps, cert, check = best
    return InnerOutcome(
        "certified",
        cert,
        report={"eps": eps, "residual": check.residual, "history": history},
    )


def _unflatten_certificate(cert: MaxCertificate, u: TensorElement) -> MaxCertificate:
    """Translate a level-1 certificate over the amplified left system back
    to a level-n certificate over the original one (a pure reindexing)."""
    n = u.level
    S = u.left
    p = cert.w_coeffs.shape[0]
    Q = cert.a_coeffs.shape[0]
    P = p * n
    w = np.zeros((P, P, S.dim), dtype=complex)
    for i in range(p):
        for j in range(p):
            w[i * n : (i + 1) * n, j * n : (j + 1) * n, :] = deamplify_coeffs(
                S, cert.w_coeffs[i, j], n
            )
    xf = cert.x.reshape(p, Q)
    xt = np.zeros((P, Q, n), dtype=complex)
    for i in range(p):
        for a in range(n):
            xt[i * n + a, :, a] = xf[i, :]
    return MaxCertificate(
        S, u.right, n, cert.eps, w, cert.a_coeffs, xt.reshape(P * Q, n)
    )


# ---------------------------------------------------------------------------
# refutation through completely positive functionals


class OuterEvidence:
    """A family of PSD Choi blocks, one per (left block, right block)
    pair, inducing the functional

        f(s (x) t) = sum_pairs sum s[a,a'] t[b,b'] C[(a,b),(a',b')]

    which is nonnegative on every maximal-cone element (it factors as a
    trace pairing of two PSD matrices against any X*(W (x) A)X).  A
    strictly negative value on an element therefore refutes membership
    for every slack smaller than the violation.
    """

    def __init__(
        self,
        left: OperatorSystem,
        right: OperatorSystem,
        chois: Dict[Tuple[int, int], np.ndarray],
    ):
        self.left = left
        self.right = right
        self.chois = {k: np.asarray(v, dtype=complex) for k, v in chois.items()}

    def _pairs(self):
        for bi in range(len(self.left.ambient.dims)):
            for bj in range(len(self.right.ambient.dims)):
                yield bi, bj

    def trace_total(self) -> float:
        return float(
            sum(np.real(np.trace(self.chois[k])) for k in self.chois)
        )

    def evaluate(self, x: TensorElement) -> float:
        """f(x) for a level-1 element (higher levels are flattened first,
        which matches how the evidence was built)."""
        flat = x.flatten()
        if (
            flat.left.dim != self.left.dim
            or flat.right.dim != self.right.dim
        ):
            raise ShapeError("evidence built over different systems")
        big = flat.realize()
        val = 0.0 + 0.0j
        for idx, (bi, bj) in enumerate(self._pairs()):
            val += np.sum(big.blocks[idx] * self.chois[(bi, bj)])
        return float(np.real(val))

    def verify(self, x: TensorElement, tol_refute: float = TOL_REFUTE) -> Tuple[bool, dict]:
        """Re-check everything that makes the refutation sound: every
        Choi block PSD, total trace 1, and a strictly negative value."""
        min_eig = 0.0
        for k, c in self.chois.items():
            v = psd_check(c)
            min_eig = min(min_eig, v.min_eig)
            if not v.positive:
                return False, {"failed_block": k, "min_eig": v.min_eig}
        tr = self.trace_total()
        val = self.evaluate(x)
        ok = abs(tr - 1.0) <= 1e-6 and val < -tol_refute
        return ok, {"trace": tr, "value": val, "min_choi_eig": min_eig}

    def functional_on_right(self, smat_coeffs: np.ndarray) -> FunctionalMatrix:
        """The matrix of functionals [f(s_kl (x) .)] over the right system
        for a q x q coefficient matrix over the left one."""
        smat_coeffs = np.asarray(smat_coeffs, dtype=complex)
        q = smat_coeffs.shape[0]
        vals = np.zeros((q, q, self.right.dim), dtype=complex)
        for bi, bj in self._pairs():
            dl = self.left.ambient.dims[bi]
            dr = self.right.ambient.dims[bj]
            ls = _basis_stack(self.left, bi)
            rs = _basis_stack(self.right, bj)
            c4 = self.chois[(bi, bj)].reshape(dl, dr, dl, dr)
            # s_kl realized at block bi, contracted against the Choi
            vals += np.einsum(
                "kls,sac,tbd,abcd->klt", smat_coeffs, ls, rs, c4, optimize=True
            )
        return FunctionalMatrix(self.right, vals)

    def sampled_level_check(
        self, levels: Sequence[int] = (1, 2), samples: int = 10, seed: int = 0
    ) -> dict:
        """Sound spot-check that the functional is positive against
        sampled positive matrices over the left system, decided through
        the dual-side test on the right system.  Any violation means the
        evidence is junk; inconclusive dual runs are counted, not hidden.
        """
        rng = np.random.default_rng(seed)
        out = {}
        for q in levels:
            amp = amplified_system(self.left, q) if q > 1 else self.left
            pos = incon = 0
            for _ in range(samples):
                smat = amp.random_positive(rng)
                # coefficients back over the base system, as a q x q tensor
                flatc = amp.coords(smat)
                coeffs = deamplify_coeffs(self.left, flatc, q) if q > 1 else flatc.reshape(1, 1, -1)
                fm = self.functional_on_right(coeffs)
                verdict = dual_positive(fm)
                if verdict.positive:
                    pos += 1
                elif verdict.not_positive:
                    return {
                        **out,
                        q: {"violation": True, "checked": pos + incon + 1},
                    }
                else:
                    incon += 1
            out[q] = {
                "checked": samples,
                "positive": pos,
                "inconclusive": incon,
                "violation": False,
            }
        return out

    def to_json_obj(self) -> dict:
        return {
            "left": self.left.name,
            "right": self.right.name,
            "chois": {
                f"{bi},{bj}": carray_to_json(c) for (bi, bj), c in self.chois.items()
            },
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "OuterEvidence":
        left = system_from_name(obj["left"])
        right = system_from_name(obj["right"])
        chois = {}
        for key, val in obj["chois"].items():
            bi, bj = (int(t) for t in key.split(","))
            chois[(bi, bj)] = carray_from_json(val)
        return cls(left, right, chois)


@dataclass
class OuterOutcome:
    """``refuted`` carries verified evidence; ``no_refutation`` decides
    nothing about membership."""

    status: str
    evidence: Optional[OuterEvidence] = None
    value: float = 0.0
    report: dict = field(default_factory=dict)


def max_outer_refute(
    u: TensorElement, tol_refute: float = TOL_REFUTE
) -> OuterOutcome:
    """Search for a completely positive functional witnessing that the
    element is outside the maximal cone.

    Minimizes f(u) over all trace-one Choi families; the optimizer's
    output is clipped to exactly PSD blocks, renormalized, and
    re-evaluated, so the returned evidence stands on its own.  A value
    above the refutation threshold yields ``no_refutation``.
    """
    import cvxpy as cp

    if not u.is_self_adjoint:
        raise NotSelfAdjointError("refutation target must be self-adjoint")
    flat = u.flatten()
    S, T = flat.left, flat.right
    big = flat.realize()
    keys = [
        (bi, bj)
        for bi in range(len(S.ambient.dims))
        for bj in range(len(T.ambient.dims))
    ]
    Cv = {}
    for idx, (bi, bj) in enumerate(keys):
        side = S.ambient.dims[bi] * T.ambient.dims[bj]
        Cv[(bi, bj)] = cp.Variable((side, side), hermitian=True)
    cons = [C >> 0 for C in Cv.values()]
    cons.append(sum(cp.real(cp.trace(C)) for C in Cv.values()) == 1)
    obj = sum(
        cp.real(cp.sum(cp.multiply(np.asarray(big.blocks[idx]), Cv[key])))
        for idx, key in enumerate(keys)
    )
    prob = cp.Problem(cp.Minimize(obj), cons)
    report: dict = {}
    for solver, kwargs in (
        ("CLARABEL", {}),
        ("SCS", {"eps_abs": 1e-9, "eps_rel": 1e-9, "max_iters": 100000}),
    ):
        try:
            _quiet_solve(prob, solver, **kwargs)
        except cp.error.SolverError:
            continue
        report["solver"] = solver
        report["solver_status"] = prob.status
        if prob.status == cp.OPTIMAL:
            break
    if prob.value is None or any(C.value is None for C in Cv.values()):
        return OuterOutcome("no_refutation", report=report)

    # the solver only proposes; clip to exactly PSD, renormalize, and let
    # the evidence check carry the verdict
    chois = {}
    for key, C in Cv.items():
        c = np.asarray(C.value)
        lam, vec = np.linalg.eigh((c + c.conj().T) / 2.0)
        chois[key] = (vec * np.clip(lam, 0.0, None)) @ vec.conj().T
    total = sum(np.real(np.trace(c)) for c in chois.values())
    if total <= 0:
        return OuterOutcome("no_refutation", report=report)
    chois = {k: c / total for k, c in chois.items()}
    evidence = OuterEvidence(S, T, chois)
    value = evidence.evaluate(flat)
    report["value"] = value
    report["solver_value"] = float(prob.value)
    if value < -tol_refute:
        ok, vrep = evidence.verify(flat, tol_refute)
        report["verify"] = vrep
        if ok:
            return OuterOutcome("refuted", evidence, value, report)
    return OuterOutcome("no_refutation", None, value, report)


# ---------------------------------------------------------------------------
# sampled representations for free products of cyclic groups


def clifford_generators(m: int) -> List[np.ndarray]:
    """m pairwise anticommuting self-adjoint unitaries on 2^ceil(m/2)
    dimensions, built from the usual Pauli tower."""
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    q = (m + 1) // 2
    gens = []
    for j in range(q):
        pre = np.eye(1, dtype=complex)
        for _ in range(j):
            pre = np.kron(pre, sz)
        post = np.eye(2 ** (q - j - 1), dtype=complex)
        gens.append(np.kron(pre, np.kron(sx, post)))
        gens.append(np.kron(pre, np.kron(sy, post)))
    return gens[:m]


class FreeCyclicElement:
    """An element sum_ij c[i,j] (x) g_i^j (plus a unit term) with matrix
    coefficients, over the free product of n cyclic groups of order k.

    ``c0`` is the coefficient of the unit; ``coeffs[i, j-1]`` that of the
    j-th power of the i-th generator (j = 1..k-1).  Self-adjointness is
    c0 = c0* and coeffs[i, k-j-1] = coeffs[i, j-1]*.
    """

    def __init__(self, n: int, k: int, c0, coeffs):
        if n < 1 or k < 2:
            raise ShapeError("need at least one generator of order >= 2")
        c0 = np.atleast_2d(np.asarray(c0, dtype=complex))
        coeffs = np.asarray(coeffs, dtype=complex)
        p = c0.shape[0]
        if c0.shape != (p, p):
            raise ShapeError(f"unit coefficient shape {c0.shape}")
        if coeffs.shape != (n, k - 1, p, p):
            raise ShapeError(
                f"coefficient shape {coeffs.shape}, expected {(n, k - 1, p, p)}"
            )
        self.n = n
        self.k = k
        self.c0 = c0
        self.coeffs = coeffs

    @property
    def p(self) -> int:
        return self.c0.shape[0]

    @property
    def is_self_adjoint(self) -> bool:
        scale = max(
            1.0, float(np.max(np.abs(self.c0))), float(np.max(np.abs(self.coeffs)))
        )
        if np.max(np.abs(self.c0 - self.c0.conj().T)) > 1e-12 * scale:
            return False
        for i in range(self.n):
            for j in range(1, self.k):
                a = self.coeffs[i, j - 1]
                b = self.coeffs[i, self.k - j - 1]
                if np.max(np.abs(a.conj().T - b)) > 1e-12 * scale:
                    return False
        return True

    @classmethod
    def unit(cls, n: int, k: int, p: int = 1) -> "FreeCyclicElement":
        return cls(
            n, k, np.eye(p), np.zeros((n, k - 1, p, p), dtype=complex)
        )

    @classmethod
    def from_scalars(cls, n: int, k: int, c0: complex, table: dict) -> "FreeCyclicElement":
        """Scalar coefficients; ``table[(i, j)]`` multiplies g_i^j."""
        coeffs = np.zeros((n, k - 1, 1, 1), dtype=complex)
        for (i, j), val in table.items():
            if not (0 <= i < n and 1 <= j < k):
                raise ShapeError(f"bad generator power ({i}, {j})")
            coeffs[i, j - 1, 0, 0] = val
        return cls(n, k, np.array([[c0]], dtype=complex), coeffs)

    @classmethod
    def random_positive(
        cls, n: int, k: int, p: int, rng: np.random.Generator
    ) -> "FreeCyclicElement":
        """A positive element built from spectral projections: with
        q_{i,r} = (1/k) sum_j w^{-jr} g_i^j (the projection of g_i onto
        eigenvalue w^r in any representation) and PSD weights P_{i,r},
        the element sum_{i,r} q_{i,r} (x) P_{i,r} is positive in every
        representation."""
        w = np.exp(2j * np.pi / k)
        P = np.zeros((n, k, p, p), dtype=complex)
        for i in range(n):
            for r in range(k):
                g = rng.normal(size=(p, p)) + 1j * rng.normal(size=(p, p))
                P[i, r] = g @ g.conj().T / p
        c0 = np.sum(P, axis=(0, 1)) / k
        coeffs = np.zeros((n, k - 1, p, p), dtype=complex)
        for i in range(n):
            for j in range(1, k):
                coeffs[i, j - 1] = (
                    sum(w ** (-j * r) * P[i, r] for r in range(k)) / k
                )
        return cls(n, k, c0, coeffs)

    def rep_matrix(self, unitaries: Sequence[np.ndarray]) -> np.ndarray:
        """The image under the representation sending g_i to the given
        order-k unitaries (all of one dimension)."""
        if len(unitaries) != self.n:
            raise ShapeError(f"need {self.n} unitaries, got {len(unitaries)}")
        us = [np.asarray(U, dtype=complex) for U in unitaries]
        d = us[0].shape[0]
        M = np.kron(self.c0, np.eye(d, dtype=complex))
        for i, U in enumerate(us):
            if U.shape != (d, d):
                raise ShapeError("representation unitaries must share one dimension")
            upow = U.copy()
            for j in range(1, self.k):
                M = M + np.kron(self.coeffs[i, j - 1], upow)
                upow = upow @ U
        return M


@dataclass
class NPWitness:
    """A concrete representation exhibiting a negative eigenvalue."""

    dim: int
    unitaries: List[np.ndarray]
    min_eig: float
    vector: np.ndarray

    def verify(self, elem: FreeCyclicElement, tol: float = 1e-9) -> bool:
        for U in self.unitaries:
            d = U.shape[0]
            if np.max(np.abs(U.conj().T @ U - np.eye(d))) > 1e-10:
                return False
            upow = np.linalg.matrix_power(U, elem.k)
            if np.max(np.abs(upow - np.eye(d))) > 1e-8:
                return False
        M = elem.rep_matrix(self.unitaries)
        scale = max(1.0, float(np.max(np.abs(M))))
        lam = np.linalg.eigvalsh((M + M.conj().T) / 2.0)
        return bool(lam[0] < -tol * scale)


@dataclass
class NPOutcome:
    status: str
    witness: Optional[NPWitness] = None
    report: dict = field(default_factory=dict)


def _random_order_k_unitary(d: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-conjugated unitary with spectrum inside the k-th roots of
    unity, hence exactly of order dividing k."""
    w = np.exp(2j * np.pi / k)
    phases = w ** rng.integers(0, k, size=d)
    if d == 1:
        return np.array([[phases[0]]], dtype=complex)
    from scipy.stats import unitary_group

    V = unitary_group.rvs(d, random_state=rng)
    return (V * phases) @ V.conj().T


def np_sample_refute(
    elem: FreeCyclicElement,
    dims: Sequence[int] = (1, 2, 3, 4),
    samples: int = 250,
    seed: int = 0,
    tol: float = 1e-9,
) -> NPOutcome:
    """Hunt for a finite-dimensional representation where the element has
    a negative eigenvalue.  The one-dimensional trivial representation is
    always checked first; each refutation is re-verified (unitarity,
    order, eigenvalue) before being reported.  No refutation after the
    sampling budget decides nothing."""
    if not elem.is_self_adjoint:
        raise NotSelfAdjointError("representation sampling needs a self-adjoint element")
    rng = np.random.default_rng(seed)
    checked = 0
    worst = np.inf

    def attempt(unitaries, dim):
        nonlocal worst
        M = elem.rep_matrix(unitaries)
        scale = max(1.0, float(np.max(np.abs(M))))
        lam, vec = np.linalg.eigh((M + M.conj().T) / 2.0)
        worst = min(worst, float(lam[0]))
        if lam[0] < -tol * scale:
            w = NPWitness(dim, [U.copy() for U in unitaries], float(lam[0]), vec[:, 0])
            if w.verify(elem, tol):
                return w
        return None

    trivial = [np.eye(1, dtype=complex)] * elem.n
    w = attempt(trivial, 1)
    checked += 1
    if w is not None:
        return NPOutcome(
            "refuted", w, {"checked": checked, "dim": 1, "trivial": True}
        )
    for d in dims:
        for _ in range(samples):
            us = [_random_order_k_unitary(d, elem.k, rng) for _ in range(elem.n)]
            checked += 1
            w = attempt(us, d)
            if w is not None:
                return NPOutcome(
                    "refuted",
                    w,
                    {"checked": checked, "dim": d, "trivial": False},
                )
    return NPOutcome(
        "no_refutation",
        None,
        {"checked": checked, "dims": list(dims), "min_eig_seen": float(worst)},
    )
