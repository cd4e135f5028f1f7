"""Constructive matrix partitions of unity over finite-dimensional
C*-algebras.

Given self-adjoint strict contractions b_1, ..., b_m in a direct sum of
matrix algebras, produce a positive n x n operator matrix [a_ij] with
sum_i a_ii = 1 together with scalar strict contractions C_1, ..., C_m
such that

    b_k = sum_ij (C_k)_{ij} a_{ij}        for every k.

The construction goes through the tensor machinery: the element
1 (x) 1 + sum_k w_k (x) b_k over the block-sum system with m blocks of
size 2 is positive in the minimal cone exactly when every b_k is a
contraction, and the maximal-cone factorization of (a slightly inflated
copy of) it, available in closed form because the right factor is a full
algebra, is precisely the partition data after normalizing the scalar
factor by the inverse square root of its unit coefficient.

``verify_partition`` re-checks the four defining properties of a
certificate with plain dense linear algebra, independent of how the
certificate was produced; ``partition_to_max_certificate`` closes the
loop by rebuilding the tensor element from the partition data as an
explicit two-sided positive factorization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    RANK_CUTOFF,
    AmbientAlgebra,
    BlockMatrix,
    NotPositiveError,
    NotSelfAdjointError,
    PsdVerdict,
    ShapeError,
    carray_from_json,
    carray_to_json,
    matrix_from_json,
    matrix_to_json,
    moore_penrose_sqrt_inverse,
    psd_check,
    psd_sqrt,
)
from .catalog import block_sum_system, full_algebra_system
from .tensors import MaxCertificate, TensorElement, max_inner_nuclear_factor

__all__ = [
    "PartitionInstance",
    "PartitionCertificate",
    "PartitionCheck",
    "solve_partition",
    "verify_partition",
    "partition_element",
    "partition_to_max_certificate",
    "random_partition_instance",
    "RankAmbiguityError",
]


class RankAmbiguityError(RuntimeError):
    """The unit coefficient of the scalar factor has eigenvalues too close
    to the rank cutoff to split into "zero" and "nonzero" reliably."""


class PartitionInstance:
    """Input data: m self-adjoint strict contractions on a direct sum of
    matrix algebras.

    ``margin`` is the distance from the joint spectrum to the endpoints
    of (-1, 1): the smallest eigenvalue of any 1 - b_k or 1 + b_k.  A
    nonpositive margin means some b_k is not a strict contraction and the
    solver refuses the instance.
    """

    def __init__(self, algebra: AmbientAlgebra, b):
        self.algebra = algebra
        mats = []
        for k, bk in enumerate(b):
            if not isinstance(bk, BlockMatrix):
                if isinstance(bk, np.ndarray):
                    bk = algebra.from_dense(bk)
                else:
                    bk = BlockMatrix(algebra, bk)
            if bk.algebra.dims != algebra.dims:
                raise ShapeError(
                    f"b[{k}] lives on {bk.algebra.dims}, instance algebra is "
                    f"{algebra.dims}"
                )
            if not bk.is_self_adjoint():
                raise NotSelfAdjointError(f"b[{k}] is not self-adjoint")
            mats.append(bk)
        if not mats:
            raise ShapeError("need at least one contraction")
        self.b = mats

    @property
    def m(self) -> int:
        return len(self.b)

    @property
    def margin(self) -> float:
        worst = np.inf
        for bk in self.b:
            for blk in bk.blocks:
                vals = np.linalg.eigvalsh((blk + blk.conj().T) / 2.0)
                worst = min(worst, 1.0 - float(np.max(np.abs(vals))))
        return float(worst)

    def check_strict(self, delta: float = 0.0) -> PsdVerdict:
        """Positivity verdict for the worst of the shifted matrices
        (1 - delta) - b_k and (1 - delta) + b_k."""
        worst = None
        one = self.algebra.identity()
        for bk in self.b:
            for sign in (1.0, -1.0):
                v = psd_check((1.0 - delta) * one + sign * bk)
                if worst is None or v.min_eig < worst.min_eig:
                    worst = v
        return worst

    def to_json_obj(self) -> dict:
        return {
            "dims": list(self.algebra.dims),
            "b": [matrix_to_json(bk) for bk in self.b],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "PartitionInstance":
        algebra = AmbientAlgebra([int(d) for d in obj["dims"]])
        b = [matrix_from_json(ob) for ob in obj["b"]]
        return cls(algebra, b)


class PartitionCertificate:
    """Output data: the positive operator matrix ``a`` (an n x n matrix
    over the instance algebra, stored realized, so block beta has side
    n * d_beta with row index (i, r)), the scalar matrices C_1..C_m and
    the strictness margin eps that the C_k respect: ||C_k|| <= 1 - eps.
    """

    def __init__(self, n: int, a: BlockMatrix, c_mats, eps: float):
        self.n = int(n)
        self.a = a
        self.c_mats = [np.asarray(c, dtype=complex) for c in c_mats]
        self.eps = float(eps)
        for k, c in enumerate(self.c_mats):
            if c.shape != (self.n, self.n):
                raise ShapeError(
                    f"C[{k}] has shape {c.shape}, expected {(self.n, self.n)}"
                )

    @property
    def m(self) -> int:
        return len(self.c_mats)

    def base_dims(self) -> tuple:
        """Dimensions of the underlying algebra (block sides divided by n)."""
        dims = []
        for side in self.a.algebra.dims:
            if side % self.n:
                raise ShapeError(
                    f"block side {side} is not a multiple of n = {self.n}"
                )
            dims.append(side // self.n)
        return tuple(dims)

    def entry(self, i: int, j: int) -> BlockMatrix:
        """The (i, j) entry a_ij as an element of the base algebra."""
        dims = self.base_dims()
        blocks = []
        for bi, d in enumerate(dims):
            big = self.a.block(bi)
            blocks.append(big[i * d : (i + 1) * d, j * d : (j + 1) * d].copy())
        return BlockMatrix(AmbientAlgebra(dims), blocks)

    def diagonal_sum(self) -> BlockMatrix:
        """sum_i a_ii as an element of the base algebra."""
        dims = self.base_dims()
        blocks = []
        for bi, d in enumerate(dims):
            view = self.a.block(bi).reshape(self.n, d, self.n, d)
            blocks.append(np.einsum("iaib->ab", view))
        return BlockMatrix(AmbientAlgebra(dims), blocks)

    def combination(self, k: int) -> BlockMatrix:
        """sum_ij (C_k)_{ij} a_ij, the element the k-th contraction should
        reconstruct to."""
        dims = self.base_dims()
        c = self.c_mats[k]
        blocks = []
        for bi, d in enumerate(dims):
            view = self.a.block(bi).reshape(self.n, d, self.n, d)
            blocks.append(np.einsum("ij,iajb->ab", c, view))
        return BlockMatrix(AmbientAlgebra(dims), blocks)

    def to_json_obj(self) -> dict:
        return {
            "n": self.n,
            "eps": self.eps,
            "a": matrix_to_json(self.a),
            "c": [carray_to_json(c) for c in self.c_mats],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "PartitionCertificate":
        n = int(obj["n"])
        a = matrix_from_json(obj["a"])
        c_mats = [carray_from_json(c, (n, n)) for c in obj["c"]]
        return cls(n, a, c_mats, float(obj["eps"]))


@dataclass
class PartitionCheck:
    """Verifier outcome: ``ok`` plus the list of failed invariants (empty
    when valid) and per-check numbers."""

    ok: bool
    reasons: list = field(default_factory=list)
    report: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.ok


def _rank_gap_ambiguous(vals: np.ndarray, cutoff: float = RANK_CUTOFF) -> bool:
    """True when some eigenvalue sits within two orders of magnitude of
    the rank cutoff (relative to the top eigenvalue), so that the split
    into kernel and range could flip under perturbation."""
    vals = np.asarray(vals, dtype=float)
    if vals.size == 0:
        return False
    top = max(float(np.max(vals)), 1e-300)
    lo, hi = 1e-2 * cutoff * top, 1e2 * cutoff * top
    return bool(np.any((vals >= lo) & (vals <= hi)))


def _solve_single_block(block_mats):
    """Partition data for one matrix algebra M_d.

    ``block_mats`` are the d x d blocks of the (already inflated)
    contractions.  Returns (a_coeffs, c_tilde) where ``a_coeffs`` is the
    (d, d, d*d) coefficient tensor of the operator matrix over the full
    algebra on [d] and ``c_tilde`` are the d x d scalar contractions
    before the final (1 - eps) scaling.
    """
    d = block_mats[0].shape[0]
    m = len(block_mats)
    left = block_sum_system(m, 2)
    right = full_algebra_system([d])
    amb = right.ambient

    coeffs = np.zeros((1, 1, left.dim, right.dim), dtype=complex)
    coeffs[0, 0, 0, :] = right.coords(right.unit)
    for k, blk in enumerate(block_mats):
        coeffs[0, 0, k + 1, :] = right.coords(BlockMatrix(amb, [blk]))
    u = TensorElement(left, right, coeffs)

    out = max_inner_nuclear_factor(u)
    if out.status != "member":
        raise NotPositiveError(
            "inflated element left the minimal cone: " + str(out.report)
        )
    cert = out.certificate

    # Scalar-factor coefficients: C'_0 is the unit component, C'_k the
    # k-th difference component.  Their positivity pattern is exactly the
    # positivity of the realized W factor, re-checked here because the
    # extraction below leans on it.
    cprime = [np.array(cert.w_coeffs[:, :, s]) for s in range(left.dim)]
    if not psd_check(cprime[0]):
        raise NotPositiveError("unit coefficient of the scalar factor not PSD")
    for k in range(1, left.dim):
        for sign in (1.0, -1.0):
            if not psd_check(cprime[0] + sign * cprime[k]):
                raise NotPositiveError(
                    f"scalar factor violates -C'_0 <= C'_{k} <= C'_0"
                )

    vals = np.linalg.eigvalsh((cprime[0] + cprime[0].conj().T) / 2.0)
    if _rank_gap_ambiguous(vals):
        raise RankAmbiguityError(
            f"C'_0 spectrum {vals} straddles the rank cutoff"
        )
    _, dinv = moore_penrose_sqrt_inverse(cprime[0])
    root = psd_sqrt(cprime[0])

    # y = (C'_0^{1/2} (x) I) x, split into rows; a_ij = y_i* A y_j.
    p = cert.w_coeffs.shape[0]
    q = cert.a_coeffs.shape[0]
    y3 = root @ cert.x[:, 0].reshape(p, q)
    a_coeffs = np.einsum("iK,jL,KLt->ijt", y3.conj(), y3, cert.a_coeffs)
    c_tilde = [dinv @ cprime[k] @ dinv for k in range(1, left.dim)]
    return a_coeffs, c_tilde


def solve_partition(inst: PartitionInstance) -> PartitionCertificate:
    """Produce a partition-of-unity certificate for the instance.

    Each ambient block is handled on its own (the construction commutes
    with direct sums) and the per-block data is concatenated: n ends up
    equal to the total ambient dimension, with no claim of minimality.
    The strictness margin is spent in two halves: the contractions are
    inflated by 1/(1 - eps) before factoring, and the final C_k are
    deflated by (1 - eps), which caps their norm away from one.
    """
    margin = inst.margin
    if margin <= 0.0:
        raise NotPositiveError(
            f"instance margin {margin:.3e} is not positive; "
            "every b_k must be a strict contraction"
        )
    eps_try = []
    for eps in (min(margin / 2.0, 1e-3), min(margin / 2.0, 1e-2), 0.45 * margin):
        if eps not in eps_try:
            eps_try.append(eps)

    last_err = None
    for eps in eps_try:
        try:
            return _assemble(inst, eps)
        except RankAmbiguityError as exc:  # retry with a larger inflation
            last_err = exc
    raise last_err


def _assemble(inst: PartitionInstance, eps: float) -> PartitionCertificate:
    dims = inst.algebra.dims
    n = inst.algebra.total
    scale = 1.0 / (1.0 - eps)

    per_block = []
    for bi, d in enumerate(dims):
        mats = [scale * bk.block(bi) for bk in inst.b]
        per_block.append(_solve_single_block(mats))

    # Concatenate: row index of the big operator matrix is (block, i)
    # with i inside that block, so the scalar matrices are block diagonal
    # and [a_ij] is supported on the matching diagonal blocks.
    offsets = np.cumsum([0] + [d for d in dims])
    c_mats = []
    for k in range(inst.m):
        c = np.zeros((n, n), dtype=complex)
        for bi, d in enumerate(dims):
            o = offsets[bi]
            c[o : o + d, o : o + d] = (1.0 - eps) * per_block[bi][1][k]
        c_mats.append(c)

    big_blocks = []
    for bi, d in enumerate(dims):
        big = np.zeros((n * d, n * d), dtype=complex)
        a_coeffs = per_block[bi][0]
        local = full_algebra_system([d])
        o = offsets[bi]
        for i in range(d):
            for j in range(d):
                ent = local.reconstruct(a_coeffs[i, j]).block(0)
                big[(o + i) * d : (o + i + 1) * d, (o + j) * d : (o + j + 1) * d] = ent
        big_blocks.append(big)
    a = BlockMatrix(AmbientAlgebra([n * d for d in dims]), big_blocks)
    return PartitionCertificate(n, a, c_mats, eps)


def verify_partition(
    inst: PartitionInstance,
    cert: PartitionCertificate,
    tol_unit: float = 1e-10,
    tol_recon: float = 1e-8,
) -> PartitionCheck:
    """Check the four certificate invariants from scratch.

    unit-sum:       sum_i a_ii = 1            (residual <= tol_unit)
    positivity:     [a_ij] is PSD
    contraction:    ||C_k|| <= 1 - eps        for every k
    reconstruction: sum_ij (C_k)_ij a_ij = b_k (residual <= tol_recon)
    """
    reasons = []
    report = {}

    if cert.base_dims() != inst.algebra.dims:
        return PartitionCheck(
            False,
            ["shape"],
            {"cert_dims": cert.base_dims(), "inst_dims": inst.algebra.dims},
        )
    if cert.m != inst.m:
        return PartitionCheck(
            False, ["shape"], {"cert_m": cert.m, "inst_m": inst.m}
        )

    diff = cert.diagonal_sum() - inst.algebra.identity()
    unit_resid = max(
        float(np.max(np.abs(b))) if b.size else 0.0 for b in diff.blocks
    )
    report["unit_residual"] = unit_resid
    if unit_resid > tol_unit:
        reasons.append("unit-sum")

    verdict = psd_check(cert.a)
    report["a_min_eig"] = verdict.min_eig
    if not verdict:
        reasons.append("positivity")

    norms = [float(np.linalg.norm(c, 2)) for c in cert.c_mats]
    report["c_norms"] = norms
    bound = 1.0 - cert.eps + 1e-12
    if any(nrm > bound for nrm in norms):
        reasons.append("contraction")

    worst = 0.0
    for k, bk in enumerate(inst.b):
        diff = cert.combination(k) - bk
        worst = max(
            worst,
            max(float(np.max(np.abs(b))) if b.size else 0.0 for b in diff.blocks),
        )
    report["reconstruction_residual"] = worst
    if worst > tol_recon:
        reasons.append("reconstruction")

    return PartitionCheck(not reasons, reasons, report)


def partition_element(inst: PartitionInstance) -> TensorElement:
    """The tensor element 1 (x) 1 + sum_k w_k (x) b_k encoded by the
    instance, over the block-sum system and the instance algebra."""
    left = block_sum_system(inst.m, 2)
    right = full_algebra_system(inst.algebra.dims)
    coeffs = np.zeros((1, 1, left.dim, right.dim), dtype=complex)
    coeffs[0, 0, 0, :] = right.coords(right.unit)
    for k, bk in enumerate(inst.b):
        coeffs[0, 0, k + 1, :] = right.coords(bk)
    return TensorElement(left, right, coeffs)


def partition_to_max_certificate(
    cert: PartitionCertificate, inst: PartitionInstance
) -> MaxCertificate:
    """Rebuild the instance element as an explicit maximal-cone
    factorization X*(W (x) A)X from the partition data.

    W = I (x) w_0 + sum_k C_k (x) w_k, whose realization is the tuple
    (I + C_1, I - C_1, ..., I + C_m, I - C_m); each member is checked PSD
    before the certificate is returned.  A is the operator matrix [a_ij]
    and X pairs the two factors along the diagonal.
    """
    check = verify_partition(inst, cert)
    if not check.ok:
        raise NotPositiveError(
            "invalid partition certificate: " + ", ".join(check.reasons)
        )
    n = cert.n
    for k, c in enumerate(cert.c_mats):
        for sign in (1.0, -1.0):
            if not psd_check(np.eye(n) + sign * c):
                raise NotPositiveError(
                    f"tuple entry I {'+' if sign > 0 else '-'} C_{k + 1} is not PSD"
                )

    left = block_sum_system(inst.m, 2)
    right = full_algebra_system(inst.algebra.dims)
    w_coeffs = np.zeros((n, n, left.dim), dtype=complex)
    w_coeffs[:, :, 0] = np.eye(n)
    for k, c in enumerate(cert.c_mats):
        w_coeffs[:, :, k + 1] = c
    a_coeffs = np.zeros((n, n, right.dim), dtype=complex)
    for i in range(n):
        for j in range(n):
            a_coeffs[i, j, :] = right.coords(cert.entry(i, j))
    x = np.zeros((n * n, 1), dtype=complex)
    for i in range(n):
        x[i * n + i, 0] = 1.0
    return MaxCertificate(left, right, 1, 0.0, w_coeffs, a_coeffs, x)


def random_partition_instance(
    rng: np.random.Generator,
    m: int,
    dims,
    margin: float = 0.05,
) -> PartitionInstance:
    """Random instance with guaranteed margin: each b_k is a random
    self-adjoint element rescaled to a spectral norm drawn from
    [0.2, 1 - margin]."""
    if not 0.0 < margin < 1.0:
        raise ShapeError(f"margin {margin} outside (0, 1)")
    algebra = AmbientAlgebra(dims)
    b = []
    for _ in range(m):
        blocks = []
        for d in algebra.dims:
            g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
            blocks.append((g + g.conj().T) / 2.0)
        h = BlockMatrix(algebra, blocks)
        nrm = h.norm()
        if nrm < 1e-12:
            h = algebra.identity()
            nrm = 1.0
        target = (1.0 - margin) * rng.uniform(0.25, 1.0)
        b.append((target / nrm) * h)
    return PartitionInstance(algebra, b)
