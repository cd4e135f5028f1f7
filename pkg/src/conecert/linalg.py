"""Base linear algebra for block operator algebras.

Everything downstream (duality, tensor cones, the SDP layer) funnels
through the handful of primitives in this module, so the conventions are
pinned here once:

* an *ambient algebra* is a direct sum of full matrix algebras,
  ``M_{d_1} (+) ... (+) M_{d_m}``, stored blockwise;
* positivity checks are eigenvalue checks with an explicit tolerance and
  an explicit witness vector on failure;
* complex Hermitian problems are translated to real symmetric ones via
  the standard ``[[Re, -Im], [Im, Re]]`` embedding (and back).

Tolerances used across the package live here as module constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

# Default tolerances.  TOL_PSD is relative to the matrix scale when no
# explicit tolerance is passed; TOL_EQ is used for equality of scalars /
# entries; RANK_CUTOFF is relative to the largest singular value.
TOL_PSD = 1e-9
TOL_EQ = 1e-10
RANK_CUTOFF = 1e-10


class ShapeError(ValueError):
    """Raised when matrix/block shapes are inconsistent."""


class NotSelfAdjointError(ValueError):
    """Raised when an operation requires a self-adjoint matrix."""


class NotPositiveError(ValueError):
    """Raised when an operation requires a positive semidefinite matrix."""


def _as_square(mat) -> np.ndarray:
    a = np.asarray(mat, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {a.shape}")
    return a


def _require_self_adjoint(a: np.ndarray, tol: float) -> np.ndarray:
    dev = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    scale = max(1.0, np.max(np.abs(a)) if a.size else 0.0)
    if dev > tol * scale:
        raise NotSelfAdjointError(
            f"matrix is not self-adjoint: max |A - A*| = {dev:.3e}"
        )
    # symmetrize so eigh sees an exactly Hermitian input
    return (a + a.conj().T) / 2.0


class AmbientAlgebra:
    """A direct sum of full matrix algebras, ``M_{d_1} (+) ... (+) M_{d_m}``.

    Instances are cheap descriptors: they hold the block side lengths and
    the offsets of each block inside the dense realization of total side
    ``sum(dims)``.  A direct sum of 1x1 blocks is a commutative diagonal
    algebra.
    """

    def __init__(self, dims: Sequence[int]):
        dims = tuple(int(d) for d in dims)
        if not dims or any(d < 1 for d in dims):
            raise ShapeError(f"block dims must be positive, got {dims}")
        self.dims = dims
        self.total = sum(dims)
        offs = np.cumsum((0,) + dims)
        self.offsets = tuple(int(o) for o in offs[:-1])

    def __eq__(self, other):
        return isinstance(other, AmbientAlgebra) and self.dims == other.dims

    def __hash__(self):
        return hash(self.dims)

    def __repr__(self):
        return f"AmbientAlgebra({list(self.dims)})"

    @property
    def nblocks(self) -> int:
        return len(self.dims)

    def identity(self) -> "BlockMatrix":
        return BlockMatrix(self, [np.eye(d, dtype=complex) for d in self.dims])

    def zero(self) -> "BlockMatrix":
        return BlockMatrix(self, [np.zeros((d, d), dtype=complex) for d in self.dims])

    def from_dense(self, dense) -> "BlockMatrix":
        """Extract the block-diagonal part of a dense total-size matrix.

        The off-block entries must vanish (up to TOL_EQ relative to scale);
        anything else means the matrix does not live in this algebra.
        """
        a = _as_square(dense)
        if a.shape[0] != self.total:
            raise ShapeError(
                f"dense matrix has side {a.shape[0]}, algebra needs {self.total}"
            )
        blocks = []
        mask = np.ones_like(a, dtype=bool)
        for off, d in zip(self.offsets, self.dims):
            blocks.append(a[off : off + d, off : off + d].copy())
            mask[off : off + d, off : off + d] = False
        stray = np.max(np.abs(a[mask])) if np.any(mask) else 0.0
        scale = max(1.0, np.max(np.abs(a)) if a.size else 0.0)
        if stray > TOL_EQ * scale:
            raise ShapeError(
                f"matrix has off-block mass {stray:.3e}, not in this algebra"
            )
        return BlockMatrix(self, blocks)

    def random_self_adjoint(self, rng: np.random.Generator, scale: float = 1.0) -> "BlockMatrix":
        blocks = []
        for d in self.dims:
            g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            blocks.append(scale * (g + g.conj().T) / 2.0)
        return BlockMatrix(self, blocks)

    def random_psd(self, rng: np.random.Generator, rank: Optional[int] = None) -> "BlockMatrix":
        """Random PSD element, blockwise Gram matrices ``G G*``."""
        blocks = []
        for d in self.dims:
            r = d if rank is None else min(rank, d)
            g = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
            blocks.append(g @ g.conj().T)
        return BlockMatrix(self, blocks)


class BlockMatrix:
    """An element of an :class:`AmbientAlgebra`, stored blockwise.

    Immutable by convention: arithmetic returns new instances and the
    underlying arrays are not exposed for writing.  Supports +, -, scalar
    *, @ (blockwise matmul), .adjoint(), .dense(), .trace(), .norm().
    """

    __slots__ = ("algebra", "_blocks")

    def __init__(self, algebra: AmbientAlgebra, blocks: Sequence[np.ndarray]):
        if len(blocks) != algebra.nblocks:
            raise ShapeError(
                f"got {len(blocks)} blocks for {algebra.nblocks}-block algebra"
            )
        mats = []
        for d, b in zip(algebra.dims, blocks):
            b = np.asarray(b, dtype=complex)
            if b.shape != (d, d):
                raise ShapeError(f"block shape {b.shape} does not match side {d}")
            mats.append(b.copy())
        self.algebra = algebra
        self._blocks = tuple(mats)

    @property
    def blocks(self) -> tuple:
        return self._blocks

    def block(self, i: int) -> np.ndarray:
        return self._blocks[i].copy()

    def dense(self) -> np.ndarray:
        out = np.zeros((self.algebra.total, self.algebra.total), dtype=complex)
        for off, d, b in zip(self.algebra.offsets, self.algebra.dims, self._blocks):
            out[off : off + d, off : off + d] = b
        return out

    def vec(self) -> np.ndarray:
        """Concatenation of row-major flattened blocks (no off-block zeros)."""
        return np.concatenate([b.ravel() for b in self._blocks])

    def adjoint(self) -> "BlockMatrix":
        return BlockMatrix(self.algebra, [b.conj().T for b in self._blocks])

    def trace(self) -> complex:
        return sum(np.trace(b) for b in self._blocks)

    def norm(self) -> float:
        """Operator norm (largest block spectral norm)."""
        return max(
            (np.linalg.norm(b, 2) if b.size else 0.0) for b in self._blocks
        )

    def is_self_adjoint(self, tol: float = TOL_EQ) -> bool:
        scale = max(1.0, max(np.max(np.abs(b)) if b.size else 0.0 for b in self._blocks))
        return all(
            np.max(np.abs(b - b.conj().T)) <= tol * scale if b.size else True
            for b in self._blocks
        )

    def __add__(self, other):
        self._check_same(other)
        return BlockMatrix(
            self.algebra, [a + b for a, b in zip(self._blocks, other._blocks)]
        )

    def __sub__(self, other):
        self._check_same(other)
        return BlockMatrix(
            self.algebra, [a - b for a, b in zip(self._blocks, other._blocks)]
        )

    def __mul__(self, c):
        return BlockMatrix(self.algebra, [c * b for b in self._blocks])

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def __matmul__(self, other):
        self._check_same(other)
        return BlockMatrix(
            self.algebra, [a @ b for a, b in zip(self._blocks, other._blocks)]
        )

    def _check_same(self, other):
        if not isinstance(other, BlockMatrix) or other.algebra != self.algebra:
            raise ShapeError("operands live in different algebras")

    def __repr__(self):
        return f"BlockMatrix(dims={list(self.algebra.dims)})"


@dataclass
class PsdVerdict:
    """Outcome of a PSD check.

    ``witness`` is a unit vector with ``<v, M v> = min_eig`` when the check
    fails (None when it passes); ``block`` is the index of the offending
    block for blockwise inputs (None for dense inputs or passes).
    """

    positive: bool
    min_eig: float
    tol: float
    witness: Optional[np.ndarray] = None
    block: Optional[int] = None

    def __bool__(self) -> bool:
        return self.positive


def _psd_check_dense(a: np.ndarray, tol: Optional[float]) -> PsdVerdict:
    if a.size == 0:
        return PsdVerdict(True, 0.0, 0.0)
    scale = max(1.0, np.max(np.abs(a)))
    a = _require_self_adjoint(a, TOL_EQ * 10)
    eff_tol = TOL_PSD * scale if tol is None else float(tol)
    vals, vecs = np.linalg.eigh(a)
    lo = float(vals[0])
    if lo >= -eff_tol:
        return PsdVerdict(True, lo, eff_tol)
    return PsdVerdict(False, lo, eff_tol, witness=vecs[:, 0].copy())


def psd_check(mat, tol: Optional[float] = None) -> PsdVerdict:
    """Check positive semidefiniteness, returning an explicit verdict.

    With ``tol=None`` the tolerance is ``TOL_PSD * max(1, |M|_max)``
    (scale-relative); an explicit ``tol`` is absolute.  Non-self-adjoint
    input raises :class:`NotSelfAdjointError` rather than returning False:
    "is this PSD" is only a meaningful question for self-adjoint matrices,
    and silently answering it hides bugs upstream.

    For a :class:`BlockMatrix` the verdict reports the worst block and a
    witness vector inside that block.
    """
    if isinstance(mat, BlockMatrix):
        worst = None
        eff = 0.0
        for i, b in enumerate(mat.blocks):
            v = _psd_check_dense(np.asarray(b), tol)
            eff = max(eff, v.tol)
            if worst is None or v.min_eig < worst.min_eig:
                worst = v
                worst.block = i
        assert worst is not None
        worst.tol = eff
        if worst.positive:
            worst.block = None
            worst.witness = None
        return worst
    return _psd_check_dense(_as_square(mat), tol)


def psd_sqrt(mat) -> np.ndarray:
    """Positive square root of a PSD matrix (small negative eigenvalues,
    within the psd_check tolerance, are clipped to zero)."""
    a = _as_square(mat)
    v = psd_check(a)
    if not v:
        raise NotPositiveError(f"matrix is not PSD (min eig {v.min_eig:.3e})")
    vals, vecs = np.linalg.eigh((a + a.conj().T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def moore_penrose_sqrt_inverse(mat) -> tuple:
    """Return ``(P, D)`` for PSD ``M``: the orthogonal projection ``P``
    onto the range of ``M`` and ``D = (M^{1/2})^+``, the Moore-Penrose
    inverse of the positive square root.

    The defining identities (each tested):

    * ``P = P* = P^2``,
    * ``D M^{1/2} = M^{1/2} D = P``,
    * ``D`` vanishes on the kernel of ``M``.

    Eigenvalues below ``RANK_CUTOFF * max_eig`` are treated as zero;
    genuinely negative input raises :class:`NotPositiveError`.
    """
    a = _as_square(mat)
    v = psd_check(a)
    if not v:
        raise NotPositiveError(
            f"matrix is not PSD (min eig {v.min_eig:.3e}), cannot take sqrt inverse"
        )
    vals, vecs = np.linalg.eigh((a + a.conj().T) / 2.0)
    top = float(vals[-1]) if vals.size else 0.0
    cut = RANK_CUTOFF * max(top, 1e-300)
    keep = vals > cut
    P = (vecs[:, keep]) @ vecs[:, keep].conj().T
    inv_sqrt = np.zeros_like(vals)
    inv_sqrt[keep] = 1.0 / np.sqrt(vals[keep])
    D = (vecs * inv_sqrt) @ vecs.conj().T
    return P, D


def tensor_shuffle(x, a: int, b: int) -> np.ndarray:
    """Swap tensor factors: view ``x`` as an element of ``M_a (x) M_b``
    (realized in ``M_{ab}`` with the left factor varying slowest) and
    return the same element of ``M_b (x) M_a``.

    A congruence by a permutation, so it preserves the spectrum, and it is
    an involution up to the (a, b) -> (b, a) swap.
    """
    m = _as_square(x)
    if m.shape[0] != a * b:
        raise ShapeError(f"side {m.shape[0]} != {a}*{b}")
    t = m.reshape(a, b, a, b)
    return np.ascontiguousarray(t.transpose(1, 0, 3, 2)).reshape(b * a, b * a)


def matrix_units_gram(d: int) -> np.ndarray:
    """The d^2 x d^2 Gram-type matrix ``[e_ij]_{ij}`` of matrix units:
    entry ((i,j), (k,l)) equals 1 when i == k is irrelevant -- concretely
    this is ``vv*`` for ``v = vec(I_d)``, the rank-one matrix with
    eigenvalue ``d`` on the maximally entangled vector.

    It is the block matrix whose (i, j) block is the matrix unit e_ij,
    and the canonical witness that ``[e_ij]`` is PSD over ``M_d``.
    """
    if d < 1:
        raise ShapeError(f"dimension must be positive, got {d}")
    v = np.eye(d, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())


def hermitian_to_real(h) -> np.ndarray:
    """Embed a complex matrix as a real one of doubled size:
    ``H = A + iB  ->  [[A, -B], [B, A]]``.

    For Hermitian H the image is symmetric, PSD iff H is PSD, and each
    eigenvalue of H appears twice.  Traces pick up a factor of two:
    ``Tr(emb(G) emb(H)) = 2 Tr(G H)`` for Hermitian G, H.
    """
    a = _as_square(h)
    A, B = a.real, a.imag
    return np.block([[A, -B], [B, A]])


def real_to_hermitian(y) -> np.ndarray:
    """Left inverse of :func:`hermitian_to_real` on its image, extended to
    all real matrices by averaging over the embedding's symmetry.

    For a real symmetric Y of even side 2d, the returned H satisfies:
    if Y is PSD then H is PSD (the average of Y with a rotation of it
    stays PSD and lands exactly on the embedded subspace).  This is what
    makes solving over an unstructured real PSD variable sound.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[0] != y.shape[1] or y.shape[0] % 2:
        raise ShapeError(f"expected a real square matrix of even side, got {y.shape}")
    d = y.shape[0] // 2
    y11, y12 = y[:d, :d], y[:d, d:]
    y21, y22 = y[d:, :d], y[d:, d:]
    A = (y11 + y22) / 2.0
    B = (y21 - y12) / 2.0
    return A + 1j * B


def matrix_to_json(mat) -> dict:
    """Serialize a matrix to the package's interchange form:
    ``{"dims": [d_1, ...], "blocks": [block, ...]}`` where each block is a
    row-major nested list of ``[re, im]`` pairs.  Dense input becomes a
    single block.
    """
    if isinstance(mat, BlockMatrix):
        dims = list(mat.algebra.dims)
        blocks = mat.blocks
    else:
        a = _as_square(mat)
        dims = [a.shape[0]]
        blocks = (a,)
    out_blocks = []
    for b in blocks:
        b = np.asarray(b, dtype=complex)
        out_blocks.append(
            [[[float(x.real), float(x.imag)] for x in row] for row in b]
        )
    return {"dims": dims, "blocks": out_blocks}


def matrix_from_json(obj: dict) -> BlockMatrix:
    """Inverse of :func:`matrix_to_json`."""
    try:
        dims = [int(d) for d in obj["dims"]]
        raw = obj["blocks"]
    except (KeyError, TypeError) as exc:
        raise ShapeError(f"malformed matrix object: {exc}") from exc
    if len(raw) != len(dims):
        raise ShapeError(
            f"matrix object lists {len(raw)} blocks for {len(dims)} dims"
        )
    alg = AmbientAlgebra(dims)
    blocks = []
    for d, rb in zip(dims, raw):
        arr = np.asarray(rb, dtype=float)
        if arr.shape != (d, d, 2):
            raise ShapeError(
                f"block has shape {arr.shape}, expected {(d, d, 2)}"
            )
        blocks.append(arr[..., 0] + 1j * arr[..., 1])
    return BlockMatrix(alg, blocks)


def carray_to_json(a: np.ndarray) -> list:
    """Nested-list form of a complex ndarray with ``[re, im]`` leaves."""
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def carray_from_json(obj, shape=None) -> np.ndarray:
    """Inverse of :func:`carray_to_json`; optionally checks the shape."""
    arr = np.asarray(obj, dtype=float)
    if arr.ndim < 1 or arr.shape[-1] != 2:
        raise ShapeError(f"complex array object has shape {arr.shape}")
    out = arr[..., 0] + 1j * arr[..., 1]
    if shape is not None and out.shape != tuple(shape):
        raise ShapeError(f"array has shape {out.shape}, expected {tuple(shape)}")
    return out
