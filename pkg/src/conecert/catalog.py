"""Concrete operator systems and the test-system catalog.

An operator system here is always concrete: a unital *-closed subspace of
a direct sum of matrix algebras, handed to us as a linearly independent
basis whose first element is the ambient unit.  The catalog constructs
the families this package studies:

* ``block_sum_system(n, k)``   -- n diagonal blocks of size k inside
  l^inf_{nk}, all block sums equal (CLI token ``W:n,k``);
* ``equal_diagonal_system(n)`` -- matrices in M_n with constant diagonal
  (``E:n``);
* ``tied_diagonal_system(n)``  -- direct sums of n copies of M_2 with all
  diagonal entries equal (``U:n``);
* ``balanced_trace_system(n)`` -- matrices in M_{2n} whose first-half
  trace equals the second-half trace (``F:n``);
* ``diagonal_algebra_system(m)`` / ``full_matrix_system(d)`` /
  ``full_algebra_system(dims)`` -- the ambient algebras themselves
  (``Linf:m``, ``Mat:d``);
* ``diagonal_traceless_kernel(n)`` -- the kernel of diagonal trace-zero
  matrices in M_n used by the quotient machinery.

Basis conventions are frozen (certificates refer to coefficients): for
block-sum systems the basis is the all-ones vector followed by, per
block, the k-1 adjacent coordinate differences.  For k = 2 this is the
classical basis w_0 = (1,...,1), w_b = e_{2b-1} - e_{2b}.  For k > 2 the
adjacent-difference choice is one of several reasonable conventions; it
is fixed here once and documented so certificate files stay portable.
"""

from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np

from .linalg import (
    TOL_EQ,
    AmbientAlgebra,
    BlockMatrix,
    ShapeError,
    psd_check,
)


class NotMemberError(ValueError):
    """Raised when an element is not in the span of a system."""

    def __init__(self, distance: float):
        super().__init__(f"element is not in the span (distance {distance:.3e})")
        self.distance = distance


class UnknownSystemError(ValueError):
    """Raised for unparseable catalog name tokens."""


class MembershipResult:
    __slots__ = ("coeffs", "residual", "member")

    def __init__(self, coeffs: np.ndarray, residual: float, member: bool):
        self.coeffs = coeffs
        self.residual = residual
        self.member = member


class OperatorSystem:
    """A concrete operator system: ambient algebra + spanning basis.

    Validates at construction: first basis element is the ambient unit,
    the basis is linearly independent, and the span is closed under
    adjoints.  Coordinates are computed against the cached pseudoinverse
    of the vectorized basis, so ``coords``/``reconstruct`` round-trips at
    machine precision on span members.
    """

    def __init__(
        self,
        ambient: AmbientAlgebra,
        basis: Sequence[BlockMatrix],
        name: str = "",
        is_full_algebra: bool = False,
    ):
        basis = list(basis)
        if not basis:
            raise ShapeError("empty basis")
        for s in basis:
            if s.algebra != ambient:
                raise ShapeError("basis element lives in a different algebra")
        unit_dev = (basis[0] - ambient.identity()).vec()
        if np.max(np.abs(unit_dev)) > TOL_EQ:
            raise ShapeError("first basis element must be the ambient unit")
        self.ambient = ambient
        self.basis = basis
        self.name = name
        self.is_full_algebra = is_full_algebra
        self.dim = len(basis)
        # vectorized basis, one column per element
        self._mat = np.stack([s.vec() for s in basis], axis=1)
        svals = np.linalg.svd(self._mat, compute_uv=False)
        if svals[-1] < 1e-8 * svals[0]:
            raise ShapeError(
                f"basis is numerically dependent (sigma ratio {svals[-1]/svals[0]:.2e})"
            )
        self._pinv = np.linalg.pinv(self._mat)
        # adjoint action on coefficients: coords(s_i^*) in column i
        adj_cols = []
        for s in basis:
            res = self.membership(s.adjoint())
            if not res.member:
                raise ShapeError("span is not closed under adjoints")
            adj_cols.append(res.coeffs)
        self.adjoint_mat = np.stack(adj_cols, axis=1)

    def __repr__(self):
        return f"OperatorSystem({self.name or 'unnamed'}, dim={self.dim})"

    @property
    def unit(self) -> BlockMatrix:
        return self.basis[0]

    @property
    def basis_matrix(self) -> np.ndarray:
        """Vectorized basis, one column per basis element."""
        return self._mat

    @property
    def coords_matrix(self) -> np.ndarray:
        """Pseudoinverse of ``basis_matrix``; rows are the coordinate
        functionals."""
        return self._pinv

    def membership(self, x: BlockMatrix) -> MembershipResult:
        if x.algebra != self.ambient:
            raise ShapeError("element lives in a different algebra")
        v = x.vec()
        c = self._pinv @ v
        residual = float(np.linalg.norm(self._mat @ c - v))
        scale = max(1.0, float(np.linalg.norm(v)))
        return MembershipResult(c, residual, residual <= TOL_EQ * scale)

    def coords(self, x: BlockMatrix) -> np.ndarray:
        res = self.membership(x)
        if not res.member:
            raise NotMemberError(res.residual)
        return res.coeffs

    def reconstruct(self, coeffs: Sequence[complex]) -> BlockMatrix:
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (self.dim,):
            raise ShapeError(f"expected {self.dim} coefficients")
        out = self.ambient.zero()
        for c, s in zip(coeffs, self.basis):
            out = out + c * s
        return out

    def adjoint_coeffs(self, coeffs: np.ndarray) -> np.ndarray:
        """Coefficients of x* given the coefficients of x."""
        return self.adjoint_mat @ np.conj(np.asarray(coeffs, dtype=complex))

    def selfadjointize(self, coeffs: np.ndarray) -> np.ndarray:
        c = np.asarray(coeffs, dtype=complex)
        return (c + self.adjoint_coeffs(c)) / 2.0

    def random_self_adjoint(self, rng: np.random.Generator, scale: float = 1.0):
        c = rng.normal(size=self.dim) + 1j * rng.normal(size=self.dim)
        c = self.selfadjointize(scale * c)
        return self.reconstruct(c)

    def random_positive(self, rng: np.random.Generator, margin: float = 0.1):
        """Random PSD element of the span: a self-adjoint sample shifted by
        enough unit to clear its most negative eigenvalue plus ``margin``.
        The shift construction is the positivity oracle -- no projection
        onto the span is involved (orthogonal projection does not preserve
        positivity on proper subsystems)."""
        x = self.random_self_adjoint(rng)
        lam = min(np.linalg.eigvalsh((b + b.conj().T) / 2)[0] for b in x.blocks)
        return x + (max(0.0, -lam) + margin) * self.unit

    def orth_complement_vecs(self) -> np.ndarray:
        """Orthonormal basis (columns) of the orthogonal complement of the
        vectorized span inside the ambient coefficient space."""
        v_len = self._mat.shape[0]
        u, s, _ = np.linalg.svd(self._mat, full_matrices=True)
        rank = int(np.sum(s > 1e-10 * s[0]))
        return u[:, rank:] if rank < v_len else np.zeros((v_len, 0))

    def contains_system(self, other: "OperatorSystem", tol: float = 1e-9) -> bool:
        if other.ambient != self.ambient:
            return False
        return all(self.membership(s).member for s in other.basis)


class KernelSubspace:
    """A *-closed subspace J of an ambient algebra with J cap PSD = {0}
    (necessary for J to be the kernel of a unital completely positive
    map).  The zero-positivity condition is spot-checked on a sampled net
    at construction; it is a necessary condition only, which is all the
    quotient machinery needs to stay sound.
    """

    def __init__(
        self,
        ambient: AmbientAlgebra,
        basis: Sequence[BlockMatrix],
        name: str = "",
        check_samples: int = 25,
    ):
        basis = list(basis)
        for j in basis:
            if j.algebra != ambient:
                raise ShapeError("kernel element lives in a different algebra")
        self.ambient = ambient
        self.basis = basis
        self.name = name
        self.dim = len(basis)
        self._mat = (
            np.stack([j.vec() for j in basis], axis=1)
            if basis
            else np.zeros((ambient.identity().vec().size, 0))
        )
        if basis:
            svals = np.linalg.svd(self._mat, compute_uv=False)
            if svals[-1] < 1e-8 * svals[0]:
                raise ShapeError("kernel basis is numerically dependent")
        self._pinv = np.linalg.pinv(self._mat) if basis else None
        # unit not in J
        unit_v = ambient.identity().vec()
        if basis:
            resid = np.linalg.norm(self._mat @ (self._pinv @ unit_v) - unit_v)
            if resid < 1e-6 * np.linalg.norm(unit_v):
                raise ShapeError("unit lies in the kernel subspace")
        # *-closed
        for j in basis:
            if not self.membership(j.adjoint()).member:
                raise ShapeError("kernel is not closed under adjoints")
        # sampled necessary condition: no nonzero PSD element in J
        rng = np.random.default_rng(0)
        for _ in range(check_samples if basis else 0):
            c = rng.normal(size=self.dim) + 1j * rng.normal(size=self.dim)
            x = self.reconstruct(c)
            x = 0.5 * (x + x.adjoint())
            nrm = x.norm()
            if nrm > 1e-8 and psd_check((1.0 / nrm) * x).positive:
                raise ShapeError("sampled net found a nonzero PSD kernel element")

    def membership(self, x: BlockMatrix) -> MembershipResult:
        if x.algebra != self.ambient:
            raise ShapeError("element lives in a different algebra")
        v = x.vec()
        if not self.basis:
            r = float(np.linalg.norm(v))
            return MembershipResult(np.zeros(0), r, r <= TOL_EQ)
        c = self._pinv @ v
        residual = float(np.linalg.norm(self._mat @ c - v))
        scale = max(1.0, float(np.linalg.norm(v)))
        return MembershipResult(c, residual, residual <= TOL_EQ * scale)

    def reconstruct(self, coeffs: Sequence[complex]) -> BlockMatrix:
        out = self.ambient.zero()
        for c, j in zip(np.asarray(coeffs, dtype=complex), self.basis):
            out = out + c * j
        return out

    def orth_complement_vecs(self) -> np.ndarray:
        v_len = self.ambient.identity().vec().size
        if not self.basis:
            return np.eye(v_len)
        u, s, _ = np.linalg.svd(self._mat, full_matrices=True)
        rank = int(np.sum(s > 1e-10 * s[0]))
        return u[:, rank:]


# -- catalog factories ------------------------------------------------------


def _diag_unit(m: int) -> List[np.ndarray]:
    return [np.ones((1, 1), dtype=complex) for _ in range(m)]


def block_sum_system(n: int, k: int) -> OperatorSystem:
    """n blocks of size k inside the diagonal algebra l^inf_{nk}, with all
    block sums equal.  Dimension nk - n + 1.

    Basis: all-ones, then per block the adjacent coordinate differences
    (one per block when k = 2)."""
    if n < 1 or k < 2:
        raise ShapeError("need n >= 1 and k >= 2")
    m = n * k
    amb = AmbientAlgebra([1] * m)
    basis = [BlockMatrix(amb, _diag_unit(m))]
    for b in range(n):
        for j in range(k - 1):
            blocks = [np.zeros((1, 1), dtype=complex) for _ in range(m)]
            blocks[b * k + j][0, 0] = 1.0
            blocks[b * k + j + 1][0, 0] = -1.0
            basis.append(BlockMatrix(amb, blocks))
    return OperatorSystem(amb, basis, name=f"W:{n},{k}")


def equal_diagonal_system(n: int) -> OperatorSystem:
    """Matrices in M_n with all diagonal entries equal; dimension n^2-n+1.
    Basis: identity, then off-diagonal matrix units row-major."""
    if n < 2:
        raise ShapeError("need n >= 2")
    amb = AmbientAlgebra([n])
    basis = [amb.identity()]
    for i in range(n):
        for j in range(n):
            if i != j:
                e = np.zeros((n, n), dtype=complex)
                e[i, j] = 1.0
                basis.append(BlockMatrix(amb, [e]))
    return OperatorSystem(amb, basis, name=f"E:{n}")


def tied_diagonal_system(n: int) -> OperatorSystem:
    """Direct sum of n copies of M_2 with all 2n diagonal entries equal;
    dimension 2n + 1.  Basis: unit, then e_12 and e_21 of each block."""
    if n < 1:
        raise ShapeError("need n >= 1")
    amb = AmbientAlgebra([2] * n)
    basis = [amb.identity()]
    for b in range(n):
        for (i, j) in ((0, 1), (1, 0)):
            blocks = [np.zeros((2, 2), dtype=complex) for _ in range(n)]
            blocks[b][i, j] = 1.0
            basis.append(BlockMatrix(amb, blocks))
    return OperatorSystem(amb, basis, name=f"U:{n}")


def balanced_trace_system(n: int) -> OperatorSystem:
    """Matrices in M_{2n} whose first n diagonal entries sum to the same
    value as the last n; dimension 4n^2 - 1.  Basis: identity, all
    off-diagonal units, and the adjacent diagonal differences that stay
    within one half."""
    if n < 1:
        raise ShapeError("need n >= 1")
    d = 2 * n
    amb = AmbientAlgebra([d])
    basis = [amb.identity()]
    for i in range(d):
        for j in range(d):
            if i != j:
                e = np.zeros((d, d), dtype=complex)
                e[i, j] = 1.0
                basis.append(BlockMatrix(amb, [e]))
    for i in range(d - 1):
        if i == n - 1:
            continue  # the cross-half difference would break the balance
        e = np.zeros((d, d), dtype=complex)
        e[i, i] = 1.0
        e[i + 1, i + 1] = -1.0
        basis.append(BlockMatrix(amb, [e]))
    return OperatorSystem(amb, basis, name=f"F:{n}")


def diagonal_algebra_system(m: int) -> OperatorSystem:
    """The full diagonal algebra l^inf_m as an operator system."""
    if m < 1:
        raise ShapeError("need m >= 1")
    amb = AmbientAlgebra([1] * m)
    basis = [BlockMatrix(amb, _diag_unit(m))]
    for i in range(1, m):
        blocks = [np.zeros((1, 1), dtype=complex) for _ in range(m)]
        blocks[i][0, 0] = 1.0
        basis.append(BlockMatrix(amb, blocks))
    return OperatorSystem(amb, basis, name=f"Linf:{m}", is_full_algebra=True)


def full_matrix_system(d: int) -> OperatorSystem:
    """The full matrix algebra M_d as an operator system."""
    return full_algebra_system([d], name=f"Mat:{d}")


def full_algebra_system(dims: Sequence[int], name: str = "") -> OperatorSystem:
    """A full direct-sum algebra as an operator system: basis = unit plus
    every matrix unit except the (1,1) unit of the first block (replaced
    by the identity to keep the unit in front)."""
    amb = AmbientAlgebra(dims)
    basis = [amb.identity()]
    for bi, d in enumerate(amb.dims):
        for i in range(d):
            for j in range(d):
                if bi == 0 and i == 0 and j == 0:
                    continue
                blocks = [np.zeros((dd, dd), dtype=complex) for dd in amb.dims]
                blocks[bi][i, j] = 1.0
                basis.append(BlockMatrix(amb, blocks))
    return OperatorSystem(
        amb, basis, name=name or f"Alg:{','.join(map(str, amb.dims))}",
        is_full_algebra=True,
    )


def diagonal_traceless_kernel(n: int) -> KernelSubspace:
    """Diagonal trace-zero matrices in M_n, spanned by the adjacent
    diagonal differences."""
    if n < 2:
        raise ShapeError("need n >= 2")
    amb = AmbientAlgebra([n])
    basis = []
    for i in range(n - 1):
        e = np.zeros((n, n), dtype=complex)
        e[i, i] = 1.0
        e[i + 1, i + 1] = -1.0
        basis.append(BlockMatrix(amb, [e]))
    return KernelSubspace(amb, basis, name=f"J:{n}")


def amplified_system(system: OperatorSystem, q: int) -> OperatorSystem:
    """The matrix amplification M_q(S) as a concrete operator system on
    blocks of side q*d.  Basis: the amplified unit first, then e_uv (x) s_t
    for every slot except (u,v,t) = (0,0,0), whose place the unit takes.
    Level-q cone questions over S reduce to level-1 questions here."""
    if q < 1:
        raise ShapeError("need q >= 1")
    if q == 1:
        return system
    amb = AmbientAlgebra([q * d for d in system.ambient.dims])

    def lift(u: int, v: int, s: BlockMatrix) -> BlockMatrix:
        e = np.zeros((q, q), dtype=complex)
        e[u, v] = 1.0
        return BlockMatrix(amb, [np.kron(e, blk) for blk in s.blocks])

    basis = [amb.identity()]
    for u in range(q):
        for v in range(q):
            for t in range(system.dim):
                if u == 0 and v == 0 and t == 0:
                    continue
                basis.append(lift(u, v, system.basis[t]))
    return OperatorSystem(
        amb, basis, name=f"M{q}({system.name})",
        is_full_algebra=system.is_full_algebra,
    )


def amplify_coeffs(system: OperatorSystem, c: np.ndarray, q: int) -> np.ndarray:
    """Coefficients over amplified_system(S, q) of the level-q element with
    coefficient tensor ``c`` of shape (q, q, dim S).

    The amplified basis replaces the (0,0,0) slot by the full unit
    sum_u e_uu (x) s_0, so the flat coefficients need the telescoping
    adjustment on the other diagonal (u,u,0) slots."""
    c = np.asarray(c, dtype=complex)
    if c.shape != (q, q, system.dim):
        raise ShapeError(f"coefficient tensor shape {c.shape}")
    if q == 1:
        return c[0, 0].copy()
    out = np.zeros(q * q * system.dim, dtype=complex)
    out[0] = c[0, 0, 0]
    pos = 1
    for u in range(q):
        for v in range(q):
            for t in range(system.dim):
                if u == 0 and v == 0 and t == 0:
                    continue
                val = c[u, v, t]
                if u == v and t == 0 and u > 0:
                    val = val - c[0, 0, 0]
                out[pos] = val
                pos += 1
    return out


def deamplify_coeffs(system: OperatorSystem, flat: np.ndarray, q: int) -> np.ndarray:
    """Inverse of :func:`amplify_coeffs`: the (q, q, dim S) coefficient
    tensor of the element with flat coefficients over amplified_system."""
    flat = np.asarray(flat, dtype=complex)
    if flat.shape != (q * q * system.dim,):
        raise ShapeError(f"flat coefficient shape {flat.shape}")
    if q == 1:
        return flat.reshape(1, 1, system.dim).copy()
    c = np.zeros((q, q, system.dim), dtype=complex)
    c[0, 0, 0] = flat[0]
    pos = 1
    for u in range(q):
        for v in range(q):
            for t in range(system.dim):
                if u == 0 and v == 0 and t == 0:
                    continue
                val = flat[pos]
                if u == v and t == 0 and u > 0:
                    val = val + flat[0]
                c[u, v, t] = val
                pos += 1
    return c


def realize_matrix_of_elements(system: OperatorSystem, coeffs: np.ndarray) -> BlockMatrix:
    """Concrete realization of a p x p matrix of span elements.

    ``coeffs[u, v, t]`` is the coefficient of basis element t in the (u, v)
    entry; the result lives on blocks of side p*d with the (u, a) ordering,
    i.e. entry ((u, a), (v, b)) of block beta is sum_t coeffs[u,v,t] *
    (s_t^beta)[a, b].
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs.ndim != 3 or coeffs.shape[0] != coeffs.shape[1] or coeffs.shape[2] != system.dim:
        raise ShapeError(f"coefficient tensor shape {coeffs.shape}")
    p = coeffs.shape[0]
    blocks = []
    for bi, d in enumerate(system.ambient.dims):
        stack = np.stack([s.block(bi) for s in system.basis], axis=0)
        big = np.einsum("uvt,tab->uavb", coeffs, stack).reshape(p * d, p * d)
        blocks.append(big)
    return BlockMatrix(AmbientAlgebra([p * d for d in system.ambient.dims]), blocks)


class BalancedDiagonalEmbedding:
    """The diagonal embedding of the two-block balanced-sum system
    {a in l^inf_{2n} : sum(first n) = sum(last n)} into the balanced-trace
    system in M_{2n}, together with the diagonal-pinching conditional
    expectation onto its image.

    The embedding sends a diagonal tuple to the corresponding diagonal
    matrix (first block on the first n diagonal slots); pinching kills the
    off-diagonal part and is unital, idempotent, fixes the image, and is
    positive at every matrix level (it is an average over conjugations by
    diagonal sign unitaries)."""

    def __init__(self, n: int):
        if n < 2:
            raise ShapeError("need n >= 2")
        self.n = n
        self.w_system = block_sum_system(2, n)
        self.f_system = balanced_trace_system(n)

    def embed(self, w: BlockMatrix) -> BlockMatrix:
        if w.algebra != self.w_system.ambient:
            raise ShapeError("expected an element of the diagonal ambient")
        diag = np.array([b[0, 0] for b in w.blocks])
        return BlockMatrix(self.f_system.ambient, [np.diag(diag)])

    def expect(self, x: BlockMatrix) -> BlockMatrix:
        if x.algebra != self.f_system.ambient:
            raise ShapeError("expected an element of the matrix ambient")
        return BlockMatrix(self.f_system.ambient, [np.diag(np.diag(x.block(0)))])

    def pull_back(self, x: BlockMatrix) -> BlockMatrix:
        """Inverse of ``embed`` on diagonal matrices."""
        d = np.diag(x.block(0))
        amb = self.w_system.ambient
        return BlockMatrix(amb, [np.array([[v]]) for v in d])


def balanced_diagonal_embedding(n: int) -> BalancedDiagonalEmbedding:
    return BalancedDiagonalEmbedding(n)


def system_from_name(token: str) -> OperatorSystem:
    """Parse catalog tokens: W:n,k  E:n  U:n  F:n  Linf:m  Mat:d  Alg:d1,d2,..."""
    try:
        kind, _, arg = token.partition(":")
        kind = kind.strip()
        if kind == "W":
            n, k = (int(x) for x in arg.split(","))
            return block_sum_system(n, k)
        if kind == "E":
            return equal_diagonal_system(int(arg))
        if kind == "U":
            return tied_diagonal_system(int(arg))
        if kind == "F":
            return balanced_trace_system(int(arg))
        if kind == "Linf":
            return diagonal_algebra_system(int(arg))
        if kind == "Mat":
            return full_matrix_system(int(arg))
        if kind == "Alg":
            return full_algebra_system([int(x) for x in arg.split(",")])
    except (ValueError, ShapeError) as exc:
        raise UnknownSystemError(f"cannot parse system token {token!r}: {exc}") from exc
    raise UnknownSystemError(f"unknown system kind in token {token!r}")


CATALOG_KINDS = {
    "W": "W:n,k  -- n equal-sum diagonal blocks of size k in l^inf_{nk}",
    "E": "E:n    -- equal-diagonal matrices in M_n",
    "U": "U:n    -- n copies of M_2 with all diagonal entries tied",
    "F": "F:n    -- balanced half-traces in M_{2n}",
    "Linf": "Linf:m -- full diagonal algebra",
    "Mat": "Mat:d  -- full matrix algebra",
    "Alg": "Alg:d1,d2,... -- direct sum of full matrix algebras",
}
