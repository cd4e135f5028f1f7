import numpy as np
import pytest

from conecert.catalog import (
    BalancedDiagonalEmbedding,
    KernelSubspace,
    NotMemberError,
    UnknownSystemError,
    amplified_system,
    amplify_coeffs,
    balanced_trace_system,
    block_sum_system,
    diagonal_algebra_system,
    diagonal_traceless_kernel,
    equal_diagonal_system,
    full_algebra_system,
    full_matrix_system,
    realize_matrix_of_elements,
    system_from_name,
    tied_diagonal_system,
)
from conecert.linalg import AmbientAlgebra, BlockMatrix, ShapeError, psd_check


def _diag_element(values):
    amb = AmbientAlgebra([1] * len(values))
    return BlockMatrix(amb, [np.array([[v]], dtype=complex) for v in values])


def test_block_sum_dimensions():
    assert block_sum_system(2, 2).dim == 3
    assert block_sum_system(3, 2).dim == 4
    for n in range(1, 7):
        for k in range(2, 7):
            assert block_sum_system(n, k).dim == n * k - n + 1


def test_block_sum_membership():
    w = block_sum_system(3, 2)
    x = _diag_element([1, 1, 2, 0, 0, 2])  # block sums 2, 2, 2
    c = w.coords(x)
    back = w.reconstruct(c)
    assert np.max(np.abs(back.vec() - x.vec())) < 1e-12
    # unbalanced block sums are not members
    bad = _diag_element([1, 0, 0, 0, 0, 0])
    assert not w.membership(bad).member


def test_block_sum_classic_basis_for_pairs():
    w = block_sum_system(2, 2)
    assert np.allclose(w.basis[0].vec(), [1, 1, 1, 1])
    assert np.allclose(w.basis[1].vec(), [1, -1, 0, 0])
    assert np.allclose(w.basis[2].vec(), [0, 0, 1, -1])


def test_equal_diagonal_system():
    e = equal_diagonal_system(3)
    assert e.dim == 7
    m = np.eye(3, dtype=complex)
    m[0, 1] = m[1, 0] = 1.0
    assert e.membership(BlockMatrix(e.ambient, [m])).member
    e11 = np.zeros((3, 3), dtype=complex)
    e11[0, 0] = 1.0
    res = e.membership(BlockMatrix(e.ambient, [e11]))
    assert not res.member
    assert res.residual > 0.1


def test_equal_diagonal_dimensions():
    for n in range(2, 7):
        assert equal_diagonal_system(n).dim == n * n - n + 1


def test_tied_diagonal_system():
    u = tied_diagonal_system(2)
    assert u.dim == 5
    assert u.membership(u.ambient.identity()).member
    # a lone off-diagonal unit in one block is a member
    blocks = [np.zeros((2, 2), dtype=complex), np.zeros((2, 2), dtype=complex)]
    blocks[1][0, 1] = 1.0
    assert u.membership(BlockMatrix(u.ambient, blocks)).member
    for n in range(1, 7):
        assert tied_diagonal_system(n).dim == 2 * n + 1


def test_balanced_trace_system():
    f = balanced_trace_system(2)
    assert f.dim == 15
    assert f.membership(f.ambient.identity()).member
    e11 = np.zeros((4, 4), dtype=complex)
    e11[0, 0] = 1.0
    assert not f.membership(BlockMatrix(f.ambient, [e11])).member
    for n in range(1, 7):
        assert balanced_trace_system(n).dim == 4 * n * n - 1


def test_balanced_trace_span_characterisation():
    # every member has equal half-traces, and every balanced matrix is a member
    rng = np.random.default_rng(31)
    f = balanced_trace_system(3)
    for _ in range(20):
        x = f.random_self_adjoint(rng)
        m = x.block(0)
        assert np.trace(m[:3, :3]) == pytest.approx(np.trace(m[3:, 3:]), abs=1e-10)
        g = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        g[5, 5] = g[5, 5] - (np.trace(g[3:, 3:]) - np.trace(g[:3, :3]))
        assert f.membership(BlockMatrix(f.ambient, [g])).member


def test_traceless_kernel():
    j3 = diagonal_traceless_kernel(3)
    assert j3.dim == 2
    x = BlockMatrix(j3.ambient, [np.diag([1.0, -1.0, 0.0]).astype(complex)])
    assert j3.membership(x).member
    assert not j3.membership(j3.ambient.identity()).member


def test_kernel_annihilates_equal_diagonal_pairing():
    # <A, B> = sum_ij A_ij conj(B_ij) vanishes between the equal-diagonal
    # span and the diagonal trace-zero kernel
    for n in range(2, 6):
        e = equal_diagonal_system(n)
        j = diagonal_traceless_kernel(n)
        for a in e.basis:
            for b in j.basis:
                val = np.sum(a.block(0) * np.conj(b.block(0)))
                assert abs(val) < 1e-12


def test_kernel_rejects_unit():
    amb = AmbientAlgebra([2])
    with pytest.raises(ShapeError):
        KernelSubspace(amb, [amb.identity()])


def test_kernel_rejects_psd_span():
    amb = AmbientAlgebra([2])
    e11 = np.zeros((2, 2), dtype=complex)
    e11[0, 0] = 1.0
    with pytest.raises(ShapeError):
        KernelSubspace(amb, [BlockMatrix(amb, [e11])])


def test_coords_unit_convention():
    for sys in (
        block_sum_system(2, 3),
        equal_diagonal_system(3),
        tied_diagonal_system(2),
        balanced_trace_system(2),
        diagonal_algebra_system(4),
        full_matrix_system(3),
    ):
        c = sys.coords(sys.unit)
        expected = np.zeros(sys.dim)
        expected[0] = 1.0
        assert np.allclose(c, expected, atol=1e-12)


def test_coords_roundtrip_random():
    rng = np.random.default_rng(32)
    for sys in (block_sum_system(3, 2), equal_diagonal_system(3), balanced_trace_system(2)):
        for _ in range(20):
            c = rng.normal(size=sys.dim) + 1j * rng.normal(size=sys.dim)
            x = sys.reconstruct(c)
            assert np.max(np.abs(sys.coords(x) - c)) < 1e-12


def test_coords_raises_off_span():
    e = equal_diagonal_system(3)
    e11 = np.zeros((3, 3), dtype=complex)
    e11[0, 0] = 1.0
    with pytest.raises(NotMemberError) as exc:
        e.coords(BlockMatrix(e.ambient, [e11]))
    assert exc.value.distance > 0


def test_adjoint_coeffs_consistency():
    rng = np.random.default_rng(33)
    for sys in (equal_diagonal_system(3), tied_diagonal_system(3), full_matrix_system(2)):
        c = rng.normal(size=sys.dim) + 1j * rng.normal(size=sys.dim)
        x = sys.reconstruct(c)
        assert np.max(np.abs(sys.reconstruct(sys.adjoint_coeffs(c)).vec()
                             - x.adjoint().vec())) < 1e-12
        y = sys.reconstruct(sys.selfadjointize(c))
        assert y.is_self_adjoint()


def test_random_positive_is_positive():
    rng = np.random.default_rng(34)
    for sys in (block_sum_system(2, 2), equal_diagonal_system(3), balanced_trace_system(2)):
        for _ in range(10):
            x = sys.random_positive(rng, margin=0.05)
            assert psd_check(x).positive
            assert sys.membership(x).member


def test_amplified_system_shapes():
    e = equal_diagonal_system(3)
    amp = amplified_system(e, 2)
    assert amp.ambient.dims == (6,)
    assert amp.dim == 4 * e.dim
    u = tied_diagonal_system(2)
    ampu = amplified_system(u, 3)
    assert ampu.ambient.dims == (6, 6)
    assert ampu.dim == 9 * u.dim


def test_amplify_coeffs_reconstruction():
    rng = np.random.default_rng(35)
    sys = equal_diagonal_system(3)
    q = 2
    amp = amplified_system(sys, q)
    c = rng.normal(size=(q, q, sys.dim)) + 1j * rng.normal(size=(q, q, sys.dim))
    # direct realization of the level-q element
    direct = np.zeros((q * 3, q * 3), dtype=complex)
    for u in range(q):
        for v in range(q):
            e = np.zeros((q, q))
            e[u, v] = 1.0
            for t in range(sys.dim):
                direct += c[u, v, t] * np.kron(e, sys.basis[t].block(0))
    flat = amplify_coeffs(sys, c, q)
    back = amp.reconstruct(flat)
    assert np.max(np.abs(back.block(0) - direct)) < 1e-12


def test_balanced_diagonal_embedding_fixed_points():
    emb = BalancedDiagonalEmbedding(3)
    for w in emb.w_system.basis:
        image = emb.embed(w)
        assert emb.f_system.membership(image).member
        fixed = emb.expect(image)
        assert np.max(np.abs(fixed.vec() - image.vec())) == 0.0
    # unital
    assert np.max(np.abs(emb.expect(emb.f_system.ambient.identity()).vec()
                         - emb.f_system.ambient.identity().vec())) == 0.0


def test_expectation_idempotent_and_positive():
    rng = np.random.default_rng(36)
    emb = BalancedDiagonalEmbedding(3)
    f = emb.f_system
    for _ in range(25):
        x = f.random_self_adjoint(rng)
        once = emb.expect(x)
        twice = emb.expect(once)
        assert np.max(np.abs(once.vec() - twice.vec())) < 1e-12
        p = f.random_positive(rng)
        assert psd_check(emb.expect(p)).positive
        # image lands in the embedded subsystem
        assert emb.w_system.membership(emb.pull_back(emb.expect(p))).member


def test_full_algebra_flags():
    assert full_matrix_system(3).is_full_algebra
    assert diagonal_algebra_system(4).is_full_algebra
    assert full_algebra_system([2, 1]).is_full_algebra
    assert not equal_diagonal_system(3).is_full_algebra
    assert full_algebra_system([2, 3]).dim == 13


def test_system_from_name():
    assert system_from_name("W:3,2").dim == 4
    assert system_from_name("E:3").dim == 7
    assert system_from_name("U:2").dim == 5
    assert system_from_name("F:2").dim == 15
    assert system_from_name("Linf:4").dim == 4
    assert system_from_name("Mat:3").dim == 9
    for bad in ("Q:3", "W:3", "E:x", "Mat:"):
        with pytest.raises(UnknownSystemError):
            system_from_name(bad)


def test_realize_matrix_of_elements_matches_kron_sum():
    system = tied_diagonal_system(2)
    rng = np.random.default_rng(41)
    coeffs = rng.normal(size=(2, 2, system.dim)) + 1j * rng.normal(
        size=(2, 2, system.dim)
    )
    big = realize_matrix_of_elements(system, coeffs)
    assert list(big.algebra.dims) == [4, 4]
    units = np.eye(2)
    for bi in range(2):
        want = np.zeros((4, 4), dtype=complex)
        for u in range(2):
            for v in range(2):
                for t, s in enumerate(system.basis):
                    want += coeffs[u, v, t] * np.kron(
                        np.outer(units[u], units[v]), s.block(bi)
                    )
        assert np.max(np.abs(big.block(bi) - want)) < 1e-12
    with pytest.raises(ShapeError):
        realize_matrix_of_elements(system, coeffs[:, :, :3])
