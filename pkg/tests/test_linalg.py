import json

import numpy as np
import pytest

from conecert.linalg import (
    AmbientAlgebra,
    BlockMatrix,
    NotPositiveError,
    NotSelfAdjointError,
    ShapeError,
    hermitian_to_real,
    matrix_from_json,
    matrix_to_json,
    matrix_units_gram,
    moore_penrose_sqrt_inverse,
    psd_check,
    psd_sqrt,
    real_to_hermitian,
    tensor_shuffle,
)


def test_psd_check_identity():
    v = psd_check(np.eye(3))
    assert v.positive
    assert v.min_eig == pytest.approx(1.0)
    assert v.witness is None


def test_psd_check_indefinite_witness():
    v = psd_check(np.diag([1.0, -1.0]))
    assert not v.positive
    assert v.min_eig == pytest.approx(-1.0)
    w = v.witness
    # the witness certifies failure on its own
    assert np.vdot(w, np.diag([1.0, -1.0]) @ w).real == pytest.approx(-1.0)
    assert np.linalg.norm(w) == pytest.approx(1.0)


def test_psd_check_rejects_non_self_adjoint():
    with pytest.raises(NotSelfAdjointError):
        psd_check(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_psd_check_random_grams():
    rng = np.random.default_rng(7)
    for _ in range(50):
        d = rng.integers(1, 8)
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        assert psd_check(g @ g.conj().T).positive


def test_psd_check_witness_recheck_random():
    rng = np.random.default_rng(8)
    for _ in range(50):
        d = int(rng.integers(2, 7))
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        h = (g + g.conj().T) / 2 - 2.0 * np.eye(d)
        v = psd_check(h)
        if not v:
            q = np.vdot(v.witness, h @ v.witness).real
            assert q == pytest.approx(v.min_eig, abs=1e-10)
            assert q < -v.tol


def test_psd_check_explicit_tol_is_absolute():
    m = np.diag([1.0, -1e-6])
    assert not psd_check(m)
    assert psd_check(m, tol=1e-5).positive


def test_mp_sqrt_inverse_diagonal():
    P, D = moore_penrose_sqrt_inverse(np.diag([4.0, 0.0]))
    assert np.allclose(P, np.diag([1.0, 0.0]))
    assert np.allclose(D, np.diag([0.5, 0.0]))


def test_mp_sqrt_inverse_identities_rank_deficient():
    rng = np.random.default_rng(11)
    for _ in range(25):
        g = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
        m = g @ g.conj().T  # rank 2 PSD in M_4
        P, D = moore_penrose_sqrt_inverse(m)
        r = psd_sqrt(m)
        assert np.allclose(P @ P, P, atol=1e-10)
        assert np.allclose(P, P.conj().T, atol=1e-12)
        assert np.allclose(D @ r, P, atol=1e-10)
        assert np.allclose(r @ D, P, atol=1e-10)
        # D annihilates the kernel of m
        _, vecs = np.linalg.eigh(m)
        ker = vecs[:, :2]
        assert np.max(np.abs(D @ ker)) < 1e-8


def test_mp_sqrt_inverse_rejects_negative():
    with pytest.raises(NotPositiveError):
        moore_penrose_sqrt_inverse(np.diag([1.0, -1.0]))


def test_psd_sqrt_squares_back():
    rng = np.random.default_rng(12)
    g = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    m = g @ g.conj().T
    r = psd_sqrt(m)
    assert np.allclose(r @ r, m, atol=1e-10)


def test_tensor_shuffle_involution_and_spectrum():
    rng = np.random.default_rng(13)
    a, b = 2, 3
    g = rng.normal(size=(a * b, a * b)) + 1j * rng.normal(size=(a * b, a * b))
    h = (g + g.conj().T) / 2
    s = tensor_shuffle(h, a, b)
    assert np.allclose(tensor_shuffle(s, b, a), h)
    assert np.allclose(np.linalg.eigvalsh(s), np.linalg.eigvalsh(h))


def test_tensor_shuffle_on_elementary_tensor():
    rng = np.random.default_rng(14)
    x = rng.normal(size=(3, 3))
    y = rng.normal(size=(4, 4))
    assert np.allclose(tensor_shuffle(np.kron(x, y), 3, 4), np.kron(y, x))


def test_matrix_units_gram_small():
    e = matrix_units_gram(2)
    # rank one, eigenvalue d on the maximally entangled vector
    assert np.allclose(np.linalg.eigvalsh(e), [0.0, 0.0, 0.0, 2.0])
    # (i,j) block is the matrix unit e_ij
    assert np.allclose(e[:2, :2], [[1, 0], [0, 0]])
    assert np.allclose(e[:2, 2:], [[0, 1], [0, 0]])
    assert np.allclose(e[2:, :2], [[0, 0], [1, 0]])
    assert np.allclose(e[2:, 2:], [[0, 0], [0, 1]])


def test_matrix_units_gram_psd_all_sizes():
    for d in range(1, 7):
        e = matrix_units_gram(d)
        assert psd_check(e).positive
        vals = np.linalg.eigvalsh(e)
        assert vals[-1] == pytest.approx(d)
        if d > 1:
            assert np.max(np.abs(vals[:-1])) < 1e-12


def test_hermitian_to_real_pauli_y():
    h = np.array([[0.0, 1j], [-1j, 0.0]])
    y = hermitian_to_real(h)
    assert np.allclose(y, y.T)
    assert np.allclose(np.linalg.eigvalsh(y), [-1.0, -1.0, 1.0, 1.0])


def test_hermitian_to_real_doubles_spectrum():
    rng = np.random.default_rng(15)
    for _ in range(20):
        d = int(rng.integers(1, 6))
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        h = (g + g.conj().T) / 2
        vals_h = np.linalg.eigvalsh(h)
        vals_y = np.linalg.eigvalsh(hermitian_to_real(h))
        assert np.allclose(np.sort(np.repeat(vals_h, 2)), vals_y, atol=1e-12)
        # round trip
        assert np.allclose(real_to_hermitian(hermitian_to_real(h)), h, atol=1e-14)


def test_real_to_hermitian_soundness_on_unstructured_psd():
    # decoding an arbitrary real PSD matrix must give a PSD Hermitian
    # matrix with the right pairings -- this is what lets the SDP layer
    # use unstructured real variables.
    rng = np.random.default_rng(16)
    for _ in range(20):
        d = int(rng.integers(1, 5))
        g = rng.normal(size=(2 * d, 2 * d))
        y = g @ g.T
        h = real_to_hermitian(y)
        assert np.allclose(h, h.conj().T)
        assert psd_check(h).positive
        # pairing consistency: Tr(emb(G) Y) = 2 Tr(G H) for Hermitian G
        gg = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        gh = (gg + gg.conj().T) / 2
        lhs = np.trace(hermitian_to_real(gh) @ y).real
        rhs = 2 * np.trace(gh @ h).real
        assert lhs == pytest.approx(rhs, abs=1e-8)


def test_trace_identity_on_embedding():
    rng = np.random.default_rng(17)
    d = 3
    g1 = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    g2 = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h1, h2 = (g1 + g1.conj().T) / 2, (g2 + g2.conj().T) / 2
    lhs = np.trace(hermitian_to_real(h1) @ hermitian_to_real(h2))
    assert lhs == pytest.approx(2 * np.trace(h1 @ h2).real, abs=1e-10)


def test_block_matrix_arithmetic():
    alg = AmbientAlgebra([2, 1])
    a = BlockMatrix(alg, [np.array([[1, 2], [3, 4]]), np.array([[5.0]])])
    b = alg.identity()
    s = a + b
    assert np.allclose(s.block(0), [[2, 2], [3, 5]])
    assert np.allclose(s.block(1), [[6.0]])
    assert np.allclose((2.0 * a).block(1), [[10.0]])
    assert (a @ b).dense() == pytest.approx(a.dense())
    assert a.trace() == pytest.approx(10.0)
    assert np.allclose(a.adjoint().block(0), [[1, 3], [2, 4]])


def test_block_matrix_norm_and_psd():
    alg = AmbientAlgebra([2, 2])
    m = BlockMatrix(alg, [np.diag([1.0, 2.0]), np.diag([3.0, -0.5])])
    assert m.norm() == pytest.approx(3.0)
    v = psd_check(m)
    assert not v
    assert v.block == 1
    assert v.min_eig == pytest.approx(-0.5)
    q = np.vdot(v.witness, m.block(1) @ v.witness).real
    assert q == pytest.approx(-0.5)


def test_from_dense_rejects_off_block_mass():
    alg = AmbientAlgebra([1, 1])
    good = np.diag([1.0, 2.0])
    assert np.allclose(alg.from_dense(good).dense(), good)
    bad = np.array([[1.0, 0.5], [0.5, 2.0]])
    with pytest.raises(ShapeError):
        alg.from_dense(bad)


def test_block_matrix_dense_roundtrip():
    rng = np.random.default_rng(18)
    alg = AmbientAlgebra([2, 3, 1])
    m = alg.random_self_adjoint(rng)
    assert np.allclose(alg.from_dense(m.dense()).dense(), m.dense())
    assert m.is_self_adjoint()


def test_matrix_json_roundtrip():
    rng = np.random.default_rng(19)
    alg = AmbientAlgebra([2, 3])
    m = alg.random_self_adjoint(rng)
    obj = matrix_to_json(m)
    # survives an actual serialization pass
    obj = json.loads(json.dumps(obj))
    back = matrix_from_json(obj)
    assert back.algebra == alg
    assert np.allclose(back.dense(), m.dense(), atol=1e-15)


def test_matrix_json_dense_input():
    obj = matrix_to_json(np.array([[0.0, 1j], [-1j, 0.0]]))
    assert obj["dims"] == [2]
    assert obj["blocks"][0][0][1] == [0.0, 1.0]
    back = matrix_from_json(obj)
    assert np.allclose(back.dense(), [[0, 1j], [-1j, 0]])


def test_matrix_json_malformed():
    with pytest.raises(ShapeError):
        matrix_from_json({"dims": [2], "blocks": []})
    with pytest.raises(ShapeError):
        matrix_from_json({"blocks": [[[[1, 0]]]]})
