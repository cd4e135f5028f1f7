import numpy as np
import pytest

from conecert.linalg import (
    AmbientAlgebra,
    BlockMatrix,
    NotPositiveError,
    NotSelfAdjointError,
    ShapeError,
    psd_check,
)
from conecert.catalog import (
    balanced_trace_system,
    block_sum_system,
    diagonal_algebra_system,
    diagonal_traceless_kernel,
    equal_diagonal_system,
    full_matrix_system,
    tied_diagonal_system,
)
from conecert.duality import (
    ArchimedeanResult,
    Functional,
    FunctionalMatrix,
    QuotientSystem,
    approx_extension,
    dual_positive,
    faithful_state,
    pairing_crosscheck,
    trace_pairing,
)


def _systems():
    return [
        equal_diagonal_system(3),
        tied_diagonal_system(2),
        block_sum_system(3, 2),
        balanced_trace_system(2),
    ]


def test_faithful_state_unital_positive_selfadjoint():
    rng = np.random.default_rng(0)
    for system in _systems() + [full_matrix_system(3)]:
        w = faithful_state(system)
        assert abs(w(system.unit) - 1.0) < 1e-12
        assert np.max(np.abs(w.values - w.adjoint().values)) < 1e-12
        for _ in range(5):
            x = system.random_positive(rng)
            val = w(x)
            assert abs(val.imag) < 1e-10
            assert val.real > 0


def test_functional_from_matrix_is_trace_pairing():
    system = tied_diagonal_system(2)
    rng = np.random.default_rng(1)
    b = system.ambient.random_self_adjoint(rng)
    f = Functional.from_matrix(system, b)
    for _ in range(6):
        x = system.random_self_adjoint(rng)
        # direct trace computation, block by block
        want = sum(
            np.trace(xb @ bb.conj().T) for xb, bb in zip(x.blocks, b.blocks)
        )
        assert abs(f(x) - want) < 1e-10


def test_functional_adjoint_definition():
    system = equal_diagonal_system(3)
    rng = np.random.default_rng(2)
    vals = rng.normal(size=system.dim) + 1j * rng.normal(size=system.dim)
    f = Functional(system, vals)
    fstar = f.adjoint()
    for _ in range(6):
        c = rng.normal(size=system.dim) + 1j * rng.normal(size=system.dim)
        x = system.reconstruct(c)
        assert abs(fstar(x) - np.conj(f(x.adjoint()))) < 1e-10


def test_matrix_representative_roundtrip():
    system = block_sum_system(3, 2)
    rng = np.random.default_rng(3)
    vals = rng.normal(size=system.dim) + 1j * rng.normal(size=system.dim)
    f = Functional(system, vals)
    b = f.matrix_representative()
    g = Functional.from_matrix(system, b)
    assert np.max(np.abs(f.values - g.values)) < 1e-10


def test_trace_pairing_conventions_differ_by_conjugation():
    amb = AmbientAlgebra([2])
    rng = np.random.default_rng(4)
    a = amb.random_self_adjoint(rng)
    b = BlockMatrix(amb, [np.array([[1.0, 2.0j], [-2.0j, 0.5]])])
    conj_val = trace_pairing(a, b, "conjugate")
    # transpose pairing against conj(b) equals the conjugate pairing
    bt = BlockMatrix(amb, [np.conj(b.block(0))])
    assert abs(conj_val - trace_pairing(a, bt, "transpose")) < 1e-12
    with pytest.raises(ValueError):
        trace_pairing(a, b, "sideways")


def test_trace_state_positive_with_unique_choi():
    m3 = full_matrix_system(3)
    w = faithful_state(m3)
    fmat = FunctionalMatrix(m3, w.values.reshape(1, 1, -1))
    verdict = dual_positive(fmat)
    assert verdict.positive
    assert verdict.report["choi_residual"] < 1e-8
    # values on the full algebra pin the Choi matrix down uniquely
    assert np.max(np.abs(verdict.choi.block(0) - np.eye(3) / 3.0)) < 1e-7


def test_coordinate_difference_not_positive_with_witness():
    l2 = diagonal_algebra_system(2)
    b = BlockMatrix(l2.ambient, [np.array([[1.0 + 0j]]), np.array([[-1.0 + 0j]])])
    f = Functional.from_matrix(l2, b)
    fmat = FunctionalMatrix(l2, f.values.reshape(1, 1, -1))
    verdict = dual_positive(fmat)
    assert verdict.not_positive
    wit = verdict.witness
    assert wit is not None and wit.q == 1
    assert wit.verify(fmat)
    y = wit.element()
    # the witness is a nonnegative diagonal pair on which f is negative
    y1, y2 = float(y.block(0)[0, 0].real), float(y.block(1)[0, 0].real)
    assert y1 >= -1e-9 and y2 >= -1e-9
    assert y2 > y1  # that is exactly what makes f(y) = y1 - y2 negative
    assert wit.violation < -1e-6


def test_choi_generated_matrices_are_positive():
    for system in _systems():
        for seed in range(4):
            rng = np.random.default_rng(100 + seed)
            choi_amb = AmbientAlgebra([2 * d for d in system.ambient.dims])
            choi = choi_amb.random_psd(rng)
            fmat = FunctionalMatrix.from_choi(system, choi)
            assert fmat.p == 2
            assert fmat.is_self_adjoint()
            verdict = dual_positive(fmat)
            assert verdict.positive, (system.name, seed, verdict.report)
            assert verdict.report["choi_residual"] < 1e-7
            assert psd_check(verdict.choi)


def test_perturbed_negative_matrices_are_rejected():
    for system in _systems():
        for seed in range(2):
            rng = np.random.default_rng(200 + seed)
            choi_amb = AmbientAlgebra([2 * d for d in system.ambient.dims])
            fmat = FunctionalMatrix.from_choi(system, choi_amb.random_psd(rng))
            unit_coords = np.zeros(system.dim)
            unit_coords[0] = 1.0
            mu = 2.0 * np.linalg.norm(fmat.apply(unit_coords), 2) + 1.0
            vals = fmat.values.copy()
            vals[0, 0] -= mu * faithful_state(system).values
            bad = FunctionalMatrix(system, vals)
            # oracle: already the unit shows the matrix is not positive
            assert np.linalg.eigvalsh(bad.apply(unit_coords))[0] < 0
            verdict = dual_positive(bad)
            assert verdict.not_positive, (system.name, seed, verdict.report)
            wit = verdict.witness
            assert wit.q == 2  # q = p here, well inside the q <= p * dim bound
            assert wit.verify(bad)
            assert psd_check(wit.element())
            assert wit.violation < -1e-8


def test_dual_witness_evaluation_identity():
    system = equal_diagonal_system(3)
    rng = np.random.default_rng(5)
    choi_amb = AmbientAlgebra([6])
    fmat = FunctionalMatrix.from_choi(system, choi_amb.random_psd(rng))
    vals = fmat.values.copy()
    vals[0, 0] -= 50.0 * faithful_state(system).values
    bad = FunctionalMatrix(system, vals)
    verdict = dual_positive(bad)
    assert verdict.not_positive
    wit = verdict.witness
    # w* [F(y_kl)] w recomputed by hand equals the reported violation
    n = wit.evaluation(bad)
    w = wit.vector_p(bad.p)
    quad = np.conj(w) @ n @ w
    assert abs(quad - wit.violation) < 1e-7 * max(1.0, abs(wit.violation))


def test_dual_positive_requires_selfadjoint():
    system = diagonal_algebra_system(2)
    vals = np.zeros((1, 1, 2), dtype=complex)
    vals[0, 0, 1] = 1.0j  # i * coordinate is not self-adjoint
    with pytest.raises(NotSelfAdjointError):
        dual_positive(FunctionalMatrix(system, vals))


def test_unit_coset_positive():
    quotient = QuotientSystem(diagonal_traceless_kernel(3))
    verdict = quotient.positive(AmbientAlgebra([3]).identity(), eps=0.0)
    assert verdict.positive
    assert psd_check(verdict.lift)
    assert verdict.report["kernel_residual"] < 1e-7


def test_zero_coset_recognized_through_kernel_shift():
    # diag(1,-1,0) + diag(-1,1,0) = 0 with the correction inside the kernel,
    # so the coset is positive although the representative is not PSD
    kernel = diagonal_traceless_kernel(3)
    amb = AmbientAlgebra([3])
    x = BlockMatrix(amb, [np.diag([1.0, -1.0, 0.0]).astype(complex)])
    j = BlockMatrix(amb, [np.diag([-1.0, 1.0, 0.0]).astype(complex)])
    assert kernel.membership(j).member
    assert psd_check(x + j)
    assert not psd_check(x)
    verdict = QuotientSystem(kernel).positive(x, eps=0.0)
    assert verdict.positive


def test_minus_identity_needs_full_unit_shift():
    # trace oracle: every kernel correction is traceless, so any lift of
    # -1 + eps has trace 3(eps - 1) and eps < 1 admits no PSD lift
    quotient = QuotientSystem(diagonal_traceless_kernel(3))
    amb = AmbientAlgebra([3])
    minus = -1.0 * amb.identity()
    for eps in (0.0, 0.5, 0.9):
        verdict = quotient.positive(minus, eps=eps)
        assert verdict.not_positive, (eps, verdict.report)
        assert verdict.separator is not None
        assert verdict.report["separator_value"] < -1e-10
        assert verdict.report["separator_kernel_defect"] < 1e-7
    assert quotient.positive(minus, eps=1.05).positive


def test_separator_checks_recomputed_independently():
    quotient = QuotientSystem(diagonal_traceless_kernel(3))
    amb = AmbientAlgebra([3])
    minus = -1.0 * amb.identity()
    verdict = quotient.positive(minus, eps=0.25)
    sep = verdict.separator
    assert psd_check(sep)
    xprime = minus + 0.25 * amb.identity()
    pairing = np.trace(sep.block(0) @ xprime.block(0))
    assert pairing.real < -1e-10
    for jb in quotient.kernel.basis:
        assert abs(np.trace(sep.block(0) @ jb.block(0))) < 1e-7


def test_archimedean_threshold_exact_offdiagonal():
    # representative e_12 + e_21 in M_3 mod diagonal traceless: a lift
    # [[a+e, 1, 0], [1, b+e, 0], [0, 0, c+e]] with a+b+c = 0 forces
    # (a+e)(b+e) >= 1 and a+b <= e, hence (3e/2)^2 >= 1, i.e. e >= 2/3,
    # attained at a = b = 1/3
    amb = AmbientAlgebra([3])
    x = np.zeros((3, 3), dtype=complex)
    x[0, 1] = x[1, 0] = 1.0
    quotient = QuotientSystem(diagonal_traceless_kernel(3))
    res = quotient.archimedean(BlockMatrix(amb, [x]))
    assert isinstance(res, ArchimedeanResult)
    assert abs(res.eps_star - 2.0 / 3.0) < 1e-6
    assert res.verdict.positive


def test_archimedean_minus_identity_threshold_one():
    quotient = QuotientSystem(diagonal_traceless_kernel(3))
    minus = -1.0 * AmbientAlgebra([3]).identity()
    res = quotient.archimedean(minus)
    assert abs(res.eps_star - 1.0) < 1e-6
    assert res.interval[1] - res.interval[0] < 1e-4


def test_archimedean_zero_for_psd_representative():
    rng = np.random.default_rng(6)
    amb = AmbientAlgebra([3])
    quotient = QuotientSystem(diagonal_traceless_kernel(3))
    res = quotient.archimedean(amb.random_psd(rng))
    assert res.eps_star == 0.0


def test_quotient_positive_monotone_in_eps():
    rng = np.random.default_rng(7)
    amb = AmbientAlgebra([3])
    quotient = QuotientSystem(diagonal_traceless_kernel(3))
    grid = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0]
    for _ in range(5):
        x = amb.random_self_adjoint(rng)
        seen_positive = False
        for eps in grid:
            verdict = quotient.positive(x, eps=eps)
            if verdict.positive:
                seen_positive = True
            elif verdict.not_positive:
                assert not seen_positive, f"positivity flipped back at eps={eps}"
        assert seen_positive  # eps = 4 >= ||x|| always certifies


def test_quotient_level_two_positive_by_construction():
    rng = np.random.default_rng(8)
    kernel = diagonal_traceless_kernel(3)
    quotient = QuotientSystem(kernel)
    lvl = AmbientAlgebra([6])
    nj = len(kernel.basis)
    for _ in range(4):
        g = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        base = g @ g.conj().T / 6.0
        pert = np.zeros((6, 6), dtype=complex)
        for u in range(2):
            for v in range(2):
                c = rng.normal(size=nj)
                jm = sum(ci * jb.block(0) for ci, jb in zip(c, kernel.basis))
                pert[3 * u : 3 * u + 3, 3 * v : 3 * v + 3] = jm
        h = base + (pert + pert.conj().T) / 2.0
        verdict = quotient.positive(BlockMatrix(lvl, [h]), eps=0.0)
        assert verdict.positive, verdict.report
        assert psd_check(verdict.lift)
        assert verdict.report["kernel_residual"] < 1e-6
    bad = quotient.positive(BlockMatrix(lvl, [-np.eye(6, dtype=complex)]), eps=0.5)
    assert bad.not_positive


def test_quotient_rejects_wrong_shape_and_non_selfadjoint():
    quotient = QuotientSystem(diagonal_traceless_kernel(3))
    with pytest.raises(ShapeError):
        quotient.positive(AmbientAlgebra([4]).identity())
    x = np.zeros((3, 3), dtype=complex)
    x[0, 1] = 1.0
    with pytest.raises(NotSelfAdjointError):
        quotient.positive(BlockMatrix(AmbientAlgebra([3]), [x]))


def test_pairing_crosscheck_conjugate_agrees_both_levels():
    report = pairing_crosscheck(3, levels=(1, 2), samples=14, seed=5)
    assert report.convention == "conjugate"
    for q in (1, 2):
        stats = report.per_level[q]
        assert stats["disagree"] == 0
        assert stats["inconclusive"] == 0
        assert stats["agree"] == stats["samples"]
    assert report.all_agree


def test_pairing_crosscheck_transpose_agrees_at_level_one():
    report = pairing_crosscheck(3, levels=(1,), samples=12, seed=6, convention="transpose")
    stats = report.per_level[1]
    assert stats["disagree"] == 0
    assert stats["inconclusive"] == 0


def test_crosscheck_verdict_pairs_nontrivial():
    # the sampler must exercise both outcomes, otherwise agreement is vacuous
    report = pairing_crosscheck(3, levels=(1,), samples=14, seed=7)
    assert report.per_level[1]["agree"] == 14


def test_approx_extension_restriction_defect_zero():
    e3, m3 = equal_diagonal_system(3), full_matrix_system(3)
    rng = np.random.default_rng(11)
    fbig = FunctionalMatrix.from_choi(m3, AmbientAlgebra([6]).random_psd(rng))
    vals = np.zeros((2, 2, e3.dim), dtype=complex)
    for t, s in enumerate(e3.basis):
        vals[:, :, t] = fbig.apply(m3.coords(s))
    fsmall = FunctionalMatrix(e3, vals)
    res = approx_extension(fsmall, m3)
    assert res.distance_upper < 1e-8
    assert res.distance_lower <= res.distance_upper + 1e-12
    assert np.max(res.defects) < 1e-9
    assert dual_positive(res.extension).positive


def test_approx_extension_block_sums_into_diagonal_algebra():
    w22, l4 = block_sum_system(2, 2), diagonal_algebra_system(4)
    b = BlockMatrix(
        l4.ambient,
        [np.array([[v + 0j]]) for v in (1.0, 0.0, 0.5, 0.5)],
    )
    f = Functional.from_matrix(w22, b)
    fmat = FunctionalMatrix(w22, f.values.reshape(1, 1, -1))
    res = approx_extension(fmat, l4)
    assert res.distance_upper < 1e-8
    assert dual_positive(res.extension).positive
    # the extension agrees with f on the small system's basis
    for t, s in enumerate(w22.basis):
        got = res.extension.apply(l4.coords(s))[0, 0]
        assert abs(got - f.values[t]) < 1e-8


def test_approx_extension_rejects_non_cp_input():
    w22, l4 = block_sum_system(2, 2), diagonal_algebra_system(4)
    b = BlockMatrix(
        l4.ambient,
        [np.array([[v + 0j]]) for v in (1.0, -1.0, 0.0, 0.0)],
    )
    f = Functional.from_matrix(w22, b)
    fmat = FunctionalMatrix(w22, f.values.reshape(1, 1, -1))
    with pytest.raises(NotPositiveError):
        approx_extension(fmat, l4)


def test_approx_extension_requires_containment():
    e3 = equal_diagonal_system(3)
    fmat = FunctionalMatrix(e3, np.zeros((1, 1, e3.dim)))
    with pytest.raises(ShapeError):
        approx_extension(fmat, diagonal_algebra_system(3))
