import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

from keydistill import linalg, states as st
from keydistill.linalg import SubsystemLayout
from keydistill.states import ClassicalDistribution, DensityState, InvariantError, Povm

from helpers import random_unique_k


def test_from_distribution_correlated_bit():
    p = ClassicalDistribution(["A", "B"], [[0.5, 0], [0, 0.5]])
    rho = st.from_distribution(p)
    assert np.allclose(rho.matrix, np.diag([0.5, 0, 0, 0.5]))
    assert rho.classical_labels == {"A", "B"}
    rho.validate()


def test_from_distribution_gap():
    rho = st.from_distribution(st.gap_distribution())
    assert rho.layout.dims == (4, 4, 2, 2)
    d = np.sort(np.diag(rho.matrix).real)[::-1]
    assert np.allclose(d[:6], [0.25, 0.25, 0.125, 0.125, 0.125, 0.125])
    assert np.allclose(d[6:], 0)


def test_from_distribution_delta():
    p = np.zeros((2, 2, 2))
    p[0, 0, 0] = 1
    rho = st.from_distribution(ClassicalDistribution(["A", "B", "E"], p))
    assert np.allclose(rho.matrix, linalg.proj(linalg.ket(0, 8)))


def test_distribution_invariants():
    with pytest.raises(InvariantError):
        ClassicalDistribution(["A"], [0.5, 0.6]).validate()
    with pytest.raises(InvariantError):
        ClassicalDistribution(["A"], [1.5, -0.5]).validate()
    with pytest.raises(InvariantError):
        ClassicalDistribution(["A", "B"], [0.5, 0.5])


def test_density_invariants():
    lay = SubsystemLayout(["A"], [2])
    with pytest.raises(InvariantError):
        DensityState(lay, np.diag([0.9, 0.0])).validate()
    with pytest.raises(InvariantError):
        DensityState(lay, np.diag([1.5, -0.5])).validate()
    with pytest.raises(InvariantError):
        DensityState(lay, [[0.5, 0.5], [0.5, 0.5]], {"A"}).validate()
    with pytest.raises(InvariantError):
        DensityState(lay, np.eye(3) / 3)


def test_ideal_key_state():
    assert np.allclose(st.ideal_key_state(1).matrix, np.diag([0.5, 0, 0, 0.5]))
    d = np.diag(st.ideal_key_state(2).matrix).real
    assert np.allclose(d[[0, 5, 10, 15]], 0.25) and d.sum() == pytest.approx(1)
    eve = DensityState(SubsystemLayout(["E"], [2]), np.eye(2) / 2)
    assert np.allclose(st.ideal_key_state(1, eve).matrix, np.kron(np.diag([0.5, 0, 0, 0.5]), np.eye(2) / 2))
    with pytest.raises(InvariantError):
        st.ideal_key_state(0)


def test_twisted_identity_is_bell():
    shield = DensityState(SubsystemLayout(["A'", "B'"], [1, 1]), [[1.0]])
    g = st.twisted_key_state(1, [np.eye(1), np.eye(1)], shield)
    assert np.allclose(g.matrix, linalg.proj(st.BELL))


def test_twisted_identity_ell2_is_bell_power():
    shield = DensityState(SubsystemLayout(["A'", "B'"], [1, 1]), [[1.0]])
    g = st.twisted_key_state(2, [np.eye(1)] * 4, shield)
    # two Bell pairs A1B1 A2B2, reordered to A1A2 B1B2
    two = np.kron(st.BELL, st.BELL).reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(-1)
    assert np.allclose(g.matrix, linalg.proj(two))


def _measure_ab(g: DensityState) -> np.ndarray:
    return np.diag(g.reduced(["A", "B"]).matrix).real.reshape(g.layout.dim("A"), g.layout.dim("B"))


def test_twisted_swap_shield_measurement():
    swap = np.eye(4)[[0, 2, 1, 3]]
    shield = DensityState(SubsystemLayout(["A'", "B'"], [2, 2]), np.eye(4) / 4)
    g = st.twisted_key_state(1, [np.eye(4), swap], shield).validate()
    assert np.allclose(_measure_ab(g), [[0.5, 0], [0, 0.5]])


def test_twisted_random_twists_perfectly_correlated():
    r = np.random.default_rng(5)
    shield = DensityState(SubsystemLayout(["A'", "B'"], [2, 2]), linalg.random_density(4, r))
    g = st.twisted_key_state(2, [linalg.random_unitary(4, r) for _ in range(4)], shield).validate()
    pab = _measure_ab(g)
    assert np.trace(pab) == pytest.approx(1, abs=1e-12)
    assert np.allclose(np.diag(pab), 0.25)


def test_qqq_embed_ghz():
    p = np.zeros((2, 2, 2))
    p[0, 0, 0] = p[1, 1, 1] = 0.5
    rho = st.qqq_embed(ClassicalDistribution(["A", "B", "E"], p))
    ghz = (linalg.ket(0, 8) + linalg.ket(7, 8)) / np.sqrt(2)
    assert np.allclose(rho.matrix, linalg.proj(ghz))


def test_qqq_embed_gap_diagonal():
    g = st.gap_distribution()
    rho = st.qqq_embed(g).validate()
    assert rho.layout.dims == (4, 4, 2, 2)
    assert np.max(np.abs(np.diag(rho.matrix).real - g.probs.reshape(-1))) < 1e-12
    assert np.linalg.matrix_rank(rho.matrix, tol=1e-10) == 1


def test_counterexample_coefficients_positive():
    v = st.embed_counterexample_vector()
    assert np.all(v.imag == 0) and np.all(v.real >= 0)
    assert np.allclose(st.qqq_embed(st.embed_counterexample_distribution()).matrix,
                       st.embed_counterexample().matrix)


@settings(max_examples=30, deadline=None)
@given(hst.integers(0, 2**32 - 1))
def test_qqq_measurement_reproduces_p(seed):
    r = np.random.default_rng(seed)
    dims = tuple(int(x) for x in r.integers(1, 4, size=3))
    p = ClassicalDistribution(["A", "B", "E"], r.dirichlet(np.ones(int(np.prod(dims)))).reshape(dims))
    rho = st.dephase(st.qqq_embed(p), ["A", "B", "E"])
    assert np.max(np.abs(np.diag(rho.matrix).real - p.probs.reshape(-1))) < 1e-12


def test_ccq_delta():
    p = np.zeros((2, 2, 2))
    p[0, 0, 0] = 1
    rho = st.ccq_embed(ClassicalDistribution(["A", "B", "E"], p))
    assert np.allclose(rho.matrix, linalg.proj(linalg.ket(0, 8)))


def test_ccq_equals_ccc_for_unique_k():
    for seed in range(50):
        p = random_unique_k(seed)
        assert st.check_unique_k(p)
        diff = np.max(np.abs(st.ccq_embed(p).matrix - st.from_distribution(p).matrix))
        assert diff < 1e-12


def test_ccq_conditional_states():
    p = np.zeros((2, 2, 2))
    p[0, 0, 0] = p[0, 0, 1] = 0.25
    p[1, 1, 1] = 0.5
    rho = st.ccq_embed(ClassicalDistribution(["A", "B", "E"], p))
    blk = rho.matrix[0:2, 0:2] / 0.5
    plus = np.array([1, 1]) / np.sqrt(2)
    assert np.allclose(blk, linalg.proj(plus))
    assert rho.classical_labels == {"A", "B"}


def test_counterexample_ccq_display():
    p = st.embed_counterexample_distribution()
    got = st.ccq_embed(p, alice=("A", "A'")).trace_out(["A'"])
    plus = linalg.proj(np.array([1, 1]) / np.sqrt(2))
    want = 0.5 * (np.kron(linalg.proj(linalg.ket(0, 4)), plus) + np.kron(linalg.proj(linalg.ket(3, 4)), np.eye(2) / 2))
    assert got.labels == ("A", "B", "E")
    assert np.max(np.abs(got.matrix - want)) < 1e-12


def test_check_unique_k():
    p = np.zeros((4, 4, 2, 2))
    assert st.check_unique_k(st.gap_distribution(), eve=("E", "F"))
    assert not st.check_unique_k(ClassicalDistribution(["A", "B", "E"], [[[0.5, 0.5]]]))
    p = np.zeros((2, 2, 2))
    p[0, 0, 0] = 1
    assert st.check_unique_k(ClassicalDistribution(["A", "B", "E"], p))


def test_named_gap_matches_table():
    rho = st.named_example("gap")
    g = st.gap_distribution().probs
    for i in range(2):
        for j in range(2):
            assert g[i, j, (i + j) % 2, 0] == 0.125
    assert g[2, 2, 0, 1] == 0.25 and g[3, 3, 1, 1] == 0.25
    assert rho.layout.labels == ("A", "B", "E", "F")


def test_named_flower_conditional_states():
    rho = st.named_example("flower", d=2).validate()
    assert rho.layout.dims == (2, 2, 2, 2, 2)
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    t = rho.matrix.reshape([2] * 5 * 2)
    for bit in (0, 1):
        for k in range(2):
            blk = t[bit, bit, k, k, :, bit, bit, k, k, :]
            want = linalg.proj(linalg.ket(k, 2) if bit == 0 else h[:, k]) / 4
            assert np.allclose(blk, want)


def test_named_bell_lock():
    rho = st.named_example("bell-lock").validate()
    assert rho.layout.labels == ("A", "B", "E", "E'")
    t = rho.matrix.reshape(16, 4, 16, 4)
    for i, b in enumerate(st.bell_states()):
        assert np.allclose(t[5 * i, :, 5 * i, :], linalg.proj(b) / 4)


def test_named_unknown():
    with pytest.raises(KeyError):
        st.named_example("nope")


def test_builders_pass_invariants():
    for name in ("gap", "bell_lock", "embed_counterexample"):
        st.named_example(name).validate()
    for d in (2, 3, 4):
        st.flower_state(d).validate()


def test_apply_channel_identity_and_depolarise():
    r = np.random.default_rng(3)
    rho = DensityState(SubsystemLayout(["A", "B", "E"], [2, 2, 2]), linalg.random_density(8, r))
    assert np.allclose(st.apply_channel(rho, st.identity_channel(2), "E").matrix, rho.matrix)
    dep = st.replacement_channel(2, np.eye(2) / 2).validate()
    out = st.apply_channel(rho, dep, "E")
    assert np.allclose(out.matrix, np.kron(rho.reduced(["A", "B"]).matrix, np.eye(2) / 2))


def test_apply_channel_random_oracle():
    r = np.random.default_rng(4)
    rho = DensityState(SubsystemLayout(["A", "E"], [2, 3]), linalg.random_density(6, r))
    v = linalg.random_isometry(3, 2 * 4, r)
    ch = st.QuantumChannel(3, 2, 4, v).validate()
    out = st.apply_channel(rho, ch, "E").validate()
    # oracle: apply the isometry, then trace the environment
    big = np.kron(np.eye(2), v) @ rho.matrix @ np.kron(np.eye(2), v).conj().T
    lay = SubsystemLayout(["A", "O", "N"], [2, 2, 4])
    assert np.allclose(out.matrix, linalg.partial_trace(big, lay, ["A", "O"]))
    with pytest.raises(InvariantError):
        st.apply_channel(rho, ch, "A")


def test_channel_composition():
    r = np.random.default_rng(6)
    c1 = st.QuantumChannel(2, 3, 2, linalg.random_isometry(2, 6, r))
    c2 = st.QuantumChannel(3, 2, 3, linalg.random_isometry(3, 6, r))
    rho = linalg.random_density(2, r)
    assert np.allclose(c1.then(c2).apply_matrix(rho), c2.apply_matrix(c1.apply_matrix(rho)))


def test_measure_povm_examples():
    tau = st.ideal_key_state(1)
    res = st.measure_povm(tau, st.computational_povm(2), "A")
    assert np.allclose(res.probs, [0.5, 0.5])
    zero = DensityState(SubsystemLayout(["X"], [2]), linalg.proj(linalg.ket(0, 2)))
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    assert np.allclose(st.measure_povm(zero, st.basis_povm(h), "X").probs, [0.5, 0.5])


def test_measure_flower_register_oracle():
    rho = st.flower_state(2)
    theta = np.pi / 8
    u = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    probs = st.measure_povm(rho, st.basis_povm(u), "E").probs
    rho_e = rho.reduced(["E"]).matrix
    want = [float(np.real(u[:, m].conj() @ rho_e @ u[:, m])) for m in range(2)]
    assert np.allclose(probs, want)


def test_measure_classical_label_reproduces_diagonal():
    p = st.gap_distribution()
    rho = st.from_distribution(p)
    probs = st.measure_povm(rho, st.computational_povm(4), "A").probs
    assert np.allclose(probs, p.probs.sum(axis=(1, 2, 3)))


def test_invalid_povm():
    with pytest.raises(InvariantError):
        st.measure_povm(st.ideal_key_state(1), Povm([np.eye(2), np.eye(2)]), "A")


def test_measure_to_register():
    rho = st.flower_state(2)
    out = st.measure_to_register(rho, st.computational_povm(2), "E", "Z").validate()
    assert out.labels == ("A", "B", "A'", "B'", "Z")
    assert "Z" in out.classical_labels


def test_purify():
    r = np.random.default_rng(8)
    rho = DensityState(SubsystemLayout(["A"], [3]), linalg.random_density(3, r, rank=2))
    psi, lay = st.purify(rho)
    assert lay.dims == (3, 2)
    assert np.allclose(linalg.partial_trace(linalg.proj(psi), lay, ["A"]), rho.matrix)


def test_grouped_marginalises_unassigned():
    g = st.gap_distribution()
    p3 = g.grouped(eve=("E",))
    assert p3.shape == (4, 4, 2)
    assert p3.sum() == pytest.approx(1)
