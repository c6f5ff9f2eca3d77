import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

from keydistill import entropy as ent, linalg, states as st
from keydistill.linalg import SubsystemLayout
from keydistill.protocols import apply_lopc, random_lopc_operation
from keydistill.states import ClassicalDistribution, DensityState, InvariantError, party_of


def random_state(r, dims, labels=("A", "B", "E")) -> DensityState:
    n = int(np.prod(dims))
    rank = int(r.integers(1, n + 1))
    return DensityState(SubsystemLayout(labels, dims), linalg.random_density(n, r, rank=rank))


def cmi_abe(rho):
    groups = {"A": [], "B": [], "E": []}
    for l in rho.labels:
        groups[party_of(l)].append(l)
    return ent.conditional_mutual_information(rho, groups["A"], groups["B"], groups["E"])


def shannon_oracle(p):
    return -sum(x * math.log2(x) for x in np.asarray(p).reshape(-1) if x > 0)


def test_entropy_examples():
    assert ent.von_neumann_entropy(st.ideal_key_state(1)) == pytest.approx(1, abs=1e-12)
    assert ent.von_neumann_entropy(st.ideal_key_state(2)) == pytest.approx(2, abs=1e-12)
    bell = DensityState(SubsystemLayout(["A", "B"], [2, 2]), linalg.proj(st.BELL))
    assert ent.von_neumann_entropy(bell) == pytest.approx(0, abs=1e-12)
    assert ent.von_neumann_entropy(bell, ["A"]) == pytest.approx(1, abs=1e-12)
    assert ent.mutual_information(bell, ["A"], ["B"]) == pytest.approx(2, abs=1e-12)
    assert ent.mutual_information(st.ideal_key_state(1), ["A"], ["B"]) == pytest.approx(1, abs=1e-12)


def test_shannon_and_binary_entropy():
    assert ent.shannon([0.5, 0.5]) == pytest.approx(1)
    assert ent.shannon([1.0, 0.0]) == 0.0
    assert ent.binary_entropy(0.25) == pytest.approx(0.811278, abs=1e-6)
    with pytest.raises(ValueError):
        ent.binary_entropy(1.5)


def test_gap_cmi_against_entropy_sum_oracle():
    p = st.gap_distribution()
    rho = st.from_distribution(p)
    q = p.probs.reshape(4, 4, 4)
    want = (shannon_oracle(q.sum(axis=1)) + shannon_oracle(q.sum(axis=0))
            - shannon_oracle(q) - shannon_oracle(q.sum(axis=(0, 1))))
    # given (k, l): the l=0 block carries one perfectly correlated bit, l=1 nothing
    assert want == pytest.approx(0.5, abs=1e-12)
    assert ent.conditional_mutual_information(rho, ["A"], ["B"], ["E", "F"]) == pytest.approx(want, abs=1e-12)
    assert ent.classical_cmi(q) == pytest.approx(want, abs=1e-12)


def test_gap_cmi_given_k_alone():
    rho = st.from_distribution(st.gap_distribution())
    assert ent.conditional_mutual_information(rho, ["A"], ["B"], ["E"]) == pytest.approx(1.5, abs=1e-12)


def test_cmi_matrix_matches_labelled():
    r = np.random.default_rng(3)
    rho = random_state(r, (2, 3, 2))
    assert ent.cmi_matrix(rho.matrix, (2, 3, 2)) == pytest.approx(cmi_abe(rho), abs=1e-10)


def test_classical_cmi_batch_matches_scalar():
    r = np.random.default_rng(4)
    q = r.dirichlet(np.ones(18), size=7).reshape(7, 2, 3, 3)
    got = ent.classical_cmi_batch(q)
    assert np.allclose(got, [ent.classical_cmi(x) for x in q], atol=1e-12)


def test_quantum_agrees_with_classical_on_diagonal():
    r = np.random.default_rng(5)
    for _ in range(20):
        q = r.dirichlet(np.full(12, 0.5)).reshape(2, 3, 2)
        rho = st.from_distribution(ClassicalDistribution(["A", "B", "E"], q))
        assert cmi_abe(rho) == pytest.approx(ent.classical_cmi(q), abs=1e-10)


def test_overlapping_labels_rejected():
    with pytest.raises(InvariantError):
        ent.mutual_information(st.ideal_key_state(1), ["A"], ["A"])


def test_relative_entropy_examples():
    tau = st.ideal_key_state(1).matrix
    sigma = np.eye(4) / 4
    assert ent.relative_entropy(tau, sigma) == pytest.approx(1, abs=1e-12)
    assert ent.relative_entropy(tau, tau) == pytest.approx(0, abs=1e-12)
    assert ent.relative_entropy(np.eye(2) / 2, np.diag([1.0, 0.0])) == math.inf


def test_strong_subadditivity_500_states():
    r = np.random.default_rng(2024)
    worst = math.inf
    for _ in range(500):
        dims = tuple(int(x) for x in r.integers(1, 4, size=3))
        worst = min(worst, cmi_abe(random_state(r, dims)))
    assert worst >= -1e-9


@settings(max_examples=60, deadline=None)
@given(hst.integers(0, 2**32 - 1))
def test_ssa_and_mi_nonnegative(seed):
    r = np.random.default_rng(seed)
    dims = tuple(int(x) for x in r.integers(1, 4, size=3))
    rho = random_state(r, dims)
    assert cmi_abe(rho) >= -1e-9
    assert ent.mutual_information(rho, ["A"], ["B"]) >= -1e-9
    s = ent.von_neumann_entropy(rho)
    assert -1e-12 <= s <= math.log2(rho.layout.total_dim) + 1e-9


def _tensor_cmi(r):
    x = random_state(r, tuple(int(v) for v in r.integers(1, 3, size=3)), ("A1", "B1", "E1"))
    y = random_state(r, tuple(int(v) for v in r.integers(1, 3, size=3)), ("A2", "B2", "E2"))
    joint = x.tensor(y)
    both = ent.conditional_mutual_information(joint, ["A1", "A2"], ["B1", "B2"], ["E1", "E2"])
    return both, cmi_abe(x) + cmi_abe(y)


def test_cmi_tensor_additive_100_pairs():
    r = np.random.default_rng(77)
    for _ in range(100):
        both, split = _tensor_cmi(r)
        assert abs(both - split) < 1e-9


def _lopc_instance(seed):
    r = np.random.default_rng([seed, 1])
    dims = tuple(int(x) for x in r.integers(2, 4, size=3))
    rho = random_state(r, dims)
    if r.random() < 0.5:
        rho = st.dephase(rho, ["A"])
    op = random_lopc_operation(seed, rho.layout, sorted(rho.classical_labels))
    return rho, apply_lopc(rho, op, tag="c")


def test_cmi_monotone_under_200_lopc_ops():
    kinds = set()
    for seed in range(200):
        rho, out = _lopc_instance(seed)
        kinds.add(len(out.labels) > len(rho.labels))
        assert cmi_abe(out) <= cmi_abe(rho) + 1e-6
    assert kinds == {True, False}


def test_lopc_copy_appends_public_registers():
    rho = st.from_distribution(ClassicalDistribution(["A", "B", "E"], np.full((2, 2, 2), 1 / 8)))
    op = random_lopc_operation(0, rho.layout, ["A"])
    for seed in range(50):
        op = random_lopc_operation(seed, rho.layout, ["A"])
        if op.kind == "copy":
            break
    out = apply_lopc(rho, op, tag="t")
    assert out.labels[-2:] == ("B_t", "E_t")


def _fannes_pair(r):
    dims = tuple(int(x) for x in r.integers(1, 4, size=3))
    rho = random_state(r, dims)
    n = rho.layout.total_dim
    w = r.uniform(0, 0.05)
    sigma = DensityState(rho.layout, (1 - w) * rho.matrix + w * linalg.random_density(n, r))
    return rho, sigma, dims


def test_fannes_bound_100_pairs():
    r = np.random.default_rng(31)
    for _ in range(100):
        rho, sigma, dims = _fannes_pair(r)
        eps = linalg.trace_distance(rho.matrix, sigma.matrix)
        assert abs(cmi_abe(rho) - cmi_abe(sigma)) <= ent.fannes_cmi_bound(eps, dims[0]) + 1e-9


def test_fannes_bound_values():
    assert ent.fannes_cmi_bound(0.0, 2) == 0.0
    assert ent.fannes_cmi_bound(0.25, 2) == pytest.approx(2 + 4 * 0.8112781244591328)
