import numpy as np
import pytest

from pathgibbs.cluster import (
    eta_ladder_coupled,
    Chain,
    ClusterDiagram,
    Contour,
    Surrogate,
    brute_force_clusters,
    cluster_estimate_check,
    cluster_weight,
    enumerate_clusters,
    is_valid_cluster,
    partition_function_cluster,
    partition_function_direct,
)
from pathgibbs.errors import BudgetExceededError
from pathgibbs.kernels import PairKernelSpec
from pathgibbs.model import TimeGrid
from pathgibbs.spectral import Grid1D, PotentialSpec, ground_state

LAMS = np.array([0.01, -0.01, 0.05, -0.05, 0.1, -0.1])


@pytest.fixture(scope="module")
def sd():
    return ground_state(Grid1D(-8.0, 8.0, 801), PotentialSpec.harmonic(), m=32)


@pytest.fixture(scope="module")
def kernel():
    return PairKernelSpec.quadratic_longrange(1.0, 2.0)


def make_surrogate(sd, kernel, N, npos, T=1.0):
    return Surrogate.from_spectral(sd, TimeGrid(T, N), kernel, npos)


def test_surrogate_invariants(sd, kernel):
    s = make_surrogate(sd, kernel, 4, 3)
    assert abs(s.nu.sum() - 1.0) < 1e-12
    # g rows integrate to one against nu, and g is symmetric
    assert np.abs(s.g @ s.nu - 1.0).max() < 1e-10
    assert np.abs(s.g - s.g.T).max() < 1e-12


def test_diagonal_convention_rebracketing(sd, kernel):
    # the case-table assignment is a re-bracketing of the plain double sum
    for N in (2, 3, 5):
        s = make_surrogate(sd, kernel, N, 4)
        rng = np.random.default_rng(0)
        for _ in range(10):
            a = rng.integers(0, 4, N + 1)
            assert s.pair_sum(a) == pytest.approx(s.plain_double_sum(a), abs=1e-12)


def test_direct_partition_normalised(sd, kernel):
    s = make_surrogate(sd, kernel, 4, 3)
    assert partition_function_direct(s, 0.0) == pytest.approx(1.0, abs=1e-12)


def test_direct_partition_hand_computed_n2(sd, kernel):
    s = make_surrogate(sd, kernel, 2, 2)
    lam = 0.07
    z_hand = 0.0
    for a in range(2):
        for b in range(2):
            for c in range(2):
                ref = s.nu[a] * s.nu[b] * s.nu[c] * s.g[b, a] * s.g[c, b]
                inter = s.wpair[(0, 1)][a, b]
                z_hand += ref * np.exp(-lam * inter)
    assert partition_function_direct(s, lam) == pytest.approx(z_hand, rel=1e-12)


def test_direct_partition_first_order_expansion(sd, kernel):
    # Z = 1 - lam E[sum W] + O(lam^2) with the first moment enumerated directly
    s = make_surrogate(sd, kernel, 4, 3)
    first = 0.0
    states = np.stack(np.unravel_index(np.arange(3**5), (3,) * 5))
    ref = s.nu[states].prod(axis=0)
    for k in range(4):
        ref *= s.g[states[k + 1], states[k]]
    inter = np.zeros(states.shape[1])
    for (i, j), w in s.wpair.items():
        inter += w[states[i], states[j]]
    first = float((ref * inter).sum())
    lam = 1e-4
    z = partition_function_direct(s, lam)
    assert z == pytest.approx(1.0 - lam * first, abs=5 * lam**2 * abs(first) ** 2 + 1e-12)


def test_enumeration_matches_brute_force(sd, kernel):
    for N in (2, 3, 4):
        enum = set()
        for d in enumerate_clusters(N, N):
            key = (frozenset(c.pairs for c in d.contours),
                   frozenset((c.start, c.end) for c in d.chains))
            assert key not in enum, "duplicate diagram"
            enum.add(key)
        assert enum == brute_force_clusters(N, N)


@pytest.mark.slow
def test_enumeration_matches_brute_force_n5():
    enum = set()
    for d in enumerate_clusters(5, 5):
        key = (frozenset(c.pairs for c in d.contours),
               frozenset((c.start, c.end) for c in d.chains))
        enum.add(key)
    assert enum == brute_force_clusters(5, 5)


def test_enumeration_n2_structure(sd, kernel):
    # single pair (0,1); chains may attach at covered time-points
    diagrams = list(enumerate_clusters(2, 2))
    for d in diagrams:
        assert d.contours == (Contour(frozenset({(0, 1)})),)
    assert len(diagrams) == len(brute_force_clusters(2, 2))


def test_enumeration_empty_for_zero_order():
    assert list(enumerate_clusters(4, 0)) == []


def test_loose_end_rejected_and_mean_zero(sd, kernel):
    s = make_surrogate(sd, kernel, 4, 3)
    bad = ClusterDiagram((Contour(frozenset({(0, 1)})),), (Chain(3, 3),))
    assert not is_valid_cluster(bad)
    assert abs(cluster_weight(s, bad, 0.05)) < 1e-14
    # and it is excluded from enumeration
    for d in enumerate_clusters(4, 4):
        assert is_valid_cluster(d)


def test_cluster_weight_lambda_zero(sd, kernel):
    s = make_surrogate(sd, kernel, 4, 3)
    for d in enumerate_clusters(4, 4):
        assert abs(cluster_weight(s, d, 0.0)) < 1e-14


def test_cluster_weight_matches_dense_contraction(sd, kernel):
    s = make_surrogate(sd, kernel, 3, 3)
    lam = 0.05
    d = ClusterDiagram((Contour(frozenset({(0, 1), (1, 2)})),), (Chain(0, 0),))
    assert is_valid_cluster(d)
    # dense summation over all node assignments at the diagram's time-points
    total = 0.0
    for a in range(3):
        for b in range(3):
            for c in range(3):
                for dd in range(3):
                    w = ((np.exp(-lam * s.wpair[(0, 1)][a, b]) - 1)
                         * (np.exp(-lam * s.wpair[(1, 2)][b, c]) - 1)
                         * (s.g[a, b] - 1))
                    total += w * s.nu[a] * s.nu[b] * s.nu[c] * s.nu[dd]
    assert cluster_weight(s, d, lam) == pytest.approx(total, rel=1e-12)


def test_identity_enumerate_small(sd, kernel):
    for N in (2, 3, 4):
        for npos in (2, 3):
            s = make_surrogate(sd, kernel, N, npos)
            zd = partition_function_direct(s, LAMS)
            zc, partials = partition_function_cluster(s, LAMS, method="enumerate")
            assert np.abs(zc / zd - 1.0).max() < 1e-9
            # the top truncation order reproduces the full value exactly
            full_order = max(partials)
            assert np.allclose(partials[full_order], zc, rtol=1e-12)


def test_identity_folded_matches_direct(sd, kernel):
    for N, npos in ((5, 3), (6, 3)):
        s = make_surrogate(sd, kernel, N, npos)
        zd = partition_function_direct(s, LAMS)
        zf, _ = partition_function_cluster(s, LAMS, method="folded")
        assert np.abs(zf / zd - 1.0).max() < 1e-9


def test_folded_equals_enumerate(sd, kernel):
    s = make_surrogate(sd, kernel, 4, 3)
    ze, _ = partition_function_cluster(s, LAMS, method="enumerate")
    zf, _ = partition_function_cluster(s, LAMS, method="folded")
    assert np.abs(ze - zf).max() < 1e-12


def test_partial_sums_shrink(sd, kernel):
    s = make_surrogate(sd, kernel, 4, 3)
    _, partials = partition_function_cluster(s, 0.05, method="enumerate")
    orders = sorted(partials)
    increments = np.abs(np.diff([partials[n] for n in orders]))
    assert all(b < a for a, b in zip(increments, increments[1:]))


def test_estimate_check_eta_ladder(sd, kernel):
    s = make_surrogate(sd, kernel, 6, 3)
    etas = [cluster_estimate_check(s, lam, 4)["eta"] for lam in (0.01, 0.02, 0.04)]
    assert etas[0] < etas[1] < etas[2]


def test_eta_to_zero_with_coupled_interval(sd, kernel):
    # chain factors scale with e^{-gap b}; coupling b to lambda sends the
    # fitted rate to zero along lambda -> 0
    etas = eta_ladder_coupled(sd, kernel, (0.0025, 0.01, 0.04), 4)
    assert etas[0] < etas[1] < etas[2]
    assert etas[0] < 0.1


def test_estimate_check_zero_lambda(sd, kernel):
    s = make_surrogate(sd, kernel, 4, 3)
    r = cluster_estimate_check(s, 0.0, 3)
    assert all(v == 0.0 for v in r["sums"].values())
    assert r["eta"] == 0.0  # vacuous pass at machine-zero sums


def test_estimate_check_geometric_decay(sd, kernel):
    s = make_surrogate(sd, kernel, 6, 3)
    r = cluster_estimate_check(s, 0.05, 4)
    sums = [r["sums"][n] for n in r["orders"] if r["sums"][n] > 0]
    assert all(b / a < 1.0 for a, b in zip(sums, sums[1:]))


def test_budgets_enforced(sd, kernel):
    with pytest.raises(BudgetExceededError):
        list(enumerate_clusters(9, 2))
    s = make_surrogate(sd, kernel, 8, 7, T=1.0)
    with pytest.raises(BudgetExceededError):
        partition_function_direct(s, 0.0)  # 7^9 states over budget
    with pytest.raises(BudgetExceededError):
        brute_force_clusters(6, 6)
