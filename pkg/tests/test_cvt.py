import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvthdmr.cvt import EmptyClusterError, assign, centroids, energy, farthest_point_init, lloyd
from cvthdmr.errors import ParameterError
from cvthdmr.parameter_space import ProductDensity, sample


def brute_force_assign(X, G):
    out = []
    for x in X:
        best, bd = 0, None
        for l, g in enumerate(G):
            d = sum((a - b) ** 2 for a, b in zip(x, g))
            if bd is None or d < bd:
                best, bd = l, d
        out.append(best)
    return np.array(out)


def test_assign_small_cases():
    assert assign(np.array([[0.1], [0.9]]), np.array([[0.0], [1.0]])).tolist() == [0, 1]
    # equidistant: lowest index wins
    assert assign(np.array([[0.5]]), np.array([[0.0], [1.0]])).tolist() == [0]


def test_assign_matches_brute_force():
    X = sample(ProductDensity.uniform(0, 1), 2, 100, 5).points
    assert np.array_equal(assign(X, X[:3]), brute_force_assign(X, X[:3]))


def test_assign_dimension_mismatch():
    with pytest.raises(ParameterError):
        assign(np.zeros((3, 2)), np.zeros((2, 3)))


def test_centroids():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.3, 0.7]])
    c = centroids(X, np.array([0, 0, 1]), 2)
    assert c.tolist() == [[0.5, 0.5], [0.3, 0.7]]
    with pytest.raises(EmptyClusterError) as info:
        centroids(X, np.array([0, 0, 0]), 2)
    assert info.value.empty == [1]


def test_centroid_matches_mean_oracle():
    X = sample(ProductDensity.normal(), 3, 50, 2).points
    c = centroids(X, np.zeros(50, dtype=int), 1)[0]
    oracle = [sum(X[i, j] for i in range(50)) / 50 for j in range(3)]
    assert np.allclose(c, oracle, atol=1e-12, rtol=0)


def test_energy():
    per, total = energy(np.array([[0.0], [1.0]]), np.array([0, 0]), np.array([[0.5]]))
    assert total == 0.5 and per.tolist() == [0.5]
    X = np.array([[0.1, 0.2], [0.5, 0.5], [0.9, 0.3]])
    _, total = energy(X, np.arange(3), X)
    assert total == 0.0


def test_lloyd_single_cluster_is_mean():
    X = sample(ProductDensity.uniform(0, 1), 3, 200, 0).points
    part = lloyd(X, 1)
    assert part.converged
    assert np.allclose(part.centroids[0], X.mean(axis=0), atol=1e-14)


def test_lloyd_1d_enumeration():
    X = np.array([[0.0], [0.1], [0.9], [1.0]])
    # exhaustive oracle over contiguous 2-partitions of the sorted line
    best = None
    for cut in range(1, 4):
        e = sum(float(((g - g.mean()) ** 2).sum()) for g in (X[:cut], X[cut:]))
        best = e if best is None else min(best, e)
    for init in (None, [[0.0], [0.1]], [[0.9], [0.0]]):
        part = lloyd(X, 2, init=init)
        assert sorted(part.centroids[:, 0].round(12).tolist()) == [0.05, 0.95]
        assert part.total_energy == pytest.approx(best, abs=1e-12)
        assert part.total_energy == pytest.approx(0.01, abs=1e-12)


def test_lloyd_invariants():
    X = sample(ProductDensity.uniform(0, 1), 4, 800, 1).points
    part = lloyd(X, 6, seed=3)
    assert part.counts.sum() == 800 and np.all(part.counts >= 1)
    assert part.total_energy == pytest.approx(part.energies.sum(), rel=1e-14)
    assert np.array_equal(part.assignments, assign(X, part.centroids))
    # fixed point
    again = centroids(X, assign(X, part.centroids), 6)
    assert np.max(np.linalg.norm(again - part.centroids, axis=1)) <= 1e-9
    assert len(part.members(0)) == part.counts[0]


def test_lloyd_l_equals_n():
    X = sample(ProductDensity.uniform(0, 1), 2, 12, 4).points
    part = lloyd(X, 12)
    assert part.total_energy == 0.0


def test_lloyd_errors_and_nonconvergence():
    X = sample(ProductDensity.uniform(0, 1), 2, 10, 0).points
    with pytest.raises(ParameterError):
        lloyd(X, 11)
    with pytest.raises(ParameterError):
        lloyd(X, 0)
    Y = sample(ProductDensity.uniform(0, 1), 2, 2000, 0).points
    part = lloyd(Y, 8, max_iter=1)
    assert not part.converged and part.iterations == 1


def test_empty_cluster_repair():
    X = np.array([[0.0], [0.1], [0.2], [5.0]])
    # the third generator attracts no sample at the start
    part = lloyd(X, 3, init=[[0.1], [5.0], [100.0]])
    assert np.all(part.counts >= 1)


def test_permutation_invariance():
    X = sample(ProductDensity.uniform(0, 1), 3, 600, 9).points
    perm = np.random.default_rng(0).permutation(600)
    a, b = lloyd(X, 4, seed=2), lloyd(X[perm], 4, seed=2)
    assert a.total_energy == pytest.approx(b.total_energy, rel=1e-12)
    key = lambda c: sorted(map(tuple, c.round(10)))  # noqa: E731
    assert key(a.centroids) == key(b.centroids)


def test_lloyd_deterministic():
    X = sample(ProductDensity.beta_law(0.9, 1.3), 3, 500, 0).points
    a, b = lloyd(X, 3, seed=1), lloyd(X, 3, seed=1)
    assert a.centroids.tobytes() == b.centroids.tobytes()


def test_farthest_point_init_distinct():
    X = sample(ProductDensity.uniform(0, 1), 2, 300, 0).points
    G = farthest_point_init(X, 5, 0)
    assert len({tuple(g) for g in G}) == 5


def test_uniform_energy_trend():
    X = sample(ProductDensity.uniform(0, 1), 6, 20000, 0)
    totals = [lloyd(X, L).total_energy for L in (1, 2, 3, 4)]
    assert totals[0] == pytest.approx(20000 * 6 / 12, rel=0.01)
    assert all(a > b for a, b in zip(totals, totals[1:]))
    # reference energies for this configuration, within 3%
    for got, ref in zip(totals, (9984.5, 8722.4, 7974.5, 7355.3)):
        assert got == pytest.approx(ref, rel=0.03)


def test_csv_exports(tmp_path):
    X = np.array([[0.0, 0.0], [0.1, 0.0], [1.0, 1.0]])
    part = lloyd(X, 2)
    part.write_assignments_csv(tmp_path / "a.csv")
    part.write_centroids_csv(tmp_path / "c.csv")
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "point_index,cluster"
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "cluster,x1,x2,count,energy" and len(lines) == 3


@settings(max_examples=40, deadline=None)
@given(st.integers(5, 200), st.integers(1, 8), st.integers(1, 4), st.integers(0, 2**16))
def test_lloyd_monotone_and_brute_force(N, L, p, seed):
    L = min(L, N)
    X = sample(ProductDensity.uniform(0, 1), p, N, seed).points
    part = lloyd(X, L, seed=seed)
    h = part.history
    assert all(b <= a * (1 + 1e-12) + 1e-15 for a, b in zip(h, h[1:]))
    assert np.array_equal(part.assignments, brute_force_assign(X, part.centroids))

