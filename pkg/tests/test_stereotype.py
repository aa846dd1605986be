import math
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset, make_partition
from oracles import igi_naive, ister_naive, random_profiles
from prefobf.errors import EmptyGroupError, UndefinedScoreError
from prefobf.stereotype import (
    StereotypeTable,
    compute_gamma,
    compute_igi,
    compute_ister,
    emit_distributions,
    ister_histogram,
    user_score,
    user_scores,
)


@pytest.fixture
def toy():
    # users 0,1 in g0 and 2,3 in g1; item 0 consumed by both g0 users and one g1 user
    ds = make_dataset([[0, 1], [0], [0, 2], [3]], 4)
    return ds, make_partition([0, 0, 1, 1])


class TestInclination:
    def test_toy_values(self, toy):
        igi = compute_igi(*toy)
        assert igi[0].tolist() == [1.0, 0.5]
        assert igi[1].tolist() == [0.5, 0.0]
        assert igi[2].tolist() == [0.0, 0.5]

    def test_all_and_none(self):
        ds = make_dataset([[0], [0], [1]], 2)
        igi = compute_igi(ds, make_partition([0, 0, 1]))
        assert igi[0, 0] == 1.0 and igi[0, 1] == 0.0

    def test_partition_mismatch(self, toy):
        with pytest.raises(ValueError):
            compute_igi(toy[0], make_partition([0, 1]))

    def test_empty_group_is_an_error(self):
        class Fake:
            groups = np.zeros(2, dtype=np.int8)

            def __len__(self):
                return 2

        with pytest.raises(EmptyGroupError):
            compute_igi(make_dataset([[0], [0]]), Fake())

    def test_monotone_under_added_interaction(self):
        rng = np.random.default_rng(1)
        profiles, groups = random_profiles(rng, 10, 12)
        before = compute_igi(make_dataset(profiles, 12), make_partition(groups))
        u = 3
        extra = next(v for v in range(12) if v not in profiles[u])
        profiles[u] = sorted(profiles[u] + [extra])
        after = compute_igi(make_dataset(profiles, 12), make_partition(groups))
        assert after[extra, groups[u]] > before[extra, groups[u]]
        assert (after >= before).all()


class TestItemStereotypicality:
    def test_equal_inclination_is_zero(self):
        assert compute_ister(np.array([[0.4, 0.4]]))[0] == 0.0

    def test_half(self):
        assert compute_ister(np.array([[1.0, 0.5]]))[0] == 0.5

    def test_unconsumed_is_zero(self):
        assert compute_ister(np.array([[0.0, 0.0]]))[0] == 0.0

    def test_exclusive_items_are_extreme(self):
        out = compute_ister(np.array([[0.3, 0.0], [0.0, 0.1]]))
        assert out.tolist() == [1.0, -1.0]

    def test_pair_swap_negates(self, toy):
        igi = compute_igi(*toy)
        assert np.array_equal(compute_ister(igi, (1, 0)), -compute_ister(igi, (0, 1)))

    def test_table_orientation(self, toy):
        table = StereotypeTable.build(*toy)
        assert table.labels == ("g0", "g1")
        assert np.array_equal(table.oriented(1), -table.ister)
        with pytest.raises(ValueError):
            table.oriented(2)

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_double_loop(self, seed):
        rng = np.random.default_rng(seed)
        n_users, n_items = int(rng.integers(2, 21)), int(rng.integers(1, 31))
        profiles, groups = random_profiles(rng, n_users, n_items)
        igi = compute_igi(make_dataset(profiles, n_items), make_partition(groups))
        ref = igi_naive([set(p) for p in profiles], groups, n_items)
        np.testing.assert_allclose(igi, ref, rtol=0, atol=1e-12)
        np.testing.assert_allclose(compute_ister(igi), ister_naive(ref), rtol=0, atol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 5000), st.integers(1, 5000), st.data())
    def test_bounds_and_antisymmetry(self, size0, size1, data):
        # inclinations are consumer counts over group sizes
        n = data.draw(st.integers(1, 30))
        c0 = data.draw(st.lists(st.integers(0, size0), min_size=n, max_size=n))
        c1 = data.draw(st.lists(st.integers(0, size1), min_size=n, max_size=n))
        igi = np.column_stack([np.array(c0) / size0, np.array(c1) / size1])
        fwd, back = compute_ister(igi, (0, 1)), compute_ister(igi, (1, 0))
        assert ((fwd >= -1) & (fwd <= 1)).all()
        assert np.array_equal(fwd, -back)
        exclusive = ((igi[:, 0] == 0) ^ (igi[:, 1] == 0))
        assert np.array_equal(np.abs(fwd) == 1, exclusive)


class TestUserScore:
    def test_constant(self):
        scores = np.full(5, 0.3)
        assert user_score([0, 1, 2], scores, "mean") == pytest.approx(0.3, abs=1e-15)
        assert user_score([0, 1, 2], scores, "median") == 0.3

    def test_symmetric_mean(self):
        assert user_score([0, 1, 2], np.array([-1.0, 0.0, 1.0]), "mean") == 0.0

    def test_even_median(self):
        assert user_score([0, 1, 2, 3], np.array([0.1, 0.2, 0.9, 1.0]), "median") == pytest.approx(0.55, abs=1e-15)

    def test_empty(self):
        with pytest.raises(UndefinedScoreError):
            user_score([], np.zeros(3))

    def test_bad_aggregator(self):
        with pytest.raises(ValueError):
            user_score([0], np.zeros(3), "mode")

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=1, max_size=20), st.sampled_from(["mean", "median"]))
    def test_within_profile_range(self, values, aggregator):
        scores = np.array(values)
        s = user_score(range(len(values)), scores, aggregator)
        assert min(values) <= s <= max(values)

    def test_user_scores_orient_by_group(self, toy):
        ds, part = toy
        table = StereotypeTable.build(ds, part)
        s = user_scores(ds, part, table)
        # user 3 (g1) holds only item 3, never consumed by g0 -> fully stereotypical
        assert s[3] == 1.0
        assert s[0] == pytest.approx((0.5 + 1.0) / 2)


class TestGamma:
    def test_mean(self):
        assert compute_gamma([0.2, 0.4]) == pytest.approx(0.3, abs=1e-15)

    def test_all_equal_returns_value_exactly(self):
        for c in (0.1, 1 / 3, 0.7, -0.2):
            scores = [c] * 7
            gamma = compute_gamma(scores)
            assert gamma == c
            assert all(s >= gamma for s in scores)

    def test_matches_compensated_sum(self):
        rng = np.random.default_rng(0)
        values = rng.uniform(-1, 1, 5000).tolist()
        assert abs(compute_gamma(values) - math.fsum(values) / len(values)) <= 1e-12

    def test_median_mode(self):
        assert compute_gamma([0.0, 0.1, 0.9], "median") == 0.1

    def test_nan_skipped(self):
        assert compute_gamma([0.5, float("nan")]) == 0.5

    def test_empty(self):
        with pytest.raises(UndefinedScoreError):
            compute_gamma([])


class TestDistributions:
    def test_histogram_binning(self):
        counts, edges = ister_histogram(np.array([-1.0, 0.0, 1.0]), bins=2)
        assert counts.tolist() == [1, 2]
        assert edges.tolist() == [-1.0, 0.0, 1.0]

    def test_emit(self, toy, tmp_path):
        ds, part = toy
        table = StereotypeTable.build(ds, part)
        scores = user_scores(ds, part, table)
        paths = emit_distributions(table, scores, tmp_path, bins=4, user_ids=ds.users)
        hist = paths["histogram"].read_text().splitlines()
        assert sum(int(line.split(",")[2]) for line in hist[1:]) == ds.n_items
        series = [float(line.split(",")[2]) for line in paths["series"].read_text().splitlines()[1:]]
        assert series == sorted(series, reverse=True)
        gammas = {line.split(",")[3] for line in paths["series"].read_text().splitlines()[1:]}
        assert gammas == {repr(compute_gamma(scores))}
        assert "gamma" in paths["summary"].read_text()

    def test_unwritable(self, toy, tmp_path):
        ds, part = toy
        table = StereotypeTable.build(ds, part)
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError):
            emit_distributions(table, user_scores(ds, part, table), blocker / "sub")
