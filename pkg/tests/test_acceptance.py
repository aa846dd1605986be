"""Acceptance criteria; each test prints one PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v``. The end-to-end
synthetic experiment (criteria 9 and 10) takes well under a minute.
"""

import math
import time

import numpy as np
import pytest

from conftest import make_dataset, make_partition
from gradcheck import attacker_gradient_error, bpr_gradient_error
from oracles import count_floor, igi_naive, ister_naive, random_profiles, reference_obfuscation
from prefobf.attacker import balanced_accuracy, run_attack_cv
from prefobf.dataset import GroupPartition
from prefobf.harness import ExperimentConfig, SyntheticConfig, generate_synthetic, prepare, run_experiment
from prefobf.obfuscation import SAMPLERS, STRATEGIES, ObfuscationConfig, bernoulli_select, obfuscate_dataset, user_rng
from prefobf.recommender import ndcg_at_k
from prefobf.stereotype import StereotypeTable, compute_igi, compute_ister, user_score


def verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def random_case(rng, max_users=20, max_items=30):
    n_users = int(rng.integers(2, max_users + 1))
    n_items = int(rng.integers(1, max_items + 1))
    profiles, groups = random_profiles(rng, n_users, n_items, 1, n_items)
    return profiles, groups, n_items


def test_criterion_01_stereotype_oracle(capsys):
    rng = np.random.default_rng(101)
    cases = [random_case(rng) for _ in range(200)]
    worst = 0.0
    start = time.perf_counter()
    for profiles, groups, n_items in cases:
        ds, part = make_dataset(profiles, n_items), make_partition(groups)
        igi = compute_igi(ds, part)
        ister = compute_ister(igi)
        naive = np.array(igi_naive([set(p) for p in profiles], groups, n_items))
        worst = max(worst, np.abs(igi - naive).max(), np.abs(ister - np.array(ister_naive(naive.tolist()))).max())
    elapsed = time.perf_counter() - start
    verdict(capsys, 1, worst <= 1e-12 and elapsed < 5.0,
            f"200 datasets, max abs deviation {worst:.1e} (<= 1e-12), {elapsed:.2f}s (< 5s)")


def test_criterion_02_algorithm_oracle(capsys):
    rng = np.random.default_rng(202)
    mismatches = 0
    start = time.perf_counter()
    for d in range(50):
        profiles, groups, n_items = random_case(rng)
        ds, part = make_dataset(profiles, n_items), make_partition(groups)
        for strategy in STRATEGIES:
            for sampler in SAMPLERS:
                ratio = float(rng.choice([0.1, 0.25, 0.5, 1.0]))
                cfg = ObfuscationConfig(strategy, sampler, ratio, 0.5, seed=d)
                out = obfuscate_dataset(ds, part, cfg)
                ref, flags, gamma = reference_obfuscation(profiles, groups, n_items, strategy, sampler, ratio,
                                                          0.5, seed=d)
                got = [set(p.tolist()) for p in out.dataset.profiles]
                if got != ref or [r.selected for r in out.records] != flags or out.gamma != gamma:
                    mismatches += 1
    elapsed = time.perf_counter() - start
    verdict(capsys, 2, mismatches == 0 and elapsed < 30.0,
            f"50 datasets x 9 configurations, {mismatches} mismatches, {elapsed:.2f}s (< 30s)")


def test_criterion_03_antisymmetry_and_bounds(capsys):
    rng = np.random.default_rng(303)
    violations = 0
    for t in range(1000):
        if t % 2:
            profiles, groups, n_items = random_case(rng)
            igi = compute_igi(make_dataset(profiles, n_items), make_partition(groups))
        else:
            # arbitrary inclination tables given as counts over group sizes
            n = int(rng.integers(1, 40))
            sizes = rng.integers(1, 5000, size=2)
            igi = rng.integers(0, sizes + 1, size=(n, 2)) / sizes
        forward, backward = compute_ister(igi, (0, 1)), compute_ister(igi, (1, 0))
        ok = (
            np.array_equal(forward, -backward)
            and np.all((igi >= 0) & (igi <= 1))
            and np.all((forward >= -1) & (forward <= 1))
        )
        violations += not ok
    verdict(capsys, 3, violations == 0, f"1000 tables, {violations} antisymmetry/bound violations")


def test_criterion_04_bernoulli_calibration(capsys):
    trials = 10_000
    details, ok = [], True
    for p in (0.0, 0.1, 0.5, 0.9, 1.0):
        mu = np.array([p, -p])
        hits = np.zeros(2)
        for t in range(trials):
            chosen = bernoulli_select(np.array([0, 1]), mu, user_rng(4, t))
            hits[chosen] += 1
        freq = hits / trials
        if p in (0.0, 1.0):
            ok &= bool(np.all(freq == p))
        else:
            ok &= bool(np.all(np.abs(freq - p) <= 0.02))
        details.append(f"{p}->{freq[0]:.4f}/{freq[1]:.4f}")
    verdict(capsys, 4, ok, "selection frequency for |M_u| (positive/negative sign): " + ", ".join(details))


def test_criterion_05_budget_and_identity(capsys):
    rng = np.random.default_rng(505)
    problems = []
    for run in range(1000):
        profiles, groups, n_items = random_case(rng, 15, 25)
        ds, part = make_dataset(profiles, n_items), make_partition(groups)
        cfg = ObfuscationConfig(
            str(rng.choice(STRATEGIES)), str(rng.choice(SAMPLERS)), float(rng.uniform(0.05, 1.0)),
            float(rng.uniform()), str(rng.choice(["mean", "median"])), str(rng.choice(["mean", "median"])),
            int(rng.integers(2**31)),
        )
        out = obfuscate_dataset(ds, part, cfg)
        for r in out.records:
            before = set(profiles[r.user])
            after = set(out.dataset.profile(r.user).tolist())
            if len(r.chosen) > count_floor(cfg.ratio, len(before)):
                problems.append((run, r.user, "budget"))
            if not r.selected and after != before:
                problems.append((run, r.user, "unselected user changed"))
            if cfg.strategy == "removal" and not after <= before:
                problems.append((run, r.user, "removal added items"))
            if cfg.strategy == "imputation" and not before <= after:
                problems.append((run, r.user, "imputation removed items"))
        again = obfuscate_dataset(ds, part, cfg)
        pooled = obfuscate_dataset(ds, part, cfg, workers=3)
        reference = out.dataset.pairs.tobytes()
        if again.dataset.pairs.tobytes() != reference or pooled.dataset.pairs.tobytes() != reference:
            problems.append((run, None, "non-deterministic"))
        if again.records != out.records or pooled.records != out.records:
            problems.append((run, None, "audit differs"))
    verdict(capsys, 5, not problems, f"1000 fuzzed runs, {len(problems)} violations {problems[:3]}")


def test_criterion_06_destereotyping(capsys):
    rng = np.random.default_rng(606)
    checked, failures = 0, 0
    while checked < 500:
        profiles, groups, n_items = random_case(rng)
        ds, part = make_dataset(profiles, n_items), make_partition(groups)
        table = StereotypeTable.build(ds, part)
        for u, profile in enumerate(profiles):
            mu = table.oriented(groups[u])
            if len(set(mu[profile].tolist())) < 2 or checked >= 500:
                continue
            checked += 1
            top = max(profile, key=lambda v: (mu[v], -v))
            rest = [v for v in profile if v != top]
            failures += not user_score(rest, mu) < user_score(profile, mu)
    verdict(capsys, 6, failures == 0, f"{checked} profiles with >= 2 distinct scores, {failures} non-decreases")


def test_criterion_07_gradient_checks(capsys):
    bpr = [bpr_gradient_error(np.random.default_rng(10_000 + i)) for i in range(100)]
    mlp = [attacker_gradient_error(np.random.default_rng(20_000 + i)) for i in range(100)]
    ok = max(bpr) <= 1e-4 and max(mlp) <= 1e-4
    verdict(capsys, 7, ok, f"max relative error BPR {max(bpr):.1e}, attacker {max(mlp):.1e} (<= 1e-4, 100 each)")


NDCG_CASES = [
    (([1, 2, 3], {1, 2, 3, 4}, 3), 1.0),
    (([1, 2, 3], {7}, 3), 0.0),
    (([5, 7], {7}, 2), 1 / math.log2(3)),
    (([5, 7], {7}, 2), 0.6309297535714575),
    (([1, 2], set(), 2), 0.0),
    (([3], {3, 4}, 10), 1 / (1 + 1 / math.log2(3))),
    (([1, 2, 3], {3}, 2), 0.0),
    (([9, 1, 8, 2], {1, 2}, 4), (1 / math.log2(3) + 1 / math.log2(5)) / (1 + 1 / math.log2(3))),
    (([4, 5, 6, 7, 8], {8}, 5), 1 / math.log2(6)),
    ((list(range(10)), set(range(20)), 10), 1.0),
]
BACC_CASES = [
    (([0, 1, 1], [0, 1, 1]), 1.0),
    (([0, 0, 0, 0], [0, 0, 0, 1]), 0.5),
    (([0, 0, 1, 1], [0, 1, 1, 1]), (1 + 2 / 3) / 2),
    (([1, 0], [0, 1]), 0.0),
    (([1, 1, 1, 0], [0, 0, 1, 1]), 0.25),
]


def test_criterion_08_metric_table(capsys):
    errors = [abs(ndcg_at_k(*args) - want) for args, want in NDCG_CASES]
    errors += [abs(balanced_accuracy(*args) - want) for args, want in BACC_CASES]
    worst = max(errors)
    verdict(capsys, 8, worst <= 1e-9, f"{len(errors)} hand-computed cases, max abs error {worst:.1e} (<= 1e-9)")


@pytest.fixture(scope="module")
def synthetic_run(tmp_path_factory):
    dataset, partition = generate_synthetic(SyntheticConfig(seed=0))
    cfg = ExperimentConfig(
        out=str(tmp_path_factory.mktemp("acceptance") / "synthetic"), name="synthetic",
        strategies=("removal",), samplers=("sbsampling",), ratios=(0.1, 0.05),
    )
    start = time.perf_counter()
    report = run_experiment(cfg, dataset, partition)
    return cfg, dataset, partition, report, time.perf_counter() - start


def test_criterion_09_directional_tradeoff(capsys, synthetic_run):
    _, _, _, report, elapsed = synthetic_run
    base, cell = report.original, report.find("removal", "sbsampling", 0.1)
    bacc_drop, ndcg_drop = base.bacc_mean - cell.bacc_mean, base.ndcg - cell.ndcg
    ok = base.bacc_mean >= 0.85 and bacc_drop >= 0.05 and ndcg_drop <= 0.03 and elapsed <= 600
    verdict(capsys, 9, ok,
            f"original BAcc {base.bacc_mean:.4f} (>= 0.85), removal+SBsampling rho=0.1 BAcc {cell.bacc_mean:.4f} "
            f"(drop {bacc_drop:.4f} >= 0.05), NDCG@10 {base.ndcg:.4f} -> {cell.ndcg:.4f} "
            f"(drop {ndcg_drop:.4f} <= 0.03), {elapsed:.1f}s for original + 2 cells (<= 600s)")


def test_criterion_10_ratio_sensitivity(capsys, synthetic_run):
    _, _, _, report, _ = synthetic_run
    base = report.original.bacc_mean
    drop_10 = base - report.find("removal", "sbsampling", 0.1).bacc_mean
    drop_05 = base - report.find("removal", "sbsampling", 0.05).bacc_mean
    verdict(capsys, 10, drop_05 <= drop_10 + 0.02,
            f"BAcc drop rho=0.05 {drop_05:.4f} <= rho=0.1 drop {drop_10:.4f} + 0.02")


def test_criterion_11_chance_floor(capsys, synthetic_run):
    cfg, dataset, partition, _, _ = synthetic_run
    prep = prepare(cfg, dataset, partition)
    shuffled = GroupPartition(partition.labels, np.random.default_rng(0).permutation(prep.partition.groups))
    result = run_attack_cv(prep.trainval, shuffled, cfg.attack, cfg.folds, cfg.attack_seed, prep.data.n_items)
    verdict(capsys, 11, abs(result.mean - 0.5) <= 0.05,
            f"permuted-label BAcc {result.mean:.4f} (0.5 +/- 0.05), folds "
            + " ".join(f"{b:.3f}" for b in result.per_fold))
