"""Acceptance criteria, one test each, at their stated tolerances.

Every test records a PASS/FAIL line that is printed in the terminal summary.
"""
import json
import time
import tracemalloc

import numpy as np
import pytest

from scoreclust.cli import main
from scoreclust.dendro import cut_height, cut_k
from scoreclust.evaluate import per_subject_structure, purity
from scoreclust.linkage import cluster, cluster_naive
from scoreclust.score_space import DistanceMatrix, SimilarityMatrix, to_distance
from scoreclust.synth import SynthConfig, generate

from conftest import kruskal_weights, record_acceptance

METHODS = ("single", "complete", "ward")


def _check(name, passed, detail):
    record_acceptance(name, bool(passed), detail)
    assert passed, f"{name}: {detail}"


def _height_cuts(tree):
    levels = np.unique(tree.heights)
    mids = (levels[:-1] + levels[1:]) / 2
    return np.concatenate([[levels[0] / 2], mids, [levels[-1] + 1]])


def test_criterion_1_oracle_equivalence():
    rng = np.random.default_rng(1001)
    start = time.perf_counter()
    failures = []
    for trial in range(200):
        n = int(rng.integers(2, 65))
        d = DistanceMatrix(rng.random(n * (n - 1) // 2))
        for method in METHODS:
            fast, slow = cluster(d, method), cluster_naive(d, method)
            if not np.allclose(np.sort(fast.heights), np.sort(slow.heights), rtol=1e-9, atol=0):
                failures.append((trial, method, "heights"))
                continue
            if not all(cut_height(fast, h).same_as(cut_height(slow, h)) for h in _height_cuts(slow)):
                failures.append((trial, method, "height cut"))
            if not all(cut_k(fast, k).same_as(cut_k(slow, k)) for k in range(1, n + 1)):
                failures.append((trial, method, "k cut"))
    elapsed = time.perf_counter() - start
    _check("1 oracle equivalence", not failures and elapsed < 60,
           f"200 matrices x 3 methods, {len(failures)} mismatches, {elapsed:.1f}s (limit 60s)")


def test_criterion_2_single_link_is_mst():
    rng = np.random.default_rng(1002)
    mismatches = 0
    for _ in range(50):
        n = int(rng.integers(2, 129))
        d = DistanceMatrix(rng.random(n * (n - 1) // 2))
        if not np.array_equal(np.sort(cluster(d, "single").heights), kruskal_weights(d.square())):
            mismatches += 1
    _check("2 single link = MST", mismatches == 0, f"50 matrices, {mismatches} inexact")


def test_criterion_3_monotone_heights_and_worked_examples():
    rng = np.random.default_rng(1003)
    bad = 0
    for _ in range(100):
        n = int(rng.integers(2, 129))
        d = DistanceMatrix(rng.random(n * (n - 1) // 2))
        for method in ("complete", "ward"):
            bad += bool(np.any(np.diff(cluster(d, method).heights) < 0))
    three = DistanceMatrix([1.0, 4.0, 2.0], ["A", "B", "C"])
    expected = {"single": 2.0, "complete": 4.0, "ward": 11 / 3}
    examples = all(cluster(three, m).merges.tolist() == [[0, 1, 1.0, 2], [3, 2, top, 3]]
                   for m, top in expected.items())
    _check("3 monotone heights + worked examples", bad == 0 and examples,
           f"{bad} non-monotone of 200 trees; 3-object examples {'exact' if examples else 'WRONG'}")


def test_criterion_4_distance_transform():
    rng = np.random.default_rng(1004)
    bad = 0
    for _ in range(1000):
        n = int(rng.integers(2, 65))
        s = rng.random(n * (n - 1) // 2)
        d = to_distance(SimilarityMatrix(s)).d
        order = np.argsort(s, kind="stable")
        ss, dd = s[order], d[order]
        up = np.diff(ss) > 0
        reversing = np.all(np.diff(dd)[up] < 0) and np.all(np.diff(dd)[~up] == 0)
        bad += not (d.min() == 0.0 and reversing)
    _check("4 distance transform", bad == 0, f"1000 matrices, {bad} violations (min 0, order reversal)")


def test_criterion_5_subject_recovery():
    sim, meta = generate(SynthConfig(seed=7))
    r = purity(cut_k(cluster(to_distance(sim), "ward"), 40), meta, "subject")
    _check("5 subject recovery", r.overall_purity >= 0.99 and r.homogeneous_clusters >= 38,
           f"purity {r.overall_purity:.4f} (>= 0.99), homogeneous {r.homogeneous_clusters}/40 (>= 38)")


def test_criterion_6_group_separation():
    groups = {"male/white": 0.25, "female/white": 0.25, "male/asian": 0.25, "female/asian": 0.25}
    values = []
    for seed in range(10):
        cfg = SynthConfig(n_subjects=40, group_fractions=groups, same_group_bonus=0.15, seed=seed)
        sim, meta = generate(cfg)
        counts = meta.counts("ethnicity")
        assert counts["white"] == counts["asian"]  # 20 subjects per group, equal image counts
        values.append(purity(cut_k(cluster(to_distance(sim), "ward"), 2), meta, "ethnicity").overall_purity)
    mean = float(np.mean(values))
    _check("6 group separation", mean >= 0.95, f"mean k=2 ethnicity purity {mean:.4f} over 10 seeds (>= 0.95)")


def test_criterion_7_illumination_vs_expression():
    sim, meta = generate(SynthConfig(illumination_offset=0.1, expression_offset=0.0, seed=7))
    mean = {}
    for by in ("illumination", "expression"):
        reports, _ = per_subject_structure(sim, meta, "ward", by)
        mean[by] = float(np.mean([r.overall_purity for _, r in reports]))
    gap = mean["illumination"] - mean["expression"]
    _check("7 illumination vs expression", gap >= 0.2,
           f"illumination {mean['illumination']:.3f} - expression {mean['expression']:.3f} = {gap:.3f} (>= 0.2)")


@pytest.mark.slow
def test_criterion_8_performance():
    sim, _ = generate(SynthConfig(n_subjects=1000, images_per_subject=10, seed=8))
    dist = to_distance(sim)
    del sim
    n = dist.n
    assert n == 10_000
    cluster(DistanceMatrix(np.random.default_rng(0).random(45)), "ward")  # compile outside the timing
    tracemalloc.start()
    start = time.perf_counter()
    tree = cluster(dist, "ward")
    elapsed = time.perf_counter() - start
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    budget = dist.d.nbytes + 64 * n
    assert tree.n_leaves == n
    _check("8 performance", elapsed < 120 and peak <= budget,
           f"ward n={n}: {elapsed:.1f}s (< 120s), peak {peak / 1e6:.1f} MB "
           f"(budget {budget / 1e6:.1f} MB = condensed + 64n)")


def test_criterion_9_cli_determinism(tmp_path):
    d = tmp_path
    steps = [
        ["synth", "--seed", "9", "--set", "n_subjects=20", "--out", str(d / "data.bin")],
        ["cluster", "--input", str(d / "data.bin"), "--method", "ward", "--out", str(d / "merges.tsv"),
         "--newick", str(d / "tree.nwk")],
        ["cut", "--input", str(d / "merges.tsv"), "--k", "20", "--out", str(d / "part.tsv")],
        ["eval", "--input", str(d / "part.tsv"), "--metadata", str(d / "data.bin.meta.csv"),
         "--by", "subject", "--breakdown", "illumination,expression", "--out", str(d / "report.jsonl")],
        ["eval", "--per-subject", "--input", str(d / "data.bin"), "--metadata", str(d / "data.bin.meta.csv"),
         "--by", "illumination", "--jobs", "2", "--out", str(d / "subjects.jsonl")],
    ]
    for argv in steps:
        assert main(argv) == 0
    outputs = ["data.bin", "data.bin.meta.csv", "merges.tsv", "tree.nwk", "part.tsv", "report.jsonl",
               "subjects.jsonl"]
    manifests = [d / name for name in ("data.bin", "merges.tsv", "part.tsv", "report.jsonl", "subjects.jsonl")]
    manifests = [p.with_name(p.name + ".manifest.json") for p in manifests]
    first = {name: (d / name).read_bytes() for name in outputs}
    first_manifests = [m.read_bytes() for m in manifests]
    for name in outputs:
        (d / name).unlink()
    for m in manifests:
        assert main(["run", "--manifest", str(m)]) == 0
    same = [name for name in outputs if (d / name).read_bytes() == first[name]]
    manifests_same = [m.read_bytes() for m in manifests] == first_manifests
    assert json.loads(first_manifests[0])["seed"] == 9
    _check("9 CLI determinism", len(same) == len(outputs) and manifests_same,
           f"{len(same)}/{len(outputs)} outputs byte-identical after manifest replay")
