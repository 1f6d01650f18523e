import json

import numpy as np
import pytest

from scoreclust.dendro import Partition, cut_k
from scoreclust.evaluate import (composition, error_breakdown, per_subject_structure, purity,
                                 write_records)
from scoreclust.linkage import cluster
from scoreclust.score_space import (DistanceMatrix, ImageMeta, MetadataTable, ScoreSpaceError,
                                    to_distance)
from scoreclust.synth import SynthConfig, generate


def meta_of(rows):
    """rows: (image_id, subject, gender, illumination)"""
    return MetadataTable([ImageMeta(i, s, g, "white", "neutral", il, False) for i, s, g, il in rows])


@pytest.fixture
def five():
    meta = meta_of([("i1", "a", "male", "controlled"), ("i2", "a", "male", "controlled"),
                    ("i3", "b", "female", "uncontrolled"), ("i4", "b", "female", "controlled"),
                    ("i5", "b", "male", "uncontrolled")])
    p = Partition.from_labels(["i1", "i2", "i3", "i4", "i5"], [0, 0, 0, 1, 1])
    return p, meta


def test_purity_example(five):
    p, meta = five
    r = purity(p, meta, "subject")
    assert r.overall_purity == pytest.approx(0.8)
    assert r.homogeneous_clusters == 1
    assert r.misassigned_images == ["i3"]
    assert r.error_clusters == [0]
    assert r.per_cluster[0].histogram == {"a": 2, "b": 1}
    assert r.per_cluster[0].majority_fraction == pytest.approx(2 / 3)


def test_singletons_are_pure(five):
    p, meta = five
    r = purity(Partition.from_labels(p.image_ids, range(5)), meta, "gender")
    assert r.overall_purity == 1.0 and r.homogeneous_clusters == 5 and not r.misassigned_images


def test_majority_tie_goes_to_smallest_value_and_is_flagged():
    meta = meta_of([("x", "s2", "male", "controlled"), ("y", "s1", "male", "controlled")])
    r = purity(Partition.from_labels(["x", "y"], [0, 0]), meta, "subject")
    assert r.per_cluster[0].majority == "s1" and r.per_cluster[0].tied
    assert r.misassigned_images == ["x"]


def test_purity_errors(five):
    p, meta = five
    with pytest.raises(ValueError, match="unknown label field"):
        purity(p, meta, "height")
    with pytest.raises(ScoreSpaceError, match="no metadata"):
        purity(Partition.from_labels(["i1", "zz"], [0, 1]), meta)
    with pytest.raises(ScoreSpaceError, match="empty"):
        purity(Partition((), np.array([], dtype=int)), meta)


def test_purity_invariant_under_relabel_and_reorder(five):
    p, meta = five
    base = purity(p, meta, "gender").overall_purity
    order = [4, 2, 0, 3, 1]
    q = Partition.from_labels([p.image_ids[i] for i in order], [7 - p.labels[i] for i in order])
    assert purity(q, meta, "gender").overall_purity == base


def test_purity_nondecreasing_under_refinement():
    sim, meta = generate(SynthConfig(n_subjects=10, images_per_subject=6, score_sd=0.2, seed=2))
    tree = cluster(to_distance(sim), "ward")
    values = [purity(cut_k(tree, k), meta, "subject").overall_purity for k in range(1, tree.n_leaves + 1)]
    assert all(a <= b for a, b in zip(values, values[1:]))
    assert values[-1] == 1.0


def test_synthetic_forty_subjects_are_recovered():
    sim, meta = generate(SynthConfig())
    r = purity(cut_k(cluster(to_distance(sim), "ward"), 40), meta, "subject")
    assert r.overall_purity >= 0.99


@pytest.mark.parametrize("method", ["single", "complete", "ward"])
def test_zero_within_subject_distances_give_perfect_purity(method):
    rng = np.random.default_rng(4)
    subjects = np.repeat(np.arange(7), [1, 3, 2, 5, 4, 1, 2])
    rng.shuffle(subjects)
    ids = [f"im{i}" for i in range(subjects.size)]
    square = np.where(subjects[:, None] == subjects[None, :], 0.0,
                      rng.random((subjects.size,) * 2) + 0.1)
    square = np.triu(square, 1) + np.triu(square, 1).T
    meta = meta_of([(x, f"s{s}", "male", "controlled") for x, s in zip(ids, subjects)])
    tree = cluster(DistanceMatrix.from_square(square, ids), method)
    r = purity(cut_k(tree, 7), meta, "subject")
    assert r.overall_purity == 1.0 and r.homogeneous_clusters == 7


def test_composition_examples():
    meta = meta_of([("a", "1", "male", "controlled"), ("b", "2", "male", "controlled"),
                    ("c", "3", "male", "controlled"), ("d", "4", "female", "controlled")])
    assert composition(Partition.from_labels("abcd", [0] * 4), meta, "gender") == [{"female": 1, "male": 3}]
    assert composition(Partition.from_labels("abcd", [0, 0, 0, 1]), meta, "gender") == \
        [{"male": 3}, {"female": 1}]


def test_two_group_composition_at_k2():
    cfg = SynthConfig(n_subjects=40, images_per_subject=4, same_group_bonus=0.15, seed=5,
                      group_fractions={"male/white": 0.5, "male/asian": 0.5})
    sim, meta = generate(cfg)
    hists = composition(cut_k(cluster(to_distance(sim), "ward"), 2), meta, "ethnicity")
    for h in hists:
        assert max(h.values()) / sum(h.values()) >= 0.95


def test_error_breakdown_examples(five):
    p, meta = five
    pure = Partition.from_labels(p.image_ids, ["a", "a", "b", "b", "b"])
    bd = error_breakdown(pure, meta, "subject", ["illumination"])
    assert bd.n_errors == 0 and bd.counts == {"illumination": {}}
    assert bd.totals == {"illumination": {"controlled": 3, "uncontrolled": 2}}

    # i3 (uncontrolled) sits with subject a, i2 (controlled) with subject b
    mixed = Partition.from_labels(p.image_ids, [0, 1, 0, 1, 1])
    bd = error_breakdown(mixed, meta, "subject", ["illumination"])
    assert bd.n_errors == 2
    assert bd.counts["illumination"] == {"controlled": 1, "uncontrolled": 1}


def test_error_breakdown_scopes(five):
    p, meta = five
    bd = error_breakdown(p, meta, "subject", ["gender", "illumination"], scope="error_clusters")
    assert bd.n_errors == 3
    assert bd.counts["gender"] == {"female": 1, "male": 2}
    with pytest.raises(ValueError, match="scope"):
        error_breakdown(p, meta, "subject", ["gender"], scope="everything")


def test_error_breakdown_totals_match_misassigned():
    cfg = SynthConfig(n_subjects=30, images_per_subject=8, noisy_image_fraction=0.05, seed=9)
    sim, meta = generate(cfg)
    p = cut_k(cluster(to_distance(sim), "ward"), 30)
    report = purity(p, meta, "subject")
    bd = error_breakdown(p, meta, "subject", ["illumination", "expression", "gender"])
    assert bd.n_errors == len(report.misassigned_images) > 0
    for f, counts in bd.counts.items():
        assert sum(counts.values()) == bd.n_errors
        assert sum(bd.totals[f].values()) == len(p)


def _per_subject_meta(rows):
    return MetadataTable([ImageMeta(i, s, "male", "white", e, il, False) for i, s, il, e in rows])


def test_per_subject_two_images_split_apart():
    meta = _per_subject_meta([("a1", "a", "controlled", "neutral"), ("a2", "a", "uncontrolled", "neutral")])
    reports, skipped = per_subject_structure(DistanceMatrix([0.3], ["a1", "a2"]), meta)
    assert skipped == [] and len(reports) == 1
    subject, r = reports[0]
    assert subject == "a" and r.overall_purity == 1.0 and r.k == 2


def test_per_subject_identical_distances_split_deterministically():
    # equal distances: the smallest pair merges first, so k=2 gives {x1,x2},{x3}
    meta = _per_subject_meta([("x1", "s", "controlled", "neutral"), ("x2", "s", "uncontrolled", "neutral"),
                              ("x3", "s", "controlled", "neutral"), ("y1", "t", "controlled", "neutral")])
    d = DistanceMatrix.from_square(np.ones((4, 4)) - np.eye(4), ["x1", "x2", "x3", "y1"])
    for method in ("single", "complete", "ward"):
        reports, skipped = per_subject_structure(d, meta, method, "illumination")
        assert skipped == ["t"]
        (subject, r), = reports
        assert [c.histogram for c in r.per_cluster] == [{"controlled": 1, "uncontrolled": 1},
                                                         {"controlled": 1}]
        assert r.per_cluster[0].tied
        assert r.overall_purity == pytest.approx(2 / 3)


def test_per_subject_requires_some_subject():
    meta = _per_subject_meta([("a", "s1", "controlled", "neutral"), ("b", "s2", "controlled", "neutral")])
    with pytest.raises(ScoreSpaceError, match="at least 2 images"):
        per_subject_structure(DistanceMatrix([1.0], ["a", "b"]), meta)


def test_per_subject_illumination_beats_expression():
    cfg = SynthConfig(n_subjects=20, images_per_subject=12, illumination_offset=0.1, seed=11)
    sim, meta = generate(cfg)
    mean = {}
    for by in ("illumination", "expression"):
        reports, _ = per_subject_structure(sim, meta, "ward", by)
        mean[by] = np.mean([r.overall_purity for _, r in reports])
    assert mean["illumination"] > mean["expression"]


def test_per_subject_parallel_matches_sequential():
    sim, meta = generate(SynthConfig(n_subjects=12, images_per_subject=(3, 9), seed=4))
    seq, s1 = per_subject_structure(sim, meta, "complete", "expression")
    par, s2 = per_subject_structure(sim, meta, "complete", "expression", jobs=4)
    assert [s for s, _ in seq] == sorted(s for s, _ in seq)
    assert s1 == s2
    assert [(s, r.to_records()) for s, r in seq] == [(s, r.to_records()) for s, r in par]


def test_records_are_json_lines(tmp_path, five):
    p, meta = five
    path = tmp_path / "r.jsonl"
    write_records(purity(p, meta).to_records(), path)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert rows[0]["record"] == "summary" and rows[0]["overall_purity"] == pytest.approx(0.8)
    assert [r["record"] for r in rows[1:]] == ["cluster", "cluster"]
