"""Scoring flat clusterings against per-image metadata labels."""
from __future__ import annotations

import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence, Union

from .dendro import Partition, cut_k
from .linkage import cluster
from .score_space import (LABEL_FIELDS, DistanceMatrix, MetadataTable, ScoreSpaceError,
                          SimilarityMatrix, subset, to_distance)


def _check_field(by: str) -> None:
    if by not in LABEL_FIELDS:
        raise ValueError(f"unknown label field {by!r}; choose from {', '.join(LABEL_FIELDS)}")


def _cluster_labels(p: Partition, meta: MetadataTable, by: str) -> list[list[str]]:
    _check_field(by)
    if len(p) == 0:
        raise ScoreSpaceError("empty partition")
    return [meta.labels(members, by) for members in p.clusters()]


def _majority(hist: Counter) -> tuple[str, int, bool]:
    top = max(hist.values())
    winners = sorted(v for v, c in hist.items() if c == top)
    return winners[0], top, len(winners) > 1


@dataclass
class ClusterStats:
    label: int
    size: int
    majority: str
    majority_fraction: float
    histogram: dict
    tied: bool = False

    @property
    def homogeneous(self) -> bool:
        return len(self.histogram) == 1


@dataclass
class PurityReport:
    """Majority-label purity of a partition with respect to one label field.

    ``overall_purity`` is image weighted: the number of images carrying their
    cluster's majority label divided by all images. A cluster is homogeneous
    when every member shares one label value.
    """

    by: str
    k: int
    n_images: int
    overall_purity: float
    homogeneous_clusters: int
    per_cluster: list = field(default_factory=list)
    misassigned_images: list = field(default_factory=list)

    @property
    def error_clusters(self) -> list[int]:
        """Labels of clusters holding more than one label value."""
        return [c.label for c in self.per_cluster if not c.homogeneous]

    def to_records(self) -> list[dict]:
        head = {"record": "summary", "by": self.by, "k": self.k, "n_images": self.n_images,
                "overall_purity": self.overall_purity,
                "homogeneous_clusters": self.homogeneous_clusters,
                "misassigned": len(self.misassigned_images)}
        rows = [dict(record="cluster", **asdict(c)) for c in self.per_cluster]
        return [head] + rows

    def format_table(self, max_rows: int | None = 50) -> str:
        lines = [f"purity by {self.by}: {self.overall_purity:.4f} "
                 f"({self.n_images - len(self.misassigned_images)}/{self.n_images} images), "
                 f"{self.homogeneous_clusters}/{self.k} clusters homogeneous",
                 f"{'cluster':>7} {'size':>6} {'majority':<20} {'frac':>6}  histogram"]
        shown = self.per_cluster if max_rows is None else self.per_cluster[:max_rows]
        for c in shown:
            hist = ", ".join(f"{k}:{v}" for k, v in c.histogram.items())
            flag = "*" if c.tied else " "
            lines.append(f"{c.label:>7} {c.size:>6} {c.majority:<20} {c.majority_fraction:>6.3f}{flag} {hist}")
        if len(shown) < len(self.per_cluster):
            lines.append(f"... {len(self.per_cluster) - len(shown)} more clusters")
        return "\n".join(lines)


def purity(p: Partition, meta: MetadataTable, by: str = "subject") -> PurityReport:
    """Purity of ``p`` against the ``by`` label field.

    Majority ties go to the lexicographically smallest label value and are
    flagged on the cluster record.
    """
    labels = _cluster_labels(p, meta, by)
    per_cluster, misassigned = [], []
    hits = homogeneous = 0
    for c, (members, values) in enumerate(zip(p.clusters(), labels)):
        hist = Counter(values)
        major, count, tied = _majority(hist)
        hits += count
        homogeneous += len(hist) == 1
        misassigned += [x for x, v in zip(members, values) if v != major]
        per_cluster.append(ClusterStats(c, len(members), major, count / len(members),
                                        dict(sorted(hist.items())), tied))
    return PurityReport(by, p.k, len(p), hits / len(p), homogeneous, per_cluster, misassigned)


def composition(p: Partition, meta: MetadataTable, by: str) -> list[dict]:
    """Label histogram of each cluster, in cluster-label order."""
    return [dict(sorted(Counter(values).items())) for values in _cluster_labels(p, meta, by)]


@dataclass
class ErrorBreakdown:
    primary: str
    n_errors: int
    counts: dict
    totals: dict
    scope: str = "misassigned"

    def to_records(self) -> list[dict]:
        out = [{"record": "errors", "primary": self.primary, "scope": self.scope,
                "n_errors": self.n_errors}]
        for f in self.counts:
            out.append({"record": "breakdown", "field": f, "errors": self.counts[f],
                        "all_images": self.totals[f]})
        return out

    def format_table(self) -> str:
        what = ("images not matching their cluster's majority" if self.scope == "misassigned"
                else "images in clusters that mix")
        lines = [f"{self.n_errors} {what} {self.primary}"]
        for f in self.counts:
            total = sum(self.totals[f].values())
            parts = []
            for v, all_count in self.totals[f].items():
                e = self.counts[f].get(v, 0)
                share_err = e / self.n_errors if self.n_errors else 0.0
                parts.append(f"{v}={e} ({share_err:.1%} of errors, {all_count / total:.1%} overall)")
            lines.append(f"  {f}: " + "; ".join(parts))
        return "\n".join(lines)


def error_breakdown(p: Partition, meta: MetadataTable, primary: str,
                    secondary: Sequence[str], scope: str = "misassigned") -> ErrorBreakdown:
    """Cross-tabulate misclustered images by other label fields.

    ``scope="misassigned"`` takes images not matching their cluster's
    majority ``primary`` label; ``scope="error_clusters"`` takes every image
    in a cluster that mixes ``primary`` values. Whole-partition counts of
    each secondary field are returned alongside for ratio comparison.
    """
    report = purity(p, meta, primary)
    for f in secondary:
        _check_field(f)
    if scope == "misassigned":
        errors = report.misassigned_images
    elif scope == "error_clusters":
        bad = set(report.error_clusters)
        errors = [x for x, c in zip(p.image_ids, p.labels.tolist()) if c in bad]
    else:
        raise ValueError(f"scope must be 'misassigned' or 'error_clusters', not {scope!r}")
    counts = {f: dict(sorted(Counter(meta.labels(errors, f)).items())) for f in secondary}
    totals = {f: dict(sorted(Counter(meta.labels(p.image_ids, f)).items())) for f in secondary}
    return ErrorBreakdown(primary, len(errors), counts, totals, scope)


def per_subject_structure(matrix: Union[SimilarityMatrix, DistanceMatrix], meta: MetadataTable,
                          method="ward", by: str = "illumination", jobs: int = 1,
                          ward_variant: str = "D") -> tuple[list[tuple[str, PurityReport]], list[str]]:
    """Cluster each subject's own images and score the 2-cluster cut.

    Returns ``(reports, skipped)``: one ``(subject_id, PurityReport)`` per
    subject with at least two images, in sorted subject order, and the
    subjects that had fewer. Similarity input is subset first and then
    turned into distances, so each subject uses its own maximum score.
    """
    _check_field(by)
    by_subject: dict[str, list[str]] = {}
    for x in matrix.image_ids:
        by_subject.setdefault(meta[x].subject_id, []).append(x)
    subjects = sorted(by_subject)
    todo = [s for s in subjects if len(by_subject[s]) >= 2]
    skipped = [s for s in subjects if len(by_subject[s]) < 2]
    if not todo:
        raise ScoreSpaceError("no subject has at least 2 images")

    def one(s: str) -> tuple[str, PurityReport]:
        sub = subset(matrix, by_subject[s])
        dist = to_distance(sub) if isinstance(sub, SimilarityMatrix) else sub
        tree = cluster(dist, method, ward_variant=ward_variant, consume=True)
        return s, purity(cut_k(tree, 2), meta, by)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(one, todo))
    else:
        reports = [one(s) for s in todo]
    return reports, skipped


def write_records(records: Iterable[dict], path) -> None:
    """One JSON object per line, keys in a fixed order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
