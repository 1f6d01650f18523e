"""Agglomerative clustering of a condensed distance matrix.

Three linkages are supported:

``single``
    cluster distance is the smallest cross pair; computed from a minimum
    spanning tree (Prim, O(n^2) time, O(n) extra memory).
``complete``
    cluster distance is the largest cross pair.
``ward``
    minimum-variance merge cost through the Lance-Williams recurrence
    ``d(IJ,K) = ((n_I+n_K) d(I,K) + (n_J+n_K) d(J,K) - n_K d(I,J)) / (n_I+n_J+n_K)``
    applied to the supplied dissimilarities as they are (``ward_variant="D"``)
    or to their squares with square-rooted heights (``ward_variant="D2"``,
    the convention of ``scipy.cluster.hierarchy.linkage``).

Complete and Ward keep, for every cluster, its nearest partner among the
higher-numbered clusters and pop the globally closest pair from a heap
(Müllner's generic algorithm). That is O(n^2) time in typical use, works in
place on the condensed vector, and breaks ties exactly like
:func:`cluster_naive`: the smallest cluster, then the smallest partner,
clusters being numbered by their smallest leaf.
:func:`cluster_naive` recomputes every cluster distance from scratch at each
step and serves as the reference for the fast path.
"""
from __future__ import annotations

import enum
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .score_space import DistanceMatrix, ScoreSpaceError


class LinkageMethod(str, enum.Enum):
    single = "single"
    complete = "complete"
    ward = "ward"


def _method(method) -> LinkageMethod:
    try:
        return LinkageMethod(method)
    except ValueError:
        raise ValueError(f"unknown linkage method {method!r}; choose single, complete or ward") from None


class Dendrogram:
    """Binary merge tree over ``n_leaves`` objects.

    ``merges`` is an (n-1, 4) float array of rows ``(left, right, height,
    size)`` in nondecreasing height order. Leaves are nodes ``0..n-1`` and
    the node created by row ``t`` is ``n + t``. This is the linkage-matrix
    layout used by scipy, so ``merges`` can be handed to
    ``scipy.cluster.hierarchy`` directly.
    """

    def __init__(self, merges, leaf_ids: Sequence[str] | None = None, method: str | None = None,
                 validate: bool = True):
        merges = np.asarray(merges, dtype=np.float64).reshape(-1, 4)
        n = merges.shape[0] + 1
        if leaf_ids is None:
            leaf_ids = [str(i) for i in range(n)]
        if len(leaf_ids) != n:
            raise ValueError(f"{len(leaf_ids)} leaf ids for {n - 1} merges")
        self.merges = merges
        self.leaf_ids = tuple(leaf_ids)
        self.n_leaves = n
        self.method = method
        if validate:
            self._validate()
        merges.flags.writeable = False

    def _validate(self):
        n, Z = self.n_leaves, self.merges
        if n < 2:
            raise ValueError("a dendrogram needs at least 2 leaves")
        kids = Z[:, :2]
        if np.any(kids != np.round(kids)) or np.any(kids < 0):
            raise ValueError("child references must be non-negative integers")
        kids = kids.astype(np.int64)
        created = n + np.arange(n - 1)
        if np.any(kids >= created[:, None]):
            bad = int(np.argwhere(kids >= created[:, None])[0, 0])
            raise ValueError(f"merge {bad} references a node that does not exist yet")
        counts = np.bincount(kids.ravel(), minlength=2 * n - 1)
        if np.any(counts[:-1] != 1) or counts[-1] != 0:
            raise ValueError("every node except the root must be merged exactly once")
        h = Z[:, 2]
        if not np.all(np.isfinite(h)) or np.any(h < 0):
            raise ValueError("merge heights must be finite and >= 0")
        if np.any(np.diff(h) < 0):
            raise ValueError("merges must be sorted by nondecreasing height")
        sizes = np.ones(2 * n - 1)
        for t in range(n - 1):
            sizes[n + t] = sizes[kids[t, 0]] + sizes[kids[t, 1]]
        if not np.array_equal(sizes[n:], Z[:, 3]):
            raise ValueError("merge sizes must equal the sum of child sizes")

    @property
    def left(self) -> np.ndarray:
        return self.merges[:, 0].astype(np.int64)

    @property
    def right(self) -> np.ndarray:
        return self.merges[:, 1].astype(np.int64)

    @property
    def heights(self) -> np.ndarray:
        return self.merges[:, 2]

    @property
    def sizes(self) -> np.ndarray:
        return self.merges[:, 3].astype(np.int64)

    def __repr__(self):
        return f"Dendrogram(n_leaves={self.n_leaves}, method={self.method!r})"

    def __eq__(self, other):
        if not isinstance(other, Dendrogram):
            return NotImplemented
        return (self.leaf_ids == other.leaf_ids
                and np.array_equal(self.merges, other.merges))


def _finalize(Z: np.ndarray, n: int) -> None:
    """Stable-sort (leaf, leaf, height) rows by height and relabel in place."""
    order = np.argsort(Z[:, 2], kind="stable")
    for c in range(3):
        Z[:, c] = Z[order, c]
    del order
    work = np.empty((3, n), dtype=np.int32 if n < 2**31 - 1 else np.int64)
    _kernels.relabel(Z, n, work[0], work[1], work[2])


def cluster(dist: DistanceMatrix, method="ward", *, ward_variant: str = "D",
            consume: bool = False) -> Dendrogram:
    """Build the dendrogram of ``dist`` under ``method``.

    With ``consume=True`` complete and Ward linkage use the matrix's own
    buffer as scratch space instead of copying it, and ``dist`` cannot be
    used afterwards. Working memory beyond that buffer is O(n).
    """
    method = _method(method)
    if ward_variant not in ("D", "D2"):
        raise ValueError(f"ward_variant must be 'D' or 'D2', not {ward_variant!r}")
    n = dist.n
    if n < 2:
        raise ScoreSpaceError("clustering needs at least 2 objects")
    Z = np.zeros((n - 1, 4))
    if method is LinkageMethod.single:
        d = dist.values
        best = np.empty(n)
        nearest = np.zeros(n, dtype=np.int32)
        done = np.empty(n, dtype=np.bool_)
        _kernels.prim_mst(d, n, Z, best, nearest, done)
        del best, nearest, done
    else:
        d = dist._take_buffer() if consume else dist.values.copy()
        squared = method is LinkageMethod.ward and ward_variant == "D2"
        if squared:
            np.square(d, out=d)
        code = _kernels.COMPLETE if method is LinkageMethod.complete else _kernels.WARD
        mindist = np.empty(n)
        work = np.empty((4, n), dtype=np.int32 if n < 2**31 - 1 else np.int64)
        _kernels.generic_linkage(d, n, code, Z, work[0], mindist, work[1], work[2], work[3])
        del d, mindist, work
        if squared:
            np.sqrt(Z[:, 2], out=Z[:, 2])
    _finalize(Z, n)
    return Dendrogram(Z, dist.image_ids, method.value, validate=False)


# -- reference implementation -------------------------------------------------

def _cluster_distances(D: np.ndarray, labels: np.ndarray, reps: np.ndarray,
                       method: LinkageMethod) -> np.ndarray:
    """All cluster-to-cluster distances from the full pairwise matrix."""
    c = reps.size
    member = labels[None, :] == reps[:, None]
    if method is LinkageMethod.ward:
        sizes = member.sum(axis=1).astype(np.float64)
        M = member.astype(np.float64)
        S = M @ D @ M.T
        within = np.diag(S) / sizes**2
        cross = S / np.outer(sizes, sizes)
        weight = np.outer(sizes, sizes) / (sizes[:, None] + sizes[None, :])
        return weight * (2 * cross - within[:, None] - within[None, :])
    order = np.argsort(labels, kind="stable")
    starts = np.searchsorted(labels[order], reps)
    grouped = D[np.ix_(order, order)]
    reduce = np.minimum if method is LinkageMethod.single else np.maximum
    out = reduce.reduceat(reduce.reduceat(grouped, starts, axis=0), starts, axis=1)
    assert out.shape == (c, c)
    return out


def cluster_naive(dist: DistanceMatrix, method="ward", *, ward_variant: str = "D") -> Dendrogram:
    """Greedy closest-pair agglomeration, O(n^3) or worse; for testing.

    Each step recomputes every cluster distance from the original pairwise
    matrix: single/complete as min/max over cross pairs, Ward as the
    closed form of its Lance-Williams recurrence,
    ``|A||B|/(|A|+|B|) * (2 mean_cross(A,B) - mean_within(A) - mean_within(B))``
    where the within means run over all ordered pairs including self-pairs.
    Ties go to the lexicographically smallest pair of clusters, clusters
    being ordered by their smallest leaf.
    """
    method = _method(method)
    if ward_variant not in ("D", "D2"):
        raise ValueError(f"ward_variant must be 'D' or 'D2', not {ward_variant!r}")
    n = dist.n
    if n < 2:
        raise ScoreSpaceError("clustering needs at least 2 objects")
    D = dist.square()
    squared = method is LinkageMethod.ward and ward_variant == "D2"
    if squared:
        D = D**2
    labels = np.arange(n)
    built = np.zeros(n)  # height at which each cluster (keyed by smallest leaf) formed
    Z = np.zeros((n - 1, 4))
    for step in range(n - 1):
        reps = np.unique(labels)
        C = _cluster_distances(D, labels, reps, method)
        C[np.tril_indices(reps.size)] = np.inf
        a, b = np.unravel_index(np.argmin(C), C.shape)
        ra, rb = reps[a], reps[b]
        h = max(float(C[a, b]), built[ra], built[rb])
        Z[step, :3] = ra, rb, h
        built[ra] = h
        labels[labels == rb] = ra
    if squared:
        Z[:, 2] = np.sqrt(Z[:, 2])
    _finalize(Z, n)
    return Dendrogram(Z, dist.image_ids, method.value)


# -- merge table I/O ----------------------------------------------------------

MERGE_TABLE_HEADER = ("step", "left", "right", "height", "size")


def format_height(h: float) -> str:
    return repr(float(h))


def write_merge_table(tree: Dendrogram, path) -> None:
    """Tab-separated merge table, leaf ids carried in ``#leaf`` comment lines."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if tree.method:
            fh.write(f"#method\t{tree.method}\n")
        for i, x in enumerate(tree.leaf_ids):
            if any(c in x for c in "\t\r\n"):
                raise ValueError(f"image id {x!r} contains a tab or newline")
            fh.write(f"#leaf\t{i}\t{x}\n")
        fh.write("\t".join(MERGE_TABLE_HEADER) + "\n")
        for t, (a, b, h, s) in enumerate(tree.merges):
            fh.write(f"{t}\t{int(a)}\t{int(b)}\t{format_height(h)}\t{int(s)}\n")


def read_merge_table(path) -> Dendrogram:
    leaves: dict[int, str] = {}
    rows = []
    method = None
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if parts[0] == "#leaf":
                leaves[int(parts[1])] = parts[2]
            elif parts[0] == "#method":
                method = parts[1]
            elif parts[0].startswith("#") or parts[0] == "step":
                continue
            else:
                try:
                    t, a, b, s = int(parts[0]), int(parts[1]), int(parts[2]), int(parts[4])
                    h = float(parts[3])
                except (ValueError, IndexError):
                    raise ScoreSpaceError(f"{path}:{lineno}: malformed merge row {line!r}") from None
                if t != len(rows):
                    raise ScoreSpaceError(f"{path}:{lineno}: expected step {len(rows)}, got {t}")
                rows.append((a, b, h, s))
    if not rows:
        raise ScoreSpaceError(f"{path}: no merge rows")
    n = len(rows) + 1
    ids = [leaves.get(i, str(i)) for i in range(n)] if leaves else None
    if leaves and len(leaves) != n:
        raise ScoreSpaceError(f"{path}: {len(leaves)} leaf ids for {n} leaves")
    try:
        return Dendrogram(np.array(rows, dtype=np.float64), ids, method)
    except ValueError as exc:
        raise ScoreSpaceError(f"{path}: {exc}") from None


def is_monotone(tree: Dendrogram) -> bool:
    return bool(np.all(np.diff(tree.heights) >= 0))

