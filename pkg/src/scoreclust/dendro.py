"""Cuts, exports and structural queries over a :class:`Dendrogram`."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .linkage import Dendrogram
from .score_space import LABEL_FIELDS, MetadataTable, ScoreSpaceError, condensed_index


@dataclass(frozen=True, eq=False)
class Partition:
    """Flat clustering: ``labels[i]`` is the cluster of ``image_ids[i]``.

    Labels run from 0 to k-1 and are numbered in order of first appearance
    along ``image_ids``.
    """

    image_ids: tuple
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (len(self.image_ids),):
            raise ValueError("one label per image is required")
        if labels.size and not np.array_equal(np.unique(labels), np.arange(labels.max() + 1)):
            raise ValueError("cluster labels must be contiguous from 0")
        labels.flags.writeable = False
        object.__setattr__(self, "image_ids", tuple(self.image_ids))
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_labels(cls, image_ids, labels) -> "Partition":
        """Build from arbitrary hashable labels, renumbering by first appearance."""
        seen: dict = {}
        return cls(tuple(image_ids), np.array([seen.setdefault(x, len(seen)) for x in labels],
                                              dtype=np.int64))

    @property
    def k(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @cached_property
    def assignment(self) -> dict:
        return dict(zip(self.image_ids, self.labels.tolist()))

    def clusters(self) -> list[list[str]]:
        out: list[list[str]] = [[] for _ in range(self.k)]
        for x, c in zip(self.image_ids, self.labels.tolist()):
            out[c].append(x)
        return out

    def __len__(self):
        return len(self.image_ids)

    def same_as(self, other: "Partition") -> bool:
        """Equal as set partitions (cluster labels may differ)."""
        if set(self.image_ids) != set(other.image_ids):
            return False
        mine = {frozenset(c) for c in self.clusters()}
        return mine == {frozenset(c) for c in other.clusters()}

    def refines(self, other: "Partition") -> bool:
        """True if every cluster of self lies inside one cluster of other."""
        theirs = other.assignment
        for members in self.clusters():
            if len({theirs[x] for x in members}) > 1:
                return False
        return True


def _parents(tree: Dendrogram) -> np.ndarray:
    n = tree.n_leaves
    parent = np.full(2 * n - 1, -1, dtype=np.int64)
    created = n + np.arange(n - 1)
    parent[tree.left] = created
    parent[tree.right] = created
    return parent


def _cut(tree: Dendrogram, applied: int) -> Partition:
    """Partition after applying the first ``applied`` merges."""
    n = tree.n_leaves
    parent = _parents(tree)
    root_of = np.arange(2 * n - 1)
    for node in range(2 * n - 2, -1, -1):
        p = parent[node]
        if p >= 0 and p - n < applied:
            root_of[node] = root_of[p]
    return Partition.from_labels(tree.leaf_ids, root_of[:n].tolist())


def cut_k(tree: Dendrogram, k: int) -> Partition:
    """Exactly ``k`` clusters, obtained by undoing the last k-1 merges."""
    if not 1 <= k <= tree.n_leaves:
        raise ValueError(f"k must be between 1 and {tree.n_leaves}, got {k}")
    return _cut(tree, tree.n_leaves - k)


def cut_height(tree: Dendrogram, h: float) -> Partition:
    """Connected components after every merge with height <= h."""
    h = float(h)
    if not np.isfinite(h):
        raise ValueError("cut height must be finite")
    return _cut(tree, int(np.searchsorted(tree.heights, h, side="right")))


# -- exports ------------------------------------------------------------------

_NEWICK_SPECIAL = set(" \t\n()[]':;,")


def _newick_label(x: str) -> str:
    if x and not (set(x) & _NEWICK_SPECIAL):
        return x
    return "'" + x.replace("'", "''") + "'"


def _fmt_length(x: float) -> str:
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def export_newick(tree: Dendrogram) -> str:
    """Single-line Newick; branch length is parent height minus child height."""
    n = tree.n_leaves
    Z = tree.merges
    height = np.concatenate([np.zeros(n), Z[:, 2]])
    out = []
    stack: list = [2 * n - 2]
    while stack:
        x = stack.pop()
        if isinstance(x, str):
            out.append(x)
        elif x < n:
            out.append(_newick_label(tree.leaf_ids[x]))
        else:
            l, r, h = int(Z[x - n, 0]), int(Z[x - n, 1]), Z[x - n, 2]
            out.append("(")
            stack += [")", ":" + _fmt_length(h - height[r]), r,
                      ":" + _fmt_length(h - height[l]) + ",", l]
    return "".join(out) + ";"


_PALETTE = ("#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
            "#7f7f7f", "#bcbd22", "#17becf", "#2ca02c", "#d62728")
_GENDER_COLORS = {"female": "red", "male": "green", "unknown": "gray"}


def _dot_str(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(tree: Dendrogram, meta: MetadataTable | None = None,
               color_by: str | None = None) -> str:
    """Graphviz DOT text: one node per leaf and merge, edges child -> parent.

    With ``color_by`` set, leaves are filled according to that metadata
    field (gender uses red for female and green for male).
    """
    n = tree.n_leaves
    colors = {}
    if color_by is not None:
        if color_by not in LABEL_FIELDS:
            raise ValueError(f"unknown coloring field {color_by!r}; choose from {', '.join(LABEL_FIELDS)}")
        if meta is None:
            raise ValueError("coloring needs a metadata table")
        values = meta.labels(tree.leaf_ids, color_by)
        palette = {v: _PALETTE[i % len(_PALETTE)] for i, v in enumerate(sorted(set(values)))}
        if color_by == "gender":
            palette.update({k: v for k, v in _GENDER_COLORS.items() if k in palette})
        colors = {i: palette[v] for i, v in enumerate(values)}

    lines = ["digraph dendrogram {", "  rankdir=BT;", "  node [shape=box, fontsize=10];"]
    for i, x in enumerate(tree.leaf_ids):
        attrs = [f"label={_dot_str(x)}"]
        if i in colors:
            attrs += ["style=filled", f"fillcolor={_dot_str(colors[i])}"]
        lines.append(f"  n{i} [{', '.join(attrs)}];")
    for t, (a, b, h, _) in enumerate(tree.merges):
        node = n + t
        lines.append(f"  n{node} [shape=point, xlabel={_dot_str(_fmt_length(h))}];")
        lines.append(f"  n{int(a)} -> n{node};")
        lines.append(f"  n{int(b)} -> n{node};")
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- structural queries -------------------------------------------------------

def cophenetic(tree: Dendrogram, i: str, j: str) -> float:
    """Height of the lowest merge joining leaves ``i`` and ``j``."""
    pos = {x: k for k, x in enumerate(tree.leaf_ids)}
    for x in (i, j):
        if x not in pos:
            raise KeyError(f"unknown leaf id {x!r}")
    if i == j:
        return 0.0
    parent = _parents(tree)
    ancestors = set()
    a = pos[i]
    while a >= 0:
        ancestors.add(a)
        a = parent[a]
    b = pos[j]
    while b not in ancestors:
        b = parent[b]
    return float(tree.heights[b - tree.n_leaves])


def cophenetic_matrix(tree: Dendrogram) -> np.ndarray:
    """Condensed vector of all pairwise cophenetic distances."""
    n = tree.n_leaves
    out = np.empty(n * (n - 1) // 2)
    members: list = [np.array([i]) for i in range(n)] + [None] * (n - 1)
    for t, (a, b, h, _) in enumerate(tree.merges):
        la, lb = members[int(a)], members[int(b)]
        out[condensed_index(n, la[:, None], lb[None, :]).ravel()] = h
        members[n + t] = np.concatenate([la, lb])
        members[int(a)] = members[int(b)] = None
    return out


# -- partition files ----------------------------------------------------------

def write_partition(p: Partition, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("image_id\tcluster\n")
        for x, c in zip(p.image_ids, p.labels.tolist()):
            fh.write(f"{x}\t{c}\n")


def read_partition(path) -> Partition:
    ids, labels = [], []
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != ["image_id", "cluster"]:
            raise ScoreSpaceError(f"{path}: expected header 'image_id<TAB>cluster'")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            try:
                ids.append(parts[0])
                labels.append(int(parts[1]))
            except (IndexError, ValueError):
                raise ScoreSpaceError(f"{path}:{lineno}: malformed partition row {line!r}") from None
    if not ids:
        raise ScoreSpaceError(f"{path}: empty partition")
    try:
        return Partition(tuple(ids), np.array(labels))
    except ValueError as exc:
        raise ScoreSpaceError(f"{path}: {exc}") from None
