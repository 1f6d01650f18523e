"""Similarity-score matrices, their distance transform, and per-image metadata.

Pairwise values are kept in condensed form: the upper triangle of the
symmetric n x n matrix flattened row by row,
``[(0,1), (0,2), ..., (0,n-1), (1,2), ..., (n-2,n-1)]``, the same layout as
``scipy.spatial.distance.pdist``.
"""
from __future__ import annotations

import csv
import io
import logging
import re
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, NamedTuple, Union

import numpy as np

log = logging.getLogger(__name__)

BINARY_MAGIC = b"SSPACE01"
SCORE_TOL = 1e-9

GENDERS = ("male", "female", "unknown")
ETHNICITIES = ("asian", "white", "hispanic", "asian_southern",
               "african_american", "asian_middle_eastern", "unknown")
EXPRESSIONS = ("neutral", "smiling")
ILLUMINATIONS = ("controlled", "uncontrolled")
LABEL_FIELDS = ("subject", "gender", "ethnicity", "expression",
                "illumination", "glasses")
METADATA_COLUMNS = ("image_id", "subject_id", "gender", "ethnicity",
                    "expression", "illumination", "glasses")


class ScoreSpaceError(ValueError):
    """Invalid matrix or metadata input."""


def n_pairs(n: int) -> int:
    return n * (n - 1) // 2


def condensed_index(n: int, i, j):
    """Position of pair (i, j), i != j, in a condensed vector over n objects.

    Works elementwise on integer arrays.
    """
    i, j = np.minimum(i, j), np.maximum(i, j)
    return n * i - i * (i + 1) // 2 + (j - i - 1)


def _n_from_length(m: int) -> int:
    n = int(round((1 + np.sqrt(1 + 8 * m)) / 2))
    if n_pairs(n) != m:
        raise ScoreSpaceError(f"condensed length {m} is not n(n-1)/2 for any n")
    return n


class _Condensed:
    """Shared storage for the two condensed matrix types."""

    _kind = "matrix"

    def __init__(self, values, image_ids=None, copy: bool = True):
        values = np.array(values, dtype=np.float64, copy=copy or None)
        if values.ndim != 1:
            raise ScoreSpaceError(f"condensed values must be 1-D, got shape {values.shape}")
        if image_ids is None:
            image_ids = [str(i) for i in range(_n_from_length(values.size))]
        image_ids = tuple(str(x) for x in image_ids)
        n = len(image_ids)
        if n_pairs(n) != values.size:
            raise ScoreSpaceError(
                f"dimension mismatch: {len(image_ids)} image ids for {values.size} "
                f"condensed values (expected {n_pairs(len(image_ids))})")
        dupes = [k for k, c in Counter(image_ids).items() if c > 1]
        if dupes:
            raise ScoreSpaceError(f"duplicate image_id {dupes[0]!r}")
        self._check(values, image_ids)
        values.flags.writeable = False
        self._values = values
        self.image_ids = image_ids
        self.n = n
        self._consumed = False

    def _check(self, values, image_ids):
        pass

    @property
    def values(self) -> np.ndarray:
        if self._consumed:
            raise ScoreSpaceError(f"{self._kind} buffer was consumed by an in-place clustering run")
        return self._values

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n})"

    def index(self, image_id: str) -> int:
        try:
            return self._positions[image_id]
        except AttributeError:
            self._positions = {x: i for i, x in enumerate(self.image_ids)}
            return self.index(image_id)
        except KeyError:
            raise KeyError(f"unknown image_id {image_id!r}") from None

    def pair(self, i: int, j: int) -> float:
        """Value stored for objects i and j (positional indices)."""
        if i == j:
            raise ValueError("diagonal entries are not stored")
        return float(self.values[condensed_index(self.n, i, j)])

    def square(self, diagonal: float = 0.0) -> np.ndarray:
        out = np.full((self.n, self.n), diagonal, dtype=np.float64)
        iu = np.triu_indices(self.n, k=1)
        out[iu] = self.values
        out[iu[::-1]] = self.values
        return out

    def _with(self, values, image_ids):
        return type(self)(values, image_ids, copy=False)


class SimilarityMatrix(_Condensed):
    """All-vs-all match scores in [0, 1]; higher means more alike."""

    _kind = "similarity matrix"

    def _check(self, values, image_ids):
        bad = np.flatnonzero(~((values >= -SCORE_TOL) & (values <= 1 + SCORE_TOL)))
        if bad.size:
            raise ScoreSpaceError(
                f"score out of range [0,1]: {values[bad[0]]!r} "
                f"at {_describe_pair(bad[0], image_ids)}")
        np.clip(values, 0.0, 1.0, out=values)

    @property
    def scores(self) -> np.ndarray:
        return self.values

    @classmethod
    def from_square(cls, matrix, image_ids=None, symmetrize: str = "mean",
                    asym_tol: float = 1e-9) -> "SimilarityMatrix":
        """Build from a full square matrix; the diagonal is discarded.

        ``symmetrize`` is ``"mean"`` (average (i,j) and (j,i)) or ``"strict"``
        (reject pairs whose two entries differ by more than ``asym_tol``).
        """
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ScoreSpaceError(f"dimension mismatch: expected a square matrix, got shape {m.shape}")
        n = m.shape[0]
        if image_ids is not None and len(image_ids) != n:
            raise ScoreSpaceError(f"dimension mismatch: {len(image_ids)} image ids for a {n}x{n} matrix")
        if not np.all(np.isfinite(m)):
            i, j = np.argwhere(~np.isfinite(m))[0]
            raise ScoreSpaceError(f"non-finite score at row {i}, column {j}")
        iu = np.triu_indices(n, k=1)
        upper, lower = m[iu], m.T[iu]
        if symmetrize == "strict":
            bad = np.flatnonzero(np.abs(upper - lower) > asym_tol)
            if bad.size:
                k = bad[0]
                raise ScoreSpaceError(
                    f"asymmetric scores {upper[k]!r} vs {lower[k]!r} at "
                    f"{_describe_pair(k, image_ids, n)} exceed tolerance {asym_tol}")
            values = upper
        elif symmetrize == "mean":
            values = (upper + lower) / 2.0
        else:
            raise ValueError(f"unknown symmetrization policy {symmetrize!r}")
        for vals in (upper, lower):
            bad = np.flatnonzero(~((vals >= -SCORE_TOL) & (vals <= 1 + SCORE_TOL)))
            if bad.size:
                raise ScoreSpaceError(
                    f"score out of range [0,1]: {vals[bad[0]]!r} at "
                    f"{_describe_pair(bad[0], image_ids, n)}")
        return cls(values, image_ids)


class DistanceMatrix(_Condensed):
    """Non-negative dissimilarities; the input to clustering."""

    _kind = "distance matrix"

    def _check(self, values, image_ids):
        bad = np.flatnonzero(~(np.isfinite(values) & (values >= 0)))
        if bad.size:
            raise ScoreSpaceError(
                f"distance must be finite and >= 0, got {values[bad[0]]!r} "
                f"at {_describe_pair(bad[0], image_ids)}")

    @property
    def d(self) -> np.ndarray:
        return self.values

    @classmethod
    def from_square(cls, matrix, image_ids=None) -> "DistanceMatrix":
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ScoreSpaceError(f"dimension mismatch: expected a square matrix, got shape {m.shape}")
        return cls(m[np.triu_indices(m.shape[0], k=1)], image_ids)

    def _take_buffer(self) -> np.ndarray:
        """Hand the internal buffer to a consumer that will overwrite it."""
        buf = self.values
        self._consumed = True
        buf.flags.writeable = True
        return buf


def _describe_pair(k, image_ids, n=None):
    n = n if n is not None else len(image_ids)
    i = int(np.searchsorted(np.cumsum(np.arange(n - 1, 0, -1)), k, side="right"))
    j = int(k - condensed_index(n, i, i + 1) + i + 1)
    if image_ids is None:
        return f"pair ({i}, {j})"
    return f"pair ({i}, {j}) = ({image_ids[i]!r}, {image_ids[j]!r})"


# -- loading and writing matrices --------------------------------------------

def load_similarity(source, symmetrize: str = "mean",
                    asym_tol: float = 1e-9) -> SimilarityMatrix:
    """Load a similarity matrix from a binary condensed file or a tabular file.

    The format is detected from the leading magic bytes. Tabular input is a
    comma- or tab-separated file whose first row holds the image ids followed
    by the n rows of the square matrix.
    """
    path = Path(source)
    with open(path, "rb") as fh:
        head = fh.read(len(BINARY_MAGIC))
    if head == BINARY_MAGIC:
        return read_binary(path)
    return read_tabular(path, symmetrize=symmetrize, asym_tol=asym_tol)


def read_tabular(path, symmetrize: str = "mean", asym_tol: float = 1e-9) -> SimilarityMatrix:
    text = Path(path).read_text(encoding="utf-8")
    first = text.split("\n", 1)[0]
    delim = "\t" if "\t" in first else ","
    rows = [r for r in csv.reader(io.StringIO(text), delimiter=delim) if r]
    if not rows:
        raise ScoreSpaceError(f"{path}: empty matrix file")
    ids = [x.strip() for x in rows[0]]
    n = len(ids)
    if len(rows) - 1 != n:
        raise ScoreSpaceError(f"{path}: dimension mismatch: {n} ids but {len(rows) - 1} matrix rows")
    m = np.empty((n, n))
    for r, row in enumerate(rows[1:]):
        if len(row) != n:
            raise ScoreSpaceError(f"{path}: dimension mismatch: row {r + 1} has {len(row)} values, expected {n}")
        for c, v in enumerate(row):
            try:
                m[r, c] = float(v)
            except ValueError:
                raise ScoreSpaceError(f"{path}: row {r + 1} ({ids[r]}), column {ids[c]}: "
                                      f"not a number: {v!r}") from None
    return SimilarityMatrix.from_square(m, ids, symmetrize=symmetrize, asym_tol=asym_tol)


def write_tabular(sim: SimilarityMatrix, path, delimiter: str = ",", diagonal: float = 1.0) -> None:
    square = sim.square(diagonal=diagonal)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(sim.image_ids)
        for row in square:
            w.writerow([repr(float(v)) for v in row])


def write_binary(sim: SimilarityMatrix, path) -> None:
    """Write the binary condensed format.

    Layout: magic ``SSPACE01``, n as u64 LE, n ids each as a u32 LE byte
    length plus UTF-8 bytes, then the condensed scores as float32 LE.
    """
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<Q", sim.n))
        for x in sim.image_ids:
            b = x.encode("utf-8")
            fh.write(struct.pack("<I", len(b)))
            fh.write(b)
        fh.write(sim.scores.astype("<f4").tobytes())


def read_binary(path) -> SimilarityMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != BINARY_MAGIC:
        raise ScoreSpaceError(f"{path}: bad magic {data[:8]!r}, expected {BINARY_MAGIC!r}")
    try:
        (n,) = struct.unpack_from("<Q", data, 8)
        pos = 16
        ids = []
        for _ in range(n):
            (ln,) = struct.unpack_from("<I", data, pos)
            pos += 4
            ids.append(data[pos:pos + ln].decode("utf-8"))
            pos += ln
    except struct.error:
        raise ScoreSpaceError(f"{path}: truncated header") from None
    expected = n_pairs(n) * 4
    if len(data) - pos != expected:
        raise ScoreSpaceError(
            f"{path}: dimension mismatch: {len(data) - pos} score bytes, expected {expected} for n={n}")
    scores = np.frombuffer(data, dtype="<f4", offset=pos).astype(np.float64)
    return SimilarityMatrix(scores, ids, copy=False)


def to_distance(sim: SimilarityMatrix) -> DistanceMatrix:
    """Distances as (largest off-diagonal score) minus score."""
    if sim.n < 2:
        raise ScoreSpaceError("need at least 2 images")
    s = sim.scores
    return DistanceMatrix(s.max() - s, sim.image_ids, copy=False)


# -- metadata -----------------------------------------------------------------

class ImageMeta(NamedTuple):
    image_id: str
    subject_id: str
    gender: str
    ethnicity: str
    expression: str
    illumination: str
    glasses: bool

    def label(self, field: str) -> str:
        """The value of a label field as a string."""
        if field == "subject":
            return self.subject_id
        if field == "glasses":
            return "true" if self.glasses else "false"
        if field in ("gender", "ethnicity", "expression", "illumination"):
            return getattr(self, field)
        raise ValueError(f"unknown label field {field!r}; choose from {', '.join(LABEL_FIELDS)}")


_TRUE = {"true", "t", "yes", "y", "1"}
_FALSE = {"false", "f", "no", "n", "0"}
_EXPRESSION_ALIASES = {"neutral": "neutral", "blank_stare": "neutral",
                       "smiling": "smiling", "smile": "smiling",
                       "happy": "smiling", "happiness": "smiling"}


def _norm(s: str) -> str:
    return re.sub(r"[\s\-]+", "_", s.strip().lower())


def parse_gender(s: str) -> str:
    s = _norm(s)
    return {"m": "male", "f": "female"}.get(s, s if s in GENDERS else "unknown")


def parse_ethnicity(s: str) -> str:
    s = _norm(s)
    return s if s in ETHNICITIES else "unknown"


class MetadataTable:
    """Per-image labels keyed by image id."""

    def __init__(self, rows: Iterable[ImageMeta] = ()):
        self.rows: dict[str, ImageMeta] = {}
        for r in rows:
            if r.image_id in self.rows:
                raise ScoreSpaceError(f"duplicate image_id {r.image_id!r} in metadata")
            self.rows[r.image_id] = r

    def __len__(self):
        return len(self.rows)

    def __iter__(self) -> Iterator[ImageMeta]:
        return iter(self.rows.values())

    def __contains__(self, image_id):
        return image_id in self.rows

    def __getitem__(self, image_id) -> ImageMeta:
        try:
            return self.rows[image_id]
        except KeyError:
            raise ScoreSpaceError(f"image {image_id!r} has no metadata") from None

    def labels(self, image_ids: Iterable[str], field: str) -> list[str]:
        return [self[i].label(field) for i in image_ids]

    def counts(self, field: str) -> Counter:
        return Counter(r.label(field) for r in self)

    def summary(self) -> str:
        lines = [f"{len(self)} images, {len(self.counts('subject'))} subjects"]
        for field in LABEL_FIELDS[1:]:
            c = self.counts(field)
            lines.append(f"  {field}: " + ", ".join(f"{k}={c[k]}" for k in sorted(c)))
        return "\n".join(lines)


def load_metadata(source) -> MetadataTable:
    """Read the metadata CSV (header ``image_id,subject_id,gender,...``).

    Unrecognised gender or ethnicity strings map to ``unknown``; expression,
    illumination and glasses must parse.
    """
    path = Path(source)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in METADATA_COLUMNS if c not in header]
        if missing:
            raise ScoreSpaceError(f"{path}: missing required column {missing[0]!r}")
        reader.fieldnames = header
        rows = []
        for line, rec in enumerate(reader, start=2):
            rows.append(_parse_row(rec, f"{path}:{line}"))
    table = MetadataTable(rows)
    log.info("loaded metadata from %s\n%s", path, table.summary())
    return table


def _parse_row(rec: dict, where: str) -> ImageMeta:
    get = lambda k: (rec.get(k) or "").strip()
    expression = _EXPRESSION_ALIASES.get(_norm(get("expression")))
    if expression is None:
        raise ScoreSpaceError(f"{where}: unknown expression {get('expression')!r}")
    illumination = _norm(get("illumination"))
    if illumination not in ILLUMINATIONS:
        raise ScoreSpaceError(f"{where}: unknown illumination {get('illumination')!r}")
    g = get("glasses").lower()
    if g in _TRUE:
        glasses = True
    elif g in _FALSE:
        glasses = False
    else:
        raise ScoreSpaceError(f"{where}: unparseable boolean {get('glasses')!r} for glasses")
    if not get("image_id"):
        raise ScoreSpaceError(f"{where}: empty image_id")
    return ImageMeta(get("image_id"), get("subject_id"), parse_gender(get("gender")),
                     parse_ethnicity(get("ethnicity")), expression, illumination, glasses)


def write_metadata(meta: MetadataTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METADATA_COLUMNS)
        for r in meta:
            w.writerow([r.image_id, r.subject_id, r.gender, r.ethnicity,
                        r.expression, r.illumination, "true" if r.glasses else "false"])


# -- subsetting ---------------------------------------------------------------

Matrix = Union[SimilarityMatrix, DistanceMatrix]


def subset(matrix: Matrix, keep: Union[Callable[[ImageMeta], bool], Iterable[str]],
           meta: MetadataTable | None = None) -> Matrix:
    """Restrict a matrix to some of its images, preserving their order.

    ``keep`` is either a predicate over metadata rows (``meta`` required) or
    a collection of image ids. Apply :func:`to_distance` after subsetting
    similarities so the maximum is taken over the retained pairs only.
    """
    if callable(keep):
        if meta is None:
            raise ValueError("a predicate selection needs a metadata table")
        idx = [i for i, x in enumerate(matrix.image_ids) if keep(meta[x])]
    else:
        wanted = set(keep)
        unknown = wanted.difference(matrix.image_ids)
        if unknown:
            raise ScoreSpaceError(f"image {sorted(unknown)[0]!r} is not in the matrix")
        idx = [i for i, x in enumerate(matrix.image_ids) if x in wanted]
    if not idx:
        raise ScoreSpaceError("empty selection")
    if len(idx) < 2:
        raise ScoreSpaceError("selection keeps a single image; need at least 2")
    idx = np.asarray(idx, dtype=np.int64)
    a, b = np.triu_indices(idx.size, k=1)
    values = matrix.values[condensed_index(matrix.n, idx[a], idx[b])]
    return matrix._with(values, [matrix.image_ids[i] for i in idx])
