"""Synthetic all-vs-all similarity scores with subject and demographic structure.

Scores follow an additive model in similarity space:

* genuine pairs (same subject) centre on ``genuine_mean``, lowered by
  ``illumination_offset`` when the two images differ in illumination and by
  ``expression_offset`` when they differ in expression;
* impostor pairs centre on ``impostor_mean``, plus ``same_group_bonus``
  when the two subjects share an ethnicity and ``gender_bonus`` when they
  share a gender (the latter overridable per ethnicity, for pairs within
  that ethnicity);
* images flagged noisy get impostor-level scores against their own subject;
* Gaussian noise with ``score_sd`` is added, the result clipped to [0, 1]
  and rounded to float32 so it survives the binary format unchanged.

Randomness comes from numpy's Philox4x64 counter-based generator keyed by
the seed. Stream 0 (the top counter word) drives metadata; stream ``1 + i``
draws the noise for row ``i`` of the condensed matrix, i.e. the pairs
``(i, j > i)``, so rows can be generated in any order or in parallel.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .score_space import (ETHNICITIES, GENDERS, ImageMeta, MetadataTable, SimilarityMatrix,
                          n_pairs)

_ETHNICITY_SHARE = {"white": 14853, "asian": 6648, "hispanic": 678, "asian_southern": 414,
                    "african_american": 150, "asian_middle_eastern": 96, "unknown": 516}
_MALE_SHARE = 12392 / 23355


def _default_fractions() -> dict:
    total = sum(_ETHNICITY_SHARE.values())
    out = {}
    for eth, count in _ETHNICITY_SHARE.items():
        out[f"male/{eth}"] = _MALE_SHARE * count / total
        out[f"female/{eth}"] = (1 - _MALE_SHARE) * count / total
    return out


CONDITIONS = (("controlled", "neutral"), ("controlled", "smiling"),
              ("uncontrolled", "neutral"), ("uncontrolled", "smiling"))


@dataclass
class SynthConfig:
    n_subjects: int = 40
    images_per_subject: Union[int, tuple] = 12
    group_fractions: dict = field(default_factory=_default_fractions)
    genuine_mean: float = 0.8
    impostor_mean: float = 0.2
    score_sd: float = 0.05
    same_group_bonus: float = 0.0
    gender_bonus: float = 0.0
    gender_bonus_overrides: dict = field(default_factory=dict)
    illumination_offset: float = 0.0
    expression_offset: float = 0.0
    noisy_image_fraction: float = 0.0
    glasses_fraction: float = 0.06
    seed: int = 0

    def validate(self) -> None:
        if self.n_subjects < 2:
            raise ValueError("n_subjects must be at least 2")
        lo, hi = self.image_range
        if lo < 1 or hi < lo:
            raise ValueError(f"bad images_per_subject {self.images_per_subject!r}")
        for name in ("genuine_mean", "impostor_mean", "noisy_image_fraction", "glasses_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.genuine_mean <= self.impostor_mean:
            raise ValueError("genuine_mean must exceed impostor_mean")
        if self.score_sd < 0:
            raise ValueError("score_sd must be >= 0")
        for key in self.group_fractions:
            g, _, e = key.partition("/")
            if g not in GENDERS or e not in ETHNICITIES:
                raise ValueError(f"bad demographic profile {key!r}; use gender/ethnicity")
        total = sum(self.group_fractions.values())
        if abs(total - 1.0) > 1e-9 or min(self.group_fractions.values()) < 0:
            raise ValueError(f"group_fractions must be non-negative and sum to 1, got {total}")
        slack = 3 * self.score_sd
        lowest = self.genuine_mean - self.illumination_offset - self.expression_offset
        gender = [self.gender_bonus, *self.gender_bonus_overrides.values()]
        highest = self.impostor_mean + max(self.same_group_bonus, 0) + max(max(gender), 0)
        lowest_impostor = self.impostor_mean + min(self.same_group_bonus, 0) + min(min(gender), 0)
        if lowest < -slack or self.genuine_mean > 1 + slack:
            raise ValueError(f"infeasible config: genuine scores centre at {lowest:.3f}, outside [0, 1]")
        if highest > 1 + slack or lowest_impostor < -slack:
            raise ValueError(f"infeasible config: impostor scores centre up to {highest:.3f}, outside [0, 1]")

    @property
    def image_range(self) -> tuple[int, int]:
        ips = self.images_per_subject
        if isinstance(ips, (tuple, list)):
            return int(ips[0]), int(ips[1])
        return int(ips), int(ips)

    # -- flat key=value text form --------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, dict):
                v = ",".join(f"{k}:{x!r}" for k, x in v.items())
            elif isinstance(v, (tuple, list)):
                v = "-".join(map(str, v))
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, items: dict) -> "SynthConfig":
        """Build from string values as found in a config file or on a command line."""
        names = {f.name for f in dataclasses.fields(cls)}
        kw = {}
        for key, raw in items.items():
            key = key.strip().replace("-", "_")
            if key not in names:
                raise ValueError(f"unknown synth setting {key!r}")
            raw = str(raw).strip()
            if key in ("n_subjects", "seed"):
                kw[key] = int(raw)
            elif key == "images_per_subject":
                lo, _, hi = raw.partition("-")
                kw[key] = (int(lo), int(hi)) if hi else int(lo)
            elif key in ("group_fractions", "gender_bonus_overrides"):
                kw[key] = {k.strip(): float(v) for k, v in
                           (part.rsplit(":", 1) for part in raw.split(",") if part.strip())}
            else:
                kw[key] = float(raw)
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "SynthConfig":
        return cls.from_mapping(read_settings(path))


def read_settings(path) -> dict:
    """Raw key=value pairs from a settings file; ``#`` starts a comment."""
    items = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        items[k.strip()] = v.strip()
    return items


def _stream(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, stream]))


def _apportion(n: int, fractions: dict) -> list[str]:
    """Largest-remainder allocation of n subjects to profiles."""
    keys = list(fractions)
    quotas = np.array([fractions[k] for k in keys]) * n
    counts = np.floor(quotas).astype(int)
    rest = n - counts.sum()
    order = np.argsort(-(quotas - counts), kind="stable")
    counts[order[:rest]] += 1
    return [k for k, c in zip(keys, counts) for _ in range(c)]


def generate_metadata(cfg: SynthConfig) -> tuple[MetadataTable, np.ndarray]:
    """Metadata plus a boolean mask of noisy images, in matrix order."""
    cfg.validate()
    rng = _stream(cfg.seed, 0)
    profiles = _apportion(cfg.n_subjects, cfg.group_fractions)
    profiles = [profiles[i] for i in rng.permutation(cfg.n_subjects)]
    lo, hi = cfg.image_range
    counts = rng.integers(lo, hi + 1, size=cfg.n_subjects)
    width = len(str(cfg.n_subjects - 1))
    rows = []
    for s, (profile, count) in enumerate(zip(profiles, counts)):
        gender, _, ethnicity = profile.partition("/")
        subject = f"s{s:0{width}d}"
        glasses = rng.random(count) < cfg.glasses_fraction
        for j in range(count):
            illum, expr = CONDITIONS[j % len(CONDITIONS)]
            rows.append(ImageMeta(f"{subject}_{j:03d}", subject, gender, ethnicity,
                                  expr, illum, bool(glasses[j])))
    n = len(rows)
    noisy = np.zeros(n, dtype=bool)
    noisy[rng.choice(n, size=int(round(cfg.noisy_image_fraction * n)), replace=False)] = True
    return MetadataTable(rows), noisy


def generate(cfg: SynthConfig | None = None) -> tuple[SimilarityMatrix, MetadataTable]:
    """Draw a similarity matrix and its metadata from ``cfg``."""
    cfg = cfg or SynthConfig()
    meta, noisy = generate_metadata(cfg)
    rows = list(meta)
    n = len(rows)

    def codes(values):
        _, inv = np.unique(values, return_inverse=True)
        return inv

    subj = codes([r.subject_id for r in rows])
    gender = codes([r.gender for r in rows])
    eth = codes([r.ethnicity for r in rows])
    illum = codes([r.illumination for r in rows])
    expr = codes([r.expression for r in rows])
    eth_names = np.array([r.ethnicity for r in rows])
    gender_bonus = np.array([cfg.gender_bonus_overrides.get(e, cfg.gender_bonus)
                             for e in eth_names])

    out = np.empty(n_pairs(n))
    pos = 0
    for i in range(n - 1):
        j = slice(i + 1, n)
        same_eth = eth[j] == eth[i]
        impostor = (cfg.impostor_mean + cfg.same_group_bonus * same_eth
                    + np.where(same_eth, gender_bonus[i], cfg.gender_bonus) * (gender[j] == gender[i]))
        genuine = (cfg.genuine_mean
                   - cfg.illumination_offset * (illum[j] != illum[i])
                   - cfg.expression_offset * (expr[j] != expr[i]))
        genuine_pair = (subj[j] == subj[i]) & ~(noisy[j] | noisy[i])
        base = np.where(genuine_pair, genuine, impostor)
        if cfg.score_sd > 0:
            base += cfg.score_sd * _stream(cfg.seed, 1 + i).standard_normal(n - 1 - i)
        out[pos:pos + n - 1 - i] = base
        pos += n - 1 - i
    np.clip(out, 0.0, 1.0, out=out)
    out[:] = out.astype(np.float32)
    return SimilarityMatrix(out, [r.image_id for r in rows], copy=False), meta
