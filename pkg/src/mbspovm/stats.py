"""Photon counts to probabilities, Poisson error propagation and the certification p-value.

Counts per detector are treated as independent Poisson variables (variance =
count). A probability ``p = n / N`` with ``N = n + m`` then has first-order
variance ``n m / N^3``.
"""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .errors import (
    DegenerateEstimateWarning,
    EmptySettingError,
    MissingEntryError,
    NonpositiveSigmaError,
    ValidationError,
)
from .game import N_INPUTS, ProbabilityTables

PROJ = "proj"
POVM = "povm"
PROJ_OUTCOMES = 4
POVM_OUTCOMES = 7
CSV_HEADER = ["kind", "x", "y", "outcome", "counts"]


@dataclass(frozen=True)
class CountRecord:
    """One detector reading. ``x``, ``y`` and ``outcome`` are 1-based; ``y`` is None for POVM rows."""

    kind: str
    x: int
    y: int | None
    outcome: int
    counts: int

    def __post_init__(self):
        if self.kind not in (PROJ, POVM):
            raise ValidationError(f"unknown setting kind {self.kind!r}")
        if not 1 <= self.x <= N_INPUTS:
            raise ValidationError(f"x = {self.x} outside 1..7")
        if self.kind == PROJ:
            if self.y is None or not 1 <= self.y <= N_INPUTS:
                raise ValidationError(f"PROJ row needs y in 1..7, got {self.y}")
            n_out = PROJ_OUTCOMES
        else:
            if self.y is not None:
                raise ValidationError("POVM rows carry no y")
            n_out = POVM_OUTCOMES
        if not 1 <= self.outcome <= n_out:
            raise ValidationError(f"outcome {self.outcome} outside 1..{n_out}")
        if self.counts < 0 or int(self.counts) != self.counts:
            raise ValidationError(f"counts must be a nonnegative integer, got {self.counts}")

    @property
    def setting(self) -> tuple:
        return (self.kind, self.x, self.y)


@dataclass
class CountTable:
    records: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for r in self.records:
            key = (r.kind, r.x, r.y, r.outcome)
            if key in seen:
                raise ValidationError(f"duplicate record {key}")
            seen.add(key)

    def settings(self) -> dict:
        """``{(kind, x, y): counts array indexed by outcome - 1}``; every detector must be present."""
        out = {}
        for r in self.records:
            n_out = PROJ_OUTCOMES if r.kind == PROJ else POVM_OUTCOMES
            arr = out.setdefault(r.setting, np.full(n_out, -1, dtype=np.int64))
            arr[r.outcome - 1] = r.counts
        for key, arr in out.items():
            if np.any(arr < 0):
                raise MissingEntryError(f"setting {key} lacks detector readings")
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.records:
            w.writerow([r.kind, r.x, "" if r.y is None else r.y, r.outcome, r.counts])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, metadata: dict | None = None) -> "CountTable":
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None or list(reader.fieldnames) != CSV_HEADER:
            raise ValidationError(f"expected CSV header {','.join(CSV_HEADER)}")
        records = []
        for row in reader:
            try:
                records.append(
                    CountRecord(
                        row["kind"],
                        int(row["x"]),
                        int(row["y"]) if row["y"] not in ("", None) else None,
                        int(row["outcome"]),
                        int(row["counts"]),
                    )
                )
            except (TypeError, ValueError) as exc:
                if isinstance(exc, ValidationError):
                    raise
                raise ValidationError(f"malformed CSV row {row}: {exc}") from exc
        return cls(records, dict(metadata or {}))


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def save_counts(table: CountTable, path) -> None:
    path = Path(path)
    path.write_text(table.to_csv())
    sidecar_path(path).write_text(json.dumps(table.metadata, indent=1, sort_keys=True))


def load_counts(path) -> CountTable:
    path = Path(path)
    meta_path = sidecar_path(path)
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return CountTable.from_csv(path.read_text(), meta)


def ratio_with_sigma(n: float, total: float) -> tuple[float, float]:
    """``n / total`` and its delta-method sigma for independent Poisson ``n`` and ``total - n``."""
    if total <= 0:
        raise EmptySettingError("setting recorded no counts")
    m = total - n
    return n / total, float(np.sqrt(n * m / total**3))


def counts_to_probabilities(table: CountTable) -> ProbabilityTables:
    """Probabilities of the scored outcomes with Poisson sigmas.

    For a dichotomic setting detector 1 is ``b = 1`` and detectors 2-4 together
    are ``b = 0``; the reported entry is ``p(b = delta_xy)``. For the POVM
    setting of input ``x`` it is the fraction on detector ``x``.
    """
    settings = table.settings()
    proj = np.full((N_INPUTS, N_INPUTS), np.nan)
    proj_s = np.full_like(proj, np.nan)
    povm = np.full(N_INPUTS, np.nan)
    povm_s = np.full_like(povm, np.nan)
    degenerate = []
    for (kind, x, y), counts in settings.items():
        total = float(counts.sum())
        if kind == PROJ:
            n = float(counts[0]) if x == y else total - float(counts[0])
            p, s = ratio_with_sigma(n, total)
            proj[x - 1, y - 1], proj_s[x - 1, y - 1] = p, s
        else:
            p, s = ratio_with_sigma(float(counts[x - 1]), total)
            povm[x - 1], povm_s[x - 1] = p, s
        if s == 0.0:
            degenerate.append((kind, x, y))
    if np.any(np.isnan(proj)) or np.any(np.isnan(povm)):
        raise MissingEntryError("count table does not cover all 49 dichotomic and 7 POVM settings")
    if degenerate:
        warnings.warn(
            f"{len(degenerate)} setting(s) have boundary estimates with zero sigma: {degenerate[:3]}",
            DegenerateEstimateWarning,
            stacklevel=2,
        )
    return ProbabilityTables(proj, povm, proj_s, povm_s)


@dataclass(frozen=True)
class Certification:
    w: float
    sigma: float
    bound: float
    z: float
    p: float
    threshold: float

    @property
    def certified(self) -> bool:
        return self.p < self.threshold

    def to_json(self) -> dict:
        return {
            "W": self.w,
            "sigma": self.sigma,
            "bound": self.bound,
            "z": self.z,
            "p": self.p,
            "threshold": self.threshold,
            "certified": self.certified,
        }


def certification_pvalue(w: float, sigma: float, bound: float) -> tuple[float, float]:
    """``z = (W - bound) / sigma`` and the one-sided normal tail ``P(Z > z)``."""
    if not sigma > 0:
        raise NonpositiveSigmaError(f"sigma must be positive, got {sigma}")
    z = (w - bound) / sigma
    return float(z), float(norm.sf(z))


def certify(tables: ProbabilityTables, bound: float, threshold: float = 0.01) -> Certification:
    from .game import score_from_probabilities

    if not tables.has_sigma:
        raise MissingEntryError("certification needs tables with sigmas")
    w, sigma = score_from_probabilities(tables)
    z, p = certification_pvalue(w, sigma, bound)
    return Certification(w, sigma, bound, z, p, threshold)


def golden_tables() -> dict:
    """Shipped theory and experimental tables: ``{"theory": ..., "experiment": ...}``."""
    with resources.files("mbspovm.data").joinpath("probability_tables.json").open() as fh:
        doc = json.load(fh)
    th, ex = doc["theory"], doc["experiment"]
    return {
        "theory": ProbabilityTables(np.array(th["proj"]), np.array(th["povm"])),
        "experiment": ProbabilityTables(
            np.array(ex["proj"]), np.array(ex["povm"]), np.array(ex["proj_sigma"]), np.array(ex["povm_sigma"])
        ),
    }
