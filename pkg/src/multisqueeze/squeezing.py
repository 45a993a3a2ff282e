"""Per-mode squeezing from bright, dark and amplified-vacuum reconstructions.

With the amplifier phase on the bright fringe its output modes carry the
anti-squeezed quadrature, on the dark fringe the squeezed one, and with the
squeezer blocked they carry amplified vacuum.  Mapping the interferometer
output mode populations back to squeezer mode ``l`` through the overlap
matrix gives

    AS_l = 10 log10 Σ_n g_ln² λ^B_n ⟨N^B⟩ / (λ^AV_n ⟨N^AV⟩)
    S_l  = 10 log10 Σ_n g_ln² λ^D_n ⟨N^D⟩ / (λ^AV_n ⟨N^AV⟩)

Only ratios of populations enter, so an overall detection efficiency
cancels.  Mode indices in this module are Hermite-Gauss orders (0-based).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .gaussian_core import Fringe, to_db
from .hg_modes import OverlapMatrix

VACUUM_FLOOR = 1e-6
REPORT_MODES = 8
# squared overlap below which an excluded term does not flag a squeezer mode
_NEGLIGIBLE_G2 = 1e-6


@dataclass(frozen=True, eq=False)
class TripleDataset:
    """Weights and mean total photon numbers for the three fringe settings.

    All weight vectors are indexed by interferometer output mode, share the
    same length ``n_keep`` and sum to one.  ``g`` has one row per squeezer
    mode and at least ``n_keep`` columns.
    """

    bright_weights: np.ndarray
    bright_total: float
    dark_weights: np.ndarray
    dark_total: float
    vacuum_weights: np.ndarray
    vacuum_total: float
    g: OverlapMatrix
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lens = set()
        for name in ("bright_weights", "dark_weights", "vacuum_weights"):
            w = np.asarray(getattr(self, name), dtype=float).copy()
            if w.ndim != 1:
                raise DimensionError(f"{name} must be one-dimensional")
            if abs(w.sum() - 1.0) > 1e-9:
                raise ValueError(f"{name} sums to {w.sum():.12g}, expected 1")
            w.setflags(write=False)
            object.__setattr__(self, name, w)
            lens.add(w.size)
        if len(lens) != 1:
            raise DimensionError(f"weight vectors have different truncations: {sorted(lens)}")
        if self.g.shape[1] < self.n_keep:
            raise DimensionError(f"g has {self.g.shape[1]} columns for {self.n_keep} kept modes")
        for name in ("bright_total", "dark_total", "vacuum_total"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def n_keep(self) -> int:
        return self.bright_weights.size

    def weights(self, fringe: Fringe) -> np.ndarray:
        return {Fringe.BRIGHT: self.bright_weights, Fringe.DARK: self.dark_weights,
                Fringe.AMPLIFIED_VACUUM: self.vacuum_weights}[Fringe(fringe)]

    def total(self, fringe: Fringe) -> float:
        return {Fringe.BRIGHT: self.bright_total, Fringe.DARK: self.dark_total,
                Fringe.AMPLIFIED_VACUUM: self.vacuum_total}[Fringe(fringe)]

    @classmethod
    def from_populations(cls, populations: dict, g: OverlapMatrix, n_keep: int, meta: dict | None = None):
        """Build from per-fringe mean photon numbers per interferometer mode.

        Each population vector is truncated to ``n_keep`` and renormalized,
        and its truncated sum becomes the total.  Useful for feeding the
        forward model through the same formula without any sampling.
        """
        args = {}
        for fringe, key in ((Fringe.BRIGHT, "bright"), (Fringe.DARK, "dark"), (Fringe.AMPLIFIED_VACUUM, "vacuum")):
            pop = np.asarray(populations[fringe], dtype=float)[:n_keep]
            args[f"{key}_weights"] = pop / pop.sum()
            args[f"{key}_total"] = float(pop.sum())
        return cls(g=g, meta=dict(meta or {}), **args)

    @classmethod
    def from_reconstructions(cls, reconstructions: dict, totals: dict, g: OverlapMatrix, meta: dict | None = None):
        """Build from matched reconstructions (see ``recon.match_sign_and_pair``).

        Each reconstruction's weights are re-indexed by its assigned
        reference mode.  Matching against a reference basis of exactly
        ``n_keep`` modes makes the assignment a permutation, so every kept
        interferometer mode receives a weight.
        """
        n_keep = {r.n_kept for r in reconstructions.values()}
        if len(n_keep) != 1:
            raise DimensionError(f"reconstructions keep different mode counts: {sorted(n_keep)}")
        n_keep = n_keep.pop()
        args = {}
        for fringe, key in ((Fringe.BRIGHT, "bright"), (Fringe.DARK, "dark"), (Fringe.AMPLIFIED_VACUUM, "vacuum")):
            if fringe not in reconstructions:
                raise ValueError(f"missing the {fringe.value} reconstruction")
            w = reconstructions[fringe].weights_by_reference(n_keep)
            args[f"{key}_weights"] = w / w.sum()
            args[f"{key}_total"] = float(totals[fringe])
        return cls(g=g, meta=dict(meta or {}), **args)


@dataclass(frozen=True, eq=False)
class SqueezingReport:
    """Squeezing ``S`` and anti-squeezing ``AS`` (dB) per squeezer mode.

    ``unmeasurable[l]`` is set when a term with non-negligible ``g_ln²`` had
    to be dropped because its vacuum weight fell below the floor; ``S`` and
    ``AS`` are NaN when no term survived.  ``row_deficit`` is the part of
    each squeezer mode not covered by the kept interferometer modes.
    """

    S: np.ndarray
    AS: np.ndarray
    S_err: np.ndarray | None = None
    AS_err: np.ndarray | None = None
    S_truth: np.ndarray | None = None
    AS_truth: np.ndarray | None = None
    unmeasurable: np.ndarray | None = None
    row_deficit: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = np.asarray(self.S).size
        for name in ("S", "AS", "S_err", "AS_err", "S_truth", "AS_truth", "row_deficit"):
            value = getattr(self, name)
            if value is None:
                continue
            value = np.asarray(value, dtype=float).copy()
            if value.shape != (n,):
                raise DimensionError(f"{name} has shape {value.shape}, expected ({n},)")
            object.__setattr__(self, name, value)
        flags = np.zeros(n, dtype=bool) if self.unmeasurable is None else np.asarray(self.unmeasurable, dtype=bool)
        object.__setattr__(self, "unmeasurable", flags.copy())

    @property
    def n_modes(self) -> int:
        return self.S.size

    def head(self, n: int = REPORT_MODES) -> "SqueezingReport":
        """The first ``n`` squeezer modes."""
        def cut(a):
            return None if a is None else a[:n]
        return SqueezingReport(self.S[:n], self.AS[:n], cut(self.S_err), cut(self.AS_err), cut(self.S_truth),
                               cut(self.AS_truth), self.unmeasurable[:n], cut(self.row_deficit), dict(self.meta))

    def with_truth(self, S_truth, AS_truth) -> "SqueezingReport":
        n = self.n_modes
        return SqueezingReport(self.S, self.AS, self.S_err, self.AS_err, np.asarray(S_truth)[:n],
                               np.asarray(AS_truth)[:n], self.unmeasurable, self.row_deficit, dict(self.meta))

    def rows(self) -> list[dict]:
        def val(a, i):
            if a is None or not np.isfinite(a[i]):
                return None
            return float(a[i])
        return [
            {
                "mode": i,
                "S_dB": val(self.S, i),
                "S_err": val(self.S_err, i),
                "AS_dB": val(self.AS, i),
                "AS_err": val(self.AS_err, i),
                "S_truth": val(self.S_truth, i),
                "AS_truth": val(self.AS_truth, i),
                "unmeasurable": bool(self.unmeasurable[i]),
            }
            for i in range(self.n_modes)
        ]

    def to_dict(self) -> dict:
        out = {"modes": self.rows(), "meta": self.meta}
        if self.row_deficit is not None:
            out["row_deficit"] = self.row_deficit.tolist()
        return out

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def to_csv(self, path) -> None:
        """Flat table: mode, S_dB, S_err, AS_dB, AS_err, S_truth, AS_truth (blank when absent)."""
        cols = ["mode", "S_dB", "S_err", "AS_dB", "AS_err", "S_truth", "AS_truth"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in self.rows():
                writer.writerow(["" if row[c] is None else repr(row[c]) for c in cols])

    def format_table(self) -> str:
        """Plain-text table with dB values to two decimals."""
        def fmt(a, i):
            return "   --" if a is None or not np.isfinite(a[i]) else f"{a[i]:6.2f}"
        lines = ["mode   S_dB  S_err  AS_dB AS_err S_true AS_true"]
        for i in range(self.n_modes):
            flag = "  unmeasurable" if self.unmeasurable[i] else ""
            lines.append(
                f"{i:4d} {fmt(self.S, i)} {fmt(self.S_err, i)} {fmt(self.AS, i)} {fmt(self.AS_err, i)}"
                f" {fmt(self.S_truth, i)} {fmt(self.AS_truth, i)}{flag}"
            )
        return "\n".join(lines)


def extract_squeezing(data: TripleDataset, floor: float = VACUUM_FLOOR) -> SqueezingReport:
    """Per squeezer mode S and AS (dB) from one triple of reconstructions.

    Terms whose vacuum weight is below ``floor`` are left out of the sums.
    g is used as given; its row-norm deficit over the kept modes is
    reported alongside.
    """
    n = data.n_keep
    g2 = np.abs(data.g.entries[:, :n]) ** 2
    av = data.vacuum_weights * data.vacuum_total
    ok = data.vacuum_weights >= floor
    safe_av = np.where(ok, av, 1.0)
    ratio_b = np.where(ok, data.bright_weights * data.bright_total / safe_av, 0.0)
    ratio_d = np.where(ok, data.dark_weights * data.dark_total / safe_av, 0.0)
    dropped = (g2[:, ~ok] > _NEGLIGIBLE_G2).any(axis=1)
    covered = (g2[:, ok]).sum(axis=1) > 0
    with np.errstate(divide="ignore"):
        AS = np.where(covered, to_db(np.where(covered, g2 @ ratio_b, 1.0)), np.nan)
        S = np.where(covered, to_db(np.where(covered, g2 @ ratio_d, 1.0)), np.nan)
    meta = dict(data.meta)
    meta["n_keep"] = n
    meta["vacuum_floor"] = floor
    return SqueezingReport(S=S, AS=AS, unmeasurable=dropped | ~covered,
                           row_deficit=1.0 - g2.sum(axis=1), meta=meta)


def estimate_uncertainty(datasets, floor: float = VACUUM_FLOOR) -> tuple[np.ndarray, np.ndarray]:
    """Sample standard deviation (ddof=1) of S and AS across datasets."""
    reports = [extract_squeezing(d, floor) for d in datasets]
    if len(reports) < 2:
        raise ValueError(f"need at least 2 datasets for an uncertainty, got {len(reports)}")
    S = np.array([r.S for r in reports])
    AS = np.array([r.AS for r in reports])
    return S.std(axis=0, ddof=1), AS.std(axis=0, ddof=1)


def aggregate(datasets, floor: float = VACUUM_FLOOR) -> SqueezingReport:
    """Mean S, AS over datasets with their spread as uncertainty.

    With a single dataset the uncertainties are left absent.
    """
    datasets = list(datasets)
    if not datasets:
        raise ValueError("no datasets to aggregate")
    reports = [extract_squeezing(d, floor) for d in datasets]
    S = np.mean([r.S for r in reports], axis=0)
    AS = np.mean([r.AS for r in reports], axis=0)
    S_err = AS_err = None
    if len(reports) > 1:
        S_err, AS_err = estimate_uncertainty(datasets, floor)
    flags = np.any([r.unmeasurable for r in reports], axis=0)
    meta = dict(reports[0].meta)
    meta["n_datasets"] = len(reports)
    return SqueezingReport(S, AS, S_err, AS_err, unmeasurable=flags, row_deficit=reports[0].row_deficit, meta=meta)


@dataclass(frozen=True)
class Deviation:
    dS: np.ndarray
    dAS: np.ndarray
    max_abs: float

    def to_dict(self) -> dict:
        return {"dS": self.dS.tolist(), "dAS": self.dAS.tolist(), "max_abs": self.max_abs}


def compare_to_truth(report: SqueezingReport, truth, n_max: int = REPORT_MODES) -> Deviation:
    """Deviations ``report - truth`` in dB; ``max_abs`` over the first ``n_max`` modes.

    ``truth`` is a pair ``(S*, AS*)`` with one entry per report mode.
    """
    S_true, AS_true = (np.asarray(t, dtype=float) for t in truth)
    if S_true.shape != report.S.shape or AS_true.shape != report.AS.shape:
        raise DimensionError(f"truth has {S_true.size} modes, report {report.n_modes}")
    dS = report.S - S_true
    dAS = report.AS - AS_true
    head = np.concatenate([dS[:n_max], dAS[:n_max]])
    return Deviation(dS, dAS, float(np.nanmax(np.abs(head))) if head.size else 0.0)
