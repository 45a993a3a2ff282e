"""Mode shapes and weights from single-shot intensity fluctuations.

The pipeline is: intensity covariance → normalization to unit double
integral → elementwise square root → symmetric eigendecomposition.  For
thermal-like mode populations the normalized covariance is the square of
the coherent-mode kernel ``K(θ, θ') = Σ_m λ_m u_m(θ) u_m(θ')``, so the
eigenpairs of ``√C`` are the mode weights and shapes.

``√C`` only returns ``|K|``.  Where K changes sign the plain square root is
biased; ``decompose`` can restore the signs when the data are an exact
low-rank square (see ``retrieve_signs``) and otherwise falls back to the
plain magnitude.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateDataError, DimensionError
from .hg_modes import AngularGrid, ModeBasis

DEFAULT_N_KEEP = 12
AMBIGUITY_TOL = 1e-3
# eigenvalues below this fraction of the largest count as numerically zero
RANK_TOL = 1e-9


# ---------------------------------------------------------------------------
# covariance
# ---------------------------------------------------------------------------


class CovarianceAccumulator:
    """Streaming mean / co-moment of frame vectors.

    Chunks can be accumulated independently and combined with ``merge``;
    the result does not depend on how frames were split (up to round-off).
    """

    def __init__(self, n_points: int):
        self.n = 0
        self.mean = np.zeros(n_points)
        self.comoment = np.zeros((n_points, n_points))

    def update(self, frames) -> "CovarianceAccumulator":
        frames = np.atleast_2d(np.asarray(frames, dtype=float))
        if frames.shape[1] != self.mean.size:
            raise DimensionError(f"frames have {frames.shape[1]} bins, accumulator {self.mean.size}")
        other = CovarianceAccumulator(self.mean.size)
        other.n = frames.shape[0]
        other.mean = frames.mean(axis=0)
        dev = frames - other.mean
        other.comoment = dev.T @ dev
        return self.merge(other)

    def merge(self, other: "CovarianceAccumulator") -> "CovarianceAccumulator":
        if other.n == 0:
            return self
        if self.n == 0:
            self.n, self.mean, self.comoment = other.n, other.mean.copy(), other.comoment.copy()
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        self.comoment = self.comoment + other.comoment + np.outer(delta, delta) * (self.n * other.n / n)
        self.mean = self.mean + delta * (other.n / n)
        self.n = n
        return self

    def covariance(self) -> np.ndarray:
        if self.n < 2:
            raise DegenerateDataError(f"fewer than 2 frames ({self.n})")
        cov = self.comoment / (self.n - 1)
        return 0.5 * (cov + cov.T)


@dataclass(frozen=True, eq=False)
class CovarianceMap:
    """Intensity covariance on a grid.

    Unnormalized maps are in (photons per bin)².  Normalized maps are a
    density in rad⁻² with ``sum(cov) * dθ² == 1``.
    """

    cov: np.ndarray
    grid: AngularGrid
    normalized: bool = False
    n_frames_used: int = 0
    mean: np.ndarray | None = None

    @property
    def double_integral(self) -> float:
        return float(self.cov.sum() * self.grid.spacing**2)

    def to_csv(self, path) -> None:
        header = " ".join(f"{k}={v}" for k, v in self.grid.metadata().items())
        header += f" normalized={self.normalized} n_frames={self.n_frames_used}"
        np.savetxt(path, self.cov, delimiter=",", header=header, fmt="%.17g")


def estimate_covariance(ensemble, grid: AngularGrid | None = None, subtract_shot_noise: bool = False,
                        chunk_size: int = 1024) -> CovarianceMap:
    """Unbiased sample covariance of the frames (divisor ``n_frames - 1``).

    ``ensemble`` is a FrameEnsemble or an ``(n_frames, n_points)`` array (then
    ``grid`` is required).  ``subtract_shot_noise`` removes the Poisson term
    ``⟨I(θ)⟩`` from the diagonal, for photon-counting frames.
    """
    if hasattr(ensemble, "frames"):
        frames, grid = ensemble.frames, ensemble.grid
    else:
        frames = np.atleast_2d(np.asarray(ensemble, dtype=float))
        if grid is None:
            raise DimensionError("a grid is required when passing a bare frame array")
    if frames.shape[0] < 2:
        raise DegenerateDataError(f"fewer than 2 frames ({frames.shape[0]})")
    if frames.shape[1] != grid.n_points:
        raise DimensionError(f"frames have {frames.shape[1]} bins, grid has {grid.n_points}")
    acc = CovarianceAccumulator(grid.n_points)
    for start in range(0, frames.shape[0], chunk_size):
        acc.update(frames[start:start + chunk_size])
    cov = acc.covariance()
    if subtract_shot_noise:
        cov[np.diag_indices_from(cov)] -= acc.mean
    return CovarianceMap(cov, grid, False, acc.n, acc.mean)


def normalize_covariance(cov: CovarianceMap) -> CovarianceMap:
    """Scale so that the quadrature double integral of the map is one."""
    total = cov.cov.sum() * cov.grid.spacing**2
    if not total > 0:
        raise DegenerateDataError(
            f"covariance double integral is {total:.3g}; no positive intensity correlations"
        )
    return replace(cov, cov=cov.cov / total, normalized=True)


def analytic_covariance(photons, basis: ModeBasis, pump_rel_std: float = 0.0) -> CovarianceMap:
    """Frame covariance of independent real-Gaussian mode amplitudes.

    ``Cov = 2 (Σ_n N_n u_n u_n')² dθ²``.  A per-shot pump factor with unit
    mean and relative standard deviation ``s`` turns this into
    ``(1 + s²)·Cov + s²·⟨I⟩⟨I'⟩`` (clipping at zero is neglected).
    """
    photons = np.asarray(photons, dtype=float)
    d = basis.grid.spacing
    modes = basis.modes[: photons.size]
    kernel = (modes.T * photons) @ modes * d
    mean = np.einsum("n,ni->i", photons, modes**2) * d
    s2 = pump_rel_std**2
    # E[p²]·E[I I'] - E[p]²·E[I]E[I'] with E[p]=1, E[p²]=1+s²
    cov = (1.0 + s2) * 2.0 * kernel**2 + s2 * np.outer(mean, mean)
    return CovarianceMap(cov, basis.grid, False, 0, mean)


# ---------------------------------------------------------------------------
# sign retrieval
# ---------------------------------------------------------------------------


def unfold_signs(magnitude: np.ndarray) -> np.ndarray:
    """Sign pattern making each row of ``magnitude`` smooth away from the diagonal.

    Walking outward from the (positive) diagonal, each entry takes the sign
    closest to a quadratic extrapolation of the three previous signed
    entries.  Only the upper triangle is walked; the result is symmetric.
    """
    p = magnitude.shape[0]
    signed = np.array(magnitude, dtype=float, copy=True)
    rows = np.arange(p)
    for k in range(1, p):
        i = rows[: p - k]
        a = signed[i, i + k - 1]
        if k == 1:
            pred = a
        elif k == 2:
            pred = 2 * a - signed[i, i + k - 2]
        else:
            pred = 3 * a - 3 * signed[i, i + k - 2] + signed[i, i + k - 3]
        cand = magnitude[i, i + k]
        signed[i, i + k] = np.where(np.abs(pred - cand) <= np.abs(pred + cand), cand, -cand)
    upper = np.triu(np.where(signed < 0, -1.0, 1.0), 1)
    return upper + upper.T + np.eye(p)


def _sorted_eigh(mat):
    w, v = np.linalg.eigh(mat)
    order = np.argsort(-np.abs(w), kind="stable")
    return w[order], v[:, order]


def _polish(magnitude, signs, rank, max_iter, floor):
    """Alternate rank-``rank`` projection and sign update; returns (signs, residual, eigenvalues)."""
    norm = np.linalg.norm(magnitude)
    residual = np.inf
    for it in range(max_iter):
        w, v = _sorted_eigh(signs * magnitude)
        approx = (v[:, :rank] * w[:rank]) @ v[:, :rank].T
        residual = np.linalg.norm(signs * magnitude - approx) / norm
        new = np.where(np.abs(approx) > floor, np.where(approx < 0, -1.0, 1.0), signs)
        if np.array_equal(new, signs) or (it >= 4 and residual > 1e-4):
            break
        signs = new
    return signs, residual, w[:rank]


def retrieve_signs(magnitude: np.ndarray, min_gap: float = 30.0, max_rank: int | None = None,
                   residual_tol: float = 1e-8, max_iter: int = 50, max_candidates: int = 3):
    """Recover the signs of a low-rank PSD kernel from its elementwise magnitude.

    Returns ``(signs, rank)`` on success or ``(None, None)`` when no sign
    pattern reproduces an exact low-rank matrix (the normal outcome for noisy
    data).  Candidate ranks sit where consecutive eigenvalue magnitudes of
    the unfolded matrix drop by more than ``min_gap``.  For each candidate
    (lowest first) the pattern is polished by alternating between the rank-r
    projection and the measured magnitudes; the first one reaching
    ``residual_tol`` wins.
    """
    p = magnitude.shape[0]
    max_rank = min(p // 2 if max_rank is None else max_rank, p - 1)
    start = unfold_signs(magnitude)
    w, _ = _sorted_eigh(start * magnitude)
    absw = np.abs(w[: max_rank + 1])
    ratios = absw[:-1] / np.maximum(absw[1:], np.finfo(float).tiny)
    floor = 1e-9 * magnitude.max()
    for gap in np.nonzero(ratios >= min_gap)[0][:max_candidates]:
        rank = int(gap) + 1
        signs, residual, lead = _polish(magnitude, start, rank, max_iter, floor)
        if residual <= residual_tol and np.all(lead > 0):
            return signs, rank
    return None, None


# ---------------------------------------------------------------------------
# decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ModeReconstruction:
    """Weights (descending, summing to one) and shapes of the kept modes."""

    weights: np.ndarray
    modes: np.ndarray
    grid: AngularGrid
    residual: float
    raw_weights: np.ndarray
    clamped_mass: float = 0.0
    negative_fraction: float = 0.0
    signs_retrieved: bool = False
    achieved_rank: int = 0
    status: str = "ok"
    assignment: np.ndarray | None = None
    overlaps: np.ndarray | None = None
    ambiguous: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_kept(self) -> int:
        return self.weights.size

    def as_basis(self, name: str = "reconstruction") -> ModeBasis:
        return ModeBasis(self.grid, self.modes, None, None, name)

    def weights_by_reference(self, n_reference: int) -> np.ndarray:
        """Weights re-indexed by the assigned reference mode (zeros where unassigned)."""
        if self.assignment is None:
            raise ValueError("reconstruction has not been matched to a reference basis")
        out = np.zeros(n_reference)
        for w, ref in zip(self.weights, self.assignment):
            if ref < n_reference:
                out[ref] += w
        return out

    def summary(self) -> dict:
        out = {
            "n_kept": self.n_kept,
            "weights": self.weights.tolist(),
            "residual": self.residual,
            "clamped_mass": self.clamped_mass,
            "negative_fraction": self.negative_fraction,
            "signs_retrieved": self.signs_retrieved,
            "achieved_rank": self.achieved_rank,
            "status": self.status,
            "grid": self.grid.metadata(),
        }
        if self.assignment is not None:
            out["assignment"] = self.assignment.tolist()
            out["overlaps"] = self.overlaps.tolist()
            out["ambiguous"] = self.ambiguous.tolist()
        out.update(self.meta)
        return out

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)

    def to_csv(self, path) -> None:
        header = " ".join(f"{k}={v}" for k, v in self.grid.metadata().items())
        header += "\ntheta," + ",".join(f"u{m}" for m in range(self.n_kept))
        np.savetxt(path, np.column_stack([self.grid.points, self.modes.T]),
                   delimiter=",", header=header, fmt="%.17g")


def _fix_sign(modes: np.ndarray) -> np.ndarray:
    peak = np.argmax(np.abs(modes), axis=1)
    return modes * np.sign(modes[np.arange(modes.shape[0]), peak])[:, None]


def decompose(cov: CovarianceMap, n_keep: int = DEFAULT_N_KEEP, signs: str = "auto") -> ModeReconstruction:
    """Weights and mode shapes from a covariance map.

    Negative entries of the normalized map are set to zero before the
    square root; their share of the total absolute mass is reported as
    ``clamped_mass``.  ``signs`` selects how the square root is signed:
    ``"clamp"`` uses the plain magnitude, ``"retrieve"`` requires an exact
    sign retrieval, ``"auto"`` tries retrieval and keeps the magnitude if it
    does not converge.  Weights are the absolute eigenvalues of the kept
    modes renormalized to sum to one.
    """
    if n_keep < 1:
        raise ValueError("n_keep must be >= 1")
    if signs not in ("auto", "clamp", "retrieve"):
        raise ValueError(f"unknown sign mode {signs!r}")
    if not cov.normalized:
        cov = normalize_covariance(cov)
    d = cov.grid.spacing
    mat = cov.cov * d**2
    mat = 0.5 * (mat + mat.T)
    neg = mat < 0
    clamped = float(-mat[neg].sum() / np.abs(mat).sum())
    magnitude = np.sqrt(np.where(neg, 0.0, mat))

    retrieved = False
    if signs != "clamp":
        pattern, _ = retrieve_signs(magnitude)
        if pattern is not None:
            magnitude = pattern * magnitude
            retrieved = True
        elif signs == "retrieve":
            raise DegenerateDataError("sign retrieval did not converge to an exact low-rank kernel")

    w, v = _sorted_eigh(magnitude)
    absw = np.abs(w)
    rank = int(np.sum(absw > RANK_TOL * absw[0]))
    status = "ok"
    if n_keep > rank:
        status = "rank-deficient"
        warnings.warn(f"n_keep={n_keep} exceeds the numerical rank {rank}", RuntimeWarning, stacklevel=2)
    kept = absw[:n_keep]
    total_sq = float(np.sum(absw**2))
    residual = float(np.sqrt(max(total_sq - np.sum(kept**2), 0.0) / total_sq))
    modes = _fix_sign(v[:, :n_keep].T / np.sqrt(d))
    return ModeReconstruction(
        weights=kept / kept.sum(),
        modes=modes,
        grid=cov.grid,
        residual=residual,
        raw_weights=absw / absw.sum(),
        clamped_mass=clamped,
        negative_fraction=float(neg.mean()),
        signs_retrieved=retrieved,
        achieved_rank=rank,
        status=status,
        meta={"n_frames_used": cov.n_frames_used},
    )


def mode_populations(rec: ModeReconstruction, total_mean: float) -> np.ndarray:
    """Mean photons per mode, ``λ_m ⟨N_tot⟩``."""
    if total_mean < 0:
        raise ValueError(f"total photon number must be non-negative, got {total_mean}")
    return rec.weights * total_mean


def match_sign_and_pair(rec: ModeReconstruction, reference: ModeBasis,
                        ambiguity_tol: float = AMBIGUITY_TOL) -> ModeReconstruction:
    """Assign each reconstructed mode to a reference mode and fix its sign.

    Modes are processed in weight order; each takes the free reference mode
    of largest |overlap|.  When the two best candidates are within
    ``ambiguity_tol`` the mode is flagged and the lower reference index wins.
    """
    if reference.grid != rec.grid:
        raise DimensionError("reconstruction and reference live on different grids")
    d = rec.grid.spacing
    ov = rec.modes @ reference.modes.conj().T * d
    free = np.ones(reference.n_modes, dtype=bool)
    assignment = np.full(rec.n_kept, -1)
    overlaps = np.zeros(rec.n_kept)
    ambiguous = np.zeros(rec.n_kept, dtype=bool)
    modes = rec.modes.copy()
    for m in range(rec.n_kept):
        if not free.any():
            break
        mags = np.where(free, np.abs(ov[m]), -np.inf)
        order = np.argsort(-mags, kind="stable")
        best = order[0]
        if order.size > 1 and np.isfinite(mags[order[1]]) and mags[best] - mags[order[1]] < ambiguity_tol:
            ambiguous[m] = True
            best = min(order[0], order[1])
        assignment[m] = best
        free[best] = False
        overlaps[m] = abs(ov[m, best])
        if np.real(ov[m, best]) < 0:
            modes[m] = -modes[m]
    return replace(rec, modes=modes, assignment=assignment, overlaps=overlaps, ambiguous=ambiguous)
