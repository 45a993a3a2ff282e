"""Hermite-Gauss mode bases on a 1D far-field angular grid.

All inner products use the uniform quadrature weight ``dθ``.  Every basis
returned here is re-orthonormalized after sampling, so its discrete Gram
matrix is the identity to round-off.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, DimensionError, TruncationError

# maximum |u(θ_edge)| / max|u| tolerated before a basis is declared truncated
BOUNDARY_LEAKAGE_TOL = 1e-6


@dataclass(frozen=True)
class AngularGrid:
    """Uniform grid of far-field angles (rad)."""

    theta_min: float
    theta_max: float
    n_points: int

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ConfigurationError(f"n_points must be an integer >= 2, got {self.n_points!r}")
        if not (np.isfinite(self.theta_min) and np.isfinite(self.theta_max)):
            raise ConfigurationError("grid bounds must be finite")
        if not self.theta_min < self.theta_max:
            raise ConfigurationError(
                f"theta_min must be < theta_max, got {self.theta_min} >= {self.theta_max}"
            )

    @property
    def spacing(self) -> float:
        return (self.theta_max - self.theta_min) / (self.n_points - 1)

    @cached_property
    def points(self) -> np.ndarray:
        pts = np.linspace(self.theta_min, self.theta_max, self.n_points)
        if np.isclose(self.theta_min, -self.theta_max, rtol=0, atol=1e-15 * abs(self.theta_max)):
            # exact antisymmetry keeps Hermite-Gauss parity exact on the samples
            pts = 0.5 * (pts - pts[::-1])
        pts.setflags(write=False)
        return pts

    @property
    def is_symmetric(self) -> bool:
        return bool(np.all(self.points == -self.points[::-1]))

    def metadata(self) -> dict:
        return {
            "theta_min": float(self.theta_min),
            "theta_max": float(self.theta_max),
            "n_points": int(self.n_points),
        }


def make_grid(theta_min: float, theta_max: float, n_points: int) -> AngularGrid:
    """Build a uniform angular grid; ``dθ = (theta_max - theta_min)/(n_points - 1)``."""
    return AngularGrid(float(theta_min), float(theta_max), int(n_points))


def default_grid() -> AngularGrid:
    """601 points over ±30 mrad (dθ = 0.1 mrad)."""
    return make_grid(-30e-3, 30e-3, 601)


@dataclass(frozen=True, eq=False)
class ModeBasis:
    """A set of real (or complex) mode functions sampled on a grid.

    ``modes[m]`` holds u_m(θ) in units of rad^-1/2, so that
    ``sum(|u_m|**2) * dθ == 1``.
    """

    grid: AngularGrid
    modes: np.ndarray
    width: float | None = None
    parity: np.ndarray | None = None
    name: str = "basis"

    def __post_init__(self):
        modes = np.atleast_2d(np.asarray(self.modes))
        if modes.shape[1] != self.grid.n_points:
            raise DimensionError(
                f"mode vectors have {modes.shape[1]} samples, grid has {self.grid.n_points}"
            )
        modes = modes.copy()
        modes.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        if self.parity is not None:
            parity = np.asarray(self.parity, dtype=int).copy()
            if parity.shape != (modes.shape[0],):
                raise DimensionError("parity must have one entry per mode")
            parity.setflags(write=False)
            object.__setattr__(self, "parity", parity)

    @property
    def n_modes(self) -> int:
        return self.modes.shape[0]

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.modes)

    def truncate(self, n_modes: int) -> "ModeBasis":
        if not 1 <= n_modes <= self.n_modes:
            raise ConfigurationError(f"cannot truncate {self.n_modes} modes to {n_modes}")
        parity = None if self.parity is None else self.parity[:n_modes]
        return ModeBasis(self.grid, self.modes[:n_modes], self.width, parity, self.name)

    def gram(self) -> np.ndarray:
        return self.modes.conj() @ self.modes.T * self.grid.spacing

    def intensity(self, weights) -> np.ndarray:
        """Incoherent sum ``Σ_n w_n |u_n(θ)|²`` (a density in rad^-1)."""
        weights = np.asarray(weights, dtype=float)
        if weights.shape[0] > self.n_modes:
            raise DimensionError(f"{weights.shape[0]} weights for {self.n_modes} modes")
        return weights @ np.abs(self.modes[: weights.shape[0]]) ** 2

    def to_csv(self, path) -> None:
        """Write one row per grid point: θ then each mode (real part)."""
        header = _grid_header(self.grid, name=self.name, width=self.width)
        header += "\ntheta," + ",".join(f"u{m}" for m in range(self.n_modes))
        data = np.column_stack([self.grid.points, np.real(self.modes).T])
        np.savetxt(path, data, delimiter=",", header=header, fmt="%.17g")


def _grid_header(grid: AngularGrid, **extra) -> str:
    items = dict(grid.metadata(), **{k: v for k, v in extra.items() if v is not None})
    return " ".join(f"{k}={v}" for k, v in items.items())


def hermite_functions(x: np.ndarray, n_max: int) -> np.ndarray:
    """Normalized physicists' Hermite functions ψ_0..ψ_{n_max-1} at ``x``.

    Uses the three-term recurrence on the normalized functions, which stays
    finite far into the tails where H_n(x) and exp(-x²/2) separately
    over/underflow.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max,) + x.shape)
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * x**2)
    if n_max > 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(1, n_max - 1):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def gram_schmidt(modes: np.ndarray, dtheta: float, passes: int = 2) -> np.ndarray:
    """Modified Gram-Schmidt under the ``dθ``-weighted inner product.

    Two passes bring the Gram matrix to the identity at round-off level.
    Each vector keeps the sign of its projection onto the input vector.
    """
    q = np.array(modes, dtype=np.result_type(modes, float), copy=True)
    for _ in range(passes):
        for m in range(q.shape[0]):
            for k in range(m):
                q[m] -= (q[k].conj() @ q[m]) * dtheta * q[k]
            q[m] /= np.sqrt(np.real(q[m].conj() @ q[m]) * dtheta)
    return q


def boundary_leakage(modes: np.ndarray) -> np.ndarray:
    """Per-mode edge amplitude relative to the mode's peak amplitude."""
    mags = np.abs(modes)
    edge = np.maximum(mags[:, 0], mags[:, -1])
    return edge / mags.max(axis=1)


def hermite_gauss_basis(grid: AngularGrid, sigma: float, n_modes: int, name: str | None = None) -> ModeBasis:
    """Hermite-Gauss modes HG_m(θ/σ) for m < n_modes, orthonormal on ``grid``.

    Raises TruncationError if the highest mode has not decayed below
    ``BOUNDARY_LEAKAGE_TOL`` (relative to its peak) at the grid edges.
    """
    if not sigma > 0:
        raise ConfigurationError(f"sigma must be positive, got {sigma}")
    if n_modes < 1:
        raise ConfigurationError(f"n_modes must be >= 1, got {n_modes}")
    raw = hermite_functions(grid.points / sigma, n_modes) / np.sqrt(sigma)
    leak = boundary_leakage(raw)
    if leak.max() > BOUNDARY_LEAKAGE_TOL:
        worst = int(np.argmax(leak))
        raise TruncationError(
            f"mode {worst} of width {sigma:g} rad leaks {leak[worst]:.2e} of its peak at the grid edge",
            leakage=float(leak.max()),
        )
    modes = gram_schmidt(raw, grid.spacing)
    parity = (-1) ** np.arange(n_modes)
    return ModeBasis(grid, modes, float(sigma), parity, name or f"HG(sigma={sigma:g})")


@dataclass(frozen=True, eq=False)
class OverlapMatrix:
    """Overlap coefficients ``entries[l, n] = ⟨source_l | target_n⟩``."""

    entries: np.ndarray
    source_id: str = "source"
    target_id: str = "target"
    row_norms: np.ndarray = field(init=False, repr=False)
    col_norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        entries = np.atleast_2d(np.asarray(self.entries)).copy()
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        sq = np.abs(entries) ** 2
        object.__setattr__(self, "row_norms", sq.sum(axis=1))
        object.__setattr__(self, "col_norms", sq.sum(axis=0))

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.entries)

    @property
    def row_deficit(self) -> np.ndarray:
        """``1 - Σ_n |g_ln|²`` per source mode (weight lost to truncation)."""
        return 1.0 - self.row_norms

    @property
    def col_deficit(self) -> np.ndarray:
        return 1.0 - self.col_norms

    @property
    def T(self) -> "OverlapMatrix":
        return OverlapMatrix(self.entries.conj().T, self.target_id, self.source_id)

    @classmethod
    def identity(cls, n: int, source_id: str = "identity", target_id: str = "identity") -> "OverlapMatrix":
        return cls(np.eye(n), source_id, target_id)

    def to_csv(self, path) -> None:
        header = f"source={self.source_id} target={self.target_id} rows={self.shape[0]} cols={self.shape[1]}"
        np.savetxt(path, np.real(self.entries), delimiter=",", header=header, fmt="%.17g")


def overlap_matrix(source: ModeBasis, target: ModeBasis, imag_tol: float = 1e-10) -> OverlapMatrix:
    """Overlap integrals ``g[l, n] = ∫ dθ source_l(θ)* target_n(θ)`` by grid quadrature."""
    if source.grid != target.grid:
        raise DimensionError(f"bases live on different grids: {source.grid} vs {target.grid}")
    g = source.modes.conj() @ target.modes.T * source.grid.spacing
    if np.iscomplexobj(g) and np.max(np.abs(g.imag), initial=0.0) < imag_tol:
        g = g.real.copy()
    return OverlapMatrix(g, source.name, target.name)


def width_schedule(G: float, sigma0: float, c: float) -> float:
    """Mode width as a function of parametric gain, ``σ0·sqrt(1 + c·G)``."""
    if G < 0 or sigma0 <= 0 or c < 0:
        raise ConfigurationError(f"invalid width schedule inputs G={G}, sigma0={sigma0}, c={c}")
    return sigma0 * np.sqrt(1.0 + c * G)
