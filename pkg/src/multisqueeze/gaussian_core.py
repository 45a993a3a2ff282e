"""Gaussian-state algebra in the Schmidt-mode basis.

The model is phase balanced: every mode is a zero-mean Gaussian state with
uncorrelated Q and P, so a multimode state is fully described by two
variance vectors.  Vacuum has ``var_q = var_p = 1/4``, the convention under
which an OPA of gain G turns vacuum into ``sinh²G`` photons.

Quadrature convention: the squeezer anti-squeezes Q and squeezes P.  The
bright fringe amplifies Q in the second crystal, the dark fringe amplifies P.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import bisect

from .errors import ConfigurationError, DimensionError
from .hg_modes import ModeBasis, OverlapMatrix

VACUUM_VARIANCE = 0.25


class Fringe(str, enum.Enum):
    BRIGHT = "bright"
    DARK = "dark"
    AMPLIFIED_VACUUM = "vacuum"

    @property
    def quadrature_angle(self) -> float:
        """Angle of the amplified quadrature relative to the anti-squeezed Q."""
        return np.pi / 2 if self is Fringe.DARK else 0.0


def to_db(variance_ratio):
    return 10.0 * np.log10(variance_ratio)


# ---------------------------------------------------------------------------
# Schmidt spectra
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SchmidtSpectrum:
    """Per-mode gains r_n of one OPA stage; ``eigenvalues`` are Λ_n = sinh²(r_n)."""

    gains: np.ndarray

    def __post_init__(self):
        gains = np.atleast_1d(np.asarray(self.gains, dtype=float)).copy()
        if gains.ndim != 1 or gains.size == 0:
            raise ConfigurationError("gains must be a non-empty 1D sequence")
        if np.any(gains < 0) or not np.all(np.isfinite(gains)):
            raise ConfigurationError("gains must be finite and non-negative")
        gains.setflags(write=False)
        object.__setattr__(self, "gains", gains)

    def __len__(self):
        return self.gains.size

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.sinh(self.gains) ** 2

    @property
    def is_ordered(self) -> bool:
        return bool(np.all(np.diff(self.gains) <= 0))

    @classmethod
    def geometric(cls, r0: float, q: float, n_modes: int) -> "SchmidtSpectrum":
        """``r_n = r0 * q**n``."""
        if not 0 < q <= 1:
            raise ConfigurationError(f"decay ratio q must lie in (0, 1], got {q}")
        return cls(r0 * q ** np.arange(n_modes))

    @classmethod
    def uniform(cls, r: float, n_modes: int) -> "SchmidtSpectrum":
        return cls(np.full(n_modes, float(r)))


def on_axis_photons(spectrum: SchmidtSpectrum, basis: ModeBasis, reference_width: float | None = None) -> float:
    """Amplified-vacuum photon number at θ = 0 per reference angular width.

    ``Σ_n Λ_n |u_n(0)|² · reference_width``.  The default reference width is
    ``1/|u_0(0)|²`` (the equivalent width of the fundamental mode), which makes
    a single-mode stage give exactly ``sinh²(r_0)``.
    """
    i0 = int(np.argmin(np.abs(basis.grid.points)))
    u0 = np.abs(basis.modes[: len(spectrum), i0]) ** 2
    if reference_width is None:
        reference_width = 1.0 / u0[0]
    return float(spectrum.eigenvalues @ u0 * reference_width)


def calibrate_r0(G: float, basis: ModeBasis, q: float, n_modes: int | None = None,
                 reference_width: float | None = None, tol: float = 1e-10) -> float:
    """Solve ``sinh²(G) = on_axis_photons(geometric(r0, q))`` for r0 by bisection."""
    n_modes = basis.n_modes if n_modes is None else n_modes
    if G == 0:
        return 0.0
    target = np.sinh(G) ** 2

    def mismatch(r0):
        return on_axis_photons(SchmidtSpectrum.geometric(r0, q, n_modes), basis, reference_width) - target

    hi = G
    while mismatch(hi) < 0:
        hi *= 2.0
    return bisect(mismatch, 0.0, hi, xtol=tol)


# ---------------------------------------------------------------------------
# states and elementary operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureState:
    """Diagonal multimode Gaussian state: per-mode Q and P variances."""

    var_q: np.ndarray
    var_p: np.ndarray
    basis_id: str = ""

    def __post_init__(self):
        vq = np.atleast_1d(np.asarray(self.var_q, dtype=float)).copy()
        vp = np.atleast_1d(np.asarray(self.var_p, dtype=float)).copy()
        if vq.shape != vp.shape or vq.ndim != 1:
            raise DimensionError(f"var_q {vq.shape} and var_p {vp.shape} must be equal-length vectors")
        vq.setflags(write=False)
        vp.setflags(write=False)
        object.__setattr__(self, "var_q", vq)
        object.__setattr__(self, "var_p", vp)

    def __len__(self):
        return self.var_q.size

    @property
    def uncertainty_product(self) -> np.ndarray:
        return self.var_q * self.var_p

    def squeezing_db(self) -> tuple[np.ndarray, np.ndarray]:
        """(S, AS) in dB relative to vacuum: P variance and Q variance."""
        return to_db(self.var_p / VACUUM_VARIANCE), to_db(self.var_q / VACUUM_VARIANCE)


def vacuum_state(n_modes: int, basis_id: str = "") -> QuadratureState:
    if n_modes < 1:
        raise ConfigurationError("n_modes must be >= 1")
    v = np.full(n_modes, VACUUM_VARIANCE)
    return QuadratureState(v, v, basis_id)


def squeeze(state: QuadratureState, spectrum: SchmidtSpectrum) -> QuadratureState:
    """Single-stage Bogoliubov transform: Q scaled by e^r, P by e^-r."""
    _check_len(state, spectrum)
    r = spectrum.gains
    return QuadratureState(state.var_q * np.exp(2 * r), state.var_p * np.exp(-2 * r), state.basis_id)


def amplify(state: QuadratureState, spectrum: SchmidtSpectrum, fringe: Fringe) -> QuadratureState:
    """Phase-sensitive amplification; the dark fringe has negative gain."""
    sign = -1.0 if fringe is Fringe.DARK else 1.0
    _check_len(state, spectrum)
    r = sign * spectrum.gains
    return QuadratureState(state.var_q * np.exp(2 * r), state.var_p * np.exp(-2 * r), state.basis_id)


def apply_loss(state: QuadratureState, eta: float) -> QuadratureState:
    """Beamsplitter loss with transmission ``eta``, vacuum admixed in the open port."""
    if not 0.0 <= eta <= 1.0:
        raise ConfigurationError(f"transmission must lie in [0, 1], got {eta}")
    mix = (1.0 - eta) * VACUUM_VARIANCE
    return QuadratureState(eta * state.var_q + mix, eta * state.var_p + mix, state.basis_id)


def transfer(state: QuadratureState, overlap: OverlapMatrix) -> QuadratureState:
    """Re-express a diagonal state in the target basis of ``overlap``.

    Inter-mode correlations created by the basis change are dropped, as in
    the phase-balanced analysis.  Target-mode weight not covered by the
    source modes (column deficit) is filled with vacuum.
    """
    if not overlap.is_real:
        raise DimensionError("overlap matrix must be real (phase balanced)")
    if overlap.shape[0] != len(state):
        raise DimensionError(f"overlap has {overlap.shape[0]} source modes, state has {len(state)}")
    g2 = overlap.entries ** 2
    fill = np.clip(overlap.col_deficit, 0.0, None) * VACUUM_VARIANCE
    return QuadratureState(state.var_q @ g2 + fill, state.var_p @ g2 + fill, overlap.target_id)


def _check_len(state, spectrum):
    if len(state) != len(spectrum):
        raise DimensionError(f"state has {len(state)} modes, spectrum has {len(spectrum)}")


def opa_mean_photons(state: QuadratureState, spectrum: SchmidtSpectrum, phi: float = 0.0) -> np.ndarray:
    """Mean output photons per mode of an OPA amplifying ``Q_φ = Q cosφ + P sinφ``.

    ``⟨N⟩ = e^{2r}⟨Q_φ²⟩ + e^{-2r}⟨P_φ²⟩ - 1/2``.
    """
    _check_len(state, spectrum)
    c2, s2 = np.cos(phi) ** 2, np.sin(phi) ** 2
    qphi = state.var_q * c2 + state.var_p * s2
    pphi = state.var_q * s2 + state.var_p * c2
    r = spectrum.gains
    return np.exp(2 * r) * qphi + np.exp(-2 * r) * pphi - 0.5


# ---------------------------------------------------------------------------
# two-stage interferometer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StageParams:
    gain: float
    spectrum: SchmidtSpectrum
    basis: ModeBasis

    def __post_init__(self):
        if len(self.spectrum) > self.basis.n_modes:
            raise DimensionError(
                f"spectrum has {len(self.spectrum)} modes but basis only {self.basis.n_modes}"
            )


@dataclass(frozen=True)
class InterferometerModel:
    """Squeezer → loss → mode matching (g) → amplifier → (h) → output.

    ``h`` is kept for sensitivity studies and only used when ``use_h`` is set;
    by default the interferometer output modes are the amplifier modes.
    ``output_basis`` is the basis the output state lives in when ``use_h``.
    """

    squeezer: StageParams
    amplifier: StageParams
    g: OverlapMatrix
    loss_eta: float = 0.85
    fringe: Fringe = Fringe.BRIGHT
    h: OverlapMatrix | None = None
    output_basis: ModeBasis | None = None
    use_h: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.loss_eta <= 1.0:
            raise ConfigurationError(f"loss_eta must lie in [0, 1], got {self.loss_eta}")
        object.__setattr__(self, "fringe", Fringe(self.fringe))
        if self.g.shape != (len(self.squeezer.spectrum), len(self.amplifier.spectrum)):
            raise DimensionError(
                f"g has shape {self.g.shape}, stages have "
                f"{len(self.squeezer.spectrum)} x {len(self.amplifier.spectrum)} modes"
            )
        if self.use_h and (self.h is None or self.output_basis is None):
            raise ConfigurationError("use_h requires both h and output_basis")

    def with_fringe(self, fringe) -> "InterferometerModel":
        return replace(self, fringe=Fringe(fringe))

    def with_loss(self, eta: float) -> "InterferometerModel":
        return replace(self, loss_eta=eta)

    @property
    def detection_basis(self) -> ModeBasis:
        """Basis of the interferometer output modes (what the camera sees)."""
        if self.use_h:
            return self.output_basis
        return self.amplifier.basis.truncate(len(self.amplifier.spectrum))

    def squeezer_output(self) -> QuadratureState:
        """Squeezer output after the lumped loss (the truth reference plane)."""
        sq = self.squeezer
        state = squeeze(vacuum_state(len(sq.spectrum), sq.basis.name), sq.spectrum)
        return apply_loss(state, self.loss_eta)

    def amplifier_input(self) -> QuadratureState:
        if self.fringe is Fringe.AMPLIFIED_VACUUM:
            return vacuum_state(len(self.amplifier.spectrum), self.amplifier.basis.name)
        return transfer(self.squeezer_output(), self.g)


def propagate_quadratures(model: InterferometerModel, state: QuadratureState | None = None) -> QuadratureState:
    """Quadrature variances of the interferometer output modes.

    ``state`` is the squeezer-output state (defaults to the model's own);
    it is ignored for the amplified-vacuum setting, where the squeezer is
    blocked.
    """
    if model.fringe is Fringe.AMPLIFIED_VACUUM:
        amp_in = vacuum_state(len(model.amplifier.spectrum), model.amplifier.basis.name)
    else:
        state = model.squeezer_output() if state is None else state
        amp_in = transfer(state, model.g)
    out = amplify(amp_in, model.amplifier.spectrum, model.fringe)
    if model.use_h:
        out = transfer(out, model.h)
    return out


def output_photons(model: InterferometerModel, state: QuadratureState | None = None) -> np.ndarray:
    """Mean photon number per interferometer output mode, ``var_q + var_p - 1/2``."""
    out = propagate_quadratures(model, state)
    return out.var_q + out.var_p - 2 * VACUUM_VARIANCE


def mean_intensity(model: InterferometerModel) -> np.ndarray:
    """Mean photons per unit angle, ``Σ_n ⟨N_n⟩|u_n(θ)|²``."""
    return model.detection_basis.intensity(output_photons(model))


def ground_truth_squeezing(model: InterferometerModel) -> tuple[np.ndarray, np.ndarray]:
    """Per squeezer mode (S_l, AS_l) in dB at the squeezer output after loss."""
    return model.squeezer_output().squeezing_db()


@dataclass(frozen=True)
class PhaseScan:
    phases: np.ndarray
    trace: np.ndarray

    @property
    def minimum(self) -> float:
        return float(self.trace.min())

    @property
    def maximum(self) -> float:
        return float(self.trace.max())

    @property
    def visibility(self) -> float:
        return (self.maximum - self.minimum) / (self.maximum + self.minimum)

    @property
    def squeezing_db(self) -> float:
        return float(to_db(self.minimum))

    @property
    def antisqueezing_db(self) -> float:
        return float(to_db(self.maximum))


def phase_scan(model: InterferometerModel, state: QuadratureState | None = None,
               phases=None) -> PhaseScan:
    """Total output photons versus pump phase, normalized to amplified vacuum.

    The amplified quadrature angle is half the pump phase, so one period of
    the trace spans 2π of pump phase; the default is 200 phases over 2π.
    """
    if phases is None:
        phases = np.linspace(0.0, 2 * np.pi, 200)
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    if phases.size == 0:
        raise ConfigurationError("phases must be non-empty")
    state = model.squeezer_output() if state is None else state
    amp_in = transfer(state, model.g)
    spectrum = model.amplifier.spectrum
    vac = opa_mean_photons(vacuum_state(len(spectrum)), spectrum).sum()
    totals = np.array([opa_mean_photons(amp_in, spectrum, 0.5 * ph).sum() for ph in phases])
    return PhaseScan(phases, totals / vac)
