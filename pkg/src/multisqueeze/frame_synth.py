"""Monte-Carlo single-shot far-field frames.

Each shot draws one real Gaussian amplitude per interferometer output mode
with variance equal to that mode's mean photon number, so the per-mode
intensity is thermal-like (variance 2⟨N⟩²) and the mean frame reproduces
``Σ_n ⟨N_n⟩|u_n(θ)|²``.  Real amplitudes model the single amplified
quadrature of a high-gain OPA; a complex (two-quadrature) draw would give
the same normalized covariance shape.

Randomness is counter based: shot ``k`` of a run uses Philox with a key
derived from (seed, fringe) and counter ``k``, with separate streams for
the mode amplitudes, the pump factor and the detector.  Frames therefore
do not depend on chunking or worker count, and changing e.g. the pump
noise level leaves the amplitude draws untouched.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError, DataFormatError, DimensionError
from .gaussian_core import Fringe, InterferometerModel, output_photons
from .hg_modes import AngularGrid, ModeBasis

STREAM_AMPLITUDE = 0
STREAM_PUMP = 1
STREAM_DETECTION = 2

_FRINGE_CODE = {Fringe.BRIGHT: 1, Fringe.DARK: 2, Fringe.AMPLIFIED_VACUUM: 3}


@dataclass(frozen=True)
class AcquisitionConfig:
    n_frames: int = 1500
    fringe: Fringe = Fringe.BRIGHT
    detection_eta: float = 1.0
    pump_rel_std: float = 0.0
    seed: int = 0
    shot_noise: bool = False

    def __post_init__(self):
        object.__setattr__(self, "fringe", Fringe(self.fringe))
        if int(self.n_frames) != self.n_frames or self.n_frames < 2:
            raise ConfigurationError(f"n_frames must be an integer >= 2, got {self.n_frames}")
        if not 0.0 <= self.detection_eta <= 1.0:
            raise ConfigurationError(f"detection_eta must lie in [0, 1], got {self.detection_eta}")
        if self.pump_rel_std < 0:
            raise ConfigurationError(f"pump_rel_std must be >= 0, got {self.pump_rel_std}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigurationError(f"seed must be a non-negative integer, got {self.seed}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["fringe"] = self.fringe.value
        return out


def shot_rng(seed: int, fringe: Fringe, shot: int, stream: int) -> np.random.Generator:
    """Generator for one (shot, stream) pair of a run."""
    key = np.random.SeedSequence([int(seed), _FRINGE_CODE[Fringe(fringe)]]).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, int(shot), int(stream)]))


def sample_mode_amplitudes(photons, rng: np.random.Generator, n_shots: int | None = None) -> np.ndarray:
    """Independent zero-mean real Gaussians with variance ``photons[n]``.

    ``photons`` may also be an InterferometerModel, whose output photon
    numbers are used.  Returns shape ``(n_modes,)`` or ``(n_shots, n_modes)``.
    """
    if isinstance(photons, InterferometerModel):
        photons = output_photons(photons)
    std = np.sqrt(np.clip(np.asarray(photons, dtype=float), 0.0, None))
    size = std.shape if n_shots is None else (n_shots,) + std.shape
    return rng.standard_normal(size) * std


def render_frame(amplitudes, basis: ModeBasis, pump_factor=1.0) -> np.ndarray:
    """Photons per angular bin, ``pump · |Σ_n x_n u_n(θ)|² · dθ``.

    Accepts a single amplitude vector or a stack of them (one per shot, with
    ``pump_factor`` scalar or one per shot).
    """
    amps = np.asarray(amplitudes)
    n = amps.shape[-1]
    if n > basis.n_modes:
        raise DimensionError(f"{n} amplitudes for a basis of {basis.n_modes} modes")
    field = amps @ basis.modes[:n]
    pump = np.asarray(pump_factor, dtype=float)
    if amps.ndim == 2 and pump.ndim == 1:
        pump = pump[:, None]
    return pump * np.abs(field) ** 2 * basis.grid.spacing


def apply_detection(frame, eta: float, shot_noise: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
    """Detector efficiency ``eta``; with ``shot_noise`` each bin is a Poisson count."""
    if not 0.0 <= eta <= 1.0:
        raise ConfigurationError(f"detection efficiency must lie in [0, 1], got {eta}")
    mean = eta * np.asarray(frame, dtype=float)
    if not shot_noise:
        return mean
    if rng is None:
        raise ConfigurationError("shot noise requires a random generator")
    return rng.poisson(mean).astype(float)


@dataclass(frozen=True, eq=False)
class FrameEnsemble:
    frames: np.ndarray
    grid: AngularGrid
    config: AcquisitionConfig
    meta: dict | None = None

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def total_mean(self) -> float:
        """Mean over frames of the grid-summed photon number."""
        return float(self.frames.sum(axis=1).mean())

    @property
    def mean_frame(self) -> np.ndarray:
        return self.frames.mean(axis=0)

    def to_csv(self, path) -> None:
        header = " ".join(f"{k}={v}" for k, v in self.grid.metadata().items())
        header += " " + json.dumps(self.config.to_dict())
        np.savetxt(path, self.frames, delimiter=",", header=header, fmt="%.17g")


def _render_shots(photons, basis, config, shots):
    n_modes = photons.size
    std = np.sqrt(np.clip(photons, 0.0, None))
    amps = np.empty((len(shots), n_modes))
    pump = np.ones(len(shots))
    for i, k in enumerate(shots):
        amps[i] = shot_rng(config.seed, config.fringe, k, STREAM_AMPLITUDE).standard_normal(n_modes) * std
        if config.pump_rel_std > 0:
            z = shot_rng(config.seed, config.fringe, k, STREAM_PUMP).standard_normal()
            pump[i] = max(1.0 + config.pump_rel_std * z, 0.0)
    # one product per shot: batched BLAS rounding would depend on the chunk size
    frames = np.array([render_frame(a, basis, p) for a, p in zip(amps, pump)]).reshape(len(shots), -1)
    if config.shot_noise:
        for i, k in enumerate(shots):
            rng = shot_rng(config.seed, config.fringe, k, STREAM_DETECTION)
            frames[i] = apply_detection(frames[i], config.detection_eta, True, rng)
    elif config.detection_eta != 1.0:
        frames = apply_detection(frames, config.detection_eta)
    return frames


def acquire_ensemble(model: InterferometerModel, config: AcquisitionConfig,
                     workers: int | None = None, chunk: int = 512) -> FrameEnsemble:
    """Simulate ``config.n_frames`` detected single-shot frames.

    The pump factor ``max(1 + pump_rel_std·z, 0)`` multiplies the whole
    frame of a shot.  ``workers`` (default: ``MULTISQUEEZE_WORKERS`` or 1)
    spreads chunks of shots over threads; the output does not depend on it.
    """
    if Fringe(model.fringe) is not config.fringe:
        raise ConfigurationError(
            f"model is set to the {model.fringe.value} fringe but the acquisition asks for {config.fringe.value}"
        )
    photons = output_photons(model)
    basis = model.detection_basis
    blocks = [range(s, min(s + chunk, config.n_frames)) for s in range(0, config.n_frames, chunk)]
    workers = workers or int(os.environ.get("MULTISQUEEZE_WORKERS", "1"))
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda b: _render_shots(photons, basis, config, b), blocks))
    else:
        parts = [_render_shots(photons, basis, config, b) for b in blocks]
    meta = {"photons": photons.tolist(), "basis": basis.name}
    return FrameEnsemble(np.vstack(parts), basis.grid, config, meta)


# ---------------------------------------------------------------------------
# binary file format
# ---------------------------------------------------------------------------
#
# little endian:
#   magic      8s   b"MSQFRAME"
#   version    u32
#   n_frames   u64
#   n_points   u64
#   theta_min  f64
#   theta_max  f64
#   sha256     32s  digest of the frame payload
#   meta_len   u32  length of the UTF-8 JSON that follows
#   meta       JSON {"config": {...}, "meta": {...}}
#   payload    n_frames * n_points f64, row major

MAGIC = b"MSQFRAME"
VERSION = 1
_HEADER = struct.Struct("<8sIQQdd32sI")


def save_ensemble(ensemble: FrameEnsemble, path) -> str:
    """Write ``ensemble`` in the binary frame format; returns the payload SHA-256."""
    payload = np.ascontiguousarray(ensemble.frames, dtype="<f8").tobytes()
    digest = hashlib.sha256(payload).digest()
    meta = json.dumps({"config": ensemble.config.to_dict(), "meta": ensemble.meta or {}}).encode()
    g = ensemble.grid
    header = _HEADER.pack(MAGIC, VERSION, ensemble.n_frames, g.n_points, g.theta_min, g.theta_max, digest, len(meta))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(meta)
        fh.write(payload)
    return digest.hex()


def load_ensemble(path) -> FrameEnsemble:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DataFormatError(f"{path}: file too short for a frame header")
    magic, version, n_frames, n_points, tmin, tmax, digest, meta_len = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    start = _HEADER.size + meta_len
    payload = raw[start:]
    if len(payload) != n_frames * n_points * 8:
        raise DataFormatError(f"{path}: payload has {len(payload)} bytes, expected {n_frames * n_points * 8}")
    if hashlib.sha256(payload).digest() != digest:
        raise DataFormatError(f"{path}: checksum mismatch")
    try:
        meta = json.loads(raw[_HEADER.size:start].decode())
    except ValueError as exc:
        raise DataFormatError(f"{path}: unreadable metadata ({exc})") from None
    if n_frames < 2:
        raise DataFormatError(f"{path}: fewer than 2 frames ({n_frames})")
    frames = np.frombuffer(payload, dtype="<f8").reshape(n_frames, n_points).copy()
    try:
        grid = AngularGrid(tmin, tmax, int(n_points))
        config = AcquisitionConfig(**meta["config"])
    except (ConfigurationError, KeyError, TypeError) as exc:
        raise DataFormatError(f"{path}: invalid acquisition metadata ({exc})") from None
    return FrameEnsemble(frames, grid, config, meta.get("meta"))
