"""Resolution-versus-noise analysis for pixel pitch selection.

A sinusoidal scene of frequency ``f0`` (cycles per micrometer) and photon
density ``l0`` (electrons per square micrometer), imaged through a pixel of
pitch ``p``, keeps a noise-free peak-to-trough contrast of

    c(f0) = l0 * p * sin(pi * p * f0) / (pi * f0)       [electrons]

while the measured noise pools to a frequency-independent deviation

    sigma = sqrt(sigma_pre^2 + sigma_post^2 / g^2 + l0 * p^2 / 2).

The highest frequency with c/sigma above a threshold defines the effective
resolution of that pitch at that light level; sweeping pitches gives the
light-dependent optimal pitch, realized in hardware by binning unit pixels.

Note on the contrast prefactor: expanding the box-filtered sinusoid gives
peak-to-trough amplitude linear in p (the form used here).  A variant with a
p^2 prefactor is available behind ``contrast_p_squared=True`` for
compatibility with material that quotes that form; it only rescales contrast
and leaves all argmax decisions over frequency unchanged for fixed p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .sensor import SensorConfig

BIN_LADDER = (1, 2, 4, 8)  # linear bin factors; N = k*k


@dataclass(frozen=True)
class TheoryParams:
    """Sweep configuration: SNR threshold, candidate pitches (micrometers,
    ascending) and photon-density grid (electrons per square micrometer,
    ascending)."""

    snr_t: float = 4.0
    pitch_candidates: tuple = (0.5, 1.0, 2.0, 4.0)
    light_grid: tuple = ()

    def __post_init__(self):
        if self.snr_t <= 0:
            raise ConfigError("snr_t must be positive")
        p = np.asarray(self.pitch_candidates, dtype=float)
        if p.size == 0 or np.any(p <= 0) or np.any(np.diff(p) <= 0):
            raise ConfigError("pitch candidates must be positive and strictly ascending")
        if len(self.light_grid):
            l = np.asarray(self.light_grid, dtype=float)
            if np.any(l <= 0) or np.any(np.diff(l) <= 0):
                raise ConfigError("light grid must be positive and strictly ascending")


def contrast(freq: float, photon_density: float, pitch: float,
             contrast_p_squared: bool = False) -> float:
    """Peak-to-trough contrast of the box-filtered sinusoid, in electrons.

    Continuous at freq -> 0 where it tends to photon_density * pitch^2.
    Frequencies past the first response zero (1/pitch) are out of the
    modeled regime and rejected.
    """
    if photon_density <= 0 or pitch <= 0:
        raise ConfigError("photon density and pitch must be positive")
    if freq < 0 or freq > 1.0 / pitch:
        raise ConfigError("frequency must lie in [0, 1/pitch]")
    scale = pitch * pitch if contrast_p_squared else pitch
    if freq == 0:
        return photon_density * pitch * pitch * (pitch if contrast_p_squared else 1.0)
    return photon_density * scale * math.sin(math.pi * pitch * freq) / (math.pi * freq)


def noise_sigma(photon_density: float, pitch: float, gain: float,
                config: SensorConfig) -> float:
    """Pooled standard deviation of shot plus read noise for a pitch-p pixel;
    independent of the signal frequency."""
    if photon_density < 0 or pitch <= 0 or gain <= 0:
        raise ConfigError("inputs must be positive")
    var = (config.sigma_pre ** 2 + config.sigma_post ** 2 / gain ** 2
           + photon_density * pitch * pitch / 2.0)
    return math.sqrt(var)


def cutoff_frequency(photon_density: float, pitch: float, gain: float,
                     snr_t: float, config: SensorConfig,
                     rel_tol: float = 1e-9,
                     contrast_p_squared: bool = False) -> float | None:
    """Highest frequency whose contrast-to-noise ratio reaches ``snr_t``.

    Contrast decreases strictly on (0, 1/pitch) while the noise level is
    flat, so the crossing is unique and bisection suffices.  Returns None
    when even the zero-frequency contrast falls short: nothing is resolved
    at this pitch and light level (distinct from a cutoff of 0).
    """
    sigma = noise_sigma(photon_density, pitch, gain, config)
    target = snr_t * sigma
    if contrast(0.0, photon_density, pitch, contrast_p_squared) < target:
        return None
    lo, hi = 0.0, 1.0 / pitch
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if contrast(mid, photon_density, pitch, contrast_p_squared) >= target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def optimal_pitch(photon_density: float, gain: float, params: TheoryParams,
                  config: SensorConfig,
                  contrast_p_squared: bool = False) -> tuple[float | None, dict]:
    """Pitch with the highest cutoff frequency at this light level.

    Candidates that resolve nothing are excluded; exact ties go to the
    smaller pitch.  Returns (pitch or None, {pitch: cutoff}); None means no
    candidate resolves anything and the caller should bin maximally.
    """
    cutoffs = {}
    best = None
    for p in params.pitch_candidates:
        fc = cutoff_frequency(photon_density, p, gain, params.snr_t, config,
                              contrast_p_squared=contrast_p_squared)
        cutoffs[p] = fc
        if fc is None:
            continue
        if best is None or fc > best[1] + 1e-15:
            best = (p, fc)
    return (None, cutoffs) if best is None else (best[0], cutoffs)


@dataclass(frozen=True)
class PitchCurve:
    """Sweep result: optimal pitch and its cutoff per light level, plus the
    full cutoff table."""

    lights: np.ndarray
    pitches: np.ndarray
    cutoffs: np.ndarray        # shape (len(lights), len(pitches)); NaN = unresolvable
    best_pitch: np.ndarray     # NaN where nothing resolves


def sweep_pitch(params: TheoryParams, config: SensorConfig,
                gain: float = 1.0,
                contrast_p_squared: bool = False) -> PitchCurve:
    """Evaluate cutoff frequencies across the light grid and pick optima."""
    lights = np.asarray(params.light_grid, dtype=float)
    pitches = np.asarray(params.pitch_candidates, dtype=float)
    if lights.size == 0:
        raise ConfigError("light grid is empty")
    table = np.full((lights.size, pitches.size), np.nan)
    best = np.full(lights.size, np.nan)
    for i, l0 in enumerate(lights):
        p_star, cutoffs = optimal_pitch(l0, gain, params, config,
                                        contrast_p_squared=contrast_p_squared)
        for j, p in enumerate(pitches):
            if cutoffs[p] is not None:
                table[i, j] = cutoffs[p]
        if p_star is not None:
            best[i] = p_star
    return PitchCurve(lights=lights, pitches=pitches, cutoffs=table,
                      best_pitch=best)


@dataclass(frozen=True)
class BinLut:
    """Monotone step function from photon density to bin factor N."""

    lights: np.ndarray
    factors: np.ndarray
    unit_pitch: float
    snr_t: float
    gain: float

    def lookup(self, photon_density: float) -> int:
        """N for the nearest grid light level at or below the query (the
        dimmest grid entry for anything dimmer)."""
        idx = np.searchsorted(self.lights, photon_density, side="right") - 1
        return int(self.factors[max(idx, 0)])

    def to_json_dict(self) -> dict:
        return {
            "unit_pitch": self.unit_pitch,
            "snr_t": self.snr_t,
            "gain": self.gain,
            "lights": self.lights.tolist(),
            "factors": self.factors.tolist(),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "BinLut":
        return cls(lights=np.asarray(doc["lights"], dtype=float),
                   factors=np.asarray(doc["factors"], dtype=int),
                   unit_pitch=doc["unit_pitch"], snr_t=doc["snr_t"],
                   gain=doc["gain"])


def light_to_bin_lut(params: TheoryParams, config: SensorConfig,
                     unit_pitch: float, gain: float = 1.0,
                     contrast_p_squared: bool = False) -> BinLut:
    """Tabulate the optimal bin factor N = (p*/unit_pitch)^2 over the light
    grid.  Light levels where nothing resolves take the maximum bin factor."""
    expected = tuple(unit_pitch * k for k in BIN_LADDER)
    got = tuple(params.pitch_candidates)
    if len(got) != len(expected) or any(
            abs(a - b) > 1e-12 * b for a, b in zip(got, expected)):
        raise ConfigError(
            f"pitch candidates must be unit_pitch * {BIN_LADDER}")
    curve = sweep_pitch(params, config, gain,
                        contrast_p_squared=contrast_p_squared)
    factors = np.empty(curve.lights.size, dtype=int)
    for i, p_star in enumerate(curve.best_pitch):
        if math.isnan(p_star):
            factors[i] = BIN_LADDER[-1] ** 2
        else:
            factors[i] = int(round((p_star / unit_pitch) ** 2))
    return BinLut(lights=curve.lights, factors=factors,
                  unit_pitch=unit_pitch, snr_t=params.snr_t, gain=gain)
