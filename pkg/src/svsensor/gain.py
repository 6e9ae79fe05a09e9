"""Spatially-varying gain planning.

The planners pick, for each region or pixel, the largest gain that keeps the
amplified signal safely below full well.  With an estimated level ``m`` the
planned gain solves

    well_capacity = g * m + eta * g * sqrt(m)

so the Gaussian-approximated amplified signal sits ``eta`` standard
deviations of shot noise below saturation (eta = 2 leaves roughly a 2.2%
saturation probability).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import sensor as sensor_mod
from .errors import ConfigError, DataError, ShapeError
from .sensor import (PhotonEstimate, RadianceMap, RawCapture, SensorConfig,
                     dequantize)


@dataclass(frozen=True)
class GainMap:
    """A readout gain plan.

    mode      'constant', 'per_roi' or 'per_pixel'
    roi_size  side of the square ROI grid (per_roi mode)
    values    scalar, per-ROI grid, or per-pixel array of gains
    eta       saturation-headroom parameter the plan was built with
    """

    mode: str
    values: np.ndarray
    roi_size: int | None = None
    eta: float = 0.0

    def __post_init__(self):
        if self.mode not in ("constant", "per_roi", "per_pixel"):
            raise ConfigError(f"unknown gain map mode {self.mode!r}")
        vals = np.asarray(self.values, dtype=np.float64)
        if self.mode == "constant" and vals.ndim != 0:
            raise ShapeError("constant mode takes a scalar value")
        if self.mode != "constant" and vals.ndim != 2:
            raise ShapeError("per_roi/per_pixel modes take a 2-D value grid")
        if self.mode == "per_roi" and (self.roi_size is None or self.roi_size < 1):
            raise ConfigError("per_roi mode needs a positive roi_size")
        if self.eta < 0:
            raise ConfigError("eta must be nonnegative")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def expand(self, height: int, width: int) -> np.ndarray:
        """Per-pixel gain array for an image of the given size."""
        if self.mode == "constant":
            return np.full((height, width), float(self.values))
        if self.mode == "per_pixel":
            if self.values.shape != (height, width):
                raise ShapeError("per_pixel gain map does not match image size")
            return np.asarray(self.values)
        r = self.roi_size
        rows = -(-height // r)
        cols = -(-width // r)
        if self.values.shape != (rows, cols):
            raise ShapeError(
                f"per_roi gain grid {self.values.shape} does not cover a "
                f"{height}x{width} image at roi_size={r}")
        full = np.repeat(np.repeat(self.values, r, axis=0), r, axis=1)
        return full[:height, :width]

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "roi_size": self.roi_size,
            "eta": self.eta,
            "shape": list(np.shape(self.values)),
            "values": np.asarray(self.values, dtype=float).ravel().tolist(),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "GainMap":
        vals = np.asarray(doc["values"], dtype=np.float64)
        shape = doc.get("shape", [])
        vals = vals.reshape(shape) if shape else vals.reshape(())
        return cls(mode=doc["mode"], values=vals,
                   roi_size=doc.get("roi_size"), eta=doc.get("eta", 0.0))


@dataclass
class PlanReport:
    """Diagnostics attached to a gain plan."""

    predicted_saturation_frac: float = 0.0
    gain_histogram: dict = field(default_factory=dict)
    empty_rois: list = field(default_factory=list)
    measured_saturation_frac: float | None = None


def gain_for_level(level: float, eta: float, config: SensorConfig) -> float:
    """Largest safe gain for an estimated photon level.

    Zero level means the pixel is dark and gets the maximum gain; the result
    is always clamped to the configured gain range.
    """
    if level < 0:
        raise ValueError("estimated level must be nonnegative")
    if eta < 0:
        raise ConfigError("eta must be nonnegative")
    if level == 0:
        return config.gain_max
    g = config.well_capacity / (level + eta * math.sqrt(level))
    return float(min(max(g, config.gain_min), config.gain_max))


def _gain_for_levels(levels: np.ndarray, eta: float,
                     config: SensorConfig) -> np.ndarray:
    """Vectorized gain rule; nonpositive levels map to gain_max."""
    m = np.asarray(levels, dtype=np.float64)
    safe = np.maximum(m, 0.0)
    with np.errstate(divide="ignore"):
        g = config.well_capacity / (safe + eta * np.sqrt(safe))
    g = np.where(safe > 0, g, config.gain_max)
    return np.clip(g, config.gain_min, config.gain_max)


def _tail_probability(z: np.ndarray) -> np.ndarray:
    """Upper Gaussian tail, vectorized."""
    return 0.5 * np.array([math.erfc(v / math.sqrt(2.0)) for v in np.atleast_1d(z)])


def plan_gain_roi(snapshot: PhotonEstimate, roi_size: int, eta: float,
                  config: SensorConfig) -> tuple[GainMap, PlanReport]:
    """Two-shot strategy: plan one gain per ROI from a constant-gain pilot.

    Each ROI gets the largest gain that protects its brightest valid pixel.
    ROIs whose pilot pixels are all saturated fall back to gain_min and are
    listed in the report.
    """
    if roi_size < 8:
        raise ConfigError("roi_size must be at least 8")
    h, w = snapshot.data.shape
    rows = -(-h // roi_size)
    cols = -(-w // roi_size)
    gains = np.empty((rows, cols))
    report = PlanReport()
    tails = []
    for i in range(rows):
        for j in range(cols):
            blk = snapshot.data[i * roi_size:(i + 1) * roi_size,
                                j * roi_size:(j + 1) * roi_size]
            ok = snapshot.validity_mask[i * roi_size:(i + 1) * roi_size,
                                        j * roi_size:(j + 1) * roi_size]
            if not ok.any():
                gains[i, j] = config.gain_min
                report.empty_rois.append((i, j))
                continue
            peak = max(float(blk[ok].max()), 0.0)
            g = gain_for_level(peak, eta, config)
            gains[i, j] = g
            if peak > 0:
                margin = config.well_capacity / g - peak
                tails.append(margin / math.sqrt(peak))
    if tails:
        report.predicted_saturation_frac = float(
            np.mean(_tail_probability(np.asarray(tails))))
    report.gain_histogram = dict(Counter(np.round(gains.ravel(), 6).tolist()))
    gm = GainMap(mode="per_roi", values=gains, roi_size=roi_size, eta=eta)
    return gm, report


def next_gain(digit: int, gain: float, eta: float,
              config: SensorConfig) -> float:
    """Streaming update rule: gain for the next pixel from the previous
    readout.  A saturated readout resets the next gain to 1."""
    if digit >= config.digital_max:
        return 1.0
    level = dequantize(digit, config) / gain
    if level <= 0:
        return config.gain_max
    return gain_for_level(float(level), eta, config)


def plan_gain_per_pixel(readouts, eta: float,
                        config: SensorConfig) -> tuple[np.ndarray, PlanReport]:
    """Single-shot streaming strategy over a raster-ordered readout.

    ``readouts`` yields (digit, gain) pairs in scan order (row-major, the
    gain carrying across row boundaries).  Returns the gain to apply to the
    pixel after each readout; entry k depends only on readouts up to k.
    Inherently sequential; single-threaded by contract.
    """
    gains = []
    saturated = 0
    count = 0
    for digit, gain in readouts:
        gains.append(next_gain(int(digit), float(gain), eta, config))
        saturated += int(digit >= config.digital_max)
        count += 1
    report = PlanReport(
        measured_saturation_frac=(saturated / count) if count else 0.0,
        gain_histogram=dict(Counter(np.round(gains, 6).tolist())),
    )
    return np.asarray(gains), report


def capture_adaptive(scene: RadianceMap, eta: float, config: SensorConfig,
                     seed: int = 0) -> tuple[RawCapture, PlanReport]:
    """Closed-loop per-pixel capture: each readout sets the next pixel's gain.

    The physical randomness (photon arrivals and read noise) does not depend
    on the gain choice, so those draws are vectorized up front; only the
    cheap gain recursion runs sequentially.  The first pixel of the frame
    uses gain 1.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    flat = scene.data.ravel()
    n = flat.size
    photons = sensor_mod.draw_photons(rng, flat * config.quantum_efficiency)
    n_pre = rng.normal(0.0, config.sigma_pre, n)
    n_post = rng.normal(0.0, config.sigma_post, n)

    slope = config.adc_slope
    black = config.black_level
    dmax = config.digital_max
    lwc = config.well_capacity
    gmin, gmax = config.gain_min, config.gain_max

    digits = np.empty(n, dtype=np.uint16)
    gains = np.empty(n, dtype=np.float64)
    g = 1.0
    for k in range(n):
        gains[k] = g
        v = g * (photons[k] + n_pre[k]) + n_post[k]
        d = int(min(max(round(v * slope) + black, 0), dmax))
        digits[k] = d
        if d == dmax:
            g = 1.0
        else:
            level = (d - black) / slope / g
            if level <= 0:
                g = gmax
            else:
                g = min(max(lwc / (level + eta * math.sqrt(level)), gmin), gmax)

    digits = digits.reshape(scene.data.shape)
    gains = gains.reshape(scene.data.shape)
    sat = digits == dmax
    raw = RawCapture(digits=digits, gain=gains,
                     bin_factor=np.ones_like(digits, dtype=np.int64),
                     saturation_mask=sat, seed=seed,
                     meta={"strategy": "per_pixel", "eta": eta})
    report = PlanReport(measured_saturation_frac=float(sat.mean()))
    return raw, report


def gain_from_vignetting(vignette: np.ndarray, roi_size: int, eta: float,
                         config: SensorConfig) -> GainMap:
    """Gain map compensating lens falloff: per-ROI gain proportional to the
    inverse transmission, normalized so the ROI at the image center gets
    gain 1, then clamped to the configured range."""
    t = np.asarray(vignette, dtype=np.float64)
    if t.ndim != 2:
        raise ShapeError("vignette map must be 2-D")
    if np.any(t <= 0) or np.any(t > 1):
        raise DataError("transmission values must lie in (0, 1]")
    h, w = t.shape
    rows = -(-h // roi_size)
    cols = -(-w // roi_size)
    mean_t = np.empty((rows, cols))
    for i in range(rows):
        for j in range(cols):
            mean_t[i, j] = t[i * roi_size:(i + 1) * roi_size,
                             j * roi_size:(j + 1) * roi_size].mean()
    center = mean_t[min((h // 2) // roi_size, rows - 1),
                    min((w // 2) // roi_size, cols - 1)]
    gains = np.clip(center / mean_t, config.gain_min, config.gain_max)
    return GainMap(mode="per_roi", values=gains, roi_size=roi_size, eta=eta)


def quantize_to_ladder(gain_map: GainMap, ladder) -> GainMap:
    """Snap planned gains downward onto a discrete gain ladder (e.g. ISO
    steps or the gains present in a captured stack).  Snapping down keeps the
    saturation guarantee."""
    steps = np.sort(np.asarray(ladder, dtype=np.float64))
    if steps.size == 0:
        raise ConfigError("empty gain ladder")
    vals = np.asarray(gain_map.values, dtype=np.float64)
    idx = np.searchsorted(steps, vals + 1e-12, side="right") - 1
    if np.any(idx < 0):
        raise DataError("planned gain below the lowest ladder step")
    snapped = steps[idx]
    return GainMap(mode=gain_map.mode, values=snapped.reshape(np.shape(vals)),
                   roi_size=gain_map.roi_size, eta=gain_map.eta)
