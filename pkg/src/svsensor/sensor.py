"""Physical sensor model: forward simulation to digital numbers and the inverse
photon estimator.

Signal chain for one pixel with expected photon arrival ``m`` (electrons after
quantum efficiency) and analog gain ``g``:

    l ~ Poisson(m)                      photon shot noise
    v = g * (l + n_pre) + n_post        n_pre ~ N(0, sigma_pre^2), n_post ~ N(0, sigma_post^2)
    digit = clip(rint(v * slope) + black_level, 0, digital_max)

The ADC slope is fixed so that a full well at unit gain spans the digital
range above the black level: ``slope = (digital_max - black_level) / well_capacity``
digits per amplified electron.  Saturation therefore occurs when
``g * l`` approaches the well capacity, which is exactly the operating point
the gain planner engineers against.  Negative excursions of the dark noise
land below the black level and clip only at digit 0, so dark frames keep
their full (symmetric) noise statistics.

Dark current is not modeled: at the exposure times of interest it is
negligible next to read noise.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, ShapeError

CONFIG_FIELDS = (
    "pixel_pitch", "well_capacity", "sigma_pre", "sigma_post",
    "bit_depth", "black_level_frac", "gain_min", "gain_max",
    "quantum_efficiency",
)


@dataclass(frozen=True)
class SensorConfig:
    """Physical description of the sensor.

    pixel_pitch        unit (pre-binning) pixel pitch in micrometers
    well_capacity      electrons a pixel holds at saturation
    sigma_pre          RMS read noise injected before the amplifier, electrons
    sigma_post         RMS read noise injected after the amplifier, in
                       amplified-electron units
    bit_depth          ADC bits
    black_level_frac   black level as a fraction of digital full scale
    gain_min/gain_max  allowed analog gain range (unitless, >= 1)
    quantum_efficiency fraction of photons converted to electrons
    """

    pixel_pitch: float = 0.5
    well_capacity: float = 1000.0
    sigma_pre: float = 0.33
    sigma_post: float = 3.31
    bit_depth: int = 12
    black_level_frac: float = 0.05
    gain_min: float = 1.0
    gain_max: float = 27.0
    quantum_efficiency: float = 1.0

    def __post_init__(self):
        if self.well_capacity <= 0:
            raise ConfigError("well_capacity must be positive")
        if self.sigma_pre < 0 or self.sigma_post < 0:
            raise ConfigError("read noise cannot be negative")
        if not (1 <= self.gain_min <= self.gain_max):
            raise ConfigError("need 1 <= gain_min <= gain_max")
        if not (0 <= self.black_level_frac < 1):
            raise ConfigError("black_level_frac must lie in [0, 1)")
        if not (8 <= self.bit_depth <= 16):
            raise ConfigError("bit_depth must lie in [8, 16]")
        if not (0 < self.quantum_efficiency <= 1):
            raise ConfigError("quantum_efficiency must lie in (0, 1]")
        if self.pixel_pitch <= 0:
            raise ConfigError("pixel_pitch must be positive")

    @property
    def digital_max(self) -> int:
        return (1 << self.bit_depth) - 1

    @property
    def black_level(self) -> int:
        return int(np.rint(self.black_level_frac * self.digital_max))

    @property
    def adc_slope(self) -> float:
        """Digits per amplified electron."""
        return (self.digital_max - self.black_level) / self.well_capacity

    def check_gain(self, gain) -> None:
        g = np.asarray(gain, dtype=float)
        if np.any(g < self.gain_min) or np.any(g > self.gain_max):
            raise ConfigError(
                f"gain outside [{self.gain_min}, {self.gain_max}]")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SensorConfig":
        doc = json.loads(text)
        unknown = set(doc) - set(CONFIG_FIELDS)
        if unknown:
            raise ConfigError(f"unknown sensor config fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class RadianceMap:
    """Noise-free expected photon arrivals per unit pixel per exposure."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError("radiance map must be 2-D")
        if not np.all(np.isfinite(arr)):
            raise ValueError("radiance map contains non-finite values")
        if np.any(arr < 0):
            raise ValueError("radiance map contains negative values")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class RawCapture:
    """Quantized digital image plus the per-pixel readout parameters needed
    to invert it.

    ``gain`` is the nominal decode gain per pixel (for binned readouts this
    already includes the bin factor, so decoding is uniformly
    ``dequantize(digits) / gain``).  ``bin_factor`` records how many unit
    pixels were combined under each output pixel.
    """

    digits: np.ndarray
    gain: np.ndarray
    bin_factor: np.ndarray
    saturation_mask: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.asarray(self.digits)
        if d.ndim != 2:
            raise ShapeError("digits must be 2-D")
        g = np.broadcast_to(np.asarray(self.gain, dtype=np.float64), d.shape).copy()
        b = np.broadcast_to(np.asarray(self.bin_factor, dtype=np.int64), d.shape).copy()
        m = np.broadcast_to(np.asarray(self.saturation_mask, dtype=bool), d.shape).copy()
        for arr in (d, g, b, m):
            arr.flags.writeable = False
        object.__setattr__(self, "digits", d)
        object.__setattr__(self, "gain", g)
        object.__setattr__(self, "bin_factor", b)
        object.__setattr__(self, "saturation_mask", m)

    @property
    def height(self) -> int:
        return self.digits.shape[0]

    @property
    def width(self) -> int:
        return self.digits.shape[1]


@dataclass(frozen=True)
class PhotonEstimate:
    """Estimated photon counts; validity is false where saturation made the
    estimate unreliable."""

    data: np.ndarray
    validity_mask: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        m = np.asarray(self.validity_mask, dtype=bool)
        if d.shape != m.shape:
            raise ShapeError("estimate/validity shape mismatch")
        if not np.all(np.isfinite(d[m])):
            raise ValueError("non-finite estimate on valid pixels")
        d.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "validity_mask", m)


# ---------------------------------------------------------------- ADC stage

def quantize(voltage: np.ndarray, config: SensorConfig) -> np.ndarray:
    """Convert amplified-electron values to digital numbers.

    Round-half-to-even keeps the quantizer unbiased; the final digit clips to
    [0, digital_max] so values below the black level remain representable
    down to digit 0.
    """
    v = np.asarray(voltage, dtype=np.float64)
    d = np.rint(v * config.adc_slope) + config.black_level
    return np.clip(d, 0, config.digital_max).astype(np.uint16)


def dequantize(digits: np.ndarray, config: SensorConfig) -> np.ndarray:
    """Invert the ADC back to amplified-electron units (black level removed)."""
    d = np.asarray(digits, dtype=np.float64)
    return (d - config.black_level) / config.adc_slope


# ------------------------------------------------------------- simulation

def draw_photons(rng: np.random.Generator, mean_counts) -> np.ndarray:
    """Photon arrivals for the exposure.  Isolated so tests can swap in the
    noiseless limit (arrivals equal to their mean)."""
    return np.asarray(rng.poisson(mean_counts), dtype=np.float64)


def sample_voltage(mean_electrons, gain, config: SensorConfig,
                   rng: np.random.Generator) -> np.ndarray:
    """Draw the pre-ADC voltage for given expected electrons and gain."""
    m = np.asarray(mean_electrons, dtype=np.float64) * config.quantum_efficiency
    l = draw_photons(rng, m)
    n_pre = rng.normal(0.0, config.sigma_pre, size=m.shape)
    n_post = rng.normal(0.0, config.sigma_post, size=m.shape)
    return np.asarray(gain, dtype=np.float64) * (l + n_pre) + n_post


def simulate_pixel(mean_electrons: float, gain: float, config: SensorConfig,
                   rng: np.random.Generator) -> int:
    """Simulate a single pixel readout and return its digital number."""
    if mean_electrons < 0:
        raise ValueError("expected electrons must be nonnegative")
    config.check_gain(gain)
    v = sample_voltage(mean_electrons, gain, config, rng)
    return int(quantize(v, config)[()])


def _roi_grid(height: int, width: int, roi_size: int | None):
    """Row, column slices tiling the image; one whole-image tile if roi_size
    is None."""
    if roi_size is None:
        return [(slice(0, height), slice(0, width))]
    tiles = []
    for top in range(0, height, roi_size):
        for left in range(0, width, roi_size):
            tiles.append((slice(top, min(top + roi_size, height)),
                          slice(left, min(left + roi_size, width))))
    return tiles


def simulate_capture(scene: RadianceMap, gain_map, bin_map,
                     config: SensorConfig, seed: int = 0,
                     threads: int = 1) -> RawCapture:
    """Simulate a full capture of ``scene``.

    ``gain_map`` may be a scalar gain, a per-pixel gain array, or a
    ``GainMap`` plan; ``bin_map`` of None means unit pixels.  Non-trivial
    binning is delegated to ``readout.capture_spatially_varying``; here
    every output pixel is one unit pixel.

    Reproducibility contract: the RNG substream of each ROI is derived from
    (seed, roi index), so results are bit-identical regardless of how many
    worker threads execute the ROIs.
    """
    from .gain import GainMap  # local import: gain builds on sensor types

    if bin_map is not None:
        factors = getattr(bin_map, "factors", bin_map)
        if np.any(np.asarray(factors) != 1):
            from .readout import capture_spatially_varying
            raw, _ = capture_spatially_varying(scene, gain_map, bin_map,
                                               config, seed, threads=threads)
            return raw

    roi_size = None
    if isinstance(gain_map, GainMap):
        if gain_map.mode == "per_roi":
            roi_size = gain_map.roi_size
        gain_full = gain_map.expand(scene.height, scene.width)
    else:
        gain_full = np.broadcast_to(
            np.asarray(gain_map, dtype=np.float64),
            (scene.height, scene.width))
    if gain_full.shape != scene.data.shape:
        raise ShapeError("gain map does not conform to scene dimensions")
    config.check_gain(gain_full)

    tiles = _roi_grid(scene.height, scene.width, roi_size)
    streams = np.random.SeedSequence(seed).spawn(len(tiles))
    digits = np.empty(scene.data.shape, dtype=np.uint16)

    def run_tile(idx):
        rows, cols = tiles[idx]
        rng = np.random.default_rng(streams[idx])
        v = sample_voltage(scene.data[rows, cols], gain_full[rows, cols],
                           config, rng)
        digits[rows, cols] = quantize(v, config)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_tile, range(len(tiles))))
    else:
        for i in range(len(tiles)):
            run_tile(i)

    sat = digits == config.digital_max
    return RawCapture(digits=digits, gain=gain_full,
                      bin_factor=np.ones_like(digits, dtype=np.int64),
                      saturation_mask=sat, seed=seed)


def estimate_photons(raw: RawCapture, config: SensorConfig) -> PhotonEstimate:
    """Invert a capture to photon counts: dequantize and divide by gain.

    On unsaturated pixels the estimate is unbiased with variance
    ``m + sigma_pre^2 + sigma_post^2 / g^2``; saturated pixels are kept in
    the array but flagged invalid.
    """
    est = dequantize(raw.digits, config) / raw.gain
    return PhotonEstimate(data=est, validity_mask=~raw.saturation_mask)
