"""Time-Volume, Time-Flow and Volume-Flow curve construction.

The raw signal from a forced-exhalation maneuver is a uniformly sampled
exhaled-volume series.  Flow is obtained by forward finite differences and
the Volume-Flow curve by composing flow with the (first-attainment) inverse
of the volume trace.  A truncated, renormalized Gaussian kernel is used to
suppress sampling jitter before differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, InvalidCurve, NonMonotonicVolume

DEFAULT_DT = 0.010
VOLUME_TOL = 1e-9  # liters of backwards drift absorbed as float noise


@dataclass(frozen=True)
class TimeVolumeCurve:
    """Uniformly sampled exhaled volume in liters."""

    samples: np.ndarray
    dt: float = DEFAULT_DT

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size < 2:
            raise InvalidCurve("need at least two volume samples")
        if not np.all(np.isfinite(samples)):
            raise InvalidCurve("volume samples must be finite")
        if np.any(samples < 0):
            raise InvalidCurve("volumes must be non-negative")
        if self.dt <= 0:
            raise InvalidCurve("dt must be positive")

    def __len__(self):
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.dt


@dataclass(frozen=True)
class TimeFlowCurve:
    """Flow in liters/second on the same time grid as its source volumes."""

    samples: np.ndarray
    dt: float = DEFAULT_DT

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size < 2:
            raise InvalidCurve("need at least two flow samples")
        if not np.all(np.isfinite(samples)):
            raise InvalidCurve("flow samples must be finite")
        if self.dt <= 0:
            raise InvalidCurve("dt must be positive")

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class VolumeFlowCurve:
    """Flow as a function of exhaled volume (non-decreasing volumes)."""

    volumes: np.ndarray
    flows: np.ndarray

    def __post_init__(self):
        volumes = np.asarray(self.volumes, dtype=float)
        flows = np.asarray(self.flows, dtype=float)
        object.__setattr__(self, "volumes", volumes)
        object.__setattr__(self, "flows", flows)
        if volumes.ndim != 1 or volumes.size < 2:
            raise InvalidCurve("need at least two points")
        if volumes.shape != flows.shape:
            raise InvalidCurve("volumes and flows must have equal length")
        if not (np.all(np.isfinite(volumes)) and np.all(np.isfinite(flows))):
            raise InvalidCurve("curve values must be finite")
        if np.any(np.diff(volumes) < -VOLUME_TOL):
            raise NonMonotonicVolume("volumes must be non-decreasing")

    def __len__(self):
        return self.volumes.size

    @property
    def points(self):
        return list(zip(self.volumes.tolist(), self.flows.tolist()))

    def flow_at(self, v) -> np.ndarray:
        """Linearly interpolated flow at volume(s) v."""
        return np.interp(v, self.volumes, self.flows)


@dataclass(frozen=True)
class SmootherConfig:
    """Gaussian smoothing window: half-width k (samples) and sigma (samples)."""

    k: int = 5
    sigma: float = 2.0

    def __post_init__(self):
        if self.k < 0:
            raise InvalidArgument("window half-width k must be >= 0")
        if self.sigma <= 0:
            raise InvalidArgument("sigma must be > 0")


def gaussian_smooth(curve: TimeVolumeCurve, cfg: SmootherConfig = SmootherConfig()) -> TimeVolumeCurve:
    """Kernel-weighted mean with window truncated and renormalized at the ends.

    Each output sample is a convex combination of in-range input samples, so
    constants (and the input's min/max bounds) are preserved.  k = 0 is the
    identity.
    """
    x = curve.samples
    n = x.size
    if cfg.k == 0:
        return TimeVolumeCurve(x.copy(), curve.dt)
    num = np.zeros(n)
    den = np.zeros(n)
    for j in range(-cfg.k, cfg.k + 1):
        w = float(np.exp(-(j * j) / (2.0 * cfg.sigma**2)))
        lo = max(0, -j)
        hi = min(n, n - j)
        if lo >= hi:
            continue
        num[lo:hi] += w * x[lo + j : hi + j]
        den[lo:hi] += w
    return TimeVolumeCurve(num / den, curve.dt)


def differentiate_flow(curve: TimeVolumeCurve) -> TimeFlowCurve:
    """Forward difference flow; the final sample duplicates its predecessor."""
    v = curve.samples
    q = np.empty_like(v)
    q[:-1] = np.diff(v) / curve.dt
    q[-1] = q[-2]
    return TimeFlowCurve(q, curve.dt)


def volume_flow_curve(vol: TimeVolumeCurve, flow: TimeFlowCurve) -> VolumeFlowCurve:
    """Pair flow with volume, collapsing plateaus to their first attainment.

    A sample is kept only when its volume strictly exceeds every previously
    kept volume; equal-volume (or within-tolerance dipping) samples carry no
    new volume information and are dropped, keeping the span's first flow.
    """
    if len(vol) != len(flow):
        raise InvalidCurve("volume and flow series must have equal length")
    v = vol.samples
    q = flow.samples
    if np.any(np.diff(v) < -VOLUME_TOL):
        raise NonMonotonicVolume("volume series decreases beyond tolerance")
    keep = [0]
    last = v[0]
    for i in range(1, v.size):
        if v[i] > last:
            keep.append(i)
            last = v[i]
    if len(keep) < 2:
        raise InvalidCurve("curve collapses to fewer than two distinct volumes")
    idx = np.array(keep)
    return VolumeFlowCurve(v[idx], q[idx])


def resample_on_volume_grid(curve: VolumeFlowCurve, n_points: int) -> VolumeFlowCurve:
    """Linearly resample flow onto a uniform volume grid; endpoints exact."""
    if n_points < 2:
        raise InvalidArgument("n_points must be >= 2")
    grid = np.linspace(curve.volumes[0], curve.volumes[-1], n_points)
    flows = np.interp(grid, curve.volumes, curve.flows)
    return VolumeFlowCurve(grid, flows)
