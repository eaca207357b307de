"""Headway fitting and aggregate-traffic-to-lane-profile mapping."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, SampleSizeError
from .lanechange import LaneProfile

MIN_FIT_SAMPLES = 30
KMH_TO_MS = 1.0 / 3.6
DEFAULT_SIGMA = 0.8
DEFAULT_T_LC = 3.0
DEFAULT_S0 = 7.0


@dataclass(frozen=True)
class HeadwaySample:
    """Observed headway distances (m) for one lane."""

    values: np.ndarray
    lane_id: int = 0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1:
            raise ParameterError("headway sample must be one-dimensional")


@dataclass(frozen=True)
class TrafficSpec:
    """Aggregate descriptors in place of per-lane headway fits.

    rho_l: traffic density (veh/h/ln); delta: desired time headway (s);
    s0: standstill distance (m); speeds_kmh: per-lane desired speeds,
    left to right; sigma_default: lognormal log-sd assumed for every lane.
    """

    rho_l: float
    delta: float
    speeds_kmh: tuple
    s0: float = DEFAULT_S0
    sigma_default: float = DEFAULT_SIGMA
    t_lc: float = DEFAULT_T_LC

    def __post_init__(self):
        object.__setattr__(self, "speeds_kmh",
                           tuple(float(v) for v in self.speeds_kmh))
        if not (self.rho_l > 0):
            raise ParameterError("rho_l must be positive")
        if not (self.delta > 0):
            raise ParameterError("delta must be positive")
        if self.s0 < 0:
            raise ParameterError("s0 must be >= 0")
        if self.sigma_default < 0:
            raise ParameterError("sigma_default must be >= 0")
        if len(self.speeds_kmh) < 2:
            raise ParameterError("need at least 2 lane speeds")
        if any(v <= 0 for v in self.speeds_kmh):
            raise ParameterError("lane speeds must be positive")


def fit_lognormal(sample: HeadwaySample):
    """(mu, sigma) of the lognormal fitting the headway sample.

    mu is the mean of the log-values, sigma the unbiased (n-1) standard
    deviation; requires at least 30 strictly positive observations.
    """
    vals = sample.values
    if vals.size < MIN_FIT_SAMPLES:
        raise SampleSizeError(
            f"need at least {MIN_FIT_SAMPLES} headways, got {vals.size}")
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        bad = int(np.argmax((vals <= 0) | ~np.isfinite(vals)))
        raise ParameterError(
            f"headway values must be positive and finite "
            f"(offending entry {bad + 1}: {vals[bad]})")
    logs = np.log(vals)
    return float(np.mean(logs)), float(np.std(logs, ddof=1))


def mean_distance_headway(rho_l: float, v_ms: float) -> float:
    """Average front-to-front spacing (m) at density rho_l and speed v."""
    return v_ms * 3600.0 / rho_l


def profiles_from_spec(spec: TrafficSpec):
    """LaneProfiles matching the aggregate density, headway and speeds.

    Per lane: the time headway is 3600/rho_l seconds, so the mean distance
    headway is v*3600/rho_l; mu is chosen so the lognormal mean equals it
    (mu = ln m - sigma^2/2); the critical gap is s0 + delta*v.
    """
    profiles = []
    for v_kmh in spec.speeds_kmh:
        v = v_kmh * KMH_TO_MS
        m = mean_distance_headway(spec.rho_l, v)
        sigma = spec.sigma_default
        profiles.append(LaneProfile(
            v=v,
            mu=float(np.log(m) - sigma * sigma / 2.0),
            sigma=sigma,
            g_crit=spec.s0 + spec.delta * v,
            t_lc=spec.t_lc,
        ))
    return profiles


def read_headway_file(path, lane_id: int = 0) -> HeadwaySample:
    """Single-column text file of headways in meters; optional header line.

    Raises ParameterError naming the first malformed or nonpositive line.
    """
    values = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            try:
                val = float(text)
            except ValueError:
                if lineno == 1:  # tolerate a header label
                    continue
                raise ParameterError(
                    f"{path}: line {lineno}: not a number: {text!r}")
            if not (val > 0) or not np.isfinite(val):
                raise ParameterError(
                    f"{path}: line {lineno}: headway must be positive, "
                    f"got {text}")
            values.append(val)
    return HeadwaySample(values=np.asarray(values), lane_id=lane_id)
