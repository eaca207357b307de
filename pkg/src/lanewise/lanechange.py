"""Scenario reduction and multilane success-probability composition.

The two-lane case reduces to a table query: traveling d_i = d - t*v1 while
searching, the ego covers d_r = d_i*|1 - v2/v1| relative to the target lane
and needs a gap of g_crit somewhere along d_e = d_r + g_crit, which after
rescaling by 1/d_e is the tabulated unit-interval question.  More lanes
chain through the total-probability convolution

    F_n(d) = integral K(d - x) dF_{n-1}(x),

where the kernel K is the two-lane probability into the final lane.  Each
F_j has a step at its minimum maneuver distance (the probability of an
immediately accepted gap); the step is carried explicitly and convolved
exactly, while the smooth remainder is differentiated by central differences
and integrated with the trapezoid rule.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .qtable import AbstractGapQuery, QTable, lookup, lookup_many

DEFAULT_GRID_STEP = 5.0
DEFAULT_SAMPLE_STEP = 10.0


class Impossible:
    """Marker: the goal cannot be reached (probability 0)."""

    def __repr__(self):
        return "IMPOSSIBLE"


IMPOSSIBLE = Impossible()


@dataclass(frozen=True)
class LaneProfile:
    """Per-lane traffic parameters.

    v: average speed (m/s); mu/sigma: lognormal headway-distance
    log-parameters (meters inside the log); g_crit: critical gap (m);
    t_lc: duration of a lane change into this lane (s).
    """

    v: float
    mu: float
    sigma: float
    g_crit: float
    t_lc: float = 3.0

    def __post_init__(self):
        if not (self.v > 0):
            raise ParameterError(f"lane speed must be positive, got {self.v}")
        if not (self.g_crit > 0):
            raise ParameterError(
                f"critical gap must be positive, got {self.g_crit}")
        if self.sigma < 0:
            raise ParameterError(f"sigma must be >= 0, got {self.sigma}")
        if self.t_lc < 0:
            raise ParameterError(f"t_lc must be >= 0, got {self.t_lc}")


@dataclass(frozen=True)
class Scenario:
    """Ordered lanes (index 0 = start lane) and the goal distance in meters.

    Only the first lane's speed matters for lane 1; its headway and gap
    fields are ignored.
    """

    lanes: tuple
    goal_distance: float

    def __post_init__(self):
        lanes = tuple(self.lanes)
        object.__setattr__(self, "lanes", lanes)
        if len(lanes) < 2:
            raise ParameterError("a scenario needs at least 2 lanes")
        if not all(isinstance(l, LaneProfile) for l in lanes):
            raise ParameterError("lanes must be LaneProfile instances")
        if not (self.goal_distance > 0):
            raise ParameterError("goal distance must be positive")
        if not (100.0 <= self.goal_distance <= 5000.0):
            warnings.warn(
                f"goal distance {self.goal_distance} m outside the intended "
                "100-5000 m range", stacklevel=3)

    @property
    def n_lanes(self):
        return len(self.lanes)

    def min_maneuver_distance(self):
        """Road distance consumed if every lane change starts instantly."""
        total = 0.0
        for j in range(1, len(self.lanes)):
            total += self.lanes[j].t_lc * self.lanes[j - 1].v
        return total


@dataclass(frozen=True)
class ProbabilityProfile:
    """Sampled success-probability curve for one scenario."""

    distances: np.ndarray
    probabilities: np.ndarray
    scenario: Scenario

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=np.float64)
        p = np.asarray(self.probabilities, dtype=np.float64)
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "probabilities", p)
        if d.shape != p.shape:
            raise ParameterError("distances and probabilities differ in size")
        if np.any(p < 0) or np.any(p > 1):
            raise ParameterError("probabilities outside [0, 1]")


# ---------------------------------------------------------------------------
# Two-lane reduction

def reduce_two_lane(d: float, v1: float, lane2: LaneProfile):
    """Map (d, v1, lane2) to the abstract unit-interval query.

    Returns IMPOSSIBLE when the maneuver time alone exhausts the distance.
    """
    if not (d > 0):
        raise ParameterError(f"distance must be positive, got {d}")
    if not (v1 > 0):
        raise ParameterError(f"start-lane speed must be positive, got {v1}")
    d_i = d - lane2.t_lc * v1
    if d_i <= 0:
        return IMPOSSIBLE
    d_r = d_i * abs(1.0 - lane2.v / v1)
    d_e = d_r + lane2.g_crit
    return AbstractGapQuery(g=lane2.g_crit / d_e,
                            mu=lane2.mu - math.log(d_e),
                            sigma=lane2.sigma)


def p_two_lane(d: float, v1: float, lane2: LaneProfile,
               table: QTable) -> float:
    """Success probability of one lane change within d meters."""
    query = reduce_two_lane(d, v1, lane2)
    if query is IMPOSSIBLE:
        return 0.0
    return lookup(table, query)


def _two_lane_grid(ds, v1, lane2, table):
    """Vectorized p_two_lane over an array of distances (0 where d <= 0 or
    the maneuver cannot finish)."""
    ds = np.asarray(ds, dtype=np.float64)
    d_i = ds - lane2.t_lc * v1
    feasible = d_i > 0
    d_i = np.where(feasible, d_i, 1.0)
    d_r = d_i * abs(1.0 - lane2.v / v1)
    d_e = d_r + lane2.g_crit
    out = lookup_many(table, lane2.g_crit / d_e,
                      lane2.mu - np.log(d_e), lane2.sigma)
    return np.where(feasible, out, 0.0)


def _step_height(lane, table):
    """Limit of the two-lane probability just past the maneuver distance:
    the chance of an instantly accepted gap (d_r -> 0)."""
    return float(lookup_many(
        table, 1.0, lane.mu - math.log(lane.g_crit), lane.sigma))


# ---------------------------------------------------------------------------
# Multilane composition

def _central_density(C, h):
    f = np.empty_like(C)
    f[1:-1] = (C[2:] - C[:-2]) / (2.0 * h)
    f[0] = (C[1] - C[0]) / h
    f[-1] = (C[-1] - C[-2]) / h
    return np.maximum(f, 0.0)  # clamps tiny negative differencing noise


def _trapz_convolve(K, f, h, method="direct"):
    n = K.size
    if method == "fft":
        nfft = 1 << (2 * n - 1).bit_length()
        full = np.fft.irfft(np.fft.rfft(K, nfft) * np.fft.rfft(f, nfft),
                            nfft)[:n]
    else:
        full = np.convolve(K, f)[:n]
    return h * (full - 0.5 * (K * f[0] + K[0] * f))


def _shift_interp(xs, arr, shift):
    return np.interp(xs - shift, xs, arr, left=0.0, right=float(arr[-1]))


def success_curve(scenario: Scenario, table: QTable,
                  grid_step: float = DEFAULT_GRID_STEP, d_max=None,
                  method: str = "direct"):
    """Success probability on a uniform distance grid.

    Returns (xs, curve) where curve[k] is the probability of reaching the
    final lane within xs[k] meters.
    """
    if not (grid_step > 0):
        raise ParameterError("grid_step must be positive")
    if method not in ("direct", "fft"):
        raise ParameterError(f"unknown convolution method {method!r}")
    if d_max is None:
        d_max = scenario.goal_distance
    npts = max(2, int(round(d_max / grid_step)) + 1)
    xs = np.linspace(0.0, d_max, npts)
    h = xs[1] - xs[0]

    lanes = scenario.lanes
    v_prev = lanes[0].v
    # leading stage: its full curve, split into step + smooth remainder
    step_at = lanes[1].t_lc * v_prev
    step_mass = _step_height(lanes[1], table)
    C = _two_lane_grid(xs, v_prev, lanes[1], table)
    C = np.maximum(C - step_mass * (xs > step_at), 0.0)

    for j in range(2, len(lanes)):
        v_prev = lanes[j - 1].v
        lane = lanes[j]
        y_min = lane.t_lc * v_prev
        B = _step_height(lane, table)
        K = _two_lane_grid(xs, v_prev, lane, table)
        Kc = np.maximum(K - B * (xs > y_min), 0.0)
        f = _central_density(C, h)
        conv = _trapz_convolve(Kc, f, h, method)
        C = (step_mass * _shift_interp(xs, Kc, step_at)
             + B * _shift_interp(xs, C, y_min)
             + conv)
        C = np.clip(C, 0.0, 1.0)
        step_mass *= B
        step_at += y_min

    curve = np.clip(C + step_mass * (xs > step_at), 0.0, 1.0)
    return xs, curve


def p_multilane(scenario: Scenario, table: QTable,
                grid_step: float = DEFAULT_GRID_STEP,
                method: str = "direct") -> float:
    """Probability of reaching the last lane within the goal distance."""
    if scenario.n_lanes == 2:
        return p_two_lane(scenario.goal_distance, scenario.lanes[0].v,
                          scenario.lanes[1], table)
    _, curve = success_curve(scenario, table, grid_step, method=method)
    return float(curve[-1])


def profile(scenario: Scenario, table: QTable,
            sample_step: float = DEFAULT_SAMPLE_STEP,
            grid_step: float = DEFAULT_GRID_STEP,
            method: str = "direct") -> ProbabilityProfile:
    """Success probability sampled along distance, 0 to the goal."""
    if not (sample_step > 0):
        raise ParameterError("sample_step must be positive")
    d_max = scenario.goal_distance
    ds = np.arange(0.0, d_max + sample_step * 0.5, sample_step)
    if scenario.n_lanes == 2:
        probs = _two_lane_grid(ds, scenario.lanes[0].v, scenario.lanes[1],
                               table)
    else:
        xs, curve = success_curve(scenario, table, grid_step, d_max=d_max,
                                  method=method)
        probs = np.interp(ds, xs, curve)
    return ProbabilityProfile(distances=ds, probabilities=probs,
                              scenario=scenario)
