"""Tabulated gap-finding probabilities on the unit interval.

``q(g, mu, sigma)`` is the probability that a unit-length window placed over
a point process with i.i.d. lognormal(mu, sigma) spacings contains a
contiguous in-window stretch of at least ``g`` between two consecutive
points.  Cells are estimated by Monte Carlo, tabulated on a 3-D grid and
served by trilinear interpolation.
"""
from __future__ import annotations

import math
import os
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import (
    ParameterError,
    TableChecksumError,
    TableFormatError,
    TableIntegrityError,
    TableTruncatedError,
    TableVersionError,
)

FORMAT_MAGIC = "LANEWISE-QTABLE"
FORMAT_VERSION = 1
_HEADER_FIRST_LINE = 64
_HEADER_ALIGN = 4096

DEFAULT_TRIALS = 100_000


def default_axes() -> "GridAxes":
    """g 0..1 step 0.01, mu -5..1 step 0.05, sigma 0..2 step 0.05."""
    return GridAxes(
        g_values=np.round(np.arange(0, 101) * 0.01, 10),
        mu_values=np.round(-5.0 + np.arange(0, 121) * 0.05, 10),
        sigma_values=np.round(np.arange(0, 41) * 0.05, 10),
    )


def mini_axes() -> "GridAxes":
    """3x3x3 smoke-test grid."""
    return GridAxes(
        g_values=np.array([0.0, 0.5, 1.0]),
        mu_values=np.array([-2.0, -1.0, 0.0]),
        sigma_values=np.array([0.2, 0.8, 1.4]),
    )


def _ascending(name, values):
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise ParameterError(f"{name} axis needs at least 2 values")
    if not np.all(np.diff(arr) > 0):
        raise ParameterError(f"{name} axis must be strictly ascending")
    return arr


@dataclass(frozen=True)
class GridAxes:
    """Axis definitions of a gap table."""

    g_values: np.ndarray
    mu_values: np.ndarray
    sigma_values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "g_values", _ascending("g", self.g_values))
        object.__setattr__(self, "mu_values", _ascending("mu", self.mu_values))
        object.__setattr__(
            self, "sigma_values", _ascending("sigma", self.sigma_values))
        if self.g_values[0] < 0:
            raise ParameterError("g axis cannot be negative")
        if self.sigma_values[0] < 0:
            raise ParameterError("sigma axis cannot be negative")

    @property
    def shape(self):
        return (self.g_values.size, self.mu_values.size,
                self.sigma_values.size)

    def __eq__(self, other):
        if not isinstance(other, GridAxes):
            return NotImplemented
        return (np.array_equal(self.g_values, other.g_values)
                and np.array_equal(self.mu_values, other.mu_values)
                and np.array_equal(self.sigma_values, other.sigma_values))


@dataclass(frozen=True)
class AbstractGapQuery:
    """Dimensionless gap question: gap fraction g, spacing log-params."""

    g: float
    mu: float
    sigma: float

    def __post_init__(self):
        if not (self.g > 0):
            raise ParameterError(f"gap fraction must be positive, got {self.g}")
        if self.sigma < 0:
            raise ParameterError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class QTable:
    """Precomputed q values with their grid and provenance."""

    axes: GridAxes
    values: np.ndarray
    trials_per_cell: int
    seed: int
    version: int = FORMAT_VERSION

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float32)
        object.__setattr__(self, "values", vals)
        if vals.shape != self.axes.shape:
            raise TableIntegrityError(
                f"value array {vals.shape} does not match axes "
                f"{self.axes.shape}")
        if np.any(vals < 0) or np.any(vals > 1):
            raise TableIntegrityError("table values outside [0, 1]")

    def __eq__(self, other):
        if not isinstance(other, QTable):
            return NotImplemented
        return (self.axes == other.axes
                and np.array_equal(self.values, other.values)
                and self.trials_per_cell == other.trials_per_cell
                and self.seed == other.seed
                and self.version == other.version)


# ---------------------------------------------------------------------------
# Estimation

def _cell_stream(seed, cell_index=None):
    """SeedSequence for one estimation run.

    ``cell_index`` (gi, mi, si) extends the entropy so every table cell owns
    an independent stream; plain ``estimate_q`` calls use the bare seed.
    """
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    if cell_index is None:
        return np.random.SeedSequence(seed)
    return np.random.SeedSequence((seed, *map(int, cell_index)))


def estimate_q(query: AbstractGapQuery, trials: int, seed: int,
               _cell_index=None) -> float:
    """Monte Carlo estimate of q for one parameter tuple.

    Each trial draws lognormal spacings until their running sum exceeds
    max(10, 20 * mean), places a unit window uniformly over that span (one
    mean-spacing margin at each end) and succeeds when some spacing's
    in-window portion reaches ``query.g``.  Deterministic per (seed, trials).
    """
    if not isinstance(query, AbstractGapQuery):
        query = AbstractGapQuery(*query)
    trials = int(trials)
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    ss = _cell_stream(seed, _cell_index)
    succ = _backend.q_cell(query.g, query.mu, query.sigma, trials, ss)
    return succ / trials


def _fill_range(args):
    start, stop, g_ax, mu_ax, sg_ax, trials, seed = args
    nm, ns = mu_ax.size, sg_ax.size
    out = np.empty(stop - start, dtype=np.float32)
    for flat in range(start, stop):
        gi, rem = divmod(flat, nm * ns)
        mi, si = divmod(rem, ns)
        g = g_ax[gi]
        if g == 0.0:
            out[flat - start] = 1.0  # zero-length gap always present
            continue
        ss = _cell_stream(seed, (gi, mi, si))
        succ = _backend.q_cell(g, mu_ax[mi], sg_ax[si], trials, ss)
        out[flat - start] = succ / trials
    return start, out


def precompute_table(axes: GridAxes, trials_per_cell: int = DEFAULT_TRIALS,
                     seed: int = 0, workers: int | None = None,
                     progress: bool = False) -> QTable:
    """Fill every grid cell with its own deterministic RNG stream.

    Cells share no state, so the result is identical for any ``workers``
    count or scheduling order.
    """
    if not isinstance(axes, GridAxes):
        raise ParameterError("axes must be a GridAxes")
    trials_per_cell = int(trials_per_cell)
    if trials_per_cell < 1:
        raise ParameterError("trials_per_cell must be >= 1")
    total = int(np.prod(axes.shape))
    values = np.empty(total, dtype=np.float32)

    if workers is None:
        workers = os.cpu_count() or 1
    workers = max(1, min(int(workers), total))

    chunk = max(32, min(2048, total // (workers * 8) or total))
    tasks = [(lo, min(lo + chunk, total), axes.g_values, axes.mu_values,
              axes.sigma_values, trials_per_cell, seed)
             for lo in range(0, total, chunk)]

    t0 = time.monotonic()
    done_cells = 0
    last_report = t0

    def _note(n):
        nonlocal done_cells, last_report
        done_cells += n
        now = time.monotonic()
        if progress and (now - last_report > 2.0 or done_cells == total):
            rate = done_cells / max(now - t0, 1e-9)
            eta = (total - done_cells) / max(rate, 1e-9)
            print(f"  {done_cells}/{total} cells "
                  f"({100.0 * done_cells / total:.1f}%), "
                  f"{rate:.0f} cells/s, eta {eta:.0f}s",
                  file=sys.stderr, flush=True)
            last_report = now

    if workers == 1:
        for task in tasks:
            start, out = _fill_range(task)
            values[start:start + out.size] = out
            _note(out.size)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for start, out in pool.map(_fill_range, tasks):
                values[start:start + out.size] = out
                _note(out.size)

    return QTable(axes=axes, values=values.reshape(axes.shape),
                  trials_per_cell=trials_per_cell,
                  seed=int(seed) & 0xFFFFFFFFFFFFFFFF)


# ---------------------------------------------------------------------------
# Lookup

def _axis_pos(ax, x):
    """Bracket index and interpolation parameter; t runs free outside the
    axis range, which linearly extrapolates from the boundary pair."""
    idx = np.clip(np.searchsorted(ax, x, side="right") - 1, 0, ax.size - 2)
    t = (x - ax[idx]) / (ax[idx + 1] - ax[idx])
    return idx, t


def lookup_many(table: QTable, g, mu, sigma) -> np.ndarray:
    """Vectorized trilinear interpolation, clamped to [0, 1].

    Gap fractions above 1 cannot fit in the window and return 0; exactly 1
    interpolates normally.
    """
    vals = table.values
    if vals.shape != table.axes.shape:
        raise TableIntegrityError("table shape mismatch")
    g = np.asarray(g, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    g, mu, sigma = np.broadcast_arrays(g, mu, sigma)

    gi, tg = _axis_pos(table.axes.g_values, g)
    mi, tm = _axis_pos(table.axes.mu_values, mu)
    si, ts = _axis_pos(table.axes.sigma_values, sigma)

    out = np.zeros(g.shape, dtype=np.float64)
    for dg in (0, 1):
        wg = np.where(dg, tg, 1.0 - tg)
        for dm in (0, 1):
            wm = np.where(dm, tm, 1.0 - tm)
            for ds in (0, 1):
                ws = np.where(ds, ts, 1.0 - ts)
                out += wg * wm * ws * vals[gi + dg, mi + dm, si + ds]
    out = np.clip(out, 0.0, 1.0)
    return np.where(g > 1.0, 0.0, out)


def lookup(table: QTable, query: AbstractGapQuery) -> float:
    """Interpolated q for a single query."""
    return float(lookup_many(table, query.g, query.mu, query.sigma))


# ---------------------------------------------------------------------------
# Persistence

def _header_text(table: QTable, crc: int) -> bytes:
    def fmt_axis(arr):
        return " ".join(format(v, ".17g") for v in arr)

    body = (
        f"trials={table.trials_per_cell}\n"
        f"seed={table.seed}\n"
        f"shape={','.join(map(str, table.values.shape))}\n"
        f"g={fmt_axis(table.axes.g_values)}\n"
        f"mu={fmt_axis(table.axes.mu_values)}\n"
        f"sigma={fmt_axis(table.axes.sigma_values)}\n"
        f"crc32={crc:08x}\n"
    ).encode("ascii")
    need = _HEADER_FIRST_LINE + len(body)
    header_len = ((need + _HEADER_ALIGN - 1) // _HEADER_ALIGN) * _HEADER_ALIGN
    first = f"{FORMAT_MAGIC} v{FORMAT_VERSION} header={header_len}"
    first_line = first.ljust(_HEADER_FIRST_LINE - 1).encode("ascii") + b"\n"
    return (first_line + body).ljust(header_len, b" ")


def save_table(table: QTable, path) -> None:
    """Write a table file: fixed-width text header + little-endian f32 grid."""
    payload = np.ascontiguousarray(table.values, dtype="<f4").tobytes()
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(_header_text(table, crc))
        fh.write(payload)


def load_table(path) -> QTable:
    """Read a table file; raises a distinct error per failure mode."""
    with open(path, "rb") as fh:
        first = fh.read(_HEADER_FIRST_LINE)
        if len(first) < _HEADER_FIRST_LINE:
            raise TableTruncatedError(f"{path}: file shorter than header line")
        try:
            text = first.decode("ascii")
        except UnicodeDecodeError as exc:
            raise TableFormatError(f"{path}: not a gap-table file") from exc
        parts = text.split()
        if len(parts) < 3 or parts[0] != FORMAT_MAGIC:
            raise TableFormatError(f"{path}: bad magic {text[:32]!r}")
        if parts[1] != f"v{FORMAT_VERSION}":
            raise TableVersionError(
                f"{path}: unsupported version {parts[1]!r}")
        try:
            header_len = int(parts[2].split("=", 1)[1])
        except (IndexError, ValueError) as exc:
            raise TableFormatError(f"{path}: bad header length field") from exc

        rest = fh.read(header_len - _HEADER_FIRST_LINE)
        if len(rest) < header_len - _HEADER_FIRST_LINE:
            raise TableTruncatedError(f"{path}: truncated header")
        fields = {}
        for line in rest.decode("ascii", "replace").splitlines():
            line = line.strip()
            if "=" in line:
                key, _, val = line.partition("=")
                fields[key.strip()] = val.strip()
        try:
            trials = int(fields["trials"])
            seed = int(fields["seed"])
            shape = tuple(int(s) for s in fields["shape"].split(","))
            axes = GridAxes(
                g_values=np.array([float(v) for v in fields["g"].split()]),
                mu_values=np.array([float(v) for v in fields["mu"].split()]),
                sigma_values=np.array(
                    [float(v) for v in fields["sigma"].split()]),
            )
            crc_stored = int(fields["crc32"], 16)
        except (KeyError, ValueError, ParameterError) as exc:
            raise TableFormatError(f"{path}: malformed header field: {exc}"
                                   ) from exc
        if len(shape) != 3:
            raise TableFormatError(f"{path}: expected 3 axes, got {len(shape)}")
        if shape != axes.shape:
            raise TableIntegrityError(
                f"{path}: shape field {shape} does not match axis lengths "
                f"{axes.shape}")

        payload = fh.read(4 * int(np.prod(shape)) + 1)
        if len(payload) < 4 * int(np.prod(shape)):
            raise TableTruncatedError(f"{path}: truncated value payload")
        if len(payload) > 4 * int(np.prod(shape)):
            raise TableFormatError(f"{path}: trailing bytes after payload")
        if zlib.crc32(payload) & 0xFFFFFFFF != crc_stored:
            raise TableChecksumError(f"{path}: payload checksum mismatch")
        values = np.frombuffer(payload, dtype="<f4").reshape(shape)
    return QTable(axes=axes, values=values, trials_per_cell=trials, seed=seed)


# ---------------------------------------------------------------------------
# Isosurface export

def isosurface_records(table: QTable, level: float, tolerance: float):
    """All (g, mu, sigma, q) tuples with |q - level| <= tolerance,
    in g-major grid order."""
    if not (0.0 < level < 1.0):
        raise ParameterError("level must lie strictly between 0 and 1")
    if tolerance < 0:
        raise ParameterError("tolerance must be >= 0")
    mask = np.abs(table.values.astype(np.float64) - level) <= tolerance
    gi, mi, si = np.nonzero(mask)
    return [
        (table.axes.g_values[a], table.axes.mu_values[b],
         table.axes.sigma_values[c], float(table.values[a, b, c]))
        for a, b, c in zip(gi, mi, si)
    ]


def write_isosurface_csv(table: QTable, level: float, tolerance: float,
                         fh) -> int:
    """Emit isosurface records as CSV (6 significant digits); returns the
    record count."""
    fh.write("g,mu,sigma,q\n")
    records = isosurface_records(table, level, tolerance)
    for g, mu, sigma, q in records:
        fh.write(f"{g:.6g},{mu:.6g},{sigma:.6g},{q:.6g}\n")
    return len(records)
