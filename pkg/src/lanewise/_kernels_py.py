"""Pure-numpy fallback for the compiled kernels.

Implements the same sampling procedures as ``_kernels.pyx`` (identical window
placement, gap semantics and simulator step rules) but draws from
numpy PCG64 generators and vectorizes across trials, so results are
deterministic per seed for this backend yet not bit-identical to the compiled
one.  Expect roughly an order of magnitude less throughput.
"""
import numpy as np

from .errors import SimulationError

# elements per scratch matrix before trial chunking kicks in
_CHUNK_BUDGET = 4_000_000


def _lognormal_rows(rng, mu, sigma, rows, cols):
    return np.exp(mu + sigma * rng.standard_normal((rows, cols)))


def q_cell(g, mu, sigma, trials, seed_seq):
    """Successes among ``trials`` unit-window scans of the spacing process."""
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    m = float(np.exp(mu + sigma * sigma / 2.0))
    beta = max(10.0, 20.0 * m)
    wlo = m
    wspan = (beta - 1.0 - m) - wlo

    succ = 0
    remaining = int(trials)
    if sigma == 0.0:
        s = float(np.exp(mu))
        while remaining:
            k = min(remaining, 1_000_000)
            w = wlo + rng.random(k) * wspan
            e = w + 1.0
            i0 = np.floor(w / s)
            end0 = (i0 + 1.0) * s
            i1 = np.floor(e / s)
            lp = end0 - w
            rp = e - i1 * s
            best = np.maximum(lp, np.where(i1 > i0, rp, 0.0))
            best = np.where(i1 - i0 >= 2, np.maximum(best, s), best)
            best = np.where(end0 >= e, 1.0, best)
            succ += int((best >= g).sum())
            remaining -= k
        return succ

    ncol0 = int((wlo + wspan + 1.0) / m * 1.15) + 8
    chunk = int(np.clip(_CHUNK_BUDGET // ncol0, 64, 65536))
    while remaining:
        k = min(remaining, chunk)
        w = wlo + rng.random(k) * wspan
        e = w + 1.0
        c = np.cumsum(_lognormal_rows(rng, mu, sigma, k, ncol0), axis=1)
        while (c[:, -1] < e).any():
            ext = max(8, ncol0 // 4)
            add = np.cumsum(_lognormal_rows(rng, mu, sigma, k, ext), axis=1)
            c = np.hstack([c, c[:, -1:] + add])
        prev = np.hstack([np.zeros((k, 1)), c[:, :-1]])
        piece = np.minimum(c, e[:, None]) - np.maximum(prev, w[:, None])
        best = piece.max(axis=1)
        succ += int((best >= g).sum())
        remaining -= k
    return succ


def _trunc_gauss(rng, center, half_width, size):
    # Gaussian with sd = half_width/2, resampled outside +-half_width
    if half_width <= 0.0:
        return np.broadcast_to(np.asarray(center, dtype=float), size).copy()
    dev = rng.normal(0.0, half_width / 2.0, size)
    bad = np.abs(dev) > half_width
    while bad.any():
        dev[bad] = rng.normal(0.0, half_width / 2.0, int(bad.sum()))
        bad = np.abs(dev) > half_width
    return np.asarray(center, dtype=float) + dev


def _fields(rng, mu, sigma, m, n_rows, lo_edge, hi_need, max_field):
    """Point rows starting at ``lo_edge`` (per-row) covering ``hi_need``."""
    span = float(np.max(hi_need - lo_edge))
    ncol = int(span / m * 1.15) + 8
    if ncol > max_field:
        raise SimulationError(
            f"field of ~{ncol} vehicles per trial exceeds limit {max_field}")
    pts = lo_edge[:, None] + np.cumsum(
        _lognormal_rows(rng, mu, sigma, n_rows, ncol), axis=1)
    pts = np.hstack([lo_edge[:, None], pts])
    while (pts[:, -1] < hi_need).any():
        ext = max(8, ncol // 4)
        if pts.shape[1] + ext > max_field:
            raise SimulationError(
                f"field grew past limit {max_field}; "
                "check headway parameters")
        add = np.cumsum(_lognormal_rows(rng, mu, sigma, n_rows, ext), axis=1)
        pts = np.hstack([pts, pts[:, -1:] + add])
    return pts


def sim_trials(root_ss, trials, v_start, v_prev, v_lane, mu, sigma, half_gap,
               msteps, mean_headway, dt, c_max, jitter, max_field):
    """Vectorized counterpart of the compiled ``sim_trials``.

    Constant-speed mode solves each stage's first accepted step in closed
    form, which reproduces the stepped process exactly; jitter mode steps
    lock-step across trials.  Trials run in fixed-size chunks to bound the
    scratch matrices.
    """
    rng = np.random.Generator(np.random.PCG64(root_ss))
    worst_cols = max(
        (abs(vc - vj) + jitter) * (c_max / min(v_start, min(v_lane))) / m
        for vc, vj, m in zip(np.r_[v_start, v_lane[:-1]], v_lane,
                             mean_headway)) + 24
    chunk = int(np.clip(_CHUNK_BUDGET // int(worst_cols + 1), 256, trials))
    if chunk < trials:
        parts = []
        done = 0
        while done < trials:
            k = min(chunk, trials - done)
            parts.append(_sim_block(rng, k, v_start, v_prev, v_lane, mu,
                                    sigma, half_gap, msteps, mean_headway,
                                    dt, c_max, jitter, max_field))
            done += k
        return np.concatenate(parts)
    return _sim_block(rng, trials, v_start, v_prev, v_lane, mu, sigma,
                      half_gap, msteps, mean_headway, dt, c_max, jitter,
                      max_field)


def _sim_block(rng, trials, v_start, v_prev, v_lane, mu, sigma, half_gap,
               msteps, mean_headway, dt, c_max, jitter, max_field):
    if jitter > 0.0:
        return _sim_jitter(rng, trials, v_start, v_lane, mu, sigma, half_gap,
                           msteps, mean_headway, dt, c_max, jitter, max_field)

    nstages = len(v_lane)
    arrivals = np.full(trials, -1.0)
    p = np.zeros(trials)
    alive = np.ones(trials, dtype=bool)
    v_cur = float(v_start)

    for stage in range(nstages):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        vj = float(v_lane[stage])
        m = float(mean_headway[stage])
        hg = float(half_gap[stage])
        man_dist = msteps[stage] * dt * v_cur
        du = abs(v_cur - vj) * dt
        v_step = v_cur * dt

        phi = rng.random(idx.size) * m
        start = -(10.0 * m + phi)

        if du == 0.0:
            pts = _fields(rng, mu[stage], sigma[stage], m, idx.size,
                          start, np.full(idx.size, hg + m), max_field)
            below = np.where(pts <= 0.0, pts, -np.inf).max(axis=1)
            above = np.where(pts > 0.0, pts, np.inf).min(axis=1)
            acc = (above >= hg) & (-below >= hg)
            kstep = np.zeros(idx.size)
        else:
            kmax = np.maximum(0.0, np.floor((c_max - p[idx]) / v_step))
            hi_need = kmax * du + hg + m
            pts = _fields(rng, mu[stage], sigma[stage], m, idx.size,
                          start, hi_need, max_field)
            left = pts[:, :-1]
            right = pts[:, 1:]
            kc = np.maximum(np.ceil((left + hg) / du), 0.0)
            ok = (kc * du <= right - hg) & (kc <= kmax[:, None])
            kstar = np.where(ok, kc, np.inf).min(axis=1)
            acc = np.isfinite(kstar)
            kstep = np.where(acc, kstar, 0.0)

        p[idx[acc]] += kstep[acc] * v_step + man_dist
        alive[idx[~acc]] = False
        v_cur = vj

    arrivals[alive] = p[alive]
    return arrivals


def _sim_jitter(rng, trials, v_start, v_lane, mu, sigma, half_gap, msteps,
                mean_headway, dt, c_max, jitter, max_field):
    nstages = len(v_lane)
    arrivals = np.full(trials, -1.0)
    p = np.zeros(trials)
    alive = np.ones(trials, dtype=bool)
    v_cur = _trunc_gauss(rng, v_start, jitter, trials)

    for stage in range(nstages):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        vj = float(v_lane[stage])
        m = float(mean_headway[stage])
        hg = float(half_gap[stage])
        vc = v_cur[idx]
        v_step = vc * dt

        tmax = (c_max - p[idx]) / vc + msteps[stage] * dt + dt
        reach = (np.abs(vc - vj) + jitter) * tmax
        phi = rng.random(idx.size) * m
        lo_edge = -(reach + 10.0 * m + hg) - phi
        hi_need = reach + 10.0 * m + hg
        pts = _fields(rng, mu[stage], sigma[stage], m, idx.size,
                      lo_edge, hi_need, max_field)
        vel = _trunc_gauss(rng, vj, jitter, pts.shape) - vc[:, None]

        resolved = np.zeros(idx.size, dtype=bool)
        kacc = np.zeros(idx.size)
        prow = p[idx].copy()
        k = 0
        while not resolved.all():
            below = np.where(pts <= 0.0, pts, -np.inf).max(axis=1)
            above = np.where(pts > 0.0, pts, np.inf).min(axis=1)
            acc_now = ~resolved & (above >= hg) & (-below >= hg)
            kacc[acc_now] = k
            resolved |= acc_now
            prow = np.where(resolved, prow, prow + v_step)
            fail_now = ~resolved & (prow > c_max)
            kacc[fail_now] = -1.0
            resolved |= fail_now
            if resolved.all():
                break
            pts += vel * dt
            k += 1

        acc = kacc >= 0.0
        p[idx[acc]] += kacc[acc] * v_step[acc] + msteps[stage] * dt * vc[acc]
        alive[idx[~acc]] = False
        v_cur[idx[acc]] = _trunc_gauss(rng, vj, jitter, int(acc.sum()))

    arrivals[alive] = p[alive]
    return arrivals
