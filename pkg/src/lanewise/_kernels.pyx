# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: gap-table Monte Carlo cells and microsimulator trials.

Randomness comes from xoshiro256++ streams seeded with words produced by
``numpy.random.SeedSequence``.  The gap estimator interleaves 8 independent
lanes so the Box-Muller / exp transform loops vectorize; the simulator uses
one scalar stream per trial.  Results are deterministic for a fixed seed and
independent of scheduling (each cell / trial owns its stream).
"""

import numpy as np

from libc.math cimport cos, exp, fabs, floor, fmax, log, sin, sqrt
from libc.stdlib cimport free, malloc

cdef enum:
    LANES = 8
    NBUF = 512          # uniforms per lane-block refill

cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0


# ---------------------------------------------------------------------------
# xoshiro256++ (public-domain algorithm by Blackman & Vigna)

cdef struct Xo8:
    unsigned long long s0[LANES]
    unsigned long long s1[LANES]
    unsigned long long s2[LANES]
    unsigned long long s3[LANES]

cdef struct Xo1:
    unsigned long long s0
    unsigned long long s1
    unsigned long long s2
    unsigned long long s3
    double cached_normal
    int has_cached

cdef inline unsigned long long _rotl(unsigned long long x, int k) nogil:
    return (x << k) | (x >> (64 - k))

cdef inline unsigned long long _splitmix(unsigned long long* s) nogil:
    cdef unsigned long long z
    s[0] += 0x9E3779B97F4A7C15ULL
    z = s[0]
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)

cdef void _init8(Xo8* st, unsigned long long[::1] words) nogil:
    # words has 4*LANES entries; a SplitMix pass guards against weak states
    cdef int l
    cdef unsigned long long mix
    for l in range(LANES):
        mix = words[4 * l] ^ (words[4 * l + 1] << 1)
        st.s0[l] = words[4 * l] | 1ULL
        st.s1[l] = words[4 * l + 1] ^ _splitmix(&mix)
        st.s2[l] = words[4 * l + 2] ^ _splitmix(&mix)
        st.s3[l] = words[4 * l + 3] ^ _splitmix(&mix)

cdef void _fill_u01(Xo8* st, double* out, int n) nogil:
    # n must be a multiple of LANES; uniforms lie in (0, 1]
    cdef int i, l
    cdef unsigned long long r, t
    for i in range(0, n, LANES):
        for l in range(LANES):
            r = _rotl(st.s0[l] + st.s3[l], 23) + st.s0[l]
            t = st.s1[l] << 17
            st.s2[l] ^= st.s0[l]
            st.s3[l] ^= st.s1[l]
            st.s1[l] ^= st.s2[l]
            st.s0[l] ^= st.s3[l]
            st.s2[l] ^= t
            st.s3[l] = _rotl(st.s3[l], 45)
            out[i + l] = ((r >> 11) + 1) * INV_2_53

cdef inline double _next_u01(Xo1* st) nogil:
    cdef unsigned long long r, t
    r = _rotl(st.s0 + st.s3, 23) + st.s0
    t = st.s1 << 17
    st.s2 ^= st.s0
    st.s3 ^= st.s1
    st.s1 ^= st.s2
    st.s0 ^= st.s3
    st.s2 ^= t
    st.s3 = _rotl(st.s3, 45)
    return ((r >> 11) + 1) * INV_2_53

cdef inline double _next_normal(Xo1* st) nogil:
    cdef double u1, u2, r
    if st.has_cached:
        st.has_cached = 0
        return st.cached_normal
    u1 = _next_u01(st)
    u2 = _next_u01(st)
    r = sqrt(-2.0 * log(u1))
    st.cached_normal = r * sin(TWO_PI * u2)
    st.has_cached = 1
    return r * cos(TWO_PI * u2)


# ---------------------------------------------------------------------------
# Gap-table cell estimator

cdef void _refill_spacings(Xo8* st, double mu, double sigma, double* sp) nogil:
    # writes 2*NBUF lognormal spacings; split loops so libmvec kicks in
    cdef double u1[NBUF]
    cdef double u2[NBUF]
    cdef double r[NBUF]
    cdef double zc[NBUF]
    cdef double zs[NBUF]
    cdef int i
    _fill_u01(st, u1, NBUF)
    _fill_u01(st, u2, NBUF)
    for i in range(NBUF):
        r[i] = sqrt(-2.0 * log(u1[i]))
    for i in range(NBUF):
        zc[i] = cos(TWO_PI * u2[i])
    for i in range(NBUF):
        zs[i] = sin(TWO_PI * u2[i])
    for i in range(NBUF):
        sp[i] = exp(mu + sigma * (r[i] * zc[i]))
    for i in range(NBUF):
        sp[NBUF + i] = exp(mu + sigma * (r[i] * zs[i]))


def q_cell(double g, double mu, double sigma, long long trials, seed_words):
    """Count trials in which a unit window over the spacing process holds a
    contiguous in-window piece of at least ``g``.

    ``seed_words``: uint64 array of 4*LANES words from SeedSequence.
    Returns the number of successes (int).
    """
    cdef unsigned long long[::1] words = np.ascontiguousarray(
        seed_words, dtype=np.uint64)
    if words.shape[0] != 4 * LANES:
        raise ValueError("seed_words must hold %d words" % (4 * LANES))

    cdef Xo8 st
    _init8(&st, words)

    cdef double m = exp(mu + sigma * sigma / 2.0)
    cdef double beta = fmax(10.0, 20.0 * m)
    cdef double wlo = m
    cdef double wspan = (beta - 1.0 - m) - wlo
    cdef double sp[2 * NBUF]
    cdef double wu[NBUF]
    cdef int pos = 2 * NBUF
    cdef int wpos = NBUF
    cdef long long t, succ = 0
    cdef double w, e, c, prev, best, lo, hi, piece
    cdef double s, end0, lp, rp
    cdef long long i0, i1

    with nogil:
        if sigma == 0.0:
            # deterministic spacings: only the window draw is random
            s = exp(mu)
            for t in range(trials):
                if wpos == NBUF:
                    _fill_u01(&st, wu, NBUF)
                    wpos = 0
                w = wlo + wu[wpos] * wspan
                wpos += 1
                e = w + 1.0
                i0 = <long long>floor(w / s)
                end0 = (i0 + 1) * s
                if end0 >= e:
                    best = 1.0
                else:
                    i1 = <long long>floor(e / s)
                    lp = end0 - w
                    rp = e - i1 * s
                    best = lp if lp > rp else rp
                    if i1 - i0 >= 2 and s > best:
                        best = s
                if best >= g:
                    succ += 1
        else:
            for t in range(trials):
                if wpos == NBUF:
                    _fill_u01(&st, wu, NBUF)
                    wpos = 0
                w = wlo + wu[wpos] * wspan
                wpos += 1
                e = w + 1.0
                c = 0.0
                best = 0.0
                while c < e:
                    if pos == 2 * NBUF:
                        _refill_spacings(&st, mu, sigma, sp)
                        pos = 0
                    prev = c
                    c += sp[pos]
                    pos += 1
                    lo = prev if prev > w else w
                    hi = c if c < e else e
                    piece = hi - lo
                    if piece > best:
                        best = piece
                        if best >= g:
                            break
                if best >= g:
                    succ += 1
    return succ


# ---------------------------------------------------------------------------
# Microsimulator trials

cdef inline double _trunc_gauss(Xo1* st, double center, double half_width) nogil:
    # Gaussian with sd = half_width/2, rejected outside +-half_width
    cdef double dev
    if half_width <= 0.0:
        return center
    while True:
        dev = 0.5 * half_width * _next_normal(st)
        if fabs(dev) <= half_width:
            return center + dev


def sim_trials(states,
               double v_start,
               v_prev, v_lane, mu, sigma, half_gap, msteps, mean_headway,
               double dt, double c_max, double jitter, long long max_field):
    """Run gap-acceptance trials; returns completion positions (-1 = failed).

    ``states``: (trials, 4) uint64 per-trial stream seeds.  Stage arrays hold
    one entry per lane change (search lane j while driving at ``v_prev``).
    ``jitter`` is the per-vehicle speed half-width in m/s (0 disables it);
    ``max_field`` bounds the materialized field size in jitter mode.
    """
    cdef unsigned long long[:, ::1] sw = np.ascontiguousarray(
        states, dtype=np.uint64)
    cdef double[::1] vp = np.ascontiguousarray(v_prev, dtype=np.float64)
    cdef double[::1] vl = np.ascontiguousarray(v_lane, dtype=np.float64)
    cdef double[::1] mus = np.ascontiguousarray(mu, dtype=np.float64)
    cdef double[::1] sigs = np.ascontiguousarray(sigma, dtype=np.float64)
    cdef double[::1] hg = np.ascontiguousarray(half_gap, dtype=np.float64)
    cdef long long[::1] ms = np.ascontiguousarray(msteps, dtype=np.int64)
    cdef double[::1] mh = np.ascontiguousarray(mean_headway, dtype=np.float64)

    cdef long long trials = sw.shape[0]
    cdef int nstages = vp.shape[0]
    arrivals_arr = np.full(trials, -1.0, dtype=np.float64)
    cdef double[::1] arrivals = arrivals_arr

    cdef double* fpos = NULL
    cdef double* fvel = NULL
    if jitter > 0.0:
        fpos = <double*>malloc(max_field * sizeof(double))
        fvel = <double*>malloc(max_field * sizeof(double))
        if fpos == NULL or fvel == NULL:
            free(fpos)
            free(fvel)
            raise MemoryError("jitter field buffer")

    cdef Xo1 st
    cdef unsigned long long mixseed
    cdef long long t, k, npts, i
    cdef int stage, accepted, failed
    cdef double p_road, v_cur, vj, drift, du, v_step, m, phi
    cdef double pb, pa, u, halfg, best_lo, best_hi, q, w_spd
    cdef double span_lo, span_hi, reach, tmax

    with nogil:
        for t in range(trials):
            mixseed = sw[t, 0]
            st.s0 = sw[t, 0] | 1ULL
            st.s1 = sw[t, 1] ^ _splitmix(&mixseed)
            st.s2 = sw[t, 2] ^ _splitmix(&mixseed)
            st.s3 = sw[t, 3] ^ _splitmix(&mixseed)
            st.has_cached = 0

            p_road = 0.0
            failed = 0
            if jitter > 0.0:
                v_cur = _trunc_gauss(&st, v_start, jitter)
            else:
                v_cur = v_start

            for stage in range(nstages):
                vj = vl[stage]
                m = mh[stage]
                halfg = hg[stage]
                accepted = 0

                if jitter <= 0.0:
                    # constant-speed lanes: field is static in ego frame,
                    # walk it in the direction of relative motion
                    drift = fabs(v_cur - vj)
                    du = drift * dt
                    v_step = v_cur * dt
                    phi = _next_u01(&st) * m
                    pb = -(10.0 * m + phi)
                    # stream points upward until one passes the ego at u=0
                    pa = pb
                    while pa <= 0.0:
                        pb = pa
                        pa = pa + exp(mus[stage] + sigs[stage] * _next_normal(&st))
                    u = 0.0
                    k = 0
                    while True:
                        while pa <= u:
                            pb = pa
                            pa = pa + exp(mus[stage]
                                          + sigs[stage] * _next_normal(&st))
                        if pa - u >= halfg and u - pb >= halfg:
                            accepted = 1
                            break
                        if du == 0.0:
                            break
                        k += 1
                        u += du
                        p_road += v_step
                        if p_road > c_max:
                            break
                else:
                    # per-vehicle speeds: materialize the field around the ego
                    v_step = v_cur * dt
                    tmax = (c_max - p_road) / v_cur + ms[stage] * dt + dt
                    reach = (fabs(v_cur - vj) + jitter) * tmax
                    span_lo = -(reach + 10.0 * m + halfg)
                    span_hi = reach + 10.0 * m + halfg
                    phi = _next_u01(&st) * m
                    q = span_lo - phi
                    npts = 0
                    while q < span_hi and npts < max_field:
                        fpos[npts] = q
                        fvel[npts] = _trunc_gauss(&st, vj, jitter) - v_cur
                        npts += 1
                        q += exp(mus[stage] + sigs[stage] * _next_normal(&st))
                    while True:
                        pb = -1e300
                        pa = 1e300
                        for i in range(npts):
                            q = fpos[i]
                            if q <= 0.0:
                                if q > pb:
                                    pb = q
                            else:
                                if q < pa:
                                    pa = q
                        if pa >= halfg and -pb >= halfg:
                            accepted = 1
                            break
                        p_road += v_step
                        if p_road > c_max:
                            break
                        for i in range(npts):
                            fpos[i] += fvel[i] * dt
                if not accepted:
                    failed = 1
                    break
                # lane change: ego keeps its speed for the whole maneuver
                p_road += ms[stage] * dt * v_cur
                if jitter > 0.0:
                    v_cur = _trunc_gauss(&st, vj, jitter)
                else:
                    v_cur = vj
            if not failed:
                arrivals[t] = p_road

    if fpos != NULL:
        free(fpos)
    if fvel != NULL:
        free(fvel)
    return arrivals_arr
