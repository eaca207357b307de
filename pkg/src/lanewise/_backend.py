"""Select the compiled kernels when available, numpy fallback otherwise.

Set ``LANEWISE_BACKEND=python`` (or ``compiled``) to force a choice;
``LANEWISE_PURE_PYTHON=1`` is honored as an alias for ``python``.
"""
import os

import numpy as np

from . import _kernels_py

_choice = os.environ.get("LANEWISE_BACKEND", "auto").lower()
if os.environ.get("LANEWISE_PURE_PYTHON"):
    _choice = "python"

_compiled = None
if _choice in ("auto", "compiled"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        if _choice == "compiled":
            raise ImportError(
                "LANEWISE_BACKEND=compiled but the extension is not built; "
                "reinstall without LANEWISE_PURE_PYTHON")
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def q_cell(g, mu, sigma, trials, seed_seq):
    """Success count for one (g, mu, sigma) cell from its own RNG stream."""
    if _compiled is not None:
        words = seed_seq.generate_state(32, np.uint64)
        return _compiled.q_cell(g, mu, sigma, trials, words)
    return _kernels_py.q_cell(g, mu, sigma, trials, seed_seq)


def sim_trials(root_ss, trials, v_start, v_prev, v_lane, mu, sigma, half_gap,
               msteps, mean_headway, dt, c_max, jitter, max_field):
    """Per-trial completion positions (-1 marks a failed trial)."""
    if _compiled is not None:
        # row t of the expanded state block seeds trial t's stream
        states = root_ss.generate_state(4 * trials, np.uint64).reshape(-1, 4)
        return _compiled.sim_trials(
            states, v_start, v_prev, v_lane, mu, sigma, half_gap,
            np.asarray(msteps, dtype=np.int64), mean_headway,
            dt, c_max, jitter, max_field)
    return _kernels_py.sim_trials(
        root_ss, trials, v_start, v_prev, v_lane, mu, sigma, half_gap,
        np.asarray(msteps, dtype=np.int64), mean_headway,
        dt, c_max, jitter, max_field)
