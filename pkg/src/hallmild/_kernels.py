"""Hot inner loops, compiled with numba when available.

The backend is chosen once at import time from ``HALLMILD_KERNELS``
(``numba`` or ``numpy``).  Both paths compute the same quantities; the numpy
path is the reference and the numba path is the default when numba imports.
"""

import os
import warnings

import numpy as np

_requested = os.environ.get("HALLMILD_KERNELS", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"HALLMILD_KERNELS must be 'numba' or 'numpy', got {_requested!r}")

BACKEND = "numpy"
if _requested == "numba":
    try:
        import numba as nb

        if "NUMBA_THREADING_LAYER" not in os.environ:
            # the kernels are serial; skip the probe of optional threading libraries
            nb.config.THREADING_LAYER = "workqueue"
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        warnings.warn("numba not importable; falling back to numpy kernels")


# ---------------------------------------------------------------------------
# numpy reference implementations


def _shell_weights_np(rho, scale, table, r_lo, r_hi):
    """psi(scale * rho) with psi(r) = theta(r/2) - theta(r), theta tabulated on [r_lo, r_hi]."""
    r = np.asarray(rho, dtype=np.float64) * scale
    grid = np.linspace(r_lo, r_hi, table.size)
    theta_half = np.interp(0.5 * r, grid, table, left=1.0, right=0.0)
    theta = np.interp(r, grid, table, left=1.0, right=0.0)
    return theta_half - theta


def _weighted_power_sum_np(values, weights, p):
    # values: (M, P) magnitudes; weights: (M,)
    return float(np.dot(weights, np.sum(np.abs(values) ** p, axis=1)))


def _duhamel_accumulate_np(decay, coef, itype, start, forcing):
    n_t = forcing.shape[0]
    width = coef.shape[1]
    out = np.zeros_like(forcing)
    for j in range(n_t - 1):
        acc = decay * out[j]
        c = coef[itype[j]]
        s0 = start[j]
        for m in range(width):
            acc = acc + c[m] * forcing[s0 + m]
        out[j + 1] = acc
    return out


# ---------------------------------------------------------------------------
# numba versions

if BACKEND == "numba":

    @nb.njit(cache=True)
    def _interp_table(x, r_lo, step, table):
        if x <= r_lo:
            return 1.0
        pos = (x - r_lo) / step
        i = int(pos)
        if i >= table.size - 1:
            return 0.0
        frac = pos - i
        return table[i] + frac * (table[i + 1] - table[i])

    @nb.njit(cache=True)
    def _shell_weights_nb(rho, scale, table, r_lo, r_hi):
        flat = rho.ravel()
        out = np.empty(flat.size)
        step = (r_hi - r_lo) / (table.size - 1)
        for i in range(flat.size):
            r = flat[i] * scale
            out[i] = _interp_table(0.5 * r, r_lo, step, table) - _interp_table(r, r_lo, step, table)
        return out.reshape(rho.shape)

    @nb.njit(cache=True)
    def _weighted_power_sum_nb(values, weights, p):
        total = 0.0
        m, q = values.shape
        ip = int(p)
        if ip == p and 1 <= ip <= 8:
            # small integer exponents by repeated multiplication
            for i in range(m):
                row = 0.0
                for k in range(q):
                    a = abs(values[i, k])
                    v = a
                    for _ in range(ip - 1):
                        v *= a
                    row += v
                total += weights[i] * row
            return total
        for i in range(m):
            row = 0.0
            for k in range(q):
                a = abs(values[i, k])
                if a > 0.0:
                    row += np.exp(p * np.log(a))
            total += weights[i] * row
        return total

    @nb.njit(cache=True)
    def _duhamel_accumulate_nb(decay, coef, itype, start, forcing):
        # forcing: (n_t, C, M) complex; decay: (M,); coef: (types, width, M)
        n_t, n_c, n_m = forcing.shape
        width = coef.shape[1]
        out = np.zeros_like(forcing)
        for j in range(n_t - 1):
            t = itype[j]
            s0 = start[j]
            for c in range(n_c):
                for i in range(n_m):
                    acc = decay[i] * out[j, c, i]
                    for m in range(width):
                        acc += coef[t, m, i] * forcing[s0 + m, c, i]
                    out[j + 1, c, i] = acc
        return out


def shell_weights(rho, scale, table, r_lo, r_hi):
    """Evaluate the dyadic shell profile at ``scale * rho`` (any array shape)."""
    rho = np.ascontiguousarray(rho, dtype=np.float64)
    if BACKEND == "numba":
        return _shell_weights_nb(rho, float(scale), table, float(r_lo), float(r_hi))
    return _shell_weights_np(rho, scale, table, r_lo, r_hi)


def weighted_power_sum(values, weights, p):
    """Sum_i weights[i] * Sum_k |values[i, k]|**p for a 2-D array of magnitudes."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if BACKEND == "numba":
        return float(_weighted_power_sum_nb(values, weights, float(p)))
    return _weighted_power_sum_np(values, weights, p)


def duhamel_accumulate(decay, coef, itype, start, forcing):
    """Run D[j+1] = decay*D[j] + sum_m coef[itype[j], m] * forcing[start[j] + m].

    ``forcing`` has shape (n_t, C, M); ``decay`` (M,); ``coef`` (types, width, M).
    Returns D with D[0] = 0.
    """
    forcing = np.ascontiguousarray(forcing, dtype=np.complex128)
    decay = np.ascontiguousarray(decay, dtype=np.float64)
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    itype = np.ascontiguousarray(itype, dtype=np.int64)
    start = np.ascontiguousarray(start, dtype=np.int64)
    if BACKEND == "numba":
        return _duhamel_accumulate_nb(decay, coef, itype, start, forcing)
    return _duhamel_accumulate_np(decay, coef, itype, start, forcing)


def set_threads(n):
    """Forward the thread count to numba (no-op on the numpy backend)."""
    if BACKEND == "numba" and n is not None:
        nb.set_num_threads(max(1, min(int(n), nb.config.NUMBA_NUM_THREADS)))
