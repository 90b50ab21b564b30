"""Clause-evaluation kernels.

Every kernel has a numba-compiled loop version and a vectorised numpy
version. The loop versions are used when numba imports cleanly and the
``MEGABIKE_DISABLE_NUMBA`` environment variable is unset (or "0"); set it to
"1" to force the numpy path.

Comparator codes: 0 ``<``, 1 ``>``, 2 ``<=``, 3 ``>=``, 4 ``=``. A clause that
touches an undefined input (NaN) passes by default.
"""

from __future__ import annotations

import os

import numpy as np

EQ_TOL = 1e-9

LT, GT, LEQ, GEQ, EQ = 0, 1, 2, 3, 4

try:  # pragma: no cover - exercised implicitly
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover
    numba = None
    NUMBA_AVAILABLE = False


def _numba_requested() -> bool:
    flag = os.environ.get("MEGABIKE_DISABLE_NUMBA", "0").strip().lower()
    return flag in ("", "0", "false", "no")


USE_NUMBA = NUMBA_AVAILABLE and _numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# loop kernels (compiled by numba)


def _compare_scalar(v, op):
    if op == 0:
        return v < 0.0
    if op == 1:
        return v > 0.0
    if op == 2:
        return v <= 0.0
    if op == 3:
        return v >= 0.0
    return abs(v) <= EQ_TOL


def _clauses_loop(matrix, ops, x, results):
    """Evaluate clauses top to bottom, stopping at the first failure.

    Fills ``results[:k]`` and returns ``(k, visits)``.
    """
    n, m = matrix.shape
    visits = 0
    for i in range(n):
        acc = 0.0
        undefined = False
        for j in range(m):
            visits += 1
            xj = x[j]
            if xj != xj:
                undefined = True
            else:
                acc += matrix[i, j] * xj
        ok = undefined or _compare_scalar(acc, ops[i])
        results[i] = ok
        if not ok:
            return i + 1, visits
    return n, visits


def _batch_loop(matrix, ops, X, active):
    """Evaluate one rule against every active column of ``X`` (m x C).

    Returns ``(visits, remaining)``; ``active`` is updated in place.
    """
    n, m = matrix.shape
    visits = 0
    remaining = 0
    for c in range(X.shape[1]):
        if not active[c]:
            continue
        for i in range(n):
            acc = 0.0
            undefined = False
            for j in range(m):
                visits += 1
                xj = X[j, c]
                if xj != xj:
                    undefined = True
                else:
                    acc += matrix[i, j] * xj
            if not (undefined or _compare_scalar(acc, ops[i])):
                active[c] = False
                break
        remaining += active[c]
    return visits, remaining


def _csr_loop(data, indices, indptr, ops, x):
    """Row-wise sparse evaluation with early exit; returns (passed, rows_done)."""
    nrows = indptr.shape[0] - 1
    for i in range(nrows):
        acc = 0.0
        undefined = False
        for k in range(indptr[i], indptr[i + 1]):
            xj = x[indices[k]]
            if xj != xj:
                undefined = True
            else:
                acc += data[k] * xj
        if not (undefined or _compare_scalar(acc, ops[i])):
            return False, i + 1
    return True, nrows


# ---------------------------------------------------------------------------
# numpy fallbacks


def _compare_vec(v, ops):
    out = np.empty(v.shape, dtype=np.bool_)
    ops = np.broadcast_to(ops.reshape((-1,) + (1,) * (v.ndim - 1)), v.shape)
    out[ops == LT] = v[ops == LT] < 0.0
    out[ops == GT] = v[ops == GT] > 0.0
    out[ops == LEQ] = v[ops == LEQ] <= 0.0
    out[ops == GEQ] = v[ops == GEQ] >= 0.0
    out[ops == EQ] = np.abs(v[ops == EQ]) <= EQ_TOL
    return out


def _clauses_numpy(matrix, ops, x, results):
    n, m = matrix.shape
    undefined = np.isnan(x)
    if undefined.any():
        ok = np.ones(n, dtype=np.bool_)
    else:
        ok = _compare_vec(matrix @ x, ops)
    fails = np.flatnonzero(~ok)
    k = int(fails[0]) + 1 if fails.size else n
    results[:k] = ok[:k]
    return k, k * m


def _batch_numpy(matrix, ops, X, active):
    n, m = matrix.shape
    cols = np.flatnonzero(active)
    if cols.size == 0:
        return 0, 0
    Xa = X[:, cols]
    nan = np.isnan(Xa)
    if nan.any():
        v = matrix @ np.where(nan, 0.0, Xa)
        ok = _compare_vec(v, ops) | nan.any(axis=0)[None, :]
    else:
        ok = _compare_vec(matrix @ Xa, ops)
    failed = ~ok
    any_fail = failed.any(axis=0)
    first = np.where(any_fail, failed.argmax(axis=0) + 1, n)
    active[cols[any_fail]] = False
    return int(first.sum()) * m, int(cols.size - any_fail.sum())


def _csr_numpy(data, indices, indptr, ops, x):
    nrows = indptr.shape[0] - 1
    undefined = np.isnan(x)
    xs = np.where(undefined, 0.0, x)
    rows = np.repeat(np.arange(nrows), np.diff(indptr))
    v = np.zeros(nrows)
    np.add.at(v, rows, data * xs[indices])
    touched = np.zeros(nrows, dtype=np.bool_)
    np.logical_or.at(touched, rows, undefined[indices])
    ok = _compare_vec(v, ops) | touched
    fails = np.flatnonzero(~ok)
    if fails.size:
        return False, int(fails[0]) + 1
    return True, nrows


if USE_NUMBA:
    _compare_scalar = numba.njit(cache=True, inline="always")(_compare_scalar)
    clauses_kernel = numba.njit(cache=True)(_clauses_loop)
    batch_kernel = numba.njit(cache=True)(_batch_loop)
    csr_kernel = numba.njit(cache=True)(_csr_loop)
else:
    clauses_kernel = _clauses_numpy
    batch_kernel = _batch_numpy
    csr_kernel = _csr_numpy

# Both implementations stay importable for cross-checking and benchmarking.
numpy_kernels = {
    "clauses": _clauses_numpy,
    "batch": _batch_numpy,
    "csr": _csr_numpy,
}
compiled_kernels = {
    "clauses": clauses_kernel,
    "batch": batch_kernel,
    "csr": csr_kernel,
}


def warmup() -> None:
    """Trigger compilation so the first timed call does not pay for it."""
    m = np.zeros((1, 2))
    ops = np.array([EQ], dtype=np.int64)
    x = np.ones(2)
    # rule matrices are read-only, which numba treats as a distinct type
    m.setflags(write=False)
    ops_ro = ops.copy()
    ops_ro.setflags(write=False)
    for o in (ops, ops_ro):
        clauses_kernel(m, o, x, np.zeros(1, dtype=np.bool_))
        batch_kernel(m, o, x.reshape(2, 1), np.ones(1, dtype=np.bool_))
    csr_kernel(np.zeros(0), np.zeros(0, dtype=np.int32), np.zeros(2, dtype=np.int32), ops, x)
