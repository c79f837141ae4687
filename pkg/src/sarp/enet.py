"""
Elastic-net estimation by cyclic coordinate descent, without an intercept.

The objective minimised is

    (1 / 2T) * ||y - X b||_2^2 + lambda1 * ||b||_1 + lambda2 * ||b||_2^2

Columns are never standardised: every regressor is a daily return in the
same units as the response, and rescaling would change which peers survive
the L1 penalty.

Cross-validation couples the two penalties through a single ``lam`` and a
mixing weight ``ell``::

    lambda1 = lam * ell,    lambda2 = 0.5 * lam * (1 - ell)

All heavy numerics run in numba kernels with a fixed loop order, so results
are bitwise reproducible regardless of BLAS threading or process layout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = [
    "CvConfig",
    "CvResult",
    "EnetProblem",
    "EnetSolution",
    "cross_validate",
    "fold_bounds",
    "kkt_violation",
    "lambda_grid",
    "objective",
    "penalties",
    "r_squared",
    "solve",
    "solve_path",
]


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _gram(A):
    """A.T @ A, accumulated over rows in ascending order."""
    n_rows, n_cols = A.shape
    G = np.zeros((n_cols, n_cols))
    for t in range(n_rows):
        for j in range(n_cols):
            a = A[t, j]
            if a == 0.0:
                continue
            for k in range(j, n_cols):
                G[j, k] += a * A[t, k]
    for j in range(n_cols):
        for k in range(j + 1, n_cols):
            G[k, j] = G[j, k]
    return G


@njit(cache=True)
def _xty(A, y):
    n_rows, n_cols = A.shape
    c = np.zeros(n_cols)
    for t in range(n_rows):
        yt = y[t]
        for j in range(n_cols):
            c[j] += A[t, j] * yt
    return c


@njit(cache=True)
def _soft(z, gamma):
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


@njit(cache=True)
def _chol_append(L, m, v, d):
    """Extend the factor of an m x m SPD block by one row/column.

    ``v`` holds the new off-diagonal column, ``d`` the new diagonal entry.
    Returns False (leaving L untouched) if the result is not numerically SPD.
    """
    w = np.empty(m)
    for i in range(m):
        s = v[i]
        for k in range(i):
            s -= L[i, k] * w[k]
        w[i] = s / L[i, i]
    s = d
    for i in range(m):
        s -= w[i] * w[i]
    if not s > 1e-12 * d:
        return False
    for i in range(m):
        L[m, i] = w[i]
    L[m, m] = np.sqrt(s)
    return True


@njit(cache=True)
def _chol_delete(L, m, p):
    """Remove row/column p from an m x m Cholesky factor in place."""
    n_tail = m - p - 1
    x = np.empty(n_tail)
    for i in range(n_tail):
        x[i] = L[p + 1 + i, p]
    # shift the rows below p up by one, dropping column p
    for i in range(p, m - 1):
        for k in range(p):
            L[i, k] = L[i + 1, k]
        for k in range(p, i + 1):
            L[i, k] = L[i + 1, k + 1]
    # rank-one update of the trailing block with x
    for k in range(n_tail):
        kk = p + k
        lkk = L[kk, kk]
        r = np.sqrt(lkk * lkk + x[k] * x[k])
        cs = r / lkk
        sn = x[k] / lkk
        L[kk, kk] = r
        for i in range(k + 1, n_tail):
            ii = p + i
            L[ii, kk] = (L[ii, kk] + sn * x[i]) / cs
            x[i] = cs * x[i] - sn * L[ii, kk]


@njit(cache=True)
def _chol_solve(L, m, b, out):
    for i in range(m):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * out[k]
        out[i] = s / L[i, i]
    for i in range(m - 1, -1, -1):
        s = out[i]
        for k in range(i + 1, m):
            s -= L[k, i] * out[k]
        out[i] = s / L[i, i]


@njit(cache=True)
def _polish(G, c, n_obs, l1, l2, beta, max_rounds):
    """Active-set exact solve starting from the support of ``beta``.

    On a fixed support S with signs s the objective is the quadratic
    ``b'(G_SS/2T + l2 I)b - (c_S/T - l1 s)'b``. Each round steps from the
    current point toward that quadratic's minimiser, stopping where the
    first coefficient reaches zero (it then leaves S), so signs stay
    consistent and the objective never increases. Once the minimiser is
    reached, the worst KKT violator outside S is admitted with the sign of
    its gradient. The Cholesky factor of G_SS/T + 2 l2 I is built once and
    then updated in O(|S|^2) per change.

    Returns False if a restricted system is not numerically SPD; the caller
    then falls back to plain coordinate descent.
    """
    n = G.shape[0]
    inv_t = 1.0 / n_obs
    S = np.empty(n, np.int64)
    sign = np.empty(n)
    in_s = np.zeros(n, np.bool_)
    L = np.empty((n, n))
    col = np.empty(n)
    rhs = np.empty(n)
    target = np.empty(n)
    m = 0
    for j in range(n):
        if beta[j] != 0.0:
            for a in range(m):
                col[a] = G[S[a], j] * inv_t
            if not _chol_append(L, m, col, G[j, j] * inv_t + 2.0 * l2):
                return False
            S[m] = j
            sign[m] = 1.0 if beta[j] > 0.0 else -1.0
            in_s[j] = True
            m += 1

    for _ in range(max_rounds):
        for a in range(m):
            rhs[a] = c[S[a]] * inv_t - l1 * sign[a]
        _chol_solve(L, m, rhs, target)

        step = 1.0
        hit = -1
        for a in range(m):
            if target[a] * sign[a] <= 0.0:
                old = beta[S[a]]
                t = old / (old - target[a]) if old != 0.0 else 0.0
                if t < step:
                    step = t
                    hit = a
        for a in range(m):
            j = S[a]
            beta[j] = beta[j] + step * (target[a] - beta[j])
        if hit >= 0:
            beta[S[hit]] = 0.0
            in_s[S[hit]] = False
            _chol_delete(L, m, hit)
            for a in range(hit, m - 1):
                S[a] = S[a + 1]
                sign[a] = sign[a + 1]
            m -= 1
            continue
        for a in range(m):
            beta[S[a]] = target[a]

        # largest KKT violation among coordinates held at zero
        worst = -1
        worst_gap = 0.0
        worst_q = 0.0
        for j in range(n):
            if in_s[j]:
                continue
            s_ = c[j]
            for a in range(m):
                s_ -= G[j, S[a]] * beta[S[a]]
            qj = s_ * inv_t
            gap = abs(qj) - l1
            if gap > worst_gap:
                worst_gap = gap
                worst = j
                worst_q = qj
        if worst < 0:
            return True
        for a in range(m):
            col[a] = G[S[a], worst] * inv_t
        if not _chol_append(L, m, col, G[worst, worst] * inv_t + 2.0 * l2):
            return False
        S[m] = worst
        sign[m] = 1.0 if worst_q > 0.0 else -1.0
        in_s[worst] = True
        m += 1
    return True


@njit(cache=True)
def _sweep_full(G, c, n_obs, l1, l2, beta, q, active):
    """One cyclic pass over every coordinate with a freshly computed gradient."""
    n = G.shape[0]
    inv_t = 1.0 / n_obs
    na = 0
    for j in range(n):
        if beta[j] != 0.0:
            active[na] = j
            na += 1
    for j in range(n):
        s = c[j]
        for kk in range(na):
            k = active[kk]
            s -= G[j, k] * beta[k]
        q[j] = s * inv_t
    max_change = 0.0
    for j in range(n):
        a = G[j, j] * inv_t
        denom = a + 2.0 * l2
        old = beta[j]
        if denom > 0.0:
            new = _soft(q[j] + a * old, l1) / denom
        else:
            new = 0.0
        if new != old:
            d = new - old
            beta[j] = new
            for k in range(n):
                q[k] -= G[j, k] * d * inv_t
            if abs(d) > max_change:
                max_change = abs(d)
    return max_change


@njit(cache=True)
def _sweep_active(G, n_obs, l2, l1, beta, q, active, na):
    inv_t = 1.0 / n_obs
    max_change = 0.0
    for ii in range(na):
        j = active[ii]
        a = G[j, j] * inv_t
        denom = a + 2.0 * l2
        old = beta[j]
        new = _soft(q[j] + a * old, l1) / denom
        if new != old:
            d = new - old
            beta[j] = new
            for kk in range(na):
                k = active[kk]
                q[k] -= G[j, k] * d * inv_t
            if abs(d) > max_change:
                max_change = abs(d)
    return max_change


@njit(cache=True)
def _coordinate_descent(G, c, n_obs, l1, l2, beta, tol, max_iter):
    """Minimise the elastic-net objective in place, starting from ``beta``.

    Works on the Gram form ``G = X'X``, ``c = X'y``. An active-set exact
    solve (see ``_polish``) runs first from the support of the starting
    point; rounds then alternate a full cyclic sweep with another exact
    solve. If the exact solve is unavailable the rounds fall back to sweeps
    over the nonzero set. The solution is declared converged only when a full sweep
    moves no coordinate by more than ``tol``.

    Returns (number of sweeps, converged flag).
    """
    n = G.shape[0]
    q = np.empty(n)
    active = np.empty(n, np.int64)
    n_iter = 0
    use_polish = _polish(G, c, n_obs, l1, l2, beta, 4 * n + 10)
    while n_iter < max_iter:
        max_change = _sweep_full(G, c, n_obs, l1, l2, beta, q, active)
        n_iter += 1
        if max_change <= tol:
            return n_iter, True
        if use_polish:
            use_polish = _polish(G, c, n_obs, l1, l2, beta, 4 * n + 10)
            continue
        na = 0
        for j in range(n):
            if beta[j] != 0.0:
                active[na] = j
                na += 1
        while n_iter < max_iter:
            max_change = _sweep_active(G, n_obs, l2, l1, beta, q, active, na)
            n_iter += 1
            if max_change <= tol:
                break
    return n_iter, False


@njit(cache=True)
def _path(G, c, n_obs, lambdas, ell, tol, max_iter):
    """Warm-started solutions along a descending lambda grid."""
    n = G.shape[0]
    n_lam = lambdas.shape[0]
    betas = np.zeros((n_lam, n))
    iters = np.zeros(n_lam, np.int64)
    conv = np.zeros(n_lam, np.bool_)
    beta = np.zeros(n)
    for i in range(n_lam):
        lam = lambdas[i]
        it, ok = _coordinate_descent(
            G, c, n_obs, lam * ell, 0.5 * lam * (1.0 - ell), beta, tol, max_iter
        )
        betas[i, :] = beta
        iters[i] = it
        conv[i] = ok
    return betas, iters, conv


@njit(cache=True)
def _sse_along_path(X, y, betas):
    """Sum of squared residuals of y - X b for every row b of ``betas``."""
    n_rows = X.shape[0]
    n_lam, n = betas.shape
    out = np.zeros(n_lam)
    idx = np.empty(n, np.int64)
    for i in range(n_lam):
        m = 0
        for j in range(n):
            if betas[i, j] != 0.0:
                idx[m] = j
                m += 1
        s = 0.0
        for t in range(n_rows):
            r = y[t]
            for jj in range(m):
                j = idx[jj]
                r -= X[t, j] * betas[i, j]
            s += r * r
        out[i] = s
    return out


@njit(cache=True)
def _fit_stats(X, y, beta):
    """(sum of squared residuals, total sum of squares about the mean)."""
    n_rows, n = X.shape
    idx = np.empty(n, np.int64)
    m = 0
    for j in range(n):
        if beta[j] != 0.0:
            idx[m] = j
            m += 1
    mean = 0.0
    for t in range(n_rows):
        mean += y[t]
    mean /= n_rows
    sse = 0.0
    sst = 0.0
    for t in range(n_rows):
        r = y[t]
        for jj in range(m):
            j = idx[jj]
            r -= X[t, j] * beta[j]
        sse += r * r
        dev = y[t] - mean
        sst += dev * dev
    return sse, sst


# ---------------------------------------------------------------------------
# public types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnetProblem:
    """Design matrix, response and the two penalty weights."""

    X: np.ndarray
    y: np.ndarray
    lambda1: float
    lambda2: float

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"X must be a non-empty 2-d array, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise FloatingPointError("non-finite value in X or y")
        if not (self.lambda1 >= 0 and self.lambda2 >= 0):
            raise ValueError("penalty weights must be nonnegative")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class EnetSolution:
    """Sparse coefficient vector plus solver diagnostics.

    Only strictly nonzero coefficients are stored, in ascending index order.
    """

    indices: np.ndarray
    values: np.ndarray
    n_features: int
    objective_value: float
    n_iterations: int
    converged: bool

    @classmethod
    def from_dense(cls, beta, objective_value, n_iterations, converged):
        beta = np.asarray(beta, dtype=np.float64)
        idx = np.flatnonzero(beta)
        return cls(idx, beta[idx].copy(), beta.shape[0], float(objective_value),
                   int(n_iterations), bool(converged))

    @property
    def beta(self) -> np.ndarray:
        out = np.zeros(self.n_features)
        out[self.indices] = self.values
        return out

    @property
    def n_nonzero(self) -> int:
        return int(self.indices.shape[0])


@dataclass(frozen=True)
class CvConfig:
    n_folds: int = 3
    ell: float = 0.5
    grid_size: int = 100
    grid_decay: float = 1e-3
    tolerance: float = 1e-7
    max_iterations: int = 10_000

    def __post_init__(self):
        if self.n_folds < 2:
            raise ValueError("n_folds must be at least 2")
        if not 0.0 <= self.ell <= 1.0:
            raise ValueError("ell must lie in [0, 1]")
        if self.grid_size < 1:
            raise ValueError("grid_size must be positive")
        if not 0.0 < self.grid_decay <= 1.0:
            raise ValueError("grid_decay must lie in (0, 1]")

    def penalties(self, lam: float) -> tuple[float, float]:
        return penalties(lam, self.ell)


@dataclass(frozen=True)
class CvResult:
    lambda_: float
    solution: EnetSolution
    lambdas: np.ndarray = field(repr=False)
    cv_error: np.ndarray = field(repr=False)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def penalties(lam: float, ell: float) -> tuple[float, float]:
    """Map the single CV parameter to (lambda1, lambda2)."""
    return lam * ell, 0.5 * lam * (1.0 - ell)


def objective(X, y, beta, lambda1, lambda2) -> float:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    r = y - X @ beta
    return float(r @ r / (2 * X.shape[0]) + lambda1 * np.abs(beta).sum()
                 + lambda2 * beta @ beta)


def kkt_violation(X, y, beta, lambda1, lambda2) -> float:
    """Largest violation of the subgradient optimality conditions.

    For b_j != 0 the stationarity residual is
    ``X_j'(y - Xb)/T - lambda1*sign(b_j) - 2*lambda2*b_j``; for b_j == 0 it
    is the amount by which ``|X_j'(y - Xb)/T|`` exceeds ``lambda1``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    grad = X.T @ (y - X @ beta) / X.shape[0]
    nz = beta != 0
    dev_nz = np.abs(grad[nz] - lambda1 * np.sign(beta[nz]) - 2 * lambda2 * beta[nz])
    dev_z = np.maximum(np.abs(grad[~nz]) - lambda1, 0.0)
    return float(max(dev_nz.max(initial=0.0), dev_z.max(initial=0.0)))


def _finish(X, y, beta, l1, l2, n_iter, converged):
    if not np.all(np.isfinite(beta)):
        raise FloatingPointError("coordinate descent produced a non-finite coefficient")
    sse, _ = _fit_stats(X, y, beta)
    obj = sse / (2 * X.shape[0]) + l1 * np.abs(beta).sum() + l2 * (beta @ beta)
    return EnetSolution.from_dense(beta, obj, n_iter, converged)


def solve(problem: EnetProblem, tolerance: float = 1e-7,
          max_iterations: int = 10_000, warm_start=None) -> EnetSolution:
    """Solve one elastic-net problem by coordinate descent.

    Non-convergence is reported through ``converged=False`` rather than an
    exception; the caller decides what to do with it.
    """
    X, y = problem.X, problem.y
    n = X.shape[1]
    beta = np.zeros(n) if warm_start is None else np.array(warm_start, dtype=np.float64)
    G = _gram(X)
    c = _xty(X, y)
    n_iter, ok = _coordinate_descent(G, c, float(X.shape[0]), float(problem.lambda1),
                                     float(problem.lambda2), beta, float(tolerance),
                                     int(max_iterations))
    return _finish(X, y, beta, problem.lambda1, problem.lambda2, n_iter, ok)


def solve_path(X, y, lambdas, ell: float = 0.5, tolerance: float = 1e-7,
               max_iterations: int = 10_000) -> list[EnetSolution]:
    """Warm-started solutions along ``lambdas`` (taken in the given order)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    G = _gram(X)
    c = _xty(X, y)
    betas, iters, conv = _path(G, c, float(X.shape[0]), lambdas, float(ell),
                               float(tolerance), int(max_iterations))
    out = []
    for i, lam in enumerate(lambdas):
        l1, l2 = penalties(lam, ell)
        out.append(_finish(X, y, betas[i].copy(), l1, l2, iters[i], conv[i]))
    return out


def _grid_from_xty(c, n_obs, config: CvConfig) -> np.ndarray:
    if config.ell <= 0:
        raise ValueError("lambda grid requires ell > 0")
    top = np.max(np.abs(c)) / (n_obs * config.ell)
    if not top > 0:
        raise ValueError("degenerate problem: X'y is identically zero")
    if config.grid_size == 1:
        return np.array([top])
    return top * np.logspace(0.0, np.log10(config.grid_decay), config.grid_size)


def lambda_grid(X, y, config: CvConfig = CvConfig()) -> np.ndarray:
    """Descending log-spaced grid from lambda_max to grid_decay * lambda_max.

    lambda_max = max_j |X_j'y| / (T * ell) is the smallest lam for which
    the coupled solution is exactly zero.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    return _grid_from_xty(_xty(X, y), X.shape[0], config)


def fold_bounds(n_obs: int, n_folds: int) -> list[tuple[int, int]]:
    """Contiguous (start, stop) row blocks; sizes differ by at most one."""
    if n_folds > n_obs:
        raise ValueError(f"need at least {n_folds} observations for {n_folds}-fold CV, got {n_obs}")
    base, extra = divmod(n_obs, n_folds)
    bounds, start = [], 0
    for f in range(n_folds):
        stop = start + base + (1 if f < extra else 0)
        bounds.append((start, stop))
        start = stop
    return bounds


def _block_stats(X, y, bounds):
    grams = [_gram(X[a:b]) for a, b in bounds]
    xtys = [_xty(X[a:b], y[a:b]) for a, b in bounds]
    return grams, xtys


def _sum_blocks(blocks, skip=None):
    total = None
    for i, b in enumerate(blocks):
        if i == skip:
            continue
        total = b.copy() if total is None else total + b
    return total


def cross_validate_blocks(X, y, grams, xtys, bounds, config: CvConfig) -> CvResult:
    """CV given precomputed per-fold Gram blocks (shared across focal assets).

    The full-sample Gram is the fold blocks added in order, so results are
    bitwise identical to :func:`cross_validate` on the same rows.
    """
    n_obs, n = X.shape
    c_full = _sum_blocks(xtys)
    if not np.any(c_full != 0.0):
        # nothing to fit (e.g. y == 0): the largest lambda is zero, beta is zero
        beta = np.zeros(n)
        sol = _finish(X, y, beta, 0.0, 0.0, 0, True)
        return CvResult(0.0, sol, np.zeros(1), np.zeros(1))
    lambdas = _grid_from_xty(c_full, n_obs, config)
    tol, max_iter = float(config.tolerance), int(config.max_iterations)

    cv_error = np.zeros(lambdas.shape[0])
    for f, (a, b) in enumerate(bounds):
        G_tr = _sum_blocks(grams, skip=f)
        c_tr = _sum_blocks(xtys, skip=f)
        betas, _, _ = _path(G_tr, c_tr, float(n_obs - (b - a)), lambdas,
                            float(config.ell), tol, max_iter)
        cv_error += _sse_along_path(X[a:b], y[a:b], betas) / (b - a)
    cv_error /= len(bounds)

    # argmin over a descending grid; strict '<' keeps the larger lam on ties
    best = 0
    for i in range(1, cv_error.shape[0]):
        if cv_error[i] < cv_error[best]:
            best = i

    G_full = _sum_blocks(grams)
    betas, iters, conv = _path(G_full, c_full, float(n_obs), lambdas[: best + 1],
                               float(config.ell), tol, max_iter)
    l1, l2 = penalties(lambdas[best], config.ell)
    sol = _finish(X, y, betas[best].copy(), l1, l2, iters[best], conv[best])
    return CvResult(float(lambdas[best]), sol, lambdas, cv_error)


def cross_validate(X, y, config: CvConfig = CvConfig()) -> CvResult:
    """Select lam by K-fold CV on contiguous time blocks, refit on all rows.

    The selected lam minimises mean out-of-fold squared prediction error;
    ties go to the larger lam.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be T x N and y length T")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise FloatingPointError("non-finite value in X or y")
    bounds = fold_bounds(X.shape[0], config.n_folds)
    grams, xtys = _block_stats(X, y, bounds)
    return cross_validate_blocks(X, y, grams, xtys, bounds, config)


def r_squared(X, y, beta) -> float:
    """1 - SSE / SST with fitted values X @ beta (no intercept).

    The mean is the sample mean of y; the value is not clamped and is
    negative whenever the fit is worse than the mean.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    beta = np.ascontiguousarray(beta, dtype=np.float64)
    if y.shape[0] == 0 or np.all(y == y[0]):
        raise ValueError("degenerate focal series: zero variance")
    sse, sst = _fit_stats(X, y, beta)
    if sst == 0.0:
        raise ValueError("degenerate focal series: zero variance")
    return 1.0 - sse / sst
