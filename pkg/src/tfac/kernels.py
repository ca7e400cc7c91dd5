"""Nonuniform Alikhanov coefficients, discrete kernels and complementary kernels.

Index convention: tables are stored as ``(N, N)`` lower-triangular arrays where
entry ``[n - 1, j - 1]`` holds the value for the 1-based pair ``(n, j)``.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import InvariantViolation, ParameterDomainError
from .mittag_leffler import mittag_leffler
from .temporal_mesh import PI_A, GradedTimeMesh, build_graded_mesh

# below this ratio step/distance the second-order coefficient uses its Taylor series
_SERIES_CUTOFF = 0.5
_SERIES_TERMS = 64


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 1:
        raise ParameterDomainError(f"alpha must lie in (0, 1), got {alpha}")


def _pow_diff(r, dx, p):
    """``(r + dx)**p - r**p`` without cancellation for ``dx << r``."""
    return r**p * np.expm1(p * np.log1p(dx / r))


def _bubble_integral(x, alpha):
    """``J(x) = int_0^1 s (1 - s) (1 + x s)**(-alpha - 1) ds`` for ``x > 0``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x <= _SERIES_CUTOFF

    xs = x[small]
    if xs.size:
        # sum_k binom(-alpha-1, k) x^k / ((k+2)(k+3)), Horner from the tail
        coef = np.empty(_SERIES_TERMS)
        c = 1.0
        for k in range(_SERIES_TERMS):
            coef[k] = c / ((k + 2) * (k + 3))
            c *= -(alpha + 1 + k) / (k + 1)
        acc = np.zeros_like(xs)
        for k in range(_SERIES_TERMS - 1, -1, -1):
            acc = acc * xs + coef[k]
        out[small] = acc

    xl = x[~small]
    if xl.size:
        lg = np.log1p(xl)
        t2 = np.expm1((2 - alpha) * lg) / (2 - alpha)
        t1 = np.expm1((1 - alpha) * lg) / (1 - alpha)
        t0 = np.expm1(-alpha * lg) / alpha
        out[~small] = (-t2 + (xl + 2) * t1 + (xl + 1) * t0) / xl**3
    return out


def _a_values(t, dt, alpha, nu, n, j):
    """Vectorized ``a^{n,j}`` for 1-based integer arrays ``n >= j``."""
    tau = nu * t[n - 1] + (1 - nu) * t[n]
    d = dt[j - 1]
    g2 = math.gamma(2 - alpha)
    out = np.empty(np.broadcast(n, j).shape)
    diag = n == j
    # j == n: upper limit is the offset level itself
    rho_d = (tau - t[n - 1])[diag]
    out[diag] = rho_d ** (1 - alpha) / (g2 * d[diag])
    off = ~diag
    rho = (tau - t[j])[off]
    out[off] = _pow_diff(rho, d[off], 1 - alpha) / (g2 * d[off])
    return out


def _b_values(t, dt, alpha, nu, n, j):
    """Vectorized ``b^{n,j}`` for 1-based integer arrays ``1 <= j < n``."""
    tau = nu * t[n - 1] + (1 - nu) * t[n]
    d = dt[j - 1]
    d_next = dt[j]
    rho = tau - t[j]
    pref = alpha / math.gamma(1 - alpha)
    return pref * d**2 * rho ** (-alpha - 1) * _bubble_integral(d / rho, alpha) / (d + d_next)


def coeff_a(mesh: GradedTimeMesh, alpha: float, n: int, j: int) -> float:
    """``(1/dt_j) * int_{t_{j-1}}^{min(t_{n-nu}, t_j)} w_{1-alpha}(t_{n-nu} - s) ds``."""
    _check_alpha(alpha)
    if not 1 <= j <= n <= mesh.N:
        raise ParameterDomainError(f"coeff_a needs 1 <= j <= n <= N, got n={n}, j={j}")
    val = _a_values(mesh.nodes, mesh.steps, alpha, mesh.nu, np.array([n]), np.array([j]))
    return float(val[0])


def coeff_b(mesh: GradedTimeMesh, alpha: float, n: int, j: int) -> float:
    """Second-order correction coefficient ``b^{n,j}``, defined for ``j < n``."""
    _check_alpha(alpha)
    if not 1 <= j < n <= mesh.N:
        raise ParameterDomainError(f"coeff_b needs 1 <= j < n <= N, got n={n}, j={j}")
    val = _b_values(mesh.nodes, mesh.steps, alpha, mesh.nu, np.array([n]), np.array([j]))
    return float(val[0])


@dataclass(frozen=True, eq=False)
class KernelTables:
    """Discrete Alikhanov kernels ``K`` and complementary kernels ``P``.

    ``a`` and ``b`` hold the raw coefficients (``b`` is zero on and above the
    diagonal where it is undefined).
    """

    alpha: float
    mesh: GradedTimeMesh
    K: np.ndarray
    P: np.ndarray
    a: np.ndarray
    b: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.mesh.N


def _kernel_arrays(mesh: GradedTimeMesh, alpha: float):
    N = mesh.N
    t, dt, nu = mesh.nodes, mesh.steps, mesh.nu
    n_idx, j_idx = np.tril_indices(N)
    n_idx = n_idx + 1
    j_idx = j_idx + 1

    a = np.zeros((N, N))
    a[n_idx - 1, j_idx - 1] = _a_values(t, dt, alpha, nu, n_idx, j_idx)

    b = np.zeros((N, N))
    strict = j_idx < n_idx
    nb, jb = n_idx[strict], j_idx[strict]
    if nb.size:
        b[nb - 1, jb - 1] = _b_values(t, dt, alpha, nu, nb, jb)

    K = a.copy()
    # mu_j for j >= 2, zero-padded so mu[j-1] is usable
    mu = np.zeros(N)
    mu[1:] = mesh.ratios
    for n in range(2, N + 1):
        row = n - 1
        K[row, 0] -= b[row, 0]
        if n >= 3:
            jj = np.arange(2, n)
            K[row, jj - 1] += b[row, jj - 2] / mu[jj - 1] - b[row, jj - 1]
        K[row, n - 1] += b[row, n - 2] / mu[n - 1]
    return a, b, K


def _complementary(K: np.ndarray) -> np.ndarray:
    N = K.shape[0]
    P = np.zeros_like(K)
    diagK = np.diag(K)
    for i in range(N - 1, -1, -1):
        P[i, i] = 1.0 / diagK[i]
        if i + 1 < N:
            # rows n > i: sum_{j>i} P[n, j] (K[j, i+1] - K[j, i]) / K[i, i]
            dk = K[i + 1 :, i + 1] - K[i + 1 :, i]
            P[i + 1 :, i] = P[i + 1 :, i + 1 :] @ dk / diagK[i]
    return P


def _validate_kernels(K: np.ndarray) -> None:
    N = K.shape[0]
    for n in range(1, N + 1):
        row = K[n - 1, :n]
        bad = np.flatnonzero(~(row > 0))
        if bad.size:
            raise InvariantViolation(f"K[{n},{bad[0] + 1}] = {row[bad[0]]} is not positive")
        if n >= 2:
            dec = np.flatnonzero(~(np.diff(row) > 0))
            if dec.size:
                j = dec[0] + 2
                raise InvariantViolation(f"K[{n},{j - 1}] >= K[{n},{j}]: kernel not increasing in j")


@functools.lru_cache(maxsize=32)
def _cached_tables(T: float, N: int, gamma: float, nu: float, alpha: float) -> KernelTables:
    mesh = build_graded_mesh(T, N, gamma, nu)
    a, b, K = _kernel_arrays(mesh, alpha)
    _validate_kernels(K)
    P = _complementary(K)
    for arr in (a, b, K, P):
        arr.setflags(write=False)
    return KernelTables(alpha=alpha, mesh=mesh, K=K, P=P, a=a, b=b)


def build_kernel_tables(mesh: GradedTimeMesh, alpha: float) -> KernelTables:
    """Build (or fetch from cache) the kernel tables for ``(mesh, alpha)``."""
    _check_alpha(alpha)
    if mesh.gamma > 4.0 / alpha + 1e-12:
        warnings.warn(
            f"gamma={mesh.gamma:g} exceeds 4/alpha={4 / alpha:g}; the second-order "
            "truncation bound does not cover this grading",
            stacklevel=2,
        )
    return _cached_tables(mesh.T, mesh.N, mesh.gamma, mesh.nu, float(alpha))


def discrete_caputo(tables: KernelTables, history, n: int):
    """Alikhanov approximation of the Caputo derivative at ``t_{n-nu}``.

    ``history`` holds ``phi^0 .. phi^m`` (``m >= n``), each a scalar or an
    array of a common shape. Returns ``sum_j K[n,j] (phi^j - phi^{j-1})``.
    """
    if not 1 <= n <= tables.N:
        raise IndexError(f"level {n} outside 1..{tables.N}")
    if len(history) < n + 1:
        raise ValueError(f"history has {len(history)} entries, need {n + 1}")
    shapes = {np.shape(h) for h in history[: n + 1]}
    if len(shapes) != 1:
        raise ValueError(f"history entries have mismatched shapes {sorted(shapes)}")
    H = np.asarray(history[: n + 1], dtype=float)
    diffs = np.diff(H, axis=0)
    return np.tensordot(tables.K[n - 1, :n], diffs, axes=1)


def discrete_caputo_all(tables: KernelTables, values) -> np.ndarray:
    """Alikhanov derivative at every level ``n = 1..N`` for samples ``phi^0..phi^N``."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != tables.N + 1:
        raise ValueError(f"expected {tables.N + 1} samples, got {values.shape[0]}")
    return np.tensordot(tables.K, np.diff(values, axis=0), axes=1)


def quadratic_form_slack(tables: KernelTables, v) -> np.ndarray:
    """Per-level slack of the energy inequality for sequences ``v^0..v^N`` along axis 0.

    Entry ``n-1`` is ``D(v)^n v^{n-nu} - D(v^2)^n / 2``, which is nonnegative
    when the inequality holds. Trailing axes index independent sequences.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 or v.shape[0] != tables.N + 1:
        raise ValueError(f"expected {tables.N + 1} samples along axis 0, got shape {v.shape}")
    nu = tables.mesh.nu
    v_off = nu * v[:-1] + (1 - nu) * v[1:]
    return discrete_caputo_all(tables, v) * v_off - 0.5 * discrete_caputo_all(tables, v**2)


# ---------------------------------------------------------------------------
# kernel property diagnostics


@dataclass
class PropertyResult:
    name: str
    status: str  # "pass", "fail", "vacuous", "hypothesis unmet"
    worst_slack: float
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status in ("pass", "vacuous")


@dataclass
class KernelDiagnostics:
    alpha: float
    N: int
    gamma: float
    items: dict[str, PropertyResult]

    @property
    def all_ok(self) -> bool:
        return all(r.ok for r in self.items.values())

    def rows(self) -> list[dict]:
        return [
            {"item": r.name, "status": r.status, "worst_slack": r.worst_slack, "detail": r.detail}
            for r in self.items.values()
        ]


def _rel_slack(rhs: np.ndarray, lhs: np.ndarray) -> float:
    scale = np.maximum(np.abs(rhs), np.finfo(float).tiny)
    return float(np.min((rhs - lhs) / scale))


def _status(slack: float, tol: float) -> str:
    return "pass" if slack >= -tol else "fail"


def check_kernel_properties(
    tables: KernelTables,
    mesh: GradedTimeMesh | None = None,
    *,
    ml_rates=(0.1, 1.0, 10.0),
    betas=(0.1, 0.3, 0.5, 0.7, 0.9),
    tol: float = 1e-10,
) -> KernelDiagnostics:
    """Evaluate the seven complementary-kernel properties (a)-(g) on the tables.

    Slacks are reported relative to the right-hand side bound; a negative
    slack means the inequality is violated.
    """
    mesh = tables.mesh if mesh is None else mesh
    alpha = tables.alpha
    K, P = tables.K, tables.P
    N = mesh.N
    t = mesh.nodes[1:]
    dt = mesh.steps
    lower = np.tril(np.ones((N, N), dtype=bool))
    items: dict[str, PropertyResult] = {}

    # (a) positivity, monotonicity, P bound
    bound = PI_A * math.gamma(2 - alpha) * dt**alpha
    Pl = P[lower]
    p_bound_slack = _rel_slack(np.broadcast_to(bound, (N, N))[lower], Pl)
    pos_slack = float(Pl.min() / Pl.max())
    mono = [np.diff(K[n, : n + 1]).min() / K[n, n] for n in range(1, N)]
    mono_slack = float(min(mono)) if mono else math.inf
    worst = min(p_bound_slack, pos_slack, mono_slack)
    ok = p_bound_slack >= -tol and pos_slack > 0 and mono_slack > 0
    items["a"] = PropertyResult("a", "pass" if ok else "fail", worst, "P>0, P<=pi_A G(2-a) dt^a, K increasing")

    # (b) sum_j P[n,j] K[j,i] = 1
    err = float(np.abs((P @ K)[lower] - 1.0).max())
    items["b"] = PropertyResult("b", "pass" if err <= tol else "fail", -err, "max |sum P K - 1|")

    # (c) sum_j P[n,j] w_{1+(m-1)a}(t_j) <= pi_A w_{1+ma}(t_n)
    slack = math.inf
    for m in range(0, int(math.floor(1 / alpha)) + 1):
        lhs = P @ (t ** ((m - 1) * alpha) / gamma_fn(1 + (m - 1) * alpha))
        rhs = PI_A * t ** (m * alpha) / gamma_fn(1 + m * alpha)
        slack = min(slack, _rel_slack(rhs, lhs))
    items["c"] = PropertyResult("c", _status(slack, tol), slack, "m = 0..floor(1/alpha)")

    # (d) Mittag-Leffler sum, needs non-decreasing steps
    if N < 2:
        items["d"] = PropertyResult("d", "vacuous", math.inf, "needs n >= 2")
    elif np.any(np.diff(dt) < -1e-14 * mesh.T):
        items["d"] = PropertyResult("d", "hypothesis unmet", math.nan, "steps decrease somewhere")
    else:
        slack = math.inf
        for rate in ml_rates:
            E = mittag_leffler(alpha, rate * t**alpha)
            Ps = np.tril(P, -1)  # j <= n - 1
            lhs = rate * (Ps @ E)
            rhs = PI_A * (E - 1.0)
            slack = min(slack, _rel_slack(rhs[1:], lhs[1:]))
        items["d"] = PropertyResult("d", _status(slack, tol), slack, f"rates {tuple(ml_rates)}")

    # (e) t^{beta - alpha} weighted bound
    slack = math.inf
    for beta in betas:
        lhs = P @ t ** (beta - alpha)
        rhs = PI_A * math.gamma(1 + beta - alpha) / math.gamma(1 + beta) * t**beta
        slack = min(slack, _rel_slack(rhs, lhs))
    items["e"] = PropertyResult("e", _status(slack, tol), slack, f"betas {tuple(betas)}")

    # (f) logarithmic bound
    n_arr = np.arange(1, N + 1)
    lhs = P @ t ** (-alpha)
    rhs = 4 * PI_A * math.exp(mesh.gamma) * np.log(n_arr + 2)
    slack = _rel_slack(rhs, lhs)
    items["f"] = PropertyResult("f", _status(slack, tol), slack, "4 pi_A e^gamma log(n+2)")

    # (g) ratio of the last two complementary kernels
    if N < 2:
        items["g"] = PropertyResult("g", "vacuous", math.inf, "needs n >= 2")
    else:
        idx = np.arange(1, N)
        lhs = P[idx, idx] / P[idx, idx - 1]
        rhs = (2 - alpha) / alpha * mesh.ratios**alpha
        slack = _rel_slack(rhs, lhs)
        items["g"] = PropertyResult("g", _status(slack, tol), slack, "P[n,n]/P[n,n-1]")

    return KernelDiagnostics(alpha=alpha, N=N, gamma=mesh.gamma, items=items)
