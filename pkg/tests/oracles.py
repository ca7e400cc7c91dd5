"""Independent quadrature references for the kernel coefficients."""

import math

from scipy.integrate import quad


def a_oracle(mesh, alpha, n, j):
    t, nu = mesh.nodes, mesh.nu
    tau = nu * t[n - 1] + (1 - nu) * t[n]
    lo, hi = t[j - 1], min(tau, t[j])
    c = 1 / math.gamma(1 - alpha)
    if j == n:
        # algebraic endpoint singularity (tau - s)^(-alpha)
        val, _ = quad(lambda s: c, lo, hi, weight="alg", wvar=(0.0, -alpha), epsabs=0, epsrel=1e-13, limit=200)
    else:
        val, _ = quad(lambda s: c * (tau - s) ** (-alpha), lo, hi, epsabs=0, epsrel=1e-13, limit=200)
    return val / (t[j] - t[j - 1])


def b_oracle(mesh, alpha, n, j):
    t, nu = mesh.nodes, mesh.nu
    tau = nu * t[n - 1] + (1 - nu) * t[n]
    dj, dj1 = t[j] - t[j - 1], t[j + 1] - t[j]
    c = alpha / math.gamma(1 - alpha)
    f = lambda s: (s - t[j - 1]) * (t[j] - s) * c * (tau - s) ** (-alpha - 1)  # noqa: E731
    val, _ = quad(f, t[j - 1], t[j], epsabs=0, epsrel=1e-13, limit=200)
    return val / (dj * (dj + dj1))
