"""Independent high-precision references used by the tests.

Nothing here imports the package; every value is computed from first
principles with mpmath or scipy.
"""

import math

import mpmath as mp
import numpy as np
from scipy import integrate


def prabhakar_mp(q, r, g, z, terms=None, dps=60):
    """Prabhakar series summed in extended precision (fixed ``terms`` or to convergence)."""
    with mp.workdps(dps):
        q, r, g, z = mp.mpf(q), mp.mpf(r), mp.mpf(g), mp.mpf(z)

        def term(j):
            return mp.rf(g, j) / mp.factorial(j) * z**j * mp.rgamma(q * j + r)

        if terms is not None:
            return float(mp.fsum(term(j) for j in range(terms)))
        return float(mp.nsum(term, [0, mp.inf]))


def resolvent_mp(alpha, beta, nu, lam, t, dps=None):
    """``s(t)`` from the explicit double series, summed in extended precision.

    ``exp(-beta t) sum_k sum_j (beta - lam)^k t^k C(k+j, j) y^j / Gamma((nu+1) j + k + 1)``
    with ``y = -alpha lam t^(nu+1)``.
    """
    if t == 0:
        return 1.0
    if dps is None:
        # the terms reach about exp(|x| + |y|) before cancelling down to O(1)
        dps = 40 + int(((abs(beta - lam) * t) + alpha * lam * t ** (nu + 1)) / math.log(10)) + 10
    with mp.workdps(dps):
        alpha, beta, nu, lam, t = (mp.mpf(v) for v in (alpha, beta, nu, lam, t))
        x = (beta - lam) * t
        y = -alpha * lam * t ** (nu + 1)
        tiny = mp.mpf(10) ** (-45)
        total = mp.mpf(0)
        k = 0
        quiet = 0
        while True:
            xk = abs(x) ** k
            inner = mp.mpf(0)
            prev = mp.inf
            j = 0
            while True:
                term = mp.binomial(k + j, j) * y**j * mp.rgamma((nu + 1) * j + k + 1)
                inner += term
                # stop once past the peak and negligible in absolute terms
                if abs(term) < prev and xk * abs(term) < tiny:
                    break
                prev = abs(term)
                j += 1
            outer = x**k * inner
            total += outer
            if k > abs(x) and abs(outer) < tiny:
                quiet += 1
                if quiet >= 3:
                    break
            else:
                quiet = 0
            k += 1
        return float(mp.exp(-beta * t) * total)


def kernel_convolution(alpha, beta, nu, t, g):
    """``int_0^t kappa(t - s) g(s) ds`` by adaptive quadrature with the algebraic weight."""
    val, _ = integrate.quad(
        lambda tau: math.exp(-beta * tau) * g(t - tau),
        0.0,
        t,
        weight="alg",
        wvar=(nu - 1.0, 0.0),
        epsabs=1e-14,
        epsrel=1e-13,
        limit=200,
    )
    return alpha * val / math.gamma(nu)


def observed_order(errors, ratio=2.0):
    e = np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / math.log(ratio)


def normal_equations_cost(values, columns, tau, B, zeta, zeta1, lam):
    """Minimum of the discretized quadratic cost, by stacked least squares.

    ``values[:, columns[k]]`` holds ``s(T - t_k)`` and ``columns[0]`` is ``T``.
    Minimizes ``|a + sum_k tau_k diag(s_k) B u_k - zeta1|^2 + lam sum_k tau_k |u_k|^2``.
    """
    B = np.asarray(B, dtype=float)
    Mu = B.shape[1]
    A = np.hstack([tau[k] * values[:, c][:, None] * B for k, c in enumerate(columns)])
    a = values[:, columns[0]] * np.asarray(zeta, dtype=float)
    weights = np.repeat(tau, Mu)
    lhs = np.vstack([A, np.diag(np.sqrt(lam * weights))])
    rhs = np.concatenate([np.asarray(zeta1, dtype=float) - a, np.zeros(A.shape[1])])
    u = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    return float(np.sum((A @ u + a - zeta1) ** 2) + lam * np.sum(weights * u**2))
