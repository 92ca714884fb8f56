"""Gamma function and the three-parameter (Prabhakar) Mittag-Leffler function.

The Prabhakar function is

.. math::

    E^{\\gamma}_{q,r}(z) = \\sum_{j\\ge 0}
        \\frac{\\Gamma(\\gamma+j)\\, z^j}{j!\\,\\Gamma(\\gamma)\\,\\Gamma(qj+r)}.

Small arguments are summed directly. Large arguments are obtained by numerical
inversion of the Laplace pair

.. math::

    \\mathcal{L}\\{t^{r-1} E^{\\gamma}_{q,r}(-a t^q)\\}(s)
        = \\frac{s^{q\\gamma - r}}{(s^q + a)^{\\gamma}},

evaluated at ``t = 1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import NotConverged, PoleError, RouteDisagreement

EPS = np.finfo(float).eps

#: |z| above which :func:`ml3_eval` switches from the series to the contour route.
Z_SWITCH = 30.0
#: band on the negative real axis where both routes are evaluated and compared
OVERLAP_BAND = (20.0, 40.0)
OVERLAP_RTOL = 1e-8


class Route(str, enum.Enum):
    SERIES = "Series"
    CONTOUR = "Contour"


@dataclass(frozen=True)
class EvalResult:
    value: complex | float
    error_estimate: float
    terms_used: int
    route: Route

    def __float__(self) -> float:
        return float(np.real(self.value))


def gamma_fn(x: float) -> float:
    """Gamma function for real ``x`` (reflection is handled for ``x < 0``).

    Raises
    ------
    PoleError
        If ``x`` is zero or a negative integer.
    """
    x = float(x)
    if x <= 0 and x == math.floor(x):
        raise PoleError(f"Gamma has a pole at x={x:g}")
    return float(special.gamma(x))


def _check_params(q, g, tol):
    if not q > 0:
        raise ValueError("q must be positive")
    if not g > 0:
        raise ValueError("gamma parameter g must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")


def ml3_terms(q: float, r: float, g: float, z, n: int) -> np.ndarray:
    """First ``n`` terms of the Prabhakar series computed directly from the closed form.

    Used as an independent check on the recurrence in :func:`ml3_series_batch`.
    """
    j = np.arange(n, dtype=float)
    arg = q * j + r
    pole = (arg <= 0) & (arg == np.floor(arg))
    safe = np.where(pole, 1.0, arg)
    logmag = special.gammaln(g + j) - special.gammaln(g) - special.gammaln(j + 1) - special.gammaln(safe)
    sign = np.where(pole, 0.0, np.where(safe > 0, 1.0, special.gammasgn(np.minimum(safe, 0.5))))
    z = complex(z) if np.iscomplexobj(z) else float(z)
    if z == 0:
        return np.where(j == 0, sign * np.exp(logmag), 0.0)
    with np.errstate(over="ignore"):
        mag = np.exp(logmag + j * math.log(abs(z)))
    phase = np.power(z / abs(z), j)
    return sign * mag * phase


def _term_stream(q: float, r: np.ndarray, g: np.ndarray, z):
    """Yield successive term arrays ``term_j`` for each ``(r, g)`` pair, starting at ``j = 0``."""
    dtype = complex if isinstance(z, complex) else float
    use_poch = r > 0
    coeff = np.ones(r.size, dtype=dtype)
    term = special.rgamma(r).astype(dtype)
    yield term
    j = 0
    while True:
        with np.errstate(over="ignore", invalid="ignore"):
            coeff = coeff * z * (g + j) / (j + 1)
            stepped = term * z * (g + j) / (j + 1) / np.where(use_poch, special.poch(q * j + r, q), 1.0)
            direct = coeff * special.rgamma(q * (j + 1) + r)
        term = np.where(use_poch, stepped, direct)
        yield term
        j += 1


def _pairs(r, g):
    r = np.atleast_1d(np.asarray(r, dtype=float))
    g = np.atleast_1d(np.asarray(g, dtype=float)) * np.ones_like(r)
    return r * np.ones_like(g), g


def ml3_recurrence_terms(q: float, r: float, g: float, z, n: int) -> np.ndarray:
    """First ``n`` terms exactly as produced by the recurrence in :func:`ml3_series_batch`."""
    rr, gg = _pairs(r, g)
    z = complex(z) if np.iscomplexobj(z) else float(z)
    stream = _term_stream(q, rr, gg, z)
    return np.array([next(stream)[0] for _ in range(n)])


def ml3_series_batch(q: float, r, g, z, tol: float = 1e-16, max_terms: int = 2000, floor: float = 1.0):
    """Sum the Prabhakar series for several ``(r, g)`` pairs sharing ``q`` and ``z``.

    Terms follow the multiplicative recurrence

    ``term[j+1] = term[j] * z * (g + j) / (j + 1) * Gamma(q j + r) / Gamma(q (j + 1) + r)``

    with the Gamma ratio taken from :func:`scipy.special.poch`, which stays finite
    where the individual Gamma values overflow. Where ``q j + r`` can hit a pole
    (``r <= 0``) the reciprocal Gamma is applied directly instead. Each series
    stops once three consecutive terms fall below ``tol * max(floor, |partial sum|)``;
    ``floor=0`` makes the rule purely relative, for values that get rescaled later.

    Returns ``(values, error_estimates, terms_used)`` as arrays.

    The error estimate is a geometric bound on the tail plus the rounding error
    of the recurrence: every term carries a relative error that grows roughly
    linearly with its index, so cancellation costs about ``j eps sum|term|``.
    """
    _check_params(q, np.min(g), tol)
    r, g = _pairs(r, g)
    z = complex(z) if np.iscomplexobj(z) else float(z)
    n = r.size
    stream = _term_stream(q, r, g, z)
    term = next(stream)
    total = term.copy()
    abs_sum = np.abs(term)
    prev_abs = np.abs(term)
    small = np.zeros(n, dtype=int)
    done = np.zeros(n, dtype=bool)
    used = np.zeros(n, dtype=int)
    tail = np.zeros(n)
    for j in range(max_terms):
        term = next(stream)
        a = np.abs(term)
        live = ~done
        if np.any(live & (~np.isfinite(a) | (a > 1e290))):
            raise NotConverged(f"series terms overflow at j={j + 1} for |z|={abs(z):g}")
        total = np.where(live, total + term, total)
        abs_sum = np.where(live, abs_sum + a, abs_sum)
        below = a < tol * np.maximum(floor, np.abs(total))
        small = np.where(live & below, small + 1, np.where(live, 0, small))
        fire = live & (small >= 3)
        if np.any(fire):
            ratio = np.where(prev_abs > 0, a / np.where(prev_abs > 0, prev_abs, 1.0), 0.0)
            factor = np.where(ratio < 0.9, 1.0 / (1.0 - np.minimum(ratio, 0.9)), 10.0)
            tail = np.where(fire, a * factor, tail)
            used = np.where(fire, j + 2, used)
            done |= fire
        prev_abs = a
        if done.all():
            break
    else:
        raise NotConverged(f"Prabhakar series did not converge within {max_terms} terms (|z|={abs(z):g})")
    err = tail + 8.0 * EPS * (used + 10) * abs_sum
    return total, err, used


def ml3_series(q: float, r: float, g: float, z, tol: float = 1e-16, max_terms: int = 2000) -> EvalResult:
    """Partial sum of the defining series of :math:`E^{g}_{q,r}(z)`.

    Scalar front end of :func:`ml3_series_batch`.

    Raises
    ------
    NotConverged
        If ``max_terms`` is reached first; callers fall back to the contour route.
    """
    _check_params(q, g, tol)
    values, errs, used = ml3_series_batch(q, [r], [g], z, tol=tol, max_terms=max_terms)
    value = complex(values[0]) if np.iscomplexobj(values) else float(values[0])
    return EvalResult(value, float(errs[0]), int(used[0]), Route.SERIES)


def _kummer_q1(r: float, g: float, z: float, tol: float) -> EvalResult:
    # E^g_{1,r}(z) = 1F1(g; r; z) / Gamma(r) = e^z 1F1(r - g; r; -z) / Gamma(r)
    x = -z
    a = r - g
    term = 1.0
    total = 1.0
    abs_sum = 1.0
    small = 0
    for j in range(5000):
        term *= (a + j) * x / ((r + j) * (j + 1))
        total += term
        abs_sum += abs(term)
        if abs(term) < tol * max(1.0, abs(total)):
            small += 1
            if small >= 3:
                scale = math.exp(z) * special.rgamma(r)
                err = abs(scale) * (abs(term) + 8.0 * EPS * (j + 10) * abs_sum)
                return EvalResult(float(scale * total), float(err), j + 2, Route.SERIES)
        else:
            small = 0
    raise NotConverged("Kummer-transformed series did not converge")


def ml3_contour(q: float, r: float, g: float, z, nodes: int | None = None) -> EvalResult:
    """Evaluate :math:`E^{g}_{q,r}(z)` by inverting its Laplace symbol at ``t = 1``."""
    from .resolvent import invert_laplace

    a = -complex(z)
    expo = q * g - r

    def symbol(s):
        return s ** expo / (s ** q + a) ** g

    if nodes is None:
        # for q >= 1 the contour has to reach past the poles at |s| = |z|^(1/q);
        # for q < 1 they lie off the principal sheet
        nodes = max(24, int(math.ceil(2.0 * abs(z) ** (1.0 / q) + 12))) if q >= 1 else 32
    value, err, used = invert_laplace(symbol, 1.0, nodes=nodes, growth=1.5)
    if not np.iscomplexobj(z):
        value = float(np.real(value))
    return EvalResult(value, float(err), used, Route.CONTOUR)


def _trusted(res: EvalResult, rtol: float) -> bool:
    return res.error_estimate <= rtol * abs(res.value)


def ml3_eval(q: float, r: float, g: float, z, tol: float = 1e-16, z_switch: float = Z_SWITCH) -> EvalResult:
    """Route-selecting evaluation of the Prabhakar function.

    ``|z| <= z_switch`` uses :func:`ml3_series`; larger arguments use
    :func:`ml3_contour` (or, for ``q == 1``, the Kummer-transformed series, which
    keeps relative accuracy where the value is exponentially small). A series
    whose own rounding estimate exceeds ``OVERLAP_RTOL`` relative (heavy
    cancellation on the negative axis, small ``q``) is replaced the same way.

    On the negative real axis inside ``OVERLAP_BAND`` both routes are computed
    whenever the series claims ``OVERLAP_RTOL`` accuracy, and a
    :class:`RouteDisagreement` is raised if they differ by more than that.
    """
    _check_params(q, g, tol)
    az = abs(z)
    on_negative_axis = (not np.iscomplexobj(z) or complex(z).imag == 0) and np.real(z) < 0

    def fallback():
        if q == 1 and on_negative_axis:
            return _kummer_q1(r, g, float(np.real(z)), tol)
        return ml3_contour(q, r, g, z)

    if az > z_switch:
        primary = fallback()
        series = None
    else:
        try:
            series = ml3_series(q, r, g, z, tol=tol)
        except NotConverged:
            series = None
        primary = series if series is not None and _trusted(series, OVERLAP_RTOL) else fallback()
    if on_negative_axis and OVERLAP_BAND[0] <= az <= OVERLAP_BAND[1] and q != 1:
        if series is None:
            try:
                series = ml3_series(q, r, g, z, tol=tol)
            except NotConverged:
                series = None
        if series is not None and _trusted(series, OVERLAP_RTOL):
            other = ml3_contour(q, r, g, z) if primary is series else primary
            diff = abs(series.value - other.value)
            if diff > OVERLAP_RTOL * abs(other.value):
                raise RouteDisagreement(
                    f"series and contour differ by {diff:.3e} (relative {diff / abs(other.value):.3e}) at z={z}"
                )
    return primary
