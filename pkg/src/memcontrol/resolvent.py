"""Scalar resolvent functions of the heat equation with singular memory.

On the sine basis of the Dirichlet Laplacian the resolvent family acts
diagonally: mode ``m`` is multiplied by ``s_m(t)``, the solution of

    w' = -lam_m w - lam_m (kappa * w),   w(0) = 1,

with ``kappa(t) = alpha exp(-beta t) t**(nu - 1) / Gamma(nu)``. Three independent
routes compute ``s_m``: the Prabhakar double series, numerical Laplace inversion
along a Talbot-type contour, and direct time stepping (see :mod:`.volterra`).
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import integrate, special

from .errors import (
    BranchCutError,
    ContourIntersectsBranchCut,
    DimensionMismatch,
    GridIncompatible,
    MomentIntegralFailure,
    NonConvergedQuadrature,
    NotConverged,
    SingularSymbol,
)
from .special_functions import EPS, ml3_series_batch

# Weideman's optimized Talbot contour:
#   z(theta) = (N / t) * (SIGMA + MU * theta * cot(A * theta) + 1j * NU_T * theta)
TALBOT_SIGMA = -0.6122
TALBOT_MU = 0.5017
TALBOT_A = 0.6407
TALBOT_NU = 0.2645
# the contour crosses the real axis at (N / t) * TALBOT_CROSS
TALBOT_CROSS = TALBOT_SIGMA + TALBOT_MU / TALBOT_A


class TableRoute(str, enum.Enum):
    ML_SERIES = "MLSeries"
    CONTOUR = "Contour"
    VOLTERRA = "Volterra"


def _scaled_lower_gamma(a: float, y):
    """``P(a, y) / y**a`` for ``y >= 0``; equals ``1 / Gamma(a + 1)`` at ``y = 0``.

    Stays finite as ``y -> 0`` where forming ``P`` and dividing loses everything.
    """
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    small = y <= 2.0
    ys = y[small]
    # P(a, y) = y**a e^{-y} sum_k y**k / Gamma(a + k + 1)
    acc = np.zeros_like(ys)
    term = np.full_like(ys, special.rgamma(a + 1))
    for k in range(60):
        acc += term
        term = term * ys / (a + k + 1)
    out[small] = np.exp(-ys) * acc
    yl = y[~small]
    out[~small] = special.gammainc(a, yl) / yl ** a
    if not np.all(np.isfinite(out)):
        raise MomentIntegralFailure(f"incomplete Gamma evaluation failed for a={a}")
    return out


@dataclass(frozen=True)
class MemoryKernel:
    """The kernel ``alpha * exp(-beta t) * t**(nu - 1) / Gamma(nu)``."""

    alpha: float
    beta: float
    nu: float

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError("alpha must be positive")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ValueError("beta must be nonnegative")
        if not 0 < self.nu < 1:
            raise ValueError("nu must lie in (0,1)")

    def kernel_at(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise ValueError("the kernel is singular at t=0 and only defined for t>0")
        return self.alpha * np.exp(-self.beta * t) * t ** (self.nu - 1) / special.gamma(self.nu)

    # Antiderivatives used by product integration. With Q(a, y) = P(a, y) / y**a:
    #   int_0^x kappa             = alpha x^nu Q(nu, beta x)
    #   int_0^x tau kappa         = alpha nu x^(nu+1) Q(nu+1, beta x)
    #   int_0^x tau^n (1*kappa)   = alpha x^(n+1+nu) [Q(nu) - Gamma(n+nu+1)/Gamma(nu) Q(n+nu+1)] / (n+1)

    def integral(self, x):
        """``(1 * kappa)(x)``, the integral of the kernel over ``[0, x]``."""
        x = np.asarray(x, dtype=float)
        return self.alpha * x ** self.nu * _scaled_lower_gamma(self.nu, self.beta * x)

    def first_moment(self, x):
        x = np.asarray(x, dtype=float)
        nu = self.nu
        return self.alpha * nu * x ** (nu + 1) * _scaled_lower_gamma(nu + 1, self.beta * x)

    def integrated_moment(self, x, n: int):
        """``int_0^x tau**n (1*kappa)(tau) dtau`` for integer ``n >= 0``."""
        x = np.asarray(x, dtype=float)
        nu, y = self.nu, self.beta * x
        ratio = math.exp(special.gammaln(n + nu + 1) - special.gammaln(nu))
        q = _scaled_lower_gamma(nu, y) - ratio * _scaled_lower_gamma(n + nu + 1, y)
        return self.alpha * x ** (n + 1 + nu) * q / (n + 1)

    def integrated_integral(self, x):
        return self.integrated_moment(x, 0)

    def integrated_first_moment(self, x):
        return self.integrated_moment(x, 1)

    def contour_radius(self, c: float = 1.0) -> float:
        """Radius beyond which the Neumann series for the symbol converges.

        ``c`` stands for the sectorial constant of the generator, which has no
        closed form; 1 is the default.
        """
        return 1.0 + (self.alpha * c) ** (1.0 / self.nu)

    def as_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "nu": self.nu}


@dataclass(frozen=True)
class SpectralSystem:
    """First ``modes`` sine modes of the Dirichlet Laplacian on ``[0, pi]``.

    Grid functions live on ``grid_points`` equispaced nodes including both
    endpoints. The trapezoid rule on that grid integrates products of the
    retained sine modes exactly, so the grid/spectral transforms round-trip.
    """

    modes: int = 8
    grid_points: int = 513
    p_exponent: float = 2.0
    domain_length: float = field(default=math.pi, init=False)

    def __post_init__(self):
        if int(self.modes) != self.modes or self.modes < 1:
            raise ValueError("modes must be a positive integer")
        if int(self.grid_points) != self.grid_points or self.grid_points < 2:
            raise ValueError("grid_points must be an integer >= 2")
        if not self.p_exponent >= 2:
            raise ValueError("p_exponent must be >= 2")

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        lam = np.arange(1, self.modes + 1, dtype=float) ** 2
        lam.flags.writeable = False
        return lam

    @cached_property
    def grid(self) -> np.ndarray:
        xi = np.linspace(0.0, math.pi, self.grid_points)
        xi.flags.writeable = False
        return xi

    @cached_property
    def quad_weights(self) -> np.ndarray:
        h = math.pi / (self.grid_points - 1)
        w = np.full(self.grid_points, h)
        w[0] = w[-1] = h / 2
        w.flags.writeable = False
        return w

    @cached_property
    def basis(self) -> np.ndarray:
        """``basis[i, m-1] = sqrt(2/pi) sin(m xi_i)``."""
        m = np.arange(1, self.modes + 1)
        phi = math.sqrt(2.0 / math.pi) * np.sin(np.outer(self.grid, m))
        phi.flags.writeable = False
        return phi

    def to_grid(self, coeffs) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[0] != self.modes:
            raise DimensionMismatch(f"expected {self.modes} coefficients, got {coeffs.shape[0]}")
        return self.basis @ coeffs

    def from_grid(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.grid_points:
            raise DimensionMismatch(f"expected {self.grid_points} grid values, got {values.shape[0]}")
        return self.basis.T @ (self.quad_weights[:, None] * values if values.ndim > 1 else self.quad_weights * values)

    def lp_norm(self, values, p: float | None = None) -> float:
        p = self.p_exponent if p is None else p
        return float(np.sum(self.quad_weights * np.abs(values) ** p) ** (1.0 / p))

    def state_norm(self, coeffs, p: float | None = None) -> float:
        """Norm of a spectral state in ``L^p(0, pi)``.

        For ``p = 2`` this is the Euclidean norm of the coefficients (Parseval).
        """
        p = self.p_exponent if p is None else p
        if p == 2:
            return float(np.linalg.norm(coeffs))
        return self.lp_norm(self.to_grid(coeffs), p)


# --------------------------------------------------------------------------
# Laplace symbol and contour inversion


def laplace_symbol(kernel: MemoryKernel, lam: float, s):
    """``1 / (s + lam (1 + alpha / (s + beta)**nu))`` on the principal branch."""
    s = np.asarray(s, dtype=complex)
    shifted = s + kernel.beta
    on_cut = (shifted.imag == 0) & (shifted.real <= 0)
    if np.any(on_cut):
        raise BranchCutError("s + beta lies on the branch cut (-inf, 0]")
    denom = s + lam * (1.0 + kernel.alpha / shifted ** kernel.nu)
    if np.any(np.abs(denom) < 1e-14):
        raise SingularSymbol("denominator of the Laplace symbol vanishes")
    out = 1.0 / denom
    return out if out.ndim else complex(out)


def talbot_nodes(t, nodes: int, scale: float | None = None):
    """Nodes ``z_k`` and weights ``w_k`` so that ``f(t) ~ sum_k w_k F(z_k)``.

    The weights already contain ``exp(z_k t)`` and the ``1 / (2 pi i)`` factor.
    ``t`` may be an array; the result then has a trailing node axis.
    """
    t = np.asarray(t, dtype=float)[..., None]
    h = 2.0 * math.pi / nodes
    theta = -math.pi + (np.arange(nodes) + 0.5) * h
    mu = nodes / t if scale is None else np.maximum(nodes / t, scale)
    at = TALBOT_A * theta
    cot = np.cos(at) / np.sin(at)
    z = mu * (TALBOT_SIGMA + TALBOT_MU * theta * cot + 1j * TALBOT_NU * theta)
    dz = mu * (TALBOT_MU * cot - TALBOT_MU * at / np.sin(at) ** 2 + 1j * TALBOT_NU)
    w = np.exp(z * t) * dz * h / (2j * math.pi)
    return z, w


def _talbot_sum(symbol, t, nodes, scale, branch_point):
    z, w = talbot_nodes(t, nodes, scale)
    crossing = np.min(np.real(z[..., nodes // 2]))
    if branch_point is not None and crossing <= branch_point:
        raise ContourIntersectsBranchCut(
            f"contour crosses the real axis at {crossing:.3g}, left of the branch point {branch_point:.3g}"
        )
    return np.sum(w * symbol(z), axis=-1)


def _even(n: float) -> int:
    # an odd count would put a node on theta = 0, where cot is singular
    n = int(math.ceil(n))
    return n + (n % 2)


def invert_laplace(
    symbol,
    t,
    nodes: int = 32,
    max_nodes: int = 1024,
    target: float = 1e-10,
    fail: float = 1e-6,
    scale: float | None = None,
    branch_point: float | None = None,
    growth: float = 2.0,
):
    """Invert a Laplace transform at ``t > 0`` by contour quadrature.

    The node count grows by ``growth`` (doubling by default) until two
    successive results agree to ``target`` (absolute, scaled by
    ``max(1, |f|)``). Rounding grows like ``exp(0.17 N)``, so once the
    disagreement starts rising again the best pair seen so far is kept. The
    coarser member of the accepted pair is returned. Raises
    :class:`NonConvergedQuadrature` if the best disagreement exceeds ``fail``.

    Returns ``(value, error_estimate, nodes_used)``; arrays if ``t`` is an array.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ValueError("contour inversion needs t > 0")
    if not growth > 1:
        raise ValueError("growth must exceed 1")
    n = _even(nodes)
    coarse = _talbot_sum(symbol, t_arr, n, scale, branch_point)
    best = None
    while True:
        m = _even(n * growth)
        fine = _talbot_sum(symbol, t_arr, m, scale, branch_point)
        diff = np.abs(fine - coarse)
        score = float(np.max(diff / np.maximum(1.0, np.abs(coarse))))
        if best is None or score < best[0]:
            best = (score, coarse, diff, n)
        if score <= target or m >= max_nodes or score > 100 * best[0]:
            break
        n, coarse = m, fine
    score, value, diff, n = best
    if score > fail:
        raise NonConvergedQuadrature(f"successive contour sums disagree by {score:.3e} (best pair at {n} nodes)")
    # rounding in the sum grows like eps * exp(TALBOT_CROSS * n)
    rounding = 64 * EPS * math.exp(TALBOT_CROSS * n)
    err = np.maximum(diff, rounding)
    if t_arr.ndim == 0:
        return complex(value), float(err), n
    return value, err, n


def scalar_resolvent_contour(kernel: MemoryKernel, lam_m: float, t, nodes: int = 32, *, full: bool = False):
    """``s_m(t)`` by Bromwich inversion of :func:`laplace_symbol` (``t > 0``).

    With ``full=True`` returns ``(value, error_estimate, imag_residual, nodes_used)``.
    """
    if nodes < 16:
        raise ValueError("nodes must be at least 16")
    scale = kernel.contour_radius() / TALBOT_CROSS

    def symbol(s):
        return laplace_symbol(kernel, lam_m, s)

    value, err, used = invert_laplace(symbol, t, nodes=nodes, scale=scale, branch_point=-kernel.beta)
    imag = np.abs(np.imag(value))
    real = np.real(value)
    if full:
        return real, err, imag, used
    return float(real) if np.ndim(real) == 0 else real


# --------------------------------------------------------------------------
# Prabhakar series route


def scalar_resolvent_ml(
    kernel: MemoryKernel,
    lam_m: float,
    t: float,
    tol: float = 1e-16,
    max_terms: int = 400,
    max_error: float = 1e-10,
    *,
    full: bool = False,
):
    """``s_m(t) = exp(-beta t) sum_k (beta - lam)^k t^k E^{k+1}_{nu+1,k+1}(-alpha lam t^(nu+1))``.

    All inner Prabhakar values come from one batched series evaluation. Raises
    :class:`NotConverged` when the outer series does not meet its stopping rule,
    when the inner argument is beyond the series range, or when the estimated
    error (dominated by cancellation for large ``(lam - beta) t``) exceeds
    ``max_error``. Callers then use the contour route.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return (1.0, 0.0, 1) if full else 1.0
    nu, beta = kernel.nu, kernel.beta
    x = (beta - lam_m) * t
    y = -kernel.alpha * lam_m * t ** (nu + 1)
    if abs(y) > 30.0:
        raise NotConverged(f"inner argument |{y:.3g}| outside the series range")
    n_outer = min(max_terms, int(math.ceil(math.e * abs(x))) + 60)
    k = np.arange(n_outer, dtype=float)
    inner, inner_err, _ = ml3_series_batch(nu + 1, k + 1, k + 1, y, tol=1e-17, floor=0.0)
    with np.errstate(over="ignore"):
        powers = x ** k
    terms = powers * inner
    total = 0.0
    abs_sum = 0.0
    small = 0
    for i, term in enumerate(terms):
        total += term
        abs_sum += abs(term)
        if abs(term) < tol * max(1.0, abs(total)):
            small += 1
            if small >= 3:
                n_used = i + 1
                break
        else:
            small = 0
    else:
        raise NotConverged(f"outer series not converged in {n_outer} terms ((lam-beta)t = {-x:.3g})")
    scale = math.exp(-beta * t)
    err = scale * (
        np.sum(np.abs(powers[:n_used]) * inner_err[:n_used])
        + 8.0 * EPS * (n_used + 10) * abs_sum
        + abs(terms[n_used - 1])
    )
    if not err <= max_error:
        raise NotConverged(f"series error estimate {err:.2e} exceeds {max_error:.1e} ((lam-beta)t = {-x:.3g})")
    value = scale * total
    return (value, float(err), n_used) if full else value


# --------------------------------------------------------------------------
# Tables


@dataclass(frozen=True, eq=False)
class ResolventTable:
    """``values[m-1, k] = s_m(times[k])`` for the modes of a spectral system."""

    kernel: MemoryKernel
    eigenvalues: np.ndarray
    times: np.ndarray
    values: np.ndarray
    route: TableRoute
    error_estimates: np.ndarray
    entry_routes: np.ndarray
    sup_norm: float = field(init=False)

    def __post_init__(self):
        for name in ("eigenvalues", "times", "values", "error_estimates", "entry_routes"):
            arr = np.array(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.values.shape != (self.eigenvalues.size, self.times.size):
            raise DimensionMismatch("values must have shape (modes, times)")
        object.__setattr__(self, "route", TableRoute(self.route))
        # order-independent reduction
        object.__setattr__(self, "sup_norm", float(np.max(np.abs(self.values))))

    @property
    def modes(self) -> int:
        return self.eigenvalues.size

    def index_of(self, t: float) -> int:
        """Index of the node equal to ``t`` (to rounding); raises :class:`GridIncompatible`."""
        i = int(np.searchsorted(self.times, t))
        span = self.times[-1] if self.times[-1] > 0 else 1.0
        for j in (i - 1, i):
            if 0 <= j < self.times.size and abs(self.times[j] - t) <= 1e-10 * span:
                return j
        raise GridIncompatible(f"t={t!r} is not a node of the resolvent table")

    def mode_index(self, lam_m: float) -> int:
        hits = np.flatnonzero(np.isclose(self.eigenvalues, lam_m, rtol=1e-14, atol=0))
        if hits.size == 0:
            raise DimensionMismatch(f"eigenvalue {lam_m} is not in the table")
        return int(hits[0])

    def column(self, k: int) -> np.ndarray:
        return self.values[:, k]

    # serialization -------------------------------------------------------

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["m", "t", "s", "err", "route"])
        for i in range(self.modes):
            m = int(round(math.sqrt(self.eigenvalues[i])))
            for k, t in enumerate(self.times):
                writer.writerow(
                    [m, f"{t:.17g}", f"{self.values[i, k]:.17g}", f"{self.error_estimates[i, k]:.17g}", self.entry_routes[i, k]]
                )
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source, kernel: MemoryKernel, route: TableRoute | str | None = None) -> "ResolventTable":
        text = Path(source).read_text() if isinstance(source, Path) or "\n" not in str(source) else str(source)
        rows = list(csv.DictReader(io.StringIO(text)))
        modes = sorted({int(r["m"]) for r in rows})
        times = sorted({float(r["t"]) for r in rows})
        t_index = {t: k for k, t in enumerate(times)}
        m_index = {m: i for i, m in enumerate(modes)}
        values = np.zeros((len(modes), len(times)))
        errs = np.zeros_like(values)
        routes = np.empty(values.shape, dtype=object)
        for r in rows:
            i, k = m_index[int(r["m"])], t_index[float(r["t"])]
            values[i, k] = float(r["s"])
            errs[i, k] = float(r["err"])
            routes[i, k] = r["route"]
        if route is None:
            uniq = set(routes.ravel()) - {TableRoute.ML_SERIES.value} if len(set(routes.ravel())) > 1 else set(routes.ravel())
            route = uniq.pop() if len(uniq) == 1 else TableRoute.ML_SERIES
        return cls(kernel, np.array(modes, float) ** 2, np.array(times), values, TableRoute(route), errs, routes.astype(str))

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.as_dict(),
            "eigenvalues": self.eigenvalues.tolist(),
            "times": self.times.tolist(),
            "values": self.values.tolist(),
            "route": self.route.value,
            "sup_norm": self.sup_norm,
            "error_estimates": self.error_estimates.tolist(),
            "entry_routes": self.entry_routes.tolist(),
        }

    def to_json(self, path=None) -> str:
        # json writes floats with repr, which round-trips exactly
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source) -> "ResolventTable":
        text = Path(source).read_text() if isinstance(source, Path) else str(source)
        d = json.loads(text)
        return cls(
            MemoryKernel(**d["kernel"]),
            np.array(d["eigenvalues"]),
            np.array(d["times"]),
            np.array(d["values"]),
            TableRoute(d["route"]),
            np.array(d["error_estimates"]),
            np.array(d["entry_routes"], dtype=str),
        )


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 1 or times[0] != 0.0:
        raise ValueError("times must be a 1-d grid starting at 0")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    return times


def build_resolvent_table(
    kernel: MemoryKernel,
    system: SpectralSystem,
    times,
    route: TableRoute | str = TableRoute.CONTOUR,
    tol: float = 1e-16,
    *,
    nodes: int = 32,
    volterra_step: float | None = None,
) -> ResolventTable:
    """Tabulate ``s_m(t)`` for every mode of ``system`` on ``times``.

    ``MLSeries`` entries that raise :class:`NotConverged` fall back to the
    contour route (recorded per entry). For the ``Contour`` route the stored
    error is the larger of the contour estimate and, where the series converges,
    the series estimate. ``Volterra`` integrates each mode on a uniform grid
    refined until the step is at most ``volterra_step`` (the table grid itself
    when ``None``; it must then be uniform if refinement is requested).
    """
    times = _check_times(times)
    route = TableRoute(route)
    lams = system.eigenvalues
    M, K1 = lams.size, times.size
    values = np.ones((M, K1))
    errs = np.zeros((M, K1))
    routes = np.full((M, K1), route.value, dtype=object)
    positive = times > 0
    tp = times[positive]
    if route is TableRoute.VOLTERRA:
        from .volterra import resolvent_by_stepping

        values, errs = resolvent_by_stepping(kernel, lams, times, volterra_step)
    elif tp.size:
        contour_vals = np.empty((M, tp.size))
        contour_errs = np.empty((M, tp.size))
        for i, lam in enumerate(lams):
            v, e, _, _ = scalar_resolvent_contour(kernel, lam, tp, nodes=nodes, full=True)
            contour_vals[i], contour_errs[i] = v, e
        for i, lam in enumerate(lams):
            for j, t in enumerate(tp):
                k = j + (K1 - tp.size)
                try:
                    v, e, _ = scalar_resolvent_ml(kernel, lam, t, tol=tol, full=True)
                except NotConverged:
                    v = e = None
                if route is TableRoute.ML_SERIES:
                    if v is None:
                        values[i, k], errs[i, k] = contour_vals[i, j], contour_errs[i, j]
                        routes[i, k] = TableRoute.CONTOUR.value
                    else:
                        values[i, k], errs[i, k] = v, e
                else:
                    values[i, k] = contour_vals[i, j]
                    errs[i, k] = contour_errs[i, j] if e is None else max(e, contour_errs[i, j])
    values[:, 0] = 1.0
    errs[:, 0] = 0.0
    return ResolventTable(kernel, lams, times, values, route, errs, routes.astype(str))


def apply_resolvent(table: ResolventTable, t_index: int, state) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if state.shape != (table.modes,):
        raise DimensionMismatch(f"state must have length {table.modes}")
    return table.values[:, t_index] * state


# --------------------------------------------------------------------------
# Diagnostics


def product_weights(F0, F1, times, k: int) -> np.ndarray:
    """Weights ``w_j`` with ``sum_j w_j g(t_j) = int_0^{t_k} a(t_k - s) g(s) ds`` for piecewise-linear ``g``.

    ``F0(x) = int_0^x a`` and ``F1(x) = int_0^x tau a(tau) dtau`` must accept arrays.
    """
    tk = times[k]
    left, right = times[:k], times[1 : k + 1]
    h = right - left
    b = tk - left  # far end of the lag interval
    a = tk - right
    i0 = F0(b) - F0(a)
    # int kappa(t_k - s) (s - t_j) ds over [t_j, t_{j+1}] = b*I0 - (F1(b) - F1(a))
    i1 = b * i0 - (F1(b) - F1(a))
    w = np.zeros(k + 1)
    upper = i1 / h
    w[1:] += upper
    w[:-1] += i0 - upper
    return w


def _quadratic_weights(moment, times, k: int) -> np.ndarray:
    """Weights integrating the piecewise-quadratic interpolant of ``g`` against ``a(t_k - s)``.

    Interval ``[t_j, t_j+1]`` uses the nodes ``j, j+1, j+2`` (the last one
    ``j-1, j, j+1``). ``moment(x, n) = int_0^x tau**n a(tau) dtau``.
    """
    j = np.arange(k)
    first = np.where(j + 2 <= k, j, j - 1)
    stencil = first[:, None] + np.arange(3)[None, :]
    tau = times[k] - times[stencil]  # lag coordinates of the three nodes
    lo, hi = times[k] - times[j + 1], times[k] - times[j]
    m = [moment(hi, n) - moment(lo, n) for n in range(3)]
    w = np.zeros(k + 1)
    for i in range(3):
        o1, o2 = tau[:, (i + 1) % 3], tau[:, (i + 2) % 3]
        den = (tau[:, i] - o1) * (tau[:, i] - o2)
        np.add.at(w, stencil[:, i], (m[2] - (o1 + o2) * m[1] + o1 * o2 * m[0]) / den)
    return w


def verify_resolvent_equation(table: ResolventTable, lam_m: float, quad_rule: str = "quadratic") -> float:
    """Max residual of ``s(t) = 1 - lam int_0^t (1 + 1*kappa)(t - s) s(s) ds`` on the table grid.

    The integral is taken by product integration against the exact kernel:
    ``"quadratic"`` (piecewise-quadratic interpolant of ``s``, third order away
    from the start-up cusp) or ``"linear"`` (second order). ``"trapezoid"`` is
    the plain composite rule, which the cusp of ``1*kappa`` limits to order
    ``1 + nu``.
    """
    i = table.mode_index(lam_m)
    kern = table.kernel
    times = table.times
    s = table.values[i]

    def moment(x, n):
        return x ** (n + 1) / (n + 1) + kern.integrated_moment(x, n)

    res = 0.0
    for k in range(1, times.size):
        if quad_rule == "quadratic" and k >= 2:
            integral = _quadratic_weights(moment, times, k) @ s[: k + 1]
        elif quad_rule in ("quadratic", "linear"):
            integral = product_weights(lambda x: moment(x, 0), lambda x: moment(x, 1), times, k) @ s[: k + 1]
        elif quad_rule == "trapezoid":
            a = 1.0 + kern.integral(times[k] - times[: k + 1])
            integral = integrate.trapezoid(a * s[: k + 1], times[: k + 1])
        else:
            raise ValueError(f"unknown quadrature rule {quad_rule!r}")
        res = max(res, abs(s[k] - (1.0 - lam_m * integral)))
    return res


def _resolvent_point(kernel, lam, t):
    try:
        return scalar_resolvent_ml(kernel, lam, t)
    except NotConverged:
        return scalar_resolvent_contour(kernel, lam, t)


def derivative_at_zero(kernel: MemoryKernel, lam_m: float, steps=(1e-3, 5e-4, 2.5e-4)) -> float:
    """Richardson estimate of ``s_m'(0+)`` from forward differences.

    The difference quotient behaves like ``-lam + c1 h**nu + c2 h``; the two
    leading error terms are eliminated with the three step sizes, which must
    halve successively.
    """
    h0, h1, h2 = steps
    if not (math.isclose(h1, h0 / 2) and math.isclose(h2, h1 / 2)):
        raise ValueError("steps must halve successively")
    d = [(_resolvent_point(kernel, lam_m, h) - 1.0) / h for h in steps]
    f = 2.0 ** kernel.nu
    r0 = (f * d[1] - d[0]) / (f - 1.0)
    r1 = (f * d[2] - d[1]) / (f - 1.0)
    return 2.0 * r1 - r0


def decay_diagnostics(table: ResolventTable, kernel: MemoryKernel | None = None, system: SpectralSystem | None = None):
    """Compare ``s_m(t)**2`` with ``exp(-lam_m t (1 + alpha t**nu))`` and check ``s_m'(0+) = -lam_m``.

    Returns a dict with ``"bound"`` rows (m, t, lhs, rhs, violation) and
    ``"derivative"`` rows (m, estimate, target, rel_dev). Nothing is asserted.
    """
    kernel = table.kernel if kernel is None else kernel
    lams = table.eigenvalues if system is None else system.eigenvalues
    bound_rows = []
    for i, lam in enumerate(lams):
        m = int(round(math.sqrt(lam)))
        for k, t in enumerate(table.times):
            lhs = float(table.values[i, k] ** 2)
            rhs = math.exp(-lam * t * (1.0 + kernel.alpha * t**kernel.nu))
            bound_rows.append({"m": m, "t": float(t), "lhs": lhs, "rhs": rhs, "violation": lhs > rhs * (1 + 1e-6)})
    deriv_rows = []
    for lam in lams:
        est = derivative_at_zero(kernel, lam)
        deriv_rows.append(
            {"m": int(round(math.sqrt(lam))), "estimate": est, "target": -float(lam), "rel_dev": abs(est + lam) / lam}
        )
    return {"bound": bound_rows, "derivative": deriv_rows}
