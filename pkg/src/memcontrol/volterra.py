"""Time stepping and mild-solution quadrature for the mode-wise memory equation.

Each sine mode obeys

    w' = -lam w - lam (kappa * w) + g,   w(0) = w0,

and the mild solution of the full system is

    w(t) = S(t) zeta + int_0^t S(t - s) h(s) ds

with ``S(t) = diag(s_m(t))`` taken from a :class:`~memcontrol.resolvent.ResolventTable`.
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
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, GridIncompatible, StepSingular, SubIterationDiverged
from .resolvent import MemoryKernel, ResolventTable, SpectralSystem, TableRoute, build_resolvent_table


class GridKind(str, enum.Enum):
    UNIFORM = "Uniform"
    GRADED = "Graded"


@dataclass(frozen=True)
class TimeGrid:
    """Nodes ``t_k`` on ``[0, T]``; graded nodes are ``T (k/K)**exponent``."""

    T: float
    steps: int
    kind: GridKind = GridKind.UNIFORM
    exponent: float = 1.0

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError("T must be positive")
        if int(self.steps) != self.steps or self.steps < 2:
            raise ValueError("steps must be an integer >= 2")
        object.__setattr__(self, "kind", GridKind(self.kind))
        if self.kind is GridKind.GRADED and not self.exponent >= 1:
            raise ValueError("grading exponent must be >= 1")

    @classmethod
    def uniform(cls, T: float, steps: int) -> "TimeGrid":
        return cls(T, steps)

    @classmethod
    def graded(cls, T: float, steps: int, exponent: float) -> "TimeGrid":
        return cls(T, steps, GridKind.GRADED, exponent)

    @cached_property
    def nodes(self) -> np.ndarray:
        k = np.arange(self.steps + 1)
        if self.kind is GridKind.UNIFORM:
            t = k * (self.T / self.steps)
        else:
            t = self.T * (k / self.steps) ** self.exponent
        t[-1] = self.T
        t.flags.writeable = False
        return t

    @property
    def is_uniform(self) -> bool:
        return self.kind is GridKind.UNIFORM or self.exponent == 1

    @property
    def step(self) -> float:
        if not self.is_uniform:
            raise GridIncompatible("graded grid has no single step size")
        return self.T / self.steps

    def trapezoid_weights(self, k: int | None = None) -> np.ndarray:
        """Composite trapezoid weights on ``[0, t_k]`` (``k = K`` by default)."""
        k = self.steps if k is None else k
        t = self.nodes[: k + 1]
        w = np.zeros(k + 1)
        if k > 0:
            h = np.diff(t)
            w[:-1] += h / 2
            w[1:] += h / 2
        return w


def _interval_moments(kernel: MemoryKernel, a, b, h):
    """Weights on the two ends of one interval for a linear interpolant.

    For an interval of length ``h`` whose lag runs over ``[a, b]`` (so ``b - a = h``),
    returns ``(A, B)`` with ``A`` multiplying the left node and ``B`` the right one.
    """
    i0 = kernel.integral(b) - kernel.integral(a)
    i1 = b * i0 - (kernel.first_moment(b) - kernel.first_moment(a))
    right = i1 / h
    return i0 - right, right


def conv_weights(kernel: MemoryKernel, grid: TimeGrid) -> np.ndarray:
    """Lower-triangular ``w[k, j]`` with ``sum_j w[k, j] g(t_j) = int_0^{t_k} kappa(t_k - s) g(s) ds``.

    Exact for ``g`` piecewise linear on the grid.
    """
    t = grid.nodes
    K = grid.steps
    w = np.zeros((K + 1, K + 1))
    if grid.is_uniform:
        h = grid.step
        lag = np.arange(K) * h
        left, right = _interval_moments(kernel, lag, lag + h, h)
        # interval i on row k has lag index k-1-i
        for k in range(1, K + 1):
            w[k, :k] += left[k - 1 :: -1]
            w[k, 1 : k + 1] += right[k - 1 :: -1]
        return w
    for k in range(1, K + 1):
        tl, tr = t[:k], t[1 : k + 1]
        left, right = _interval_moments(kernel, t[k] - tr, t[k] - tl, tr - tl)
        w[k, :k] += left
        w[k, 1 : k + 1] += right
    return w


def _step_modes(kernel: MemoryKernel, lams, grid: TimeGrid, w0, g=None, weights=None) -> np.ndarray:
    """Implicit product-trapezoid stepping for several modes at once.

    Convolution terms are averaged over both ends of the step, like the
    stiff term, so the scheme is second order. ``g`` has shape ``(M, K+1)``.
    """
    lams = np.asarray(lams, dtype=float)
    M = lams.size
    K = grid.steps
    t = grid.nodes
    om = conv_weights(kernel, grid) if weights is None else weights
    w = np.zeros((M, K + 1))
    w[:, 0] = w0
    g = np.zeros((M, K + 1)) if g is None else np.asarray(g, dtype=float).reshape(M, K + 1)
    conv_prev = np.zeros(M)
    for k in range(1, K + 1):
        h = t[k] - t[k - 1]
        c = 0.5 * lams * h
        diag = 1.0 + c * (1.0 + om[k, k])
        if np.any(diag <= 0):
            raise StepSingular(f"implicit coefficient {diag.min():.3e} at step {k}")
        partial = w[:, :k] @ om[k, :k]
        rhs = w[:, k - 1] * (1.0 - c) - c * (partial + conv_prev) + 0.5 * h * (g[:, k] + g[:, k - 1])
        w[:, k] = rhs / diag
        conv_prev = partial + om[k, k] * w[:, k]
    return w


def step_linear_mode(kernel: MemoryKernel, lam_m: float, grid: TimeGrid, forcing=None, w0: float = 1.0) -> np.ndarray:
    """Trajectory ``w_k`` of one mode; ``forcing`` gives ``g_k`` per node (zero if ``None``)."""
    if not lam_m > 0:
        raise ValueError("lam_m must be positive")
    g = None if forcing is None else np.asarray(forcing, dtype=float)[None, :]
    if g is not None and g.shape[1] != grid.steps + 1:
        raise DimensionMismatch("forcing must have one value per grid node")
    return _step_modes(kernel, [lam_m], grid, w0, g)[0]


def resolvent_by_stepping(kernel: MemoryKernel, lams, times, max_step: float | None = None):
    """``s_m`` on ``times`` by time stepping, with a step-halving error estimate.

    With ``max_step`` set, ``times`` must be uniform and each interval is
    subdivided until the step is at most ``max_step``.
    """
    times = np.asarray(times, dtype=float)
    lams = np.asarray(lams, dtype=float)
    K = times.size - 1
    if K == 0:
        return np.ones((lams.size, 1)), np.zeros((lams.size, 1))
    T = times[-1]
    if max_step is None:
        refine = 1
        uniform = np.allclose(np.diff(times), T / K, rtol=1e-12, atol=0)
    else:
        if not np.allclose(np.diff(times), T / K, rtol=1e-12, atol=0):
            raise GridIncompatible("refined stepping needs a uniform table grid")
        refine = max(1, math.ceil((T / K) / max_step - 1e-9))
        uniform = True
    if not uniform:
        raise GridIncompatible("stepping on a nonuniform table grid needs a uniform grid; pass max_step")
    fine = _step_modes(kernel, lams, TimeGrid(T, K * refine), 1.0)[:, ::refine]
    if refine % 2 == 0:
        coarse = _step_modes(kernel, lams, TimeGrid(T, K * refine // 2), 1.0)[:, :: refine // 2]
    else:
        coarse = _step_modes(kernel, lams, TimeGrid(T, K * refine * 2), 1.0)[:, :: refine * 2]
        fine, coarse = coarse, fine
    err = np.abs(fine - coarse) / 3.0
    return fine, err


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Spectral coefficients ``states[m-1, k]`` at the nodes of ``grid``."""

    grid: TimeGrid
    states: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        if states.ndim != 2 or states.shape[1] != self.grid.steps + 1:
            raise DimensionMismatch("states must have shape (modes, steps + 1)")
        states.flags.writeable = False
        object.__setattr__(self, "states", states)

    @property
    def terminal(self) -> np.ndarray:
        return self.states[:, -1]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "t", "m", "w"])
        for k, t in enumerate(self.grid.nodes):
            for i in range(self.states.shape[0]):
                writer.writerow([k, f"{t:.17g}", i + 1, f"{self.states[i, k]:.17g}"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_dict(self) -> dict:
        return {
            "grid": {"T": self.grid.T, "steps": self.grid.steps, "kind": self.grid.kind.value, "exponent": self.grid.exponent},
            "states": self.states.tolist(),
            "meta": self.meta,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source) -> "Trajectory":
        text = Path(source).read_text() if isinstance(source, Path) else str(source)
        d = json.loads(text)
        g = d["grid"]
        return cls(TimeGrid(g["T"], g["steps"], GridKind(g["kind"]), g["exponent"]), np.array(d["states"]), d["meta"])


class ForcingKind(str, enum.Enum):
    ZERO = "Zero"
    CONSTANT = "ConstantVector"
    TIME_SERIES = "TimeSeries"
    CONTROL = "ControlDriven"
    NONLINEAR = "Nonlinear"


@dataclass(frozen=True, eq=False)
class ForcingSpec:
    """A source term ``g(t_k, w_k)`` in spectral coordinates."""

    kind: ForcingKind
    modes: int
    evaluate: Callable[[int, float, np.ndarray], np.ndarray]

    @classmethod
    def zero(cls, modes: int) -> "ForcingSpec":
        return cls(ForcingKind.ZERO, modes, lambda k, t, w: np.zeros(modes))

    @classmethod
    def constant(cls, vector) -> "ForcingSpec":
        v = np.array(vector, dtype=float)
        return cls(ForcingKind.CONSTANT, v.size, lambda k, t, w: v.copy())

    @classmethod
    def time_series(cls, values) -> "ForcingSpec":
        """``values[k]`` is the spectral vector at node ``k``."""
        v = np.array(values, dtype=float)
        return cls(ForcingKind.TIME_SERIES, v.shape[1], lambda k, t, w: v[k].copy())

    @classmethod
    def control_driven(cls, B, control) -> "ForcingSpec":
        Bm = np.asarray(getattr(B, "matrix", B), dtype=float)
        u = np.asarray(getattr(control, "values", control), dtype=float)
        return cls(ForcingKind.CONTROL, Bm.shape[0], lambda k, t, w: Bm @ u[k])

    @classmethod
    def nonlinear(cls, f, system: SpectralSystem) -> "ForcingSpec":
        return cls(ForcingKind.NONLINEAR, system.modes, lambda k, t, w: f.spectral(t, w, system))

    def sample(self, grid: TimeGrid, states=None) -> np.ndarray:
        """Per-node values, shape ``(K+1, M)``; ``states`` supplies ``w_k`` if needed."""
        out = np.empty((grid.steps + 1, self.modes))
        for k, t in enumerate(grid.nodes):
            w = np.zeros(self.modes) if states is None else states[:, k]
            out[k] = self.evaluate(k, t, w)
        return out


def _lag_indices(table: ResolventTable, grid: TimeGrid):
    """``idx[k, j]`` = table index of ``t_k - t_j`` for ``j <= k``, and the index of each ``t_k``."""
    t = grid.nodes
    diffs = t[:, None] - t[None, :]
    lower = np.tril(np.ones_like(diffs, dtype=bool))
    vals = np.where(lower, diffs, 0.0)
    pos = np.clip(np.searchsorted(table.times, vals), 0, table.times.size - 1)
    prev = np.clip(pos - 1, 0, table.times.size - 1)
    span = max(table.times[-1], 1e-300)
    pick = np.where(np.abs(table.times[prev] - vals) < np.abs(table.times[pos] - vals), prev, pos)
    bad = lower & (np.abs(table.times[pick] - vals) > 1e-10 * span)
    if np.any(bad):
        k, j = np.argwhere(bad)[0]
        raise GridIncompatible(f"t_{k} - t_{j} = {diffs[k, j]!r} is not a node of the resolvent table")
    return np.where(lower, pick, 0)


def _as_series(forcing, grid: TimeGrid, modes: int) -> np.ndarray:
    if forcing is None:
        return np.zeros((grid.steps + 1, modes))
    if isinstance(forcing, ForcingSpec):
        return forcing.sample(grid)
    h = np.asarray(forcing, dtype=float)
    if h.shape != (grid.steps + 1, modes):
        raise DimensionMismatch(f"forcing must have shape {(grid.steps + 1, modes)}, got {h.shape}")
    return h


def mild_quadrature(table: ResolventTable, zeta, forcing, grid: TimeGrid) -> Trajectory:
    """Mild solution by the composite trapezoid rule, mode by mode.

    ``forcing`` is ``None``, a :class:`ForcingSpec` without state dependence, or an
    array of shape ``(K+1, M)``.
    """
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != (table.modes,):
        raise DimensionMismatch(f"zeta must have length {table.modes}")
    h = _as_series(forcing, grid, table.modes)
    idx = _lag_indices(table, grid)
    S = table.values
    K = grid.steps
    w = np.empty((table.modes, K + 1))
    for k in range(K + 1):
        tau = grid.trapezoid_weights(k)
        w[:, k] = S[:, idx[k, 0]] * zeta + (S[:, idx[k, : k + 1]] * (h[: k + 1].T * tau)).sum(axis=1)
    return Trajectory(grid, w, {"scheme": "mild-trapezoid", "grid": grid.kind.value, "route": table.route.value})


def simulate_semilinear(
    system: SpectralSystem,
    kernel: MemoryKernel,
    grid: TimeGrid,
    B,
    u,
    f,
    zeta,
    table: ResolventTable | None = None,
    *,
    max_sub: int = 20,
    sub_tol: float = 1e-12,
) -> Trajectory:
    """Forward sweep for ``w = S(t) zeta + int S(t-s) [B u(s) + f(s, w(s))] ds``.

    The only implicit term is ``f(t_k, w_k)`` with trapezoid weight ``h_k / 2``
    and ``S(0) = I``; it is resolved by fixed-point sub-iteration. ``B`` and
    ``u`` may be ``None`` (no control); ``f`` may be ``None`` (no nonlinearity).
    """
    zeta = np.asarray(zeta, dtype=float)
    M = system.modes
    if zeta.shape != (M,):
        raise DimensionMismatch(f"zeta must have length {M}")
    if table is None:
        table = build_resolvent_table(kernel, system, grid.nodes, TableRoute.CONTOUR)
    if B is None or u is None:
        bu = np.zeros((grid.steps + 1, M))
    else:
        bu = _as_series(ForcingSpec.control_driven(B, u), grid, M)
    idx = _lag_indices(table, grid)
    S = table.values
    t = grid.nodes
    K = grid.steps
    w = np.zeros((M, K + 1))
    src = np.zeros((K + 1, M))
    w[:, 0] = zeta
    sub_counts = [0]
    # largest ratio of successive sub-iteration residuals after the second sub-iterate
    worst_ratio = 0.0
    fvals = f.spectral(t[0], zeta, system) if f is not None else np.zeros(M)
    src[0] = bu[0] + fvals
    for k in range(1, K + 1):
        tau = grid.trapezoid_weights(k)
        base = S[:, idx[k, 0]] * zeta + (S[:, idx[k, :k]] * (src[:k].T * tau[:k])).sum(axis=1)
        half = tau[k]
        guess = base + half * bu[k] + (half * f.spectral(t[k - 1], w[:, k - 1], system) if f is not None else 0.0)
        n = 0
        if f is not None:
            residual = np.inf
            history = []
            while n < max_sub:
                n += 1
                new = base + half * (bu[k] + f.spectral(t[k], guess, system))
                residual = float(np.linalg.norm(new - guess))
                history.append(residual)
                guess = new
                if residual <= sub_tol:
                    break
            else:
                raise SubIterationDiverged(k, float(t[k]), residual)
            for a, b in zip(history[1:], history[2:]):
                if a > 1e-14:
                    worst_ratio = max(worst_ratio, b / a)
            src[k] = bu[k] + f.spectral(t[k], guess, system)
        else:
            src[k] = bu[k]
        w[:, k] = guess
        sub_counts.append(n)
    meta = {
        "scheme": "mild-trapezoid-sweep",
        "grid": grid.kind.value,
        "sub_iterations": sub_counts,
        "max_residual_ratio": worst_ratio,
    }
    return Trajectory(grid, w, meta)
