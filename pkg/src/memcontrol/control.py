"""Steering controls for the truncated heat equation with memory.

Everything lives on the first ``M`` sine modes. With ``S_k = diag(s_m(T - t_k))``
the Gramian is ``sum_k tau_k S_k B B^T S_k`` (trapezoid weights ``tau_k``), and the
regularized control for a target offset ``k`` is

    u(t_k) = B^T S_k J[z],   lam z + Gramian J[z] = k,

where ``J`` is the duality map of ``L^p(0, pi)`` (the identity for ``p = 2``).
Because the Gramian and the mild solution share one quadrature, the discrete
terminal state satisfies ``w(T) = target - lam z`` exactly.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .errors import (
    DimensionMismatch,
    FixedPointDiverged,
    NotApplicable,
    PicardNotConverged,
    QuadratureNotConverged,
    ZeroVector,
)
from .resolvent import MemoryKernel, ResolventTable, SpectralSystem
from .volterra import TimeGrid, Trajectory, mild_quadrature


class OperatorKind(str, enum.Enum):
    IDENTITY = "Identity"
    MAX_MIN_KERNEL = "PaperKernel"
    GREENS_DIAGONAL = "GreensDiagonal"


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ControlOperator:
    """``matrix[m, n] = <B phi_n, phi_m>`` on the truncated bases."""

    kind: OperatorKind
    matrix: np.ndarray
    operator_norm: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", OperatorKind(self.kind))
        object.__setattr__(self, "matrix", _frozen(self.matrix))
        if self.matrix.ndim != 2:
            raise DimensionMismatch("control matrix must be 2-d")
        norm = float(np.linalg.norm(self.matrix, 2))
        if not norm > 0:
            raise ValueError("control operator must be nonzero")
        object.__setattr__(self, "operator_norm", norm)

    @property
    def modes(self) -> int:
        return self.matrix.shape[0]

    @property
    def inputs(self) -> int:
        return self.matrix.shape[1]

    def without_modes(self, *modes: int) -> "ControlOperator":
        """Copy with rows of the given (1-based) modes zeroed, so those modes receive no input."""
        m = np.array(self.matrix)
        for mode in modes:
            m[mode - 1, :] = 0.0
        return ControlOperator(self.kind, m)


def _max_min_kernel(zeta, xi):
    return np.maximum(zeta, xi) * (math.pi - np.minimum(zeta, xi))


def _greens_kernel(zeta, xi):
    return np.minimum(zeta, xi) * (math.pi - np.maximum(zeta, xi))


def _triangle_projection(kernel, M: int, n: int) -> np.ndarray:
    """``int int G(zeta, xi) phi_n(zeta) phi_m(xi)`` with Gauss-Legendre on each triangle.

    The kernels are smooth on either side of the diagonal, so splitting there
    keeps the rule spectrally accurate.
    """
    x, wx = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * wx
    xi = math.pi * u
    wxi = math.pi * wu
    # lower triangle zeta < xi: zeta = xi * v
    XI = np.repeat(xi, n)
    V = np.tile(u, n)
    W = np.repeat(wxi, n) * np.tile(wu, n) * XI
    modes = np.arange(1, M + 1)
    c = 2.0 / math.pi
    out = np.zeros((M, M))
    for a, b in ((XI * V, XI), (XI, XI * V)):  # (zeta, xi) below, then above the diagonal
        g = kernel(a, b) * W
        phi_zeta = np.sin(np.outer(a, modes))
        phi_xi = np.sin(np.outer(b, modes))
        out += c * (phi_xi.T * g) @ phi_zeta
    return out


def control_operator_matrix(
    kind: OperatorKind | str, system: SpectralSystem, tol: float = 1e-10, max_points: int = 1024
) -> ControlOperator:
    kind = OperatorKind(kind)
    M = system.modes
    if kind is OperatorKind.IDENTITY:
        return ControlOperator(kind, np.eye(M))
    kernel = _max_min_kernel if kind is OperatorKind.MAX_MIN_KERNEL else _greens_kernel
    n = max(16, 4 * M)
    prev = _triangle_projection(kernel, M, n)
    while True:
        n *= 2
        cur = _triangle_projection(kernel, M, n)
        if np.max(np.abs(cur - prev)) <= tol:
            break
        if n >= max_points:
            raise QuadratureNotConverged(f"control matrix not stable to {tol:g} at {n} points")
        prev = cur
    if kind is OperatorKind.MAX_MIN_KERNEL:
        cur = 0.5 * (cur + cur.T)
    return ControlOperator(kind, cur)


# --------------------------------------------------------------------------
# Gramian and controls


@dataclass(frozen=True, eq=False)
class Gramian:
    matrix: np.ndarray
    horizon: float
    min_eigenvalue: float
    quadrature_steps: int

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "horizon": self.horizon,
            "min_eigenvalue": self.min_eigenvalue,
            "quadrature_steps": self.quadrature_steps,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text)
        return text


def _backward_columns(table: ResolventTable, grid: TimeGrid, horizon_index: int | None = None) -> np.ndarray:
    """Rows ``s(t_K' - t_k)`` for ``k = 0..K'``, shape ``(K'+1, M)``."""
    K = grid.steps if horizon_index is None else horizon_index
    t = grid.nodes
    idx = [table.index_of(t[K] - t[k]) for k in range(K + 1)]
    return table.values[:, idx].T


def _check_b(table: ResolventTable, B: ControlOperator):
    if B.modes != table.modes:
        raise DimensionMismatch(f"control operator has {B.modes} rows, table has {table.modes} modes")


def assemble_gramian(table: ResolventTable, B: ControlOperator, grid: TimeGrid, horizon_index: int | None = None) -> Gramian:
    """Trapezoid Gramian on ``[0, t_K']`` (the full horizon by default)."""
    _check_b(table, B)
    K = grid.steps if horizon_index is None else horizon_index
    S = _backward_columns(table, grid, K)
    tau = grid.trapezoid_weights(K)
    bbt = B.matrix @ B.matrix.T
    ups = bbt * ((S.T * tau) @ S)
    ups = 0.5 * (ups + ups.T)
    lam_min = float(np.linalg.eigvalsh(ups)[0])
    return Gramian(ups, float(grid.nodes[K]), lam_min, K)


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """``values[k]`` is the control coefficient vector at node ``k``."""

    grid: TimeGrid
    values: np.ndarray
    energy: float = field(init=False)

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2 or v.shape[0] != self.grid.steps + 1:
            raise DimensionMismatch("control values must have shape (steps + 1, inputs)")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "energy", float(self.grid.trapezoid_weights() @ np.sum(v**2, axis=1)))

    @classmethod
    def zeros(cls, grid: TimeGrid, inputs: int) -> "ControlSignal":
        return cls(grid, np.zeros((grid.steps + 1, inputs)))

    def to_dict(self) -> dict:
        return {"T": self.grid.T, "steps": self.grid.steps, "values": self.values.tolist(), "energy": self.energy}


def _trapezoid_weights(n: int, length: float = math.pi) -> np.ndarray:
    h = length / (n - 1)
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def _ensure(cond: bool, message: str):
    if not cond:
        raise AssertionError(message)


def duality_map(w, p: float, weights=None, *, allow_zero: bool = False, check: bool = True) -> np.ndarray:
    """Duality map of ``L^p(0, pi)`` applied to grid values.

    ``weights`` are the quadrature weights defining the norm (trapezoid on an
    equispaced grid of ``[0, pi]`` by default). For ``p = 2`` the input is
    returned unchanged.
    """
    if not p >= 2:
        raise ValueError("p must be >= 2")
    if p == 2:
        return w
    w = np.asarray(w, dtype=float)
    weights = _trapezoid_weights(w.size) if weights is None else np.asarray(weights, dtype=float)
    norm = float(np.sum(weights * np.abs(w) ** p) ** (1.0 / p))
    if norm < 1e-14:
        if allow_zero:
            return np.zeros_like(w)
        raise ZeroVector("duality map of the zero function is not normalizable for p > 2")
    out = np.abs(w) ** (p - 2) * w * norm ** (2 - p)
    if check:
        q = p / (p - 1)
        pairing = float(np.sum(weights * out * w))
        dual = float(np.sum(weights * np.abs(out) ** q) ** (1.0 / q))
        _ensure(abs(pairing - norm**2) <= 1e-8 * norm**2, "duality pairing identity violated")
        _ensure(abs(dual - norm) <= 1e-8 * norm, "duality norm identity violated")
    return out


def spectral_duality(z, p: float, system: SpectralSystem) -> np.ndarray:
    """``J`` on spectral coefficients: to grid, apply, project back."""
    if p == 2:
        return np.asarray(z, dtype=float)
    grid_vals = system.to_grid(z)
    return system.from_grid(duality_map(grid_vals, p, system.quad_weights, allow_zero=True, check=False))


def _state_norm(v, p: float, system: SpectralSystem | None) -> float:
    if p == 2 or system is None:
        return float(np.linalg.norm(v))
    return system.state_norm(v, p)


def regularized_resolvent(
    gramian: Gramian | np.ndarray,
    lambda_reg: float,
    y,
    p: float = 2.0,
    system: SpectralSystem | None = None,
    *,
    tol: float = 1e-10,
    max_iter: int = 10000,
) -> np.ndarray:
    """Solve ``lam z + Gramian J[z] = y``.

    ``p = 2`` is a symmetric positive-definite solve. For ``p > 2`` a damped
    fixed-point iteration with step ``1 / (lam + |Gramian|)`` is used. On return
    ``|lam z| <= |y|`` is checked (the norm is that of ``L^p``).
    """
    if not lambda_reg > 0:
        raise ValueError("lambda_reg must be positive")
    U = np.asarray(getattr(gramian, "matrix", gramian), dtype=float)
    y = np.asarray(y, dtype=float)
    if y.shape != (U.shape[0],):
        raise DimensionMismatch(f"y must have length {U.shape[0]}")
    if p == 2:
        z = linalg.solve(lambda_reg * np.eye(U.shape[0]) + U, y, assume_a="pos")
    else:
        if system is None:
            raise ValueError("p > 2 needs the spectral system for the duality map")
        omega = 1.0 / (lambda_reg + np.linalg.norm(U, 2))
        z = omega * y
        scale = 1.0 + np.linalg.norm(y)
        residual = np.inf
        for _ in range(max_iter):
            r = y - lambda_reg * z - U @ spectral_duality(z, p, system)
            residual = float(np.linalg.norm(r))
            if residual <= tol * scale:
                break
            z = z + omega * r
        else:
            raise FixedPointDiverged(max_iter, residual)
    lhs = lambda_reg * _state_norm(z, p, system)
    rhs = _state_norm(y, p, system)
    _ensure(lhs <= rhs * (1 + 1e-12) + 1e-300, f"regularized resolvent bound violated: {lhs:.17g} > {rhs:.17g}")
    return z


def target_offset(table: ResolventTable, zeta, zeta1, f_values, grid: TimeGrid) -> np.ndarray:
    """``zeta1 - S(T) zeta - int_0^T S(T - s) f(s) ds`` by the trapezoid rule."""
    zeta = np.asarray(zeta, dtype=float)
    zeta1 = np.asarray(zeta1, dtype=float)
    S = _backward_columns(table, grid)
    out = zeta1 - S[0] * zeta
    if f_values is not None:
        f = np.asarray(f_values, dtype=float)
        if f.shape != (grid.steps + 1, table.modes):
            raise DimensionMismatch("f_values must have shape (steps + 1, modes)")
        out = out - (grid.trapezoid_weights() * (S * f).T).sum(axis=1)
    return out


def _control_from_dual(table, B, grid, d) -> ControlSignal:
    S = _backward_columns(table, grid)
    return ControlSignal(grid, (S * d) @ B.matrix)


def synthesize_control(
    table: ResolventTable,
    B: ControlOperator,
    gramian: Gramian,
    lambda_reg: float,
    k,
    grid: TimeGrid,
    p: float = 2.0,
    system: SpectralSystem | None = None,
) -> ControlSignal:
    """``u(t_j) = B^T diag(s(T - t_j)) J[z]`` with ``z`` from :func:`regularized_resolvent`."""
    _check_b(table, B)
    z = regularized_resolvent(gramian, lambda_reg, k, p, system)
    d = spectral_duality(z, p, system) if p != 2 else z
    return _control_from_dual(table, B, grid, d)


# --------------------------------------------------------------------------
# Nonlinearities and the closed loop


class NonlinearityKind(str, enum.Enum):
    ZERO = "Zero"
    SINE_COSINE = "SineCosine"
    EXP_DECAY_LINEAR = "ExpDecayLinear"


@dataclass(frozen=True)
class Nonlinearity:
    """``SineCosine``: ``k0 cos(2 pi t / T) sin(w)``; ``ExpDecayLinear``: ``exp(-mu t) w``."""

    kind: NonlinearityKind = NonlinearityKind.ZERO
    k0: float = 0.0
    mu: float = 0.0
    horizon: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", NonlinearityKind(self.kind))
        if self.kind is NonlinearityKind.SINE_COSINE and not self.k0 > 0:
            raise ValueError("k0 must be positive")
        if self.kind is NonlinearityKind.EXP_DECAY_LINEAR and not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @classmethod
    def zero(cls) -> "Nonlinearity":
        return cls()

    @classmethod
    def sine_cosine(cls, k0: float, horizon: float = 1.0) -> "Nonlinearity":
        return cls(NonlinearityKind.SINE_COSINE, k0=k0, horizon=horizon)

    @classmethod
    def exp_decay_linear(cls, mu: float) -> "Nonlinearity":
        return cls(NonlinearityKind.EXP_DECAY_LINEAR, mu=mu)

    @property
    def is_zero(self) -> bool:
        return self.kind is NonlinearityKind.ZERO

    def on_grid(self, t: float, w):
        w = np.asarray(w, dtype=float)
        if self.kind is NonlinearityKind.SINE_COSINE:
            return self.k0 * math.cos(2 * math.pi * t / self.horizon) * np.sin(w)
        if self.kind is NonlinearityKind.EXP_DECAY_LINEAR:
            return math.exp(-self.mu * t) * w
        return np.zeros_like(w)

    def spectral(self, t: float, w, system: SpectralSystem) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if self.kind is NonlinearityKind.ZERO:
            return np.zeros_like(w)
        if self.kind is NonlinearityKind.EXP_DECAY_LINEAR:
            return math.exp(-self.mu * t) * w
        return system.from_grid(self.on_grid(t, system.to_grid(w)))

    def sample(self, trajectory_states, grid: TimeGrid, system: SpectralSystem) -> np.ndarray:
        """``f(t_k, w_k)`` for every node, shape ``(K+1, M)``."""
        out = np.zeros((grid.steps + 1, system.modes))
        if self.is_zero:
            return out
        for k, t in enumerate(grid.nodes):
            out[k] = self.spectral(t, trajectory_states[:, k], system)
        return out

    def envelope(self, t, p: float = 2.0, r: float = 1.0):
        """Bound on ``|f(t, w)|_p``, for ``|w|_p <= r`` in the state-dependent case."""
        t = np.asarray(t, dtype=float)
        if self.kind is NonlinearityKind.SINE_COSINE:
            return self.k0 * math.pi ** (1.0 / p) * np.abs(np.cos(2 * math.pi * t / self.horizon))
        if self.kind is NonlinearityKind.EXP_DECAY_LINEAR:
            return np.exp(-self.mu * t) * r * math.pi
        return np.zeros_like(t)

    def envelope_l1(self, T: float, p: float = 2.0, r: float = 1.0) -> float:
        """Exact ``int_0^T`` of :meth:`envelope`."""
        if self.kind is NonlinearityKind.SINE_COSINE:
            # int_0^x |cos| = 2n + (-1)^n sin x with n = floor(x / pi + 1/2)
            x = 2 * math.pi * T / self.horizon
            n = math.floor(x / math.pi + 0.5)
            integral = (2 * n + (-1) ** n * math.sin(x)) * self.horizon / (2 * math.pi)
            return self.k0 * math.pi ** (1.0 / p) * integral
        if self.kind is NonlinearityKind.EXP_DECAY_LINEAR:
            return r * math.pi * (1 - math.exp(-self.mu * T)) / self.mu
        return 0.0

    def as_dict(self) -> dict:
        return {"kind": self.kind.value, "k0": self.k0, "mu": self.mu, "horizon": self.horizon}


@dataclass(frozen=True, eq=False)
class SteeringProblem:
    zeta: np.ndarray
    zeta1: np.ndarray
    T: float
    lambda_reg: float
    nonlinearity: Nonlinearity = field(default_factory=Nonlinearity)
    duality_p: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "zeta", _frozen(self.zeta))
        object.__setattr__(self, "zeta1", _frozen(self.zeta1))
        if self.zeta.shape != self.zeta1.shape:
            raise DimensionMismatch("zeta and zeta1 must have the same length")
        if not self.lambda_reg > 0:
            raise ValueError("lambda_reg must be positive")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not self.duality_p >= 2:
            raise ValueError("duality_p must be >= 2")


@dataclass(frozen=True, eq=False)
class SteeringResult:
    trajectory: Trajectory
    control: ControlSignal
    terminal_miss: float
    picard_iterations: int
    picard_residuals: list
    cost: float
    terminal_identity_residual: float

    def to_dict(self) -> dict:
        return {
            "terminal_miss": self.terminal_miss,
            "picard_iterations": self.picard_iterations,
            "picard_residuals": list(self.picard_residuals),
            "cost": self.cost,
            "terminal_identity_residual": self.terminal_identity_residual,
            "energy": self.control.energy,
            "terminal_state": self.trajectory.terminal.tolist(),
            "trajectory": self.trajectory.to_dict(),
            "control": self.control.to_dict(),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text)
        return text


def cost_terms(w_T, zeta1, u: ControlSignal, lambda_reg: float, p: float = 2.0, system=None) -> tuple[float, float]:
    """``(|w(T) - zeta1|**2, lam * energy)``."""
    miss = _state_norm(np.asarray(w_T, dtype=float) - np.asarray(zeta1, dtype=float), p, system)
    return miss**2, lambda_reg * u.energy


def cost_functional(w_T, zeta1, u: ControlSignal, lambda_reg: float, p: float = 2.0, system=None) -> float:
    a, b = cost_terms(w_T, zeta1, u, lambda_reg, p, system)
    return a + b


def _sup_norm(states) -> float:
    return float(np.max(np.linalg.norm(states, axis=0)))


def closed_loop_picard(
    problem: SteeringProblem,
    system: SpectralSystem,
    kernel: MemoryKernel,
    table: ResolventTable,
    B: ControlOperator,
    grid: TimeGrid,
    tol: float = 1e-8,
    max_iter: int = 50,
    *,
    gramian: Gramian | None = None,
    relaxation: float = 1.0,
) -> SteeringResult:
    """Fixed point of ``w -> S(t) zeta + int S(t-s) [B u(s; w) + f(s, w(s))] ds``.

    Starts from the controlled linear trajectory, so with ``f = 0`` the first
    update is already zero. ``relaxation < 1`` blends each new iterate with
    the previous one.
    """
    if not tol > 0 or max_iter < 1:
        raise ValueError("need tol > 0 and max_iter >= 1")
    if not 0 < relaxation <= 1:
        raise ValueError("relaxation must lie in (0, 1]")
    if not math.isclose(grid.T, problem.T):
        raise DimensionMismatch("grid horizon differs from the problem horizon")
    _check_b(table, B)
    p = problem.duality_p
    f = problem.nonlinearity
    ups = assemble_gramian(table, B, grid) if gramian is None else gramian
    zeta, zeta1 = problem.zeta, problem.zeta1

    def apply_map(states):
        fvals = f.sample(states, grid, system) if states is not None else np.zeros((grid.steps + 1, system.modes))
        k = target_offset(table, zeta, zeta1, fvals, grid)
        z = regularized_resolvent(ups, problem.lambda_reg, k, p, system)
        d = spectral_duality(z, p, system)
        u = _control_from_dual(table, B, grid, d)
        forcing = u.values @ B.matrix.T + fvals
        return mild_quadrature(table, zeta, forcing, grid), u, z

    w, u, z = apply_map(None)
    residuals = []
    iterations = 0
    for i in range(1, max_iter + 1):
        new, u, z = apply_map(w.states)
        iterations = i
        update = _sup_norm(new.states - w.states)
        residuals.append(update)
        if relaxation < 1:
            new = Trajectory(grid, relaxation * new.states + (1 - relaxation) * w.states, new.meta)
        w = new
        if update <= tol * (1 + _sup_norm(w.states)):
            break
    else:
        raise PicardNotConverged(max_iter, residuals[-1])
    # the identity is checked against the offset of the returned trajectory itself
    fvals = f.sample(w.states, grid, system)
    k_final = target_offset(table, zeta, zeta1, fvals, grid)
    z_final = regularized_resolvent(ups, problem.lambda_reg, k_final, p, system)
    identity = _state_norm(w.terminal - zeta1 + problem.lambda_reg * z_final, p, system)
    miss = _state_norm(w.terminal - zeta1, p, system)
    cost = cost_functional(w.terminal, zeta1, u, problem.lambda_reg, p, system)
    meta = dict(w.meta, picard_iterations=iterations)
    traj = Trajectory(grid, w.states, meta)
    return SteeringResult(traj, u, miss, iterations, residuals, cost, identity)


def lambda_sweep(problem: SteeringProblem, lambdas, system, kernel, table, B, grid, **kwargs) -> list[dict]:
    """Rows ``lambda, terminal_miss, cost, energy, iters`` for each regularization."""
    ups = kwargs.pop("gramian", None) or assemble_gramian(table, B, grid)
    rows = []
    for lam in lambdas:
        prob = SteeringProblem(problem.zeta, problem.zeta1, problem.T, lam, problem.nonlinearity, problem.duality_p)
        res = closed_loop_picard(prob, system, kernel, table, B, grid, gramian=ups, **kwargs)
        rows.append(
            {
                "lambda": float(lam),
                "terminal_miss": res.terminal_miss,
                "cost": res.cost,
                "energy": res.control.energy,
                "iters": res.picard_iterations,
                "identity_residual": res.terminal_identity_residual,
            }
        )
    return rows


def write_sweep_csv(rows, path=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["lambda", "terminal_miss", "cost", "energy", "iters"])
    for r in rows:
        writer.writerow([f"{r['lambda']:.17g}", f"{r['terminal_miss']:.17g}", f"{r['cost']:.17g}", f"{r['energy']:.17g}", r["iters"]])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


# --------------------------------------------------------------------------
# Controllability criteria


@dataclass(frozen=True)
class CriterionTable:
    rows: tuple  # (lambda, value) pairs
    verdict: str

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["lambda", "crit"])
        for lam, val in self.rows:
            writer.writerow([f"{lam:.17g}", f"{val:.17g}"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def approx_criterion(
    gramian: Gramian, lambda_seq, y_samples, p: float = 2.0, system: SpectralSystem | None = None, *, threshold: float = 1e-3
) -> CriterionTable:
    """Rows ``max_y |lam R(lam) y| / |y|`` along a decreasing ``lambda_seq``."""
    lams = np.asarray(lambda_seq, dtype=float)
    if np.any(lams <= 0) or np.any(np.diff(lams) >= 0):
        raise ValueError("lambda_seq must be positive and strictly decreasing")
    ys = np.atleast_2d(np.asarray(y_samples, dtype=float))
    rows = []
    for lam in lams:
        worst = 0.0
        for y in ys:
            ny = _state_norm(y, p, system)
            if ny == 0:
                continue
            z = regularized_resolvent(gramian, lam, y, p, system)
            worst = max(worst, lam * _state_norm(z, p, system) / ny)
        rows.append((float(lam), worst))
    vals = [v for _, v in rows]
    monotone = all(b <= a + 1e-10 for a, b in zip(vals, vals[1:]))
    verdict = "controllable" if monotone and vals[-1] <= threshold else "not-shown"
    return CriterionTable(tuple(rows), verdict)


def criterion_by_horizon(table, B, grid, horizon_indices, lambda_seq, y_samples, p=2.0, system=None) -> dict:
    """:func:`approx_criterion` with the Gramian recomputed on ``[0, t_j]`` for each index ``j``."""
    return {
        float(grid.nodes[j]): approx_criterion(assemble_gramian(table, B, grid, j), lambda_seq, y_samples, p, system)
        for j in horizon_indices
    }


class Vanishing(str, enum.Enum):
    VANISHES = "Vanishes"
    NON_VANISHING = "NonVanishing"


@dataclass(frozen=True)
class AdjointTest:
    verdict: Vanishing
    max_norm: float
    gramian_form: float
    direct_form: float
    degenerate: bool


def adjoint_vanishing_test(table: ResolventTable, B: ControlOperator, w_star, grid: TimeGrid, tol: float = 1e-10) -> AdjointTest:
    """Does ``B^T S(T - t) w*`` vanish on the grid? Also compares ``<w*, Gramian w*>`` with its direct sum."""
    _check_b(table, B)
    w_star = np.asarray(w_star, dtype=float)
    S = _backward_columns(table, grid)
    images = (S * w_star) @ B.matrix
    norms = np.linalg.norm(images, axis=1)
    max_norm = float(np.max(norms))
    direct = float(grid.trapezoid_weights() @ norms**2)
    ups = assemble_gramian(table, B, grid)
    form = float(w_star @ ups.matrix @ w_star)
    size = float(np.linalg.norm(w_star))
    verdict = Vanishing.VANISHES if max_norm <= tol * size or size == 0 else Vanishing.NON_VANISHING
    return AdjointTest(verdict, max_norm, form, direct, size == 0)


def rank_condition(eigenvalues, B_matrix, M: int | None = None) -> tuple[int, str]:
    """Numerical rank of ``[B, A B, ..., A^(M-1) B]`` with ``A = diag(-eigenvalues)``.

    ``A`` is scaled to unit norm and each nonzero row normalized first; neither
    changes the rank, but without them the powers of ``A`` swamp the threshold.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    Bm = np.atleast_2d(np.asarray(B_matrix, dtype=float))
    if Bm.shape[0] != lam.size and Bm.shape[1] == lam.size and Bm.shape[0] == 1:
        Bm = Bm.T
    M = lam.size if M is None else M
    if Bm.shape[0] != M or lam.size != M:
        raise DimensionMismatch("eigenvalues and B must both have M rows")
    a = -lam / np.max(np.abs(lam))
    blocks = [Bm]
    for _ in range(M - 1):
        blocks.append(a[:, None] * blocks[-1])
    K = np.hstack(blocks)
    row_norm = np.linalg.norm(K, axis=1)
    K = K[row_norm > 0] / row_norm[row_norm > 0, None]
    if K.size == 0:
        return 0, "NotControllable"
    sv = np.linalg.svd(K, compute_uv=False)
    rank = int(np.sum(sv > 1e-10 * sv[0]))
    return rank, "Controllable" if rank == M else "NotControllable"


@dataclass(frozen=True)
class AssumptionF:
    L_tilde: float
    terminal_difference: float
    ratios: tuple


def assumption_f_check(table: ResolventTable, B: ControlOperator, grid: TimeGrid) -> AssumptionF:
    """``L = max_k |F(t_k) F(T)^-1|_2`` with ``F(t) = int_0^t S(t-s) B B^T S(T-s) ds``."""
    _check_b(table, B)
    ups = assemble_gramian(table, B, grid)
    if ups.min_eigenvalue <= 1e-12:
        raise NotApplicable(f"Gramian is singular on the truncated space (min eigenvalue {ups.min_eigenvalue:.3e})")
    S_T = _backward_columns(table, grid)
    bbt = B.matrix @ B.matrix.T
    inv = np.linalg.inv(ups.matrix)
    ratios = []
    F = None
    for k in range(grid.steps + 1):
        S_k = _backward_columns(table, grid, k)
        tau = grid.trapezoid_weights(k)
        F = bbt * ((S_k.T * tau) @ S_T[: k + 1]) if k > 0 else np.zeros_like(bbt)
        ratios.append(float(np.linalg.norm(F @ inv, 2)))
    diff = float(np.max(np.abs(F - ups.matrix)))
    L = max(ratios)
    _ensure(L >= 1 - 1e-10, f"L_tilde={L} is below 1")
    _ensure(diff <= 1e-10, f"F(T) differs from the Gramian by {diff:.3e}")
    return AssumptionF(L, diff, tuple(ratios))


def ce3_lhs(mu: float, L_tilde: float, T: float) -> float:
    """``mu pi (1 - exp(-mu T)) (1 + 2 L)``, the displayed smallness quantity for the decaying case."""
    return mu * math.pi * (1 - math.exp(-mu * T)) * (1 + 2 * L_tilde)


def feasibility_check(
    problem: SteeringProblem,
    N_bound: float,
    M_B: float,
    gamma_norm: float | None = None,
    mu: float | None = None,
    L_tilde: float = 1.0,
    *,
    control_norm: float = 0.0,
    system: SpectralSystem | None = None,
) -> dict:
    """Evaluate the existence and steering ball conditions.

    ``c1``: ``N|zeta| + N M_B T^(1/2) |u| + N |gamma|_1 <= r``.
    ``cc4``: ``N|zeta| + N|gamma_r|_1 + 2L (|zeta1| + N|zeta| + N|gamma_r|_1) <= r``.
    For the decaying linear nonlinearity ``|gamma_r|_1 = b r`` is linear in
    ``r``; the exact integral and the displayed alternative
    ``mu (1 - exp(-mu T)) pi r`` are both evaluated.
    """
    p = problem.duality_p
    T = problem.T
    nz = _state_norm(problem.zeta, p, system)
    nz1 = _state_norm(problem.zeta1, p, system)
    f = problem.nonlinearity
    if mu is None and f.kind is NonlinearityKind.EXP_DECAY_LINEAR:
        mu = f.mu
    report = {"N": N_bound, "M_B": M_B, "L_tilde": L_tilde, "T": T}
    if mu is None:
        g = f.envelope_l1(T, p) if gamma_norm is None else gamma_norm
        c1 = N_bound * nz + N_bound * M_B * math.sqrt(T) * control_norm + N_bound * g
        cc4 = N_bound * nz + N_bound * g + 2 * L_tilde * (nz1 + N_bound * nz + N_bound * g)
        report.update(
            gamma_l1=g,
            c1_lhs=c1,
            c1_radius=c1,
            cc4_lhs=cc4,
            cc4_radius=cc4,
            feasible=True,
        )
        return report
    # exact: int_0^T exp(-mu t) r pi dt = b r
    b_exact = math.pi * (1 - math.exp(-mu * T)) / mu
    b_display = mu * (1 - math.exp(-mu * T)) * math.pi
    a = N_bound * nz * (1 + 2 * L_tilde) + 2 * L_tilde * nz1
    report.update(mu=mu, gamma_coeff_exact=b_exact, gamma_coeff_displayed=b_display, coeff_ratio=b_exact / b_display)
    for label, b in (("exact", b_exact), ("displayed", b_display)):
        slope = N_bound * (1 + 2 * L_tilde) * b
        if a == 0:
            radius = 0.0
        elif slope < 1:
            radius = a / (1 - slope)
        else:
            radius = None
        report[f"cc4_slope_{label}"] = slope
        report[f"cc4_radius_{label}"] = radius
        report[f"feasible_{label}"] = radius is not None
    report["ce3_lhs"] = ce3_lhs(mu, L_tilde, T)
    report["ce3_holds"] = report["ce3_lhs"] <= 0.5
    report["feasible"] = report["feasible_exact"]
    return report
