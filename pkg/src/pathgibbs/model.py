"""Discretised finite-time-interval Gibbs measures on path space.

A model couples a time grid, a boundary condition, an on-site potential, and
a pair kernel into one unnormalised log-density over node positions:

    log w(X) = -sum_k |x_{k+1} - x_k|^2 / (2b)            (reference increments)
               - int V(X_t) dt                            (trapezoid)
               - lambda * pair energy                     (rectangle rule)
               - boundary interaction                     (external paths only)

Pair energies use the double rectangle rule over ordered interval pairs
including the diagonal, i.e. b^2 sum_{i,j=0}^{N-1} W(x_i, x_j, t_i - t_j),
which is also the node-product rule the expansion surrogate relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AlignmentError,
    DomainError,
    InvalidEnergyError,
    UnboundedTailError,
)
from .kernels import CLASS_INCREMENT, CLASS_W1, PairKernelSpec, tail_bound_beyond_horizon
from .spectral import PotentialSpec


@dataclass(frozen=True)
class TimeGrid:
    """Window [-T, T] split into N intervals of length b = 2T/N.

    Gibbs models require N even so the origin is a node; the expansion
    surrogates also run at odd N, where `origin_index` is the node just left
    of the origin.
    """

    T: float
    N: int

    def __post_init__(self):
        if self.T <= 0:
            raise DomainError("need T > 0")
        if self.N < 2:
            raise DomainError("need an interval count N >= 2")

    @property
    def b(self) -> float:
        return 2.0 * self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        return -self.T + self.b * np.arange(self.N + 1)

    @property
    def origin_index(self) -> int:
        return self.N // 2

    def to_dict(self):
        return {"T": self.T, "N": self.N}


class PathSample:
    """Positions of a path at the N+1 time-grid nodes; the basic MCMC state."""

    __slots__ = ("positions", "dim")

    def __init__(self, positions, dim=None):
        arr = np.asarray(positions, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise DomainError("positions must be (N+1,) or (N+1, d)")
        if not np.all(np.isfinite(arr)):
            raise DomainError("path contains non-finite positions")
        if dim is not None and arr.shape[1] != dim:
            raise DomainError(f"path dimension {arr.shape[1]} != {dim}")
        self.positions = arr
        self.dim = arr.shape[1]

    def __len__(self):
        return self.positions.shape[0]

    def copy(self):
        return PathSample(self.positions.copy())

    def scalar(self):
        """1-d view of a d=1 path (positions as a flat array)."""
        if self.dim != 1:
            raise DomainError("scalar view only for d = 1")
        return self.positions[:, 0]


class BoundaryCondition:
    """Boundary data for the window: pinning or an external boundary path."""

    def __init__(self, kind, **params):
        self.kind = kind
        self.params = params

    @classmethod
    def pinned(cls, left, right):
        return cls("pinned", left=np.atleast_1d(np.asarray(left, float)),
                   right=np.atleast_1d(np.asarray(right, float)))

    @classmethod
    def pinned_origin(cls, x0=0.0):
        return cls("pinned_origin", x0=np.atleast_1d(np.asarray(x0, float)))

    @classmethod
    def free_stationary(cls):
        return cls("free_stationary")

    @classmethod
    def external_path(cls, y_left, y_right, horizon):
        """Boundary path given at outer nodes with spacing b.

        y_left covers times -T-horizon .. -T inclusive (ascending), y_right
        covers T .. T+horizon; the window endpoints are pinned at y_left[-1]
        and y_right[0].
        """
        if horizon <= 0:
            raise DomainError("external path needs horizon > 0")
        yl = np.asarray(y_left, dtype=float)
        yr = np.asarray(y_right, dtype=float)
        if yl.ndim == 1:
            yl = yl[:, None]
        if yr.ndim == 1:
            yr = yr[:, None]
        return cls("external_path", y_left=yl, y_right=yr, horizon=float(horizon))

    def to_dict(self):
        d = {"kind": self.kind}
        for k, v in self.params.items():
            d[k] = np.asarray(v).tolist() if isinstance(v, np.ndarray) else v
        return d


ENERGY_FORMS = ("onsite_pair", "increment", "nelson")


class GibbsModel:
    """Full specification of one finite-time-interval Gibbs measure."""

    def __init__(self, grid: TimeGrid, dim=1, potential: PotentialSpec | None = None,
                 kernel: PairKernelSpec | None = None, lam=0.0,
                 boundary: BoundaryCondition | None = None, energy_form="onsite_pair"):
        if energy_form not in ENERGY_FORMS:
            raise DomainError(f"unknown energy form {energy_form!r}")
        if grid.N % 2 != 0:
            raise DomainError("Gibbs models need an even interval count so the origin is a node")
        if boundary is None:
            boundary = BoundaryCondition.free_stationary()
        if energy_form == "increment":
            if kernel is not None and kernel.class_tag != CLASS_INCREMENT:
                raise DomainError("increment energy form needs an increment-only kernel")
            if boundary.kind != "pinned_origin":
                raise DomainError("increment energy form needs a pinned_origin boundary")
        if energy_form == "nelson" and kernel is not None and kernel.kind != "nelson":
            raise DomainError("nelson energy form needs the field-theoretic kernel")
        self.grid = grid
        self.dim = dim
        self.potential = potential
        self.kernel = kernel
        self.lam = float(lam)
        self.boundary = boundary
        self.energy_form = energy_form

    def with_coupling(self, lam):
        return GibbsModel(self.grid, self.dim, self.potential, self.kernel,
                          lam, self.boundary, self.energy_form)

    def to_dict(self):
        return {
            "grid": self.grid.to_dict(),
            "dim": self.dim,
            "potential": None if self.potential is None else self.potential.to_dict(),
            "kernel": None if self.kernel is None else self.kernel.to_dict(),
            "lambda": self.lam,
            "boundary": self.boundary.to_dict(),
            "energy_form": self.energy_form,
        }


def onsite_energy(path: PathSample, potential: PotentialSpec, grid: TimeGrid) -> float:
    """Trapezoidal quadrature of int_{-T}^{T} V(X_t) dt over the nodes."""
    if len(path) != grid.N + 1:
        raise DomainError("path length does not match the time grid")
    if path.dim == 1:
        v = potential.values(path.scalar())
    else:
        # product extension to d > 1: V(x) = sum_a V(x_a)
        v = potential.values(path.positions).sum(axis=1)
    if not np.all(np.isfinite(v)):
        raise InvalidEnergyError("potential non-finite along the path")
    w = np.full(grid.N + 1, grid.b)
    w[0] = w[-1] = 0.5 * grid.b
    return float(w @ v)


def _lag_matrix(grid: TimeGrid) -> np.ndarray:
    t = grid.nodes[: grid.N]
    return t[:, None] - t[None, :]


def pair_energy_internal(path: PathSample, kernel: PairKernelSpec, grid: TimeGrid) -> float:
    """Double rectangle rule b^2 sum_{i,j} W(x_i, x_j, t_i - t_j), ordered
    pairs including the diagonal, over the interval left endpoints."""
    if len(path) != grid.N + 1:
        raise DomainError("path length does not match the time grid")
    x = path.scalar()[: grid.N]
    w = kernel.pair_values(x[:, None], x[None, :], _lag_matrix(grid))
    if not np.all(np.isfinite(w)):
        raise InvalidEnergyError("pair kernel non-finite along the path")
    return float(grid.b**2 * w.sum())


def increment_energy(path: PathSample, kernel: PairKernelSpec, grid: TimeGrid) -> float:
    """b^2 sum_{i,j} W(x_i - x_j, t_i - t_j) for increment-only kernels."""
    if len(path) != grid.N + 1:
        raise DomainError("path length does not match the time grid")
    if kernel.class_tag != CLASS_INCREMENT:
        raise DomainError("kernel is not increment-only")
    pos = path.positions[: grid.N]
    dx = pos[:, None, :] - pos[None, :, :]
    r = np.linalg.norm(dx, axis=-1) if path.dim > 1 else np.abs(dx[..., 0])
    w = kernel._radial(r, _lag_matrix(grid))
    if not np.all(np.isfinite(w)):
        raise InvalidEnergyError("increment kernel non-finite along the path")
    return float(grid.b**2 * w.sum())


def pair_energy_boundary(path: PathSample, boundary: BoundaryCondition,
                         kernel: PairKernelSpec, grid: TimeGrid, horizon=None):
    """Interaction energy between the window path and the boundary path,
    calibrated so a zero boundary path contributes exactly zero.

    Returns (energy, tail_bound) where tail_bound controls the truncated
    |t| > T + horizon remainder via the decay envelope.  Kernels of the
    growing class are refused: their boundary energy has no uniform tail.
    """
    if boundary.kind != "external_path":
        raise DomainError("boundary energy needs an external_path boundary")
    if kernel.class_tag == CLASS_W1:
        raise UnboundedTailError(
            "boundary interaction for a growing-envelope kernel has no controlled tail"
        )
    env = kernel.envelope()
    if env is None:
        raise UnboundedTailError("kernel provides no decay envelope for the tail bound")
    R_env, alpha_env = env
    b = grid.b
    if horizon is None:
        horizon = boundary.params["horizon"]
    K = int(round(horizon / b))
    if abs(K * b - horizon) > 1e-9 * max(1.0, horizon):
        raise AlignmentError("horizon must be a multiple of the interval length b")
    yl = boundary.params["y_left"]
    yr = boundary.params["y_right"]
    if len(yl) < K + 1 or len(yr) < K + 1:
        raise DomainError("external path does not cover the requested horizon")

    x = path.scalar()[: grid.N]
    s = grid.nodes[: grid.N]
    t_left = -grid.T - horizon + b * np.arange(K)
    t_right = grid.T + b * np.arange(K)
    total = 0.0
    for t_out, y_out in ((t_left, yl[:K, 0]), (t_right, yr[:K, 0])):
        lags = t_out[:, None] - s[None, :]
        w_y = kernel.pair_values(y_out[:, None], x[None, :], lags)
        w_0 = kernel.pair_values(np.zeros((len(t_out), 1)), x[None, :], lags)
        total += 2.0 * b * b * float((w_y - w_0).sum())
    tail = tail_bound_beyond_horizon(R_env, alpha_env, grid.T, horizon)
    return total, tail


def gibbs_log_density(path: PathSample, model: GibbsModel) -> float:
    """Log of the unnormalised discretised density of the model.

    Exactly additive in its components; the decomposition is re-validated by
    tests via component-wise recomputation.
    """
    grid = model.grid
    if len(path) != grid.N + 1:
        raise DomainError("path length does not match the time grid")
    pos = path.positions
    inc = np.diff(pos, axis=0)
    logw = -float((inc * inc).sum()) / (2.0 * grid.b)

    if model.potential is not None:
        logw -= onsite_energy(path, model.potential, grid)

    if model.kernel is not None and model.lam != 0.0:
        if model.energy_form == "onsite_pair":
            logw -= model.lam * pair_energy_internal(path, model.kernel, grid)
            if model.boundary.kind == "external_path":
                e_b, _ = pair_energy_boundary(path, model.boundary, model.kernel, grid)
                logw -= model.lam * e_b
        elif model.energy_form == "increment":
            logw -= model.lam * increment_energy(path, model.kernel, grid)
        else:  # nelson form: recorded sign, coupling e^2/2 carried by lam
            sign = model.kernel.params.get("sign", 1)
            logw += sign * model.lam * increment_energy(path, model.kernel, grid)
    return logw


def splice(path: PathSample, tau: float, grid: TimeGrid):
    """Discrete cut-and-glue map: remove the symmetric piece around t = 0.

    Drops the nodes with -tau <= t_k < tau (the right-continuous convention
    of the half-line gluing) and re-indexes onto TimeGrid(T - tau, N - 2m).
    Returns (new_path, new_grid).
    """
    b = grid.b
    m = int(round(tau / b))
    if abs(m * b - tau) > 1e-9 * max(1.0, b):
        raise AlignmentError("tau must be a multiple of the interval length b")
    if m < 0 or 2 * tau >= 2 * grid.T:
        raise DomainError("need 0 <= tau < T")
    if m == 0:
        return path.copy(), grid
    k0 = grid.origin_index
    pos = path.positions
    new_pos = np.concatenate([pos[: k0 - m], pos[k0 + m :]], axis=0)
    return PathSample(new_pos), TimeGrid(grid.T - tau, grid.N - 2 * m)


def splice_energy_change(path: PathSample, tau: float, model: GibbsModel) -> float:
    """-W(X) + W(theta_tau X): change of pair energy induced by the cut.

    The uniform-control condition asks for a bound C tau + D on this
    statistic; the tightness study fits (C, D) over samples.
    """
    if model.kernel is None:
        return 0.0
    if model.energy_form == "onsite_pair":
        energy = lambda p, g: pair_energy_internal(p, model.kernel, g)
    else:
        energy = lambda p, g: increment_energy(p, model.kernel, g)
    new_path, new_grid = splice(path, tau, model.grid)
    return -energy(path, model.grid) + energy(new_path, new_grid)
