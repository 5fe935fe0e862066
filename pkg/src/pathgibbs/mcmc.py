"""Samplers targeting discretised path-space Gibbs measures.

The production move proposes a block of interior nodes from the exact
Brownian-bridge conditional of the reference Gaussian given the block
endpoints, so the free-increment part of the density cancels against the
proposal and acceptance depends only on the interaction terms (on-site
potential, pair coupling, boundary interaction).  At zero coupling and zero
potential the sampler is rejection free.

Free boundary nodes are refreshed by endpoint moves that regrow a terminal
segment as a free random walk from an interior anchor.

Determinism: a 64-bit master seed feeds numpy's PCG64 via SeedSequence;
multi-chain runs derive child seeds with SeedSequence.spawn, and reports are
merged in chain order, so a run is reproducible for any worker count and
bit-identical in single-worker mode.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CachedDensityError,
    DomainError,
    EstimatorError,
    UnsupportedDimensionError,
)
from .estimators import EstimatorReport
from .model import GibbsModel, PathSample, gibbs_log_density
from .spectral import SpectralData, transition_matrix

REVALIDATE_EVERY = 500
CACHE_TOL = 1e-9


@dataclass
class SamplerParams:
    n_sweeps: int = 10_000
    burn_in: int = 1_000
    thinning: int = 1
    block_len_max: int = 16
    move_mix: dict = field(default_factory=lambda: {"bridge_block": 1.0, "endpoint": 0.0})
    seed: int = 0
    n_chains: int = 1

    def __post_init__(self):
        if self.burn_in >= self.n_sweeps:
            raise DomainError("burn_in must be smaller than n_sweeps")
        total = sum(self.move_mix.values())
        if total <= 0:
            raise DomainError("move mix must have positive total probability")
        self.move_mix = {k: v / total for k, v in self.move_mix.items()}


@dataclass
class ChainState:
    path: PathSample
    cached_log_density: float
    rng: np.random.Generator
    step_count: int = 0
    accept_counts: dict = field(default_factory=dict)
    propose_counts: dict = field(default_factory=dict)

    def record(self, move, accepted):
        self.propose_counts[move] = self.propose_counts.get(move, 0) + 1
        if accepted:
            self.accept_counts[move] = self.accept_counts.get(move, 0) + 1
        self.step_count += 1

    def revalidate(self, model: GibbsModel):
        exact = gibbs_log_density(self.path, model)
        drift = abs(exact - self.cached_log_density)
        if drift > CACHE_TOL * max(1.0, abs(exact)):
            raise CachedDensityError(
                f"cached log-density off by {drift:.3e} at step {self.step_count}; "
                f"cached={self.cached_log_density!r} exact={exact!r}"
            )
        self.cached_log_density = exact
        return drift


class _EnergyContext:
    """Vectorised local interaction-energy deltas for one model."""

    def __init__(self, model: GibbsModel):
        self.model = model
        self.grid = model.grid
        self.N = model.grid.N
        self.b = model.grid.b
        k = model.kernel
        self.has_pair = k is not None and model.lam != 0.0
        if model.energy_form == "nelson":
            self.pair_sign = -model.kernel.params.get("sign", 1) if k else 1
        else:
            self.pair_sign = 1.0
        self.node_times = model.grid.nodes

    def onsite_delta(self, old, new, idx):
        """Trapezoid-weighted on-site energy change for changed nodes idx."""
        V = self.model.potential
        if V is None:
            return 0.0
        w = np.where((idx == 0) | (idx == self.N), 0.5 * self.b, self.b)
        if old.shape[1] == 1:
            v_old = V.values(old[idx, 0])
            v_new = V.values(new[:, 0])
        else:
            v_old = V.values(old[idx]).sum(axis=1)
            v_new = V.values(new).sum(axis=1)
        return float((w * (v_new - v_old)).sum())

    def pair_delta(self, old, new, idx):
        """Change of the pair/increment energy when nodes idx become `new`.

        Uses the ordered-pair-sum structure: entries with one index changed
        count twice, both-changed once.
        """
        if not self.has_pair:
            return 0.0
        k = self.model.kernel
        b = self.b
        sel = idx[idx < self.N]
        if len(sel) == 0:
            return 0.0
        new_sel = new[idx < self.N]
        keep = np.setdiff1d(np.arange(self.N), sel, assume_unique=True)
        lag_cross = np.abs(sel[:, None] - keep[None, :]) * b
        lag_self = np.abs(sel[:, None] - sel[None, :]) * b
        x_keep = old[keep]
        x_old = old[sel]
        if self.model.energy_form == "onsite_pair":
            xo = x_old[:, 0]
            xn = new_sel[:, 0]
            xk = x_keep[:, 0]
            cross = k.pair_values(xn[:, None], xk[None, :], lag_cross) - \
                k.pair_values(xo[:, None], xk[None, :], lag_cross)
            self_blk = k.pair_values(xn[:, None], xn[None, :], lag_self) - \
                k.pair_values(xo[:, None], xo[None, :], lag_self)
        else:
            r_cross_new = _pairwise_norm(new_sel, x_keep)
            r_cross_old = _pairwise_norm(x_old, x_keep)
            r_self_new = _pairwise_norm(new_sel, new_sel)
            r_self_old = _pairwise_norm(x_old, x_old)
            cross = k._radial(r_cross_new, lag_cross) - k._radial(r_cross_old, lag_cross)
            self_blk = k._radial(r_self_new, lag_self) - k._radial(r_self_old, lag_self)
        delta = b * b * (2.0 * cross.sum() + self_blk.sum())
        return self.pair_sign * self.model.lam * delta

    def boundary_delta(self, old, new, idx):
        if self.model.boundary.kind != "external_path" or not self.has_pair:
            return 0.0
        bc = self.model.boundary
        k = self.model.kernel
        b = self.b
        horizon = bc.params["horizon"]
        K = int(round(horizon / b))
        sel = idx[idx < self.N]
        if len(sel) == 0:
            return 0.0
        s = self.node_times[sel]
        total = 0.0
        for t0, y in ((-self.grid.T - horizon, bc.params["y_left"][:K, 0]),
                      (self.grid.T, bc.params["y_right"][:K, 0])):
            t_out = t0 + b * np.arange(K)
            lags = t_out[:, None] - s[None, :]
            w_new = k.pair_values(y[:, None], new[idx < self.N, 0][None, :], lags)
            w_old = k.pair_values(y[:, None], old[sel][:, 0][None, :], lags)
            w0_new = k.pair_values(0.0, new[idx < self.N, 0][None, :], lags)
            w0_old = k.pair_values(0.0, old[sel][:, 0][None, :], lags)
            total += 2.0 * b * b * float((w_new - w_old - w0_new + w0_old).sum())
        return self.model.lam * total

    def interaction_delta(self, old, new, idx):
        return (self.onsite_delta(old, new, idx)
                + self.pair_delta(old, new, idx)
                + self.boundary_delta(old, new, idx))


def _pairwise_norm(a, b):
    d = a[:, None, :] - b[None, :, :]
    return np.sqrt((d * d).sum(axis=-1))


def _bridge_fill(rng, x_left, x_right, n_interior, b, dim):
    """Sequential (staging) draw of a Brownian bridge's interior nodes."""
    out = np.empty((n_interior, dim))
    prev = x_left
    for k in range(n_interior):
        remaining = n_interior - k
        mean = prev + (x_right - prev) / (remaining + 1)
        var = b * remaining / (remaining + 1)
        prev = mean + np.sqrt(var) * rng.standard_normal(dim)
        out[k] = prev
    return out


def bridge_block_move(state: ChainState, model: GibbsModel, ctx: _EnergyContext,
                      i: int, length: int):
    """Metropolis move resampling nodes i+1 .. i+length-1 from the reference
    bridge given the block endpoints; accepts on the interaction change."""
    pos = state.path.positions
    N = ctx.N
    if i < 0 or i + length > N or length < 2:
        raise DomainError("block outside the grid")
    idx = np.arange(i + 1, i + length)
    proposal = _bridge_fill(state.rng, pos[i], pos[i + length], length - 1,
                            ctx.b, state.path.dim)
    if not np.all(np.isfinite(proposal)):
        state.record("bridge_block", False)
        return False
    delta_int = ctx.interaction_delta(pos, proposal, idx)
    accept = delta_int <= 0 or state.rng.random() < np.exp(-delta_int)
    if accept:
        old_gauss = _local_gauss(pos, i, i + length, ctx.b)
        pos[idx] = proposal
        new_gauss = _local_gauss(pos, i, i + length, ctx.b)
        state.cached_log_density += (new_gauss - old_gauss) - delta_int
    state.record("bridge_block", accept)
    return accept


def _local_gauss(pos, lo, hi, b):
    inc = np.diff(pos[lo : hi + 1], axis=0)
    return -float((inc * inc).sum()) / (2.0 * b)


def endpoint_move(state: ChainState, model: GibbsModel, ctx: _EnergyContext,
                  side: str, length: int):
    """Regrow a terminal segment as a free random walk from its anchor."""
    pos = state.path.positions
    N = ctx.N
    length = min(length, N)  # keep at least one anchored node
    steps = np.sqrt(ctx.b) * state.rng.standard_normal((length, state.path.dim))
    if side == "right":
        idx = np.arange(N - length + 1, N + 1)
        proposal = pos[N - length] + np.cumsum(steps, axis=0)
        lo, hi = N - length, N
    else:
        # grow outward from the anchor at node `length` down to node 0
        proposal = pos[length] + np.cumsum(steps, axis=0)
        lo, hi = 0, length
        idx = np.arange(length - 1, -1, -1)
    delta_int = ctx.interaction_delta(pos, proposal, idx)
    accept = delta_int <= 0 or state.rng.random() < np.exp(-delta_int)
    if accept:
        old_gauss = _local_gauss(pos, lo, hi, ctx.b)
        pos[idx] = proposal
        new_gauss = _local_gauss(pos, lo, hi, ctx.b)
        state.cached_log_density += (new_gauss - old_gauss) - delta_int
    state.record("endpoint", accept)
    return accept


def _draw_block(rng, N, block_len_max, forbidden_interior=None):
    """Log-uniform block length in [2, block_len_max], uniform start; blocks
    whose interior would contain a pinned node are redrawn."""
    lmax = max(2, min(block_len_max, N))
    for _ in range(200):
        u = rng.random()
        length = int(round(2.0 * (lmax / 2.0) ** u))
        length = max(2, min(length, N))
        i = int(rng.integers(0, N - length + 1))
        if forbidden_interior is None:
            return i, length
        if not any(i < f < i + length for f in forbidden_interior):
            return i, length
    raise DomainError("could not draw a block avoiding pinned nodes")


def initial_path(model: GibbsModel, rng, spread=0.5) -> PathSample:
    """Linear interpolation between pins plus a small random perturbation."""
    N = model.grid.N
    d = model.dim
    bc = model.boundary
    pos = np.zeros((N + 1, d))
    if bc.kind == "pinned":
        left = np.resize(bc.params["left"], d)
        right = np.resize(bc.params["right"], d)
        frac = np.linspace(0.0, 1.0, N + 1)[:, None]
        pos = left[None, :] * (1 - frac) + right[None, :] * frac
    elif bc.kind == "pinned_origin":
        pos += np.resize(bc.params["x0"], d)[None, :]
    pos = pos + spread * rng.standard_normal((N + 1, d))
    _apply_pins(pos, model)
    return PathSample(pos)


def _apply_pins(pos, model: GibbsModel):
    bc = model.boundary
    d = pos.shape[1]
    if bc.kind == "pinned":
        pos[0] = np.resize(bc.params["left"], d)
        pos[-1] = np.resize(bc.params["right"], d)
    elif bc.kind == "pinned_origin":
        pos[model.grid.origin_index] = np.resize(bc.params["x0"], d)
    elif bc.kind == "external_path":
        pos[0] = bc.params["y_left"][-1]
        pos[-1] = bc.params["y_right"][0]


@dataclass
class CollectorSpec:
    """What to record from each retained sweep."""

    observables: dict = field(default_factory=dict)  # name -> f(positions)
    histogram_edges: np.ndarray | None = None        # origin-node marginal
    cov_lags: np.ndarray | None = None               # node-step lags
    cov_F: object = None
    cov_G: object = None
    msd_lags: np.ndarray | None = None               # node-step offsets
    window_max_halfwidth: float | None = None        # sup |X| over [0, w]
    pair_energy: bool = False
    central_fraction: float = 0.5


def _central_nodes(grid, fraction):
    t = grid.nodes
    half = fraction * grid.T
    return np.where(np.abs(t) <= half + 1e-12)[0]


def run_chain(model: GibbsModel, params: SamplerParams,
              collect: CollectorSpec | None = None) -> EstimatorReport:
    """Run one or more chains and return the merged report.

    Deterministic given (model, params); per-chain seeds derive from the
    master seed via SeedSequence.spawn.
    """
    collect = collect or CollectorSpec()
    seeds = np.random.SeedSequence(params.seed).spawn(params.n_chains)
    reports = []
    for cid in range(params.n_chains):
        reports.append(_run_single_chain(model, params, collect, cid, seeds[cid]))
    report = reports[0]
    for r in reports[1:]:
        report = report.merged(r)
    return report


def _run_single_chain(model, params, collect, chain_id, seed_seq) -> EstimatorReport:
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    ctx = _EnergyContext(model)
    N = model.grid.N
    path = initial_path(model, rng)
    state = ChainState(path=path, cached_log_density=gibbs_log_density(path, model), rng=rng)

    bc = model.boundary.kind
    endpoint_ok = bc in ("free_stationary", "pinned_origin")
    p_end = params.move_mix.get("endpoint", 0.0) if endpoint_ok else 0.0
    forbidden = None
    if bc == "pinned_origin":
        forbidden = (model.grid.origin_index,)

    mean_len = max(2.0, 0.5 * (2 + min(params.block_len_max, N)))
    moves_per_sweep = max(1, int(round(N / mean_len))) + (2 if endpoint_ok else 0)

    # recording buffers
    obs_names = sorted(collect.observables)
    obs_buf = {name: [] for name in obs_names}
    hist = None
    edges = collect.histogram_edges
    origin = model.grid.origin_index
    cov_rows, fbar_buf, gbar_buf = [], [], []
    msd_rows, wmax_buf, pair_buf = [], [], []
    central = _central_nodes(model.grid, collect.central_fraction)
    n_kept = 0

    for sweep in range(params.n_sweeps):
        for _ in range(moves_per_sweep):
            if endpoint_ok and state.rng.random() < p_end:
                side = "left" if state.rng.random() < 0.5 else "right"
                lmax = N // 2 if bc == "pinned_origin" else min(params.block_len_max, N)
                length = int(state.rng.integers(1, max(2, lmax)))
                endpoint_move(state, model, ctx, side, length)
            else:
                i, length = _draw_block(state.rng, N, params.block_len_max, forbidden)
                bridge_block_move(state, model, ctx, i, length)
        if (sweep + 1) % REVALIDATE_EVERY == 0:
            state.revalidate(model)
        if sweep < params.burn_in or (sweep - params.burn_in) % params.thinning:
            continue
        n_kept += 1
        pos = state.path.positions
        for name in obs_names:
            obs_buf[name].append(collect.observables[name](pos))
        if edges is not None:
            if hist is None:
                hist = np.zeros(len(edges) - 1, dtype=np.int64)
            j = np.searchsorted(edges, pos[origin, 0], side="right") - 1
            if 0 <= j < len(hist):
                hist[j] += 1
        if collect.cov_lags is not None:
            row, fbar, gbar = _cov_row(pos, central, collect)
            cov_rows.append(row)
            fbar_buf.append(fbar)
            gbar_buf.append(gbar)
        if collect.msd_lags is not None:
            msd_rows.append(_msd_row(pos, origin, collect.msd_lags))
        if collect.window_max_halfwidth is not None:
            tmask = (model.grid.nodes >= 0) & (model.grid.nodes <= collect.window_max_halfwidth)
            wmax_buf.append(float(np.abs(pos[tmask]).max()))
        if collect.pair_energy:
            pair_buf.append(_raw_pair_energy(state.path, model))
    state.revalidate(model)

    report = EstimatorReport()
    for name in obs_names:
        report.scalar(name).append(chain_id, np.array(obs_buf[name]))
    if edges is not None:
        h = report.histogram("marginal", edges)
        h.counts += hist if hist is not None else 0
        h.n_total += n_kept
    if collect.cov_lags is not None and cov_rows:
        ls = report.lags("cov", collect.cov_lags)
        ls.append(chain_id, np.array(cov_rows))
        report.scalar("cov_F_mean").append(chain_id, np.array(fbar_buf))
        report.scalar("cov_G_mean").append(chain_id, np.array(gbar_buf))
    if collect.msd_lags is not None and msd_rows:
        rows3 = np.array(msd_rows)  # (n_kept, n_lags, d)
        ls = report.lags("msd", collect.msd_lags)
        ls.append(chain_id, rows3.sum(axis=2))
        if model.dim > 1:
            for a in range(model.dim):
                report.lags(f"msd_axis{a}", collect.msd_lags).append(
                    chain_id, rows3[:, :, a])
    if wmax_buf:
        report.scalar("window_max").append(chain_id, np.array(wmax_buf))
    if pair_buf:
        report.scalar("pair_energy").append(chain_id, np.array(pair_buf))
    report.meta = {
        "chain_ids": [chain_id],
        "n_sweeps": params.n_sweeps,
        "kept": n_kept,
        "dim": model.dim,
        "accept": dict(state.accept_counts),
        "propose": dict(state.propose_counts),
        "final_log_density": state.cached_log_density,
        "rng": "numpy PCG64 via SeedSequence.spawn",
    }
    return report


def _cov_row(pos, central, collect):
    F = collect.cov_F or (lambda v: v)
    G = collect.cov_G or (lambda v: v)
    x = pos[:, 0]
    fv = F(x)
    gv = G(x)
    row = []
    n_nodes = len(x)
    for lag in collect.cov_lags:
        s = central[central + lag < n_nodes]
        row.append(float((fv[s] * gv[s + lag]).mean()) if len(s) else np.nan)
    return row, float(fv[central].mean()), float(gv[central].mean())


def _msd_row(pos, origin, lags):
    """Per-axis squared displacement from the origin node, averaged over the
    two window sides; shape (n_lags, d)."""
    n, d = pos.shape
    row = np.full((len(lags), d), np.nan)
    for li, lag in enumerate(lags):
        vals = []
        if origin + lag < n:
            dx = pos[origin + lag] - pos[origin]
            vals.append(dx * dx)
        if origin - lag >= 0:
            dx = pos[origin - lag] - pos[origin]
            vals.append(dx * dx)
        if vals:
            row[li] = np.mean(vals, axis=0)
    return row


def _raw_pair_energy(path, model):
    from .model import increment_energy, pair_energy_internal

    if model.energy_form == "onsite_pair":
        return pair_energy_internal(path, model.kernel, model.grid)
    return increment_energy(path, model.kernel, model.grid)


# ---------------------------------------------------------------------------
# exact reference sampler


def _alias_tables(prob_rows):
    """Walker alias tables for a stack of categorical rows."""
    n_rows, n = prob_rows.shape
    q = np.zeros((n_rows, n))
    alias = np.zeros((n_rows, n), dtype=np.int64)
    for r in range(n_rows):
        p = prob_rows[r] * n
        small = [i for i in range(n) if p[i] < 1.0]
        large = [i for i in range(n) if p[i] >= 1.0]
        p = p.copy()
        while small and large:
            s = small.pop()
            l = large.pop()
            q[r, s] = p[s]
            alias[r, s] = l
            p[l] = p[l] - (1.0 - p[s])
            (small if p[l] < 1.0 else large).append(l)
        for i in large + small:
            q[r, i] = 1.0
            alias[r, i] = i
    return q, alias


def sample_pphi1_exact(sd: SpectralData, grid, n_paths: int, seed: int,
                       batch: int = 1 << 16) -> np.ndarray:
    """Draw paths of the pure reference process on the time grid.

    X_{t_0} ~ nu, then sequentially X_{t_{k+1}} ~ g_b(.|x_k) nu: the Markov
    factorisation made executable, with per-state alias tables for O(1)
    categorical draws.  Returns node indices into sd.grid.nodes, shape
    (n_paths, N+1).
    """
    if sd.grid.nodes.ndim != 1:
        raise UnsupportedDimensionError("exact sampler is d = 1 only")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    P = transition_matrix(sd, grid.b)
    colsum = P.sum(axis=0)
    ok = colsum > 0.5
    rows = np.zeros_like(P.T)
    rows[ok] = (P[:, ok] / colsum[ok]).T  # row y: distribution over next x
    rows[~ok, 0] = 1.0  # unreachable states; never visited
    q, alias = _alias_tables(rows)
    nu = sd.nu / sd.nu.sum()
    q0, a0 = _alias_tables(nu[None, :])
    n = len(nu)
    N = grid.N
    out = np.empty((n_paths, N + 1), dtype=np.int64)
    for start in range(0, n_paths, batch):
        stop = min(start + batch, n_paths)
        m = stop - start
        j = rng.integers(0, n, m)
        cur = np.where(rng.random(m) < q0[0, j], j, a0[0, j])
        out[start:stop, 0] = cur
        for k in range(1, N + 1):
            j = rng.integers(0, n, m)
            keep = rng.random(m) < q[cur, j]
            cur = np.where(keep, j, alias[cur, j])
            out[start:stop, k] = cur
    return out


def ensemble_bridge_chain(model: GibbsModel, n_replicas: int, n_sweeps: int,
                          burn_in: int, seed: int, block_len_max: int = 12,
                          anchor_time: float | None = None):
    """Vectorised bank of independent chains for zero-coupling models.

    All replicas share the move schedule (block positions and lengths) but
    draw independent proposals and acceptances, so each replica is a valid
    chain and replicas are mutually independent.  Returns (kept, window_max,
    final_positions): retained origin-node values with shape (kept_sweeps,
    n_replicas), sup |X| over the unit window per retained sweep, and the
    final position array.  With `anchor_time` set, `kept` instead has shape
    (kept_sweeps, 3, n_replicas), stacking (origin, X_{-anchor},
    X_{+anchor}) triples for window-conditional comparisons.

    Only available when the pair coupling vanishes: acceptance then involves
    the on-site term alone, which vectorises across replicas.
    """
    if model.kernel is not None and model.lam != 0.0:
        raise DomainError("ensemble sampler requires zero pair coupling")
    if model.boundary.kind == "external_path":
        raise DomainError("ensemble sampler does not support external boundaries")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    grid = model.grid
    N, b = grid.N, grid.b
    d = model.dim
    V = model.potential
    bc = model.boundary
    pos = 0.5 * rng.standard_normal((n_replicas, N + 1, d))
    if bc.kind == "pinned":
        left = np.resize(bc.params["left"], d)
        right = np.resize(bc.params["right"], d)
        frac = np.linspace(0, 1, N + 1)[None, :, None]
        pos += (1 - frac) * left[None, None, :] + frac * right[None, None, :]
        pos[:, 0] = left
        pos[:, -1] = right
    free_ends = bc.kind == "free_stationary"
    origin = grid.origin_index
    kept = []
    window_max = []
    t_nodes = grid.nodes
    win_mask = (t_nodes >= 0) & (t_nodes <= 1.0)
    if anchor_time is not None:
        i_left = int(np.argmin(np.abs(t_nodes + anchor_time)))
        i_right = int(np.argmin(np.abs(t_nodes - anchor_time)))

    def vals(x):
        if V is None:
            return np.zeros(x.shape[:-1])
        return V.values(x[..., 0]) if d == 1 else V.values(x).sum(axis=-1)

    mean_len = max(2.0, 0.5 * (2 + min(block_len_max, N)))
    moves_per_sweep = max(1, int(round(N / mean_len))) + (2 if free_ends else 0)
    for sweep in range(n_sweeps):
        for _ in range(moves_per_sweep):
            if free_ends and rng.random() < 0.25:
                side = "left" if rng.random() < 0.5 else "right"
                length = int(rng.integers(1, max(2, min(block_len_max, N))))
                steps = np.sqrt(b) * rng.standard_normal((n_replicas, length, d))
                if side == "right":
                    anchor = pos[:, N - length]
                    prop = anchor[:, None, :] + np.cumsum(steps, axis=1)
                    idx = np.arange(N - length + 1, N + 1)
                    w = np.where(idx == N, 0.5 * b, b)
                else:
                    anchor = pos[:, length]
                    prop = anchor[:, None, :] + np.cumsum(steps, axis=1)
                    idx = np.arange(length - 1, -1, -1)
                    w = np.where(idx == 0, 0.5 * b, b)
                dE = ((vals(prop) - vals(pos[:, idx])) * w[None, :]).sum(axis=1)
                acc = rng.random(n_replicas) < np.exp(-np.maximum(dE, -700))
                pos[np.ix_(acc, idx)] = prop[acc]
            else:
                lmax = max(2, min(block_len_max, N))
                u = rng.random()
                length = max(2, min(int(round(2.0 * (lmax / 2.0) ** u)), N))
                i = int(rng.integers(0, N - length + 1))
                idx = np.arange(i + 1, i + length)
                prop = np.empty((n_replicas, length - 1, d))
                prev = pos[:, i]
                x_end = pos[:, i + length]
                for k in range(length - 1):
                    remaining = length - 1 - k
                    mean = prev + (x_end - prev) / (remaining + 1)
                    var = b * remaining / (remaining + 1)
                    prev = mean + np.sqrt(var) * rng.standard_normal((n_replicas, d))
                    prop[:, k] = prev
                dE = b * (vals(prop) - vals(pos[:, idx])).sum(axis=1)
                acc = rng.random(n_replicas) < np.exp(-np.maximum(dE, -700))
                pos[np.ix_(acc, idx)] = prop[acc]
        if sweep >= burn_in:
            if anchor_time is not None:
                kept.append(np.stack([pos[:, origin, 0], pos[:, i_left, 0],
                                      pos[:, i_right, 0]]))
            else:
                kept.append(pos[:, origin, 0].copy())
            window_max.append(np.abs(pos[:, win_mask, 0]).max(axis=1))
    return np.array(kept), np.array(window_max), pos


# ---------------------------------------------------------------------------
# enumerable discrete surrogate for exactness tests


class DiscreteSurrogateChain:
    """Metropolis chain on a finite position set, exactly enumerable.

    Two move types mirror the production sampler: a single-node move whose
    proposal is the reference Gaussian conditional given the neighbouring
    nodes (restricted to the position set and normalised), and a whole-path
    independence move proposing from the discretised reference measure.
    Acceptance uses the full model density, so the stationary law is the
    discretised target on the product state space.  The transition matrix
    and the exact target are available in closed form for detailed-balance
    and total-variation checks.
    """

    def __init__(self, model: GibbsModel, positions, p_independence=0.25):
        self.model = model
        self.xs = np.asarray(positions, dtype=float)
        self.npos = len(self.xs)
        self.n_nodes = model.grid.N + 1
        self.b = model.grid.b
        self.p_independence = p_independence
        self.states = list(itertools.product(range(self.npos), repeat=self.n_nodes))
        self.state_index = {s: i for i, s in enumerate(self.states)}
        self._log_pi = np.array([self._log_target(s) for s in self.states])
        m = self._log_pi.max()
        pi = np.exp(self._log_pi - m)
        self.pi = pi / pi.sum()
        # independence proposal from the zero-coupling model, so acceptance
        # depends on the pair term alone (as in the production moves)
        m0 = GibbsModel(model.grid, model.dim, model.potential, None, 0.0,
                        model.boundary, "onsite_pair")
        logq = np.array([
            gibbs_log_density(PathSample(self.xs[np.array(s)]), m0)
            for s in self.states
        ])
        q = np.exp(logq - logq.max())
        self.q_ref = q / q.sum()

    def _log_target(self, state):
        path = PathSample(self.xs[np.array(state)])
        return gibbs_log_density(path, self.model)

    def _proposal_cdf(self, state, k):
        """Conditional reference proposal for node k given its neighbours."""
        logq = np.zeros(self.npos)
        x = self.xs
        if k > 0:
            left = self.xs[state[k - 1]]
            logq -= (x - left) ** 2 / (2 * self.b)
        if k < self.n_nodes - 1:
            right = self.xs[state[k + 1]]
            logq -= (right - x) ** 2 / (2 * self.b)
        q = np.exp(logq - logq.max())
        return q / q.sum()

    def transition_matrix(self):
        """Exact single-move kernel: the move-type mixture of the
        node-conditional Metropolis update and the whole-path independence
        update, each with its proposal correction."""
        S = len(self.states)
        P = np.zeros((S, S))
        for si, state in enumerate(self.states):
            for k in range(self.n_nodes):
                q = self._proposal_cdf(state, k)
                for v in range(self.npos):
                    if v == state[k]:
                        continue
                    new = list(state)
                    new[k] = v
                    sj = self.state_index[tuple(new)]
                    ratio = np.exp(self._log_pi[sj] - self._log_pi[si]) * q[state[k]] / q[v]
                    acc = min(1.0, ratio)
                    P[si, sj] += (1.0 - self.p_independence) * q[v] * acc / self.n_nodes
        # independence move: propose any state from the reference weights
        lw = self._log_pi - np.log(self.q_ref)
        for si in range(S):
            for sj in range(S):
                if sj == si:
                    continue
                acc = min(1.0, np.exp(lw[sj] - lw[si]))
                P[si, sj] += self.p_independence * self.q_ref[sj] * acc
        for si in range(S):
            P[si, si] = 1.0 - P[si].sum()  # off-diagonal mass only so far
        return P

    def run_occupation(self, n_steps: int, seed: int, block: int = 1 << 16):
        """Empirical occupation frequencies after n_steps single moves."""
        P = self.transition_matrix()
        cum = np.cumsum(P, axis=1)
        cum /= cum[:, -1][:, None]
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        counts = np.zeros(len(self.states), dtype=np.int64)
        state = int(np.argmax(self.pi))
        done = 0
        while done < n_steps:
            m = min(block, n_steps - done)
            us = rng.random(m)
            for u in us:
                state = int(np.searchsorted(cum[state], u))
                counts[state] += 1
            done += m
        return counts / n_steps

    def total_variation(self, freqs):
        return 0.5 * float(np.abs(freqs - self.pi).sum())


# ---------------------------------------------------------------------------
# report-level estimators


def estimate_marginal_ratio(report: EstimatorReport, sd: SpectralData,
                            min_expected=20.0):
    """Empirical origin-node density over the stationary density per bin.

    Returns dict with bin centers, ratio, and a Wilson 95% band; bins whose
    expected count under nu falls below `min_expected` are excluded and
    reported.
    """
    hist = report.histograms["marginal"]
    edges = hist.edges
    nodes = sd.grid.nodes
    dens = sd.psi0**2
    steps = 0.5 * (dens[1:] + dens[:-1]) * sd.grid.h
    cdf = np.concatenate([[0.0], np.cumsum(steps)])
    p_exact = np.diff(np.interp(edges, nodes, cdf))
    n = hist.n_total
    p_hat = hist.probabilities()
    expected = n * p_exact
    ok = expected >= min_expected
    z = 1.96
    denom = 1 + z**2 / n
    center = (p_hat + z**2 / (2 * n)) / denom
    half = z * np.sqrt(p_hat * (1 - p_hat) / n + z**2 / (4 * n**2)) / denom
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(ok, p_hat / p_exact, np.nan)
        lo = np.where(ok, (center - half) / p_exact, np.nan)
        hi = np.where(ok, (center + half) / p_exact, np.nan)
    mids = 0.5 * (edges[:-1] + edges[1:])
    return {
        "bin_centers": mids, "ratio": ratio, "ci_lo": lo, "ci_hi": hi,
        "included": ok, "excluded_bins": int((~ok).sum()),
        "p_hat": p_hat, "p_exact": p_exact,
    }


def estimate_covariance_decay(report: EstimatorReport, grid) -> dict:
    """Lagged covariance over the central window with a power-decay fit.

    cov(t) = <F_s G_{s+t}> - <F><G> with the means taken over the same
    window; the fit returns the decay exponent with uncertainty, refusing
    when the effective sample size is too low.
    """
    from .estimators import fit_power_decay

    ls = report.lag_series["cov"]
    fbar = report.scalars["cov_F_mean"]
    gbar = report.scalars["cov_G_mean"]
    if fbar.ess() < 100:
        raise EstimatorError("covariance fit refused: effective sample size too low")
    prod = ls.mean()
    se = ls.stderr()
    cov = prod - fbar.mean() * gbar.mean()
    t_lags = np.asarray(ls.lags, dtype=float) * grid.b
    out = {"lags": t_lags, "cov": cov, "stderr": se}
    try:
        beta, beta_err, c = fit_power_decay(t_lags, cov, se)
        out.update({"beta": beta, "beta_err": beta_err, "c": c})
    except EstimatorError as exc:
        out.update({"beta": None, "fit_refused": str(exc)})
    return out


def estimate_diffusion(report: EstimatorReport, grid, window=(0.125, 0.5)) -> dict:
    """Effective diffusion from the slope of E|X_t|^2 over t in the central
    fit window [T/8, T/2] by default, normalised per axis (slope / d so that
    free Brownian motion gives 1 in any dimension).  Returns D-hat with
    stderr and the reduced chi-square as a fit-quality flag, plus per-axis
    values and an isotropy spread when axis-resolved rows are present."""
    from .estimators import fit_msd_slope

    dim = report.meta.get("dim", 1)
    ls = report.lag_series["msd"]
    msd = ls.mean()
    se = ls.stderr()
    t = np.asarray(ls.lags, dtype=float) * grid.b
    t_lo, t_hi = window[0] * grid.T, window[1] * grid.T
    slope, slope_err, quality = fit_msd_slope(t, msd, se, t_lo, t_hi)
    out = {
        "t": t, "msd": msd, "stderr": se,
        "D": slope / dim, "D_err": slope_err / dim, "fit_quality": quality,
        "window": (t_lo, t_hi),
    }
    axes = {}
    for name, series in report.lag_series.items():
        if name.startswith("msd_axis"):
            m_a, s_a = series.mean(), series.stderr()
            sl, sle, _ = fit_msd_slope(t, m_a, s_a, t_lo, t_hi)
            axes[name] = (sl, sle)
    if axes:
        ds = np.array([v[0] for v in axes.values()])
        out["per_axis"] = {k: v for k, v in sorted(axes.items())}
        out["isotropy_spread"] = float(ds.max() - ds.min())
    return out


def estimate_log_partition(model: GibbsModel, params: SamplerParams, lam_ladder,
                           collect_extra: CollectorSpec | None = None,
                           refine_threshold=5.0):
    """Thermodynamic integration of d(log Z)/d(lambda) = -<pair energy>.

    Runs one chain per ladder rung (seeds derived per rung), integrates by
    the trapezoid rule, and demands ladder refinement when neighbouring mean
    energies differ by more than `refine_threshold` joint standard errors
    (overlap failure).
    """
    from .errors import EstimatorError as _EE
    from .estimators import trapezoid_log_partition

    lam_ladder = np.asarray(lam_ladder, dtype=float)
    if lam_ladder[0] != 0.0 or np.any(np.diff(lam_ladder) <= 0):
        raise DomainError("coupling ladder must start at 0 and increase")
    means, errs = [], []
    for i, lam in enumerate(lam_ladder):
        m_i = model.with_coupling(lam)
        p_i = SamplerParams(
            n_sweeps=params.n_sweeps, burn_in=params.burn_in,
            thinning=params.thinning, block_len_max=params.block_len_max,
            move_mix=dict(params.move_mix), seed=params.seed + 7919 * i,
            n_chains=params.n_chains,
        )
        spec = CollectorSpec(pair_energy=True)
        rep = run_chain(m_i, p_i, spec)
        s = rep.scalars["pair_energy"]
        means.append(s.mean())
        errs.append(s.stderr())
    means = np.array(means)
    errs = np.array(errs)
    for i in range(1, len(lam_ladder)):
        # integrand variance explosion, or a jump the ladder cannot resolve
        scale = max(1e-12, abs(means[i]))
        if errs[i] > 0.25 * scale or (
            abs(means[i] - means[i - 1])
            > refine_threshold * max(scale, abs(means[i - 1]))
        ):
            raise _EE(
                f"overlap failure between rungs {i-1} and {i}: refine the ladder"
            )
    logz, logz_err = trapezoid_log_partition(lam_ladder, means, errs)
    return {
        "lambda": lam_ladder, "mean_pair_energy": means, "stderr": errs,
        "logz": logz, "logz_err": logz_err,
    }


def tail_exponent_check(report: EstimatorReport, s_exponent: float,
                        quantiles=(0.5, 0.995, 24)) -> dict:
    """Fit of the sup-norm tail over a unit window against a^(s+1).

    Fits both the free exponent p-hat and the decay rate at the declared
    exponent.  Raises when the tail carries too little mass.
    """
    from .estimators import fit_tail_exponent

    series = report.scalars["window_max"].pooled()
    if len(series) < 1000:
        raise EstimatorError("tail fit needs at least 1000 window maxima")
    q_lo, q_hi, n_lev = quantiles
    levels = np.quantile(series, np.linspace(q_lo, q_hi, int(n_lev)))
    levels = np.unique(levels)
    survival = np.array([(series >= a).mean() for a in levels])
    p_hat, theta = fit_tail_exponent(levels, survival, s_exponent)
    return {"levels": levels, "survival": survival,
            "exponent": p_hat, "theta": theta, "declared": s_exponent + 1.0}


def merged_reports_equal(a: EstimatorReport, b: EstimatorReport, tol=1e-12) -> bool:
    """Summaries of two reports agree within tol (merge identity checks)."""
    sa, sb = a.summary(), b.summary()
    if sa.keys() != sb.keys():
        return False
    for name in sa:
        for key in ("mean", "var", "n"):
            va, vb = sa[name][key], sb[name][key]
            if abs(va - vb) > tol * max(1.0, abs(va), abs(vb)):
                return False
    return True
