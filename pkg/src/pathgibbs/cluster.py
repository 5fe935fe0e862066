"""Exact cluster-expansion combinatorics on a finite surrogate.

The surrogate replaces interval-pair integrals by the node-product rule
J_ij = b^2 W(x_i, x_j, t_i - t_j) at interval left endpoints, and the
reference bridge by its node skeleton: iid stationary weights nu at the
nodes times transition factors g_b between consecutive nodes.  On this
surrogate the partition-function identity

    Z = 1 + sum over sets of node-disjoint clusters of prod K_Gamma

is an exact algebraic statement and is verified against direct enumeration.

Objects follow the expansion's combinatorial dictionary: a *contour* is a
connected set of interval pairs (connected through shared intervals); a
*chain* is a run of consecutive intervals carrying (g_b - 1) factors; a
*cluster* is a connected assembly of interval-disjoint contours and
node-disjoint chains in which chains have no loose ends.  The weight of a
cluster is the expectation, under the product measure nu^{N+1}, of

    prod_{(i,j) in contours} (e^{-lambda W_ij} - 1) *
    prod_{k in chains} (g_b(x_{k+1}|x_k) - 1),

which vanishes whenever a chain end is not covered by a contour node.
"""

from __future__ import annotations

import itertools
import string
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceededError, DomainError
from .model import TimeGrid
from .spectral import SpectralData

DIRECT_BUDGET = 11_000_000  # admits the 6^9 top of the stated budget
_LETTERS = string.ascii_lowercase


# ---------------------------------------------------------------------------
# surrogate


class Surrogate:
    """Finite position set + time grid with all expansion inputs tabulated.

    `wpair[(i, j)]` holds the interval-pair energy W_{tau_i, tau_j} as an
    (n_pos, n_pos) matrix over the positions at nodes i and j.  It includes
    the b^2 factor and the boundary-aware splitting of the diagonal terms
    J_kk between adjacent pairs, so that sum_{i<j} W_{tau_i,tau_j} equals
    the plain double sum b^2 sum_{i,j} W exactly.
    """

    def __init__(self, grid: TimeGrid, positions, nu, g_matrix, kernel):
        self.grid = grid
        self.positions = np.asarray(positions, dtype=float)
        self.nu = np.asarray(nu, dtype=float)
        self.g = np.asarray(g_matrix, dtype=float)
        self.kernel = kernel
        if abs(self.nu.sum() - 1.0) > 1e-12:
            raise DomainError("surrogate nu weights must sum to 1")
        self.n_pos = len(self.positions)
        self.wpair = self._build_wpair()

    @property
    def n_intervals(self):
        return self.grid.N

    def factor_tensors(self, lam_arr):
        """(e^{-lambda W_ij} - 1) per interval pair, cached per coupling ladder."""
        key = lam_arr.tobytes()
        cache = getattr(self, "_factor_cache", None)
        if cache is None or cache[0] != key:
            tensors = {
                ij: np.exp(-lam_arr[:, None, None] * w) - 1.0
                for ij, w in self.wpair.items()
            }
            cache = (key, tensors)
            self._factor_cache = cache
        return cache[1]

    def _plain_w(self, lag_steps):
        x = self.positions
        return self.kernel.pair_values(x[:, None], x[None, :], lag_steps * self.grid.b)

    def _build_wpair(self):
        N = self.grid.N
        b2 = self.grid.b ** 2
        x = self.positions
        diag0 = self.kernel.pair_values(x, x, 0.0)  # W(x_a, x_a, 0) per position
        out = {}
        for i in range(N):
            for j in range(i + 1, N):
                w = 2.0 * b2 * self._plain_w(j - i)
                if j - i == 1:
                    ci = 1.0 if i == 0 else 0.5
                    cj = 1.0 if j == N - 1 else 0.5
                    w = w + ci * b2 * diag0[:, None] + cj * b2 * diag0[None, :]
                out[(i, j)] = w
        return out

    def plain_double_sum(self, assign):
        """b^2 sum_{i,j} W(x_i, x_j, t_i - t_j) for a node assignment."""
        N = self.grid.N
        b2 = self.grid.b ** 2
        total = np.zeros(assign.shape[1:] if assign.ndim > 1 else ())
        for i in range(N):
            for j in range(N):
                total = total + b2 * self._plain_w(j - i)[assign[i], assign[j]]
        return total

    def pair_sum(self, assign):
        """sum_{i<j} W_{tau_i, tau_j} from the case-table convention."""
        total = 0.0
        for (i, j), w in self.wpair.items():
            total = total + w[assign[i], assign[j]]
        return total

    @classmethod
    def from_spectral(cls, sd: SpectralData, grid: TimeGrid, kernel, n_pos,
                      q_lo=0.01, q_hi=0.99):
        """Coarsen the spectral reference to n_pos representative nodes.

        Representatives are grid nodes closest to equally spaced quantile
        targets of nu; weights aggregate nu over nearest representatives and
        the transition matrix is symmetrically rescaled until its rows
        integrate to one against nu (machine precision).
        """
        nodes = sd.grid.nodes
        nu_full = sd.nu
        cdf = np.cumsum(nu_full)
        targets = np.linspace(q_lo, q_hi, n_pos)
        rep_idx = sorted(set(int(np.searchsorted(cdf, t)) for t in targets))
        while len(rep_idx) < n_pos:  # pad around the median if quantiles collide
            cand = int(np.argmax(nu_full))
            for k in range(1, len(nodes)):
                for c in (cand + k, cand - k):
                    if 0 <= c < len(nodes) and c not in rep_idx:
                        rep_idx.append(c)
                        break
                if len(rep_idx) >= n_pos:
                    break
            rep_idx = sorted(rep_idx)
        rep_idx = np.array(rep_idx[:n_pos])
        reps = nodes[rep_idx]
        # Voronoi aggregation of nu onto the representatives
        owner = np.argmin(np.abs(nodes[:, None] - reps[None, :]), axis=1)
        nu = np.array([nu_full[owner == a].sum() for a in range(n_pos)])
        nu = nu / nu.sum()
        # spectral transition density between representatives, then symmetric
        # rescaling to make it exactly doubly nu-stochastic
        decay = np.exp(-sd.lambdas * grid.b)
        vec = sd.vectors[:, rep_idx]
        num = (vec.T * decay) @ vec
        psi = sd.psi0[rep_idx]
        g = num / np.outer(psi, psi)
        g = np.maximum(g, 1e-300)
        for _ in range(200):
            r = g @ nu
            if np.max(np.abs(r - 1.0)) < 1e-15:
                break
            scale = 1.0 / np.sqrt(r)
            g = g * np.outer(scale, scale)
        return cls(grid, reps, nu, g, kernel)


# ---------------------------------------------------------------------------
# combinatorial objects


@dataclass(frozen=True)
class Contour:
    """Connected set of interval pairs, identified by its pair set."""

    pairs: frozenset

    @property
    def intervals(self):
        out = set()
        for i, j in self.pairs:
            out.add(i)
            out.add(j)
        return frozenset(out)

    @property
    def time_points(self):
        out = set()
        for k in self.intervals:
            out.add(k)
            out.add(k + 1)
        return frozenset(out)


@dataclass(frozen=True)
class Chain:
    """Run of consecutive intervals start..end (inclusive)."""

    start: int
    end: int

    @property
    def intervals(self):
        return frozenset(range(self.start, self.end + 1))

    @property
    def time_points(self):
        return frozenset(range(self.start, self.end + 2))


@dataclass(frozen=True)
class ClusterDiagram:
    contours: tuple
    chains: tuple
    time_points: frozenset = field(default=None, compare=False)

    def __post_init__(self):
        tp = set()
        for c in self.contours:
            tp |= c.time_points
        for ch in self.chains:
            tp |= ch.time_points
        object.__setattr__(self, "time_points", frozenset(tp))

    @property
    def intervals(self):
        out = set()
        for c in self.contours:
            out |= c.intervals
        for ch in self.chains:
            out |= ch.intervals
        return frozenset(out)

    @property
    def size(self):
        return len(self.intervals)


def _connected(pair_sets):
    """Connectivity of a collection of time-point sets via shared points."""
    sets = [set(s) for s in pair_sets if s]
    if len(sets) <= 1:
        return True
    merged = sets[0]
    rest = sets[1:]
    changed = True
    while changed and rest:
        changed = False
        for s in list(rest):
            if merged & s:
                merged |= s
                rest.remove(s)
                changed = True
    return not rest


def is_valid_cluster(diagram: ClusterDiagram) -> bool:
    """Contours interval-disjoint, chains node-disjoint with covered ends,
    and the whole collection connected through shared time-points."""
    if not diagram.contours:
        return False
    seen = set()
    for c in diagram.contours:
        iv = c.intervals
        if seen & iv:
            return False
        seen |= iv
    tps = set()
    for ch in diagram.chains:
        tp = ch.time_points
        if tps & tp:
            return False
        tps |= tp
    contour_tp = set()
    for c in diagram.contours:
        contour_tp |= c.time_points
    for ch in diagram.chains:
        if ch.start not in contour_tp or ch.end + 1 not in contour_tp:
            return False
    return _connected([c.time_points for c in diagram.contours]
                      + [ch.time_points for ch in diagram.chains])


# contour structures on u abstract intervals, cached per u
_STRUCTURE_CACHE = {}


def _contour_structures(u):
    """All connected pair-sets spanning u labelled intervals."""
    if u in _STRUCTURE_CACHE:
        return _STRUCTURE_CACHE[u]
    if u < 2:
        _STRUCTURE_CACHE[u] = []
        return []
    if u > 6:
        raise BudgetExceededError(f"contour enumeration for supports of size {u} exceeds the budget")
    pairs = list(itertools.combinations(range(u), 2))
    out = []
    for bits in range(1, 1 << len(pairs)):
        chosen = [pairs[k] for k in range(len(pairs)) if bits >> k & 1]
        covered = set()
        for i, j in chosen:
            covered.add(i)
            covered.add(j)
        if len(covered) != u:
            continue
        if _connected([set(p) for p in chosen]):
            out.append(frozenset(chosen))
    _STRUCTURE_CACHE[u] = out
    return out


def enumerate_contours(N, max_intervals):
    """Every contour on intervals 0..N-1 with support size <= max_intervals."""
    out = []
    for u in range(2, min(max_intervals, N) + 1):
        structures = _contour_structures(u)
        for support in itertools.combinations(range(N), u):
            for struct in structures:
                out.append(Contour(frozenset((support[i], support[j]) for i, j in struct)))
    return out


def enumerate_clusters(N, max_size):
    """Yield every valid cluster with |Gamma-bar| <= max_size exactly once.

    Contour sets are chosen with ascending minimal interval; chain sets are
    node-disjoint runs with both ends covered by contour time-points; the
    connectivity filter runs last.
    """
    if N > 8:
        raise BudgetExceededError("cluster enumeration limited to N <= 8 intervals")
    if max_size <= 1:
        return
    contours = enumerate_contours(N, max_size)
    contours.sort(key=lambda c: (min(c.intervals), sorted(c.pairs)))

    def contour_sets(start, used, budget):
        yield ()
        for idx in range(start, len(contours)):
            c = contours[idx]
            iv = c.intervals
            if len(iv) > budget or (used & iv):
                continue
            for rest in contour_sets(idx + 1, used | iv, budget - len(iv)):
                yield (c,) + rest

    for cset in contour_sets(0, frozenset(), max_size):
        if not cset:
            continue
        contour_tp = set()
        contour_iv = set()
        for c in cset:
            contour_tp |= c.time_points
            contour_iv |= c.intervals
        # candidate runs with ends in the contour time-point set
        runs = [Chain(a, e) for a in range(N) for e in range(a, N)
                if a in contour_tp and e + 1 in contour_tp]

        def chain_sets(idx, last_end, extra):
            yield ()
            for k in range(idx, len(runs)):
                ch = runs[k]
                if ch.start <= last_end + 1:
                    continue
                add = len(ch.intervals - contour_iv)
                if add > extra:
                    continue
                for rest in chain_sets(k + 1, ch.end, extra - add):
                    yield (ch,) + rest

        runs.sort(key=lambda ch: (ch.start, ch.end))
        budget_left = max_size - len(contour_iv)
        for chset in chain_sets(0, -2, budget_left):
            diagram = ClusterDiagram(cset, chset)
            if diagram.size > max_size:
                continue
            if _connected([c.time_points for c in cset]
                          + [ch.time_points for ch in chset]):
                yield diagram


def brute_force_clusters(N, max_size):
    """Independent reference enumeration by filtering all pair/interval
    subsets; only usable for N <= 5."""
    if N > 5:
        raise BudgetExceededError("brute-force filter limited to N <= 5")
    pairs = list(itertools.combinations(range(N), 2))
    found = set()
    for rbits in range(1 << len(pairs)):
        chosen = [pairs[k] for k in range(len(pairs)) if rbits >> k & 1]
        # decompose into maximal connected components
        comps = []
        for p in chosen:
            joined = [c for c in comps if any(set(p) & set(q) for q in c)]
            merged = {p}
            for c in joined:
                merged |= c
                comps.remove(c)
            comps.append(merged)
        contour_list = [Contour(frozenset(c)) for c in comps]
        for sbits in range(1 << N):
            intervals = [k for k in range(N) if sbits >> k & 1]
            chains = []
            run = []
            for k in intervals:
                if run and k == run[-1] + 1:
                    run.append(k)
                else:
                    if run:
                        chains.append(Chain(run[0], run[-1]))
                    run = [k]
            if run:
                chains.append(Chain(run[0], run[-1]))
            diagram = ClusterDiagram(tuple(contour_list), tuple(chains))
            if not contour_list:
                continue
            if max_size is not None and diagram.size > max_size:
                continue
            if is_valid_cluster(diagram):
                key = (frozenset(c.pairs for c in contour_list),
                       frozenset((c.start, c.end) for c in chains))
                found.add(key)
    return found


# ---------------------------------------------------------------------------
# weights and partition functions


def _as_lambda_array(lam):
    arr = np.atleast_1d(np.asarray(lam, dtype=float))
    return arr, np.isscalar(lam) or np.asarray(lam).ndim == 0


_PATH_CACHE = {}


def _einsum(script, operands):
    key = (script, tuple(op.shape for op in operands))
    path = _PATH_CACHE.get(key)
    if path is None:
        path = np.einsum_path(script, *operands, optimize="greedy")[0]
        _PATH_CACHE[key] = path
    return np.einsum(script, *operands, optimize=path)


def cluster_weight(surrogate: Surrogate, diagram: ClusterDiagram, lam):
    """K_Gamma: expectation of the cluster factors under the product measure.

    Contracts only over the diagram's time-points (all other nodes integrate
    to one).  Accepts a scalar or a ladder of couplings; returns matching
    shape.
    """
    lam_arr, scalar = _as_lambda_array(lam)
    factors = surrogate.factor_tensors(lam_arr)
    nodes = sorted(diagram.time_points)
    letter = {n: _LETTERS[k] for k, n in enumerate(nodes)}
    operands = []
    script = []
    for c in diagram.contours:
        for (i, j) in sorted(c.pairs):
            operands.append(factors[(i, j)])
            script.append("L" + letter[i] + letter[j])
    gm1 = surrogate.g - 1.0
    for ch in diagram.chains:
        for k in range(ch.start, ch.end + 1):
            operands.append(gm1)
            script.append(letter[k] + letter[k + 1])
    for n in nodes:
        operands.append(surrogate.nu)
        script.append(letter[n])
    out = _einsum(",".join(script) + "->L", operands)
    return float(out[0]) if scalar else out


def partition_function_direct(surrogate: Surrogate, lam, chunk=1 << 18):
    """Exact Z by summing over every position assignment.

    Z = sum_assignments [prod nu prod g_b] exp(-lambda sum_{i<j} W_{tau_i tau_j});
    normalised so Z(0) = 1 by double stochasticity of the transition matrix.
    """
    lam_arr, scalar = _as_lambda_array(lam)
    N = surrogate.grid.N
    npos = surrogate.n_pos
    total_states = npos ** (N + 1)
    if total_states > DIRECT_BUDGET:
        raise BudgetExceededError(
            f"{npos}^{N + 1} assignments exceed the direct-enumeration budget"
        )
    shape = (npos,) * (N + 1)
    z = np.zeros(len(lam_arr))
    log_nu = np.log(surrogate.nu)
    log_g = np.log(surrogate.g)
    for start in range(0, total_states, chunk):
        idx = np.arange(start, min(start + chunk, total_states))
        assign = np.stack(np.unravel_index(idx, shape))  # (N+1, n_states)
        log_ref = log_nu[assign].sum(axis=0)
        for k in range(N):
            log_ref += log_g[assign[k + 1], assign[k]]
        inter = np.zeros(len(idx))
        for (i, j), w in surrogate.wpair.items():
            inter += w[assign[i], assign[j]]
        z += np.exp(log_ref[None, :] - lam_arr[:, None] * inter[None, :]).sum(axis=1)
    return float(z[0]) if scalar else z


def partition_function_cluster(surrogate: Surrogate, lam, order=None, method="auto"):
    """Cluster-representation value of Z, truncated at |Gamma-bar| <= order.

    method="enumerate" streams every cluster, aggregates sums of K_Gamma by
    time-point support, and assembles sets of disjoint clusters by a subset
    DP; it also reports per-order partial sums.  method="folded" evaluates
    the full-order sum with the chain factors folded exactly into the
    expectation (the mean-zero mechanism makes loose-end terms vanish
    identically), keeping the contour decomposition explicit; it is used for
    the larger surrogates where streaming every diagram is too slow.
    Returns (z, partial_sums) where partial_sums[n] is the truncated value
    of Z (including the leading 1) with cluster sets capped at total size n
    (None for method="folded").
    """
    N = surrogate.grid.N
    full = order is None or order >= N
    order_eff = N if full else order
    if method == "auto":
        method = "enumerate" if (N <= 5 or not full) else "folded"
    lam_arr, scalar = _as_lambda_array(lam)

    if method == "folded":
        if not full:
            raise DomainError("folded evaluation is full-order only")
        z = _folded_full_order(surrogate, lam_arr)
        return (float(z[0]) if scalar else z), None

    n_tp = N + 1
    by_support = {}
    by_order = {}
    for diagram in enumerate_clusters(N, order_eff):
        w = cluster_weight(surrogate, diagram, lam_arr)
        mask = 0
        for t in diagram.time_points:
            mask |= 1 << t
        key = (mask, diagram.size)
        if key not in by_support:
            by_support[key] = np.zeros(len(lam_arr))
        by_support[key] += w
        by_order.setdefault(diagram.size, np.zeros(len(lam_arr)))
        by_order[diagram.size] += w

    partials = {}
    for n in sorted(by_order):
        partials[n] = _assemble(by_support, n_tp, len(lam_arr), max_order=n)
    z = _assemble(by_support, n_tp, len(lam_arr), max_order=order_eff)
    if scalar:
        return float(z[0]), {n: float(v[0]) for n, v in partials.items()}
    return z, partials


def _assemble(by_support, n_tp, n_lam, max_order):
    """1 + sum over sets of time-point-disjoint clusters of prod K, where the
    total interval count of the set is capped at max_order."""
    # F[mask][r] = sum over cluster sets inside mask with total size r
    size_cap = max_order + 1
    F = {0: _unit(n_lam, size_cap)}
    masks = sorted(by_support)

    def f(mask):
        if mask in F:
            return F[mask]
        low = mask & -mask
        out = f(mask ^ low).copy()
        for (m, size), w in by_support.items():
            if size >= size_cap or not (m & low) or (m & ~mask):
                continue
            rest = f(mask ^ m)
            out[size:] += w[None, :] * rest[: size_cap - size]
        F[mask] = out
        return out

    full_mask = (1 << n_tp) - 1
    table = f(full_mask)
    return table.sum(axis=0)


def _unit(n_lam, size_cap):
    out = np.zeros((size_cap, n_lam))
    out[0] = 1.0
    return out


def _folded_full_order(surrogate: Surrogate, lam_arr, chunk=1 << 14):
    """Full-order cluster sum with chains folded into the node measure.

    The sum over sets of interval-disjoint contours (the unique contour
    decomposition of every pair subset) is assembled pointwise per position
    assignment: C[V] is the connected-spanning pair-sum on interval support
    V via the first-element Moebius recursion, and D[M] collects families of
    disjoint supports.  Chains are folded exactly: the mean-zero mechanism
    makes every loose-end term vanish identically, leaving the reference
    transition product g_b between consecutive nodes.  If the contour
    decomposition were mis-bracketed, the result would not match the direct
    enumeration.
    """
    N = surrogate.grid.N
    npos = surrogate.n_pos
    n_lam = len(lam_arr)
    total_states = npos ** (N + 1)
    if total_states > DIRECT_BUDGET:
        raise BudgetExceededError("folded evaluation exceeds the assignment budget")
    factors = surrogate.factor_tensors(lam_arr)
    shape = (npos,) * (N + 1)
    full = (1 << N) - 1
    masks = list(range(1 << N))
    members = {m: [k for k in range(N) if m >> k & 1] for m in masks}
    z = np.zeros(n_lam)
    log_nu = np.log(surrogate.nu)
    log_g = np.log(surrogate.g)
    for start in range(0, total_states, chunk):
        idx = np.arange(start, min(start + chunk, total_states))
        assign = np.stack(np.unravel_index(idx, shape))
        ns = len(idx)
        ref = log_nu[assign].sum(axis=0)
        for k in range(N):
            ref += log_g[assign[k + 1], assign[k]]
        ref = np.exp(ref)
        f = {}
        for (i, j), tens in factors.items():
            f[(i, j)] = tens[:, assign[i], assign[j]]  # (L, ns)
        # A[V] = prod over pairs within V of (1 + f_ij), incremental in lowbit
        A = {0: np.ones((n_lam, ns))}
        for m in masks[1:]:
            low = m & -m
            li = low.bit_length() - 1
            rest = m ^ low
            a = A[rest].copy()
            for j in members[rest]:
                a *= 1.0 + f[(li, j)]
            A[m] = a
        # C[V]: connected spanning sums; singletons are 1 by convention
        C = {}
        for m in masks[1:]:
            mem = members[m]
            if len(mem) == 1:
                C[m] = np.ones((n_lam, ns))
                continue
            low = m & -m
            acc = A[m].copy()
            sub = (m - 1) & m  # proper submasks of m, descending
            while sub:
                if sub & low:
                    acc -= C[sub] * A[m ^ sub]
                sub = (sub - 1) & m
            C[m] = acc
        # D[M] = families of disjoint supports of size >= 2
        D = {0: np.ones((n_lam, ns))}
        for m in masks[1:]:
            low = m & -m
            acc = D[m ^ low].copy()
            sub = m
            while sub:
                if sub & low and len(members[sub]) >= 2:
                    acc += C[sub] * D[m ^ sub]
                sub = (sub - 1) & m
            D[m] = acc
        z += (ref[None, :] * D[full]).sum(axis=1)
    return z


def coupled_interval_length(lam, gap, b_min=0.25):
    """Interval length matched to the coupling: e^{-gap b} = |lambda|^(1/3).

    The expansion's convergence pairs the chain factor (bounded by a
    constant times e^{-gap b}) with the coupling strength; at fixed b the
    chain factors do not shrink with lambda and the fitted decay rate
    saturates, so the rate-to-zero check must shrink them together.
    """
    if lam == 0:
        return b_min
    return max(b_min, -np.log(abs(lam)) / (3.0 * gap))


def eta_ladder_coupled(sd, kernel, lam_ladder, n_max, n_pos=3, N=6):
    """eta(lambda) over a coupling ladder with the interval length coupled
    to lambda; the fitted rate must decrease to zero along lambda -> 0."""
    out = []
    for lam in lam_ladder:
        b = coupled_interval_length(lam, sd.gap)
        grid = TimeGrid(N * b / 2.0, N)
        surrogate = Surrogate.from_spectral(sd, grid, kernel, n_pos)
        r = cluster_estimate_check(surrogate, lam, n_max)
        out.append(r["eta"])
    return out


def cluster_estimate_check(surrogate: Surrogate, lam, n_max):
    """sum_{Gamma owning the origin, |Gamma-bar| = n} |K_Gamma| for n <= n_max,
    with a geometric fit c * eta^n over the orders that carry mass.

    Returns dict with per-order sums and the fitted (c, eta); a ladder of
    couplings yields eta(lambda) which must shrink to zero with lambda.
    """
    lam_arr, scalar = _as_lambda_array(lam)
    origin = surrogate.grid.origin_index
    sums = {n: np.zeros(len(lam_arr)) for n in range(2, n_max + 1)}
    for diagram in enumerate_clusters(surrogate.grid.N, n_max):
        if origin not in diagram.time_points:
            continue
        w = cluster_weight(surrogate, diagram, lam_arr)
        sums[diagram.size] += np.abs(np.atleast_1d(w))
    orders = sorted(sums)
    etas = np.full(len(lam_arr), np.nan)
    cs = np.full(len(lam_arr), np.nan)
    for li in range(len(lam_arr)):
        ys = np.array([sums[n][li] for n in orders])
        mask = ys > 1e-290
        if mask.sum() >= 2:
            ns = np.array(orders, dtype=float)[mask]
            coef = np.polyfit(ns, np.log(ys[mask]), 1)
            etas[li] = np.exp(coef[0])
            cs[li] = np.exp(coef[1])
        elif mask.sum() <= 1:
            etas[li] = 0.0  # vacuous pass: sums at machine zero
            cs[li] = 0.0
    result = {
        "orders": orders,
        "sums": {n: (float(v[0]) if scalar else v) for n, v in sums.items()},
        "eta": float(etas[0]) if scalar else etas,
        "c": float(cs[0]) if scalar else cs,
    }
    return result
