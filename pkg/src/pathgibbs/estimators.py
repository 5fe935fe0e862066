"""Streaming estimators and statistical post-processing for chain output.

Reports are built from per-chain segments of thinned observable series plus
mergeable sufficient statistics (histogram counts, lag-product sums, MSD
sums).  Merging two reports concatenates segments and adds counts; every
derived quantity is computed from the pooled statistics with segments
processed in canonical (chain, segment) order, so merge results are
associative and order-independent to rounding.

Error bars are corrected by the integrated autocorrelation time (Sokal's
adaptive truncation), and estimators refuse to report when the effective
sample size drops below ESS_FLOOR.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EstimatorError

ESS_FLOOR = 100.0


def integrated_autocorrelation_time(series: np.ndarray, c: float = 6.0) -> float:
    """IAT via FFT autocorrelation with Sokal's adaptive window.

    Returns 1.0 for i.i.d.-like or too-short series; never less than 1.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 8:
        return 1.0
    x = x - x.mean()
    var = np.dot(x, x) / n
    if var <= 0:
        return 1.0
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acf = np.fft.irfft(f * np.conjugate(f), nfft)[:n].real
    acf /= acf[0]
    taus = 2.0 * np.cumsum(acf) - 1.0
    for m in range(1, n):
        if m >= c * taus[m]:
            return float(max(1.0, taus[m]))
    return float(max(1.0, taus[-1]))


@dataclass
class ScalarSeries:
    """Thinned observable series stored as (chain_id, values) segments."""

    segments: list = field(default_factory=list)

    def append(self, chain_id: int, values: np.ndarray):
        self.segments.append((chain_id, np.asarray(values, dtype=float)))

    def _ordered(self):
        return sorted(self.segments, key=lambda s: s[0])

    def pooled(self) -> np.ndarray:
        segs = self._ordered()
        if not segs:
            return np.empty(0)
        return np.concatenate([v for _, v in segs])

    @property
    def n(self) -> int:
        return sum(len(v) for _, v in self.segments)

    def mean(self) -> float:
        return float(self.pooled().mean())

    def var(self) -> float:
        p = self.pooled()
        return float(p.var(ddof=1)) if len(p) > 1 else 0.0

    def iat(self) -> float:
        """Length-weighted IAT over per-chain series."""
        segs = self._ordered()
        total, weight = 0.0, 0
        by_chain = {}
        for cid, v in segs:
            by_chain.setdefault(cid, []).append(v)
        for cid in sorted(by_chain):
            v = np.concatenate(by_chain[cid])
            total += integrated_autocorrelation_time(v) * len(v)
            weight += len(v)
        return total / weight if weight else 1.0

    def ess(self) -> float:
        return self.n / self.iat()

    def stderr(self) -> float:
        ess = self.ess()
        if ess < ESS_FLOOR:
            raise EstimatorError(
                f"effective sample size {ess:.1f} below floor {ESS_FLOOR:g}"
            )
        return float(np.sqrt(self.var() / ess))

    def summary(self) -> dict:
        return {
            "mean": self.mean(),
            "var": self.var(),
            "iat": self.iat(),
            "ess": self.ess(),
            "stderr": self.stderr(),
            "n": self.n,
        }

    def merged(self, other: "ScalarSeries") -> "ScalarSeries":
        return ScalarSeries(self.segments + other.segments)


@dataclass
class Histogram:
    """Fixed-edge histogram with mergeable counts."""

    edges: np.ndarray
    counts: np.ndarray = None
    n_total: int = 0  # includes out-of-range samples

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        if self.counts is None:
            self.counts = np.zeros(len(self.edges) - 1, dtype=np.int64)

    def add(self, values):
        v = np.asarray(values, dtype=float).ravel()
        c, _ = np.histogram(v, bins=self.edges)
        self.counts += c
        self.n_total += len(v)

    def density(self):
        width = np.diff(self.edges)
        if self.n_total == 0:
            return np.zeros_like(width)
        return self.counts / (self.n_total * width)

    def probabilities(self):
        if self.n_total == 0:
            return np.zeros(len(self.counts))
        return self.counts / self.n_total

    def merged(self, other: "Histogram") -> "Histogram":
        if not np.array_equal(self.edges, other.edges):
            raise EstimatorError("cannot merge histograms with different edges")
        return Histogram(self.edges, self.counts + other.counts,
                         self.n_total + other.n_total)


@dataclass
class LagSeries:
    """Per-sample averages at fixed lags: sums and sum of squares.

    Each recorded path contributes one scalar per lag (the product or
    squared-displacement averaged over admissible window offsets), so the
    statistics stay mergeable and IAT-correctable per lag.
    """

    lags: np.ndarray
    segments: list = field(default_factory=list)  # (chain_id, array (n_samples, n_lags))

    def append(self, chain_id, rows):
        self.segments.append((chain_id, np.asarray(rows, dtype=float)))

    def pooled(self):
        segs = sorted(self.segments, key=lambda s: s[0])
        if not segs:
            return np.empty((0, len(self.lags)))
        return np.vstack([r for _, r in segs])

    def mean(self):
        return self.pooled().mean(axis=0)

    def stderr(self):
        rows = self.pooled()
        if len(rows) < 2:
            return np.full(len(self.lags), np.nan)
        out = np.empty(rows.shape[1])
        for j in range(rows.shape[1]):
            col = rows[:, j]
            tau = integrated_autocorrelation_time(col)
            out[j] = np.sqrt(col.var(ddof=1) * tau / len(col))
        return out

    def merged(self, other: "LagSeries") -> "LagSeries":
        if not np.array_equal(self.lags, other.lags):
            raise EstimatorError("cannot merge lag series with different lags")
        return LagSeries(self.lags, self.segments + other.segments)


@dataclass
class EstimatorReport:
    """Everything a study needs from one or more chains."""

    scalars: dict = field(default_factory=dict)
    histograms: dict = field(default_factory=dict)
    lag_series: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def scalar(self, name) -> ScalarSeries:
        return self.scalars.setdefault(name, ScalarSeries())

    def histogram(self, name, edges) -> Histogram:
        if name not in self.histograms:
            self.histograms[name] = Histogram(np.asarray(edges, dtype=float))
        return self.histograms[name]

    def lags(self, name, lags) -> LagSeries:
        if name not in self.lag_series:
            self.lag_series[name] = LagSeries(np.asarray(lags))
        return self.lag_series[name]

    def summary(self) -> dict:
        return {name: s.summary() for name, s in sorted(self.scalars.items())}

    def merged(self, other: "EstimatorReport") -> "EstimatorReport":
        out = EstimatorReport()
        for name in sorted(set(self.scalars) | set(other.scalars)):
            a = self.scalars.get(name, ScalarSeries())
            b = other.scalars.get(name, ScalarSeries())
            out.scalars[name] = a.merged(b)
        for name in sorted(set(self.histograms) | set(other.histograms)):
            if name in self.histograms and name in other.histograms:
                out.histograms[name] = self.histograms[name].merged(other.histograms[name])
            else:
                out.histograms[name] = self.histograms.get(name) or other.histograms[name]
        for name in sorted(set(self.lag_series) | set(other.lag_series)):
            if name in self.lag_series and name in other.lag_series:
                out.lag_series[name] = self.lag_series[name].merged(other.lag_series[name])
            else:
                out.lag_series[name] = self.lag_series.get(name) or other.lag_series[name]
        out.meta = _merge_meta(self.meta, other.meta)
        return out


def _merge_meta(a, b):
    out = dict(a)
    for k, v in b.items():
        if k in out and isinstance(out[k], dict) and isinstance(v, dict):
            out[k] = {**out[k], **v}
        elif k in out and isinstance(out[k], (int, float)) and k.startswith(("n_", "accept", "propose")):
            out[k] = out[k] + v
        else:
            out.setdefault(k, v)
    return out


# ---------------------------------------------------------------------------
# fits


def fit_power_decay(lags, cov, stderr):
    """Fit |cov| <= c / (1 + t^beta): regression of log|cov| on log(1+t).

    Returns (beta_hat, beta_err, c_hat).  Lags with |cov| below twice its
    standard error are dropped (sign-indeterminate); at least three points
    are required.
    """
    lags = np.asarray(lags, dtype=float)
    cov = np.asarray(cov, dtype=float)
    stderr = np.asarray(stderr, dtype=float)
    mask = (lags > 0) & (np.abs(cov) > 2.0 * stderr) & np.isfinite(cov)
    if mask.sum() < 3:
        raise EstimatorError("too few significant lags for a decay fit")
    x = np.log1p(lags[mask])
    y = np.log(np.abs(cov[mask]))
    w = (np.abs(cov[mask]) / stderr[mask]) ** 2
    coef, cov_mat = np.polyfit(x, y, 1, w=np.sqrt(w), cov=True)
    beta = -coef[0]
    beta_err = float(np.sqrt(cov_mat[0, 0]))
    return float(beta), beta_err, float(np.exp(coef[1]))


def fit_msd_slope(t, msd, stderr, t_lo, t_hi):
    """Weighted least-squares slope of msd vs t over the window [t_lo, t_hi].

    Returns (slope, slope_err, quality) where quality is the reduced chi^2
    of the linear fit; a large value flags a nonlinear window.
    """
    t = np.asarray(t, dtype=float)
    msd = np.asarray(msd, dtype=float)
    stderr = np.asarray(stderr, dtype=float)
    mask = (t >= t_lo) & (t <= t_hi) & np.isfinite(msd) & (stderr > 0)
    if mask.sum() < 2:
        raise EstimatorError("too few points in the MSD fit window")
    x, y, s = t[mask], msd[mask], stderr[mask]
    w = 1.0 / s**2
    # slope through the origin is the physical normalisation of E|X_t|^2 / t
    slope = float((w * x * y).sum() / (w * x * x).sum())
    slope_err = float(np.sqrt(1.0 / (w * x * x).sum()))
    resid = (y - slope * x) / s
    dof = max(1, mask.sum() - 1)
    return slope, slope_err, float((resid**2).sum() / dof)


def fit_tail_exponent(levels, survival, s_exponent):
    """Fit the sup-tail law log P(max |X| >= a) = c - theta a^p.

    Returns (p_hat, theta_hat): p_hat from a nonlinear fit with the exponent
    free, theta_hat from the linear regression at the declared exponent
    p = s + 1.  Raises when the tail carries too little decreasing mass.
    """
    from scipy.optimize import curve_fit

    a = np.asarray(levels, dtype=float)
    surv = np.asarray(survival, dtype=float)
    mask = (surv > 0) & (surv < 1) & (a > 0)
    if mask.sum() < 4:
        raise EstimatorError("insufficient tail mass for an exponent fit")
    a = a[mask]
    surv = surv[mask]
    y = np.log(surv)
    if y[-1] >= y[0]:
        raise EstimatorError("tail survival not decreasing; fit refused")
    p0 = s_exponent + 1.0
    theta0 = (y[0] - y[-1]) / max(a[-1] ** p0 - a[0] ** p0, 1e-12)

    def model(x, c, theta, p):
        return c - theta * np.abs(x) ** p

    try:
        popt, _ = curve_fit(model, a, y, p0=(y[0], theta0, p0), maxfev=20_000)
    except RuntimeError as exc:
        raise EstimatorError(f"tail exponent fit did not converge: {exc}") from exc
    p_hat = float(popt[2])
    theta = np.polyfit(a**p0, y, 1)
    return p_hat, float(-theta[0])


def trapezoid_log_partition(lams, mean_pair_energy, stderr_pair_energy):
    """log Z(lambda) = -integral_0^lambda <E_pair> dl by the trapezoid rule.

    Returns (logz, logz_err) arrays over the ladder; errors propagate the
    independent per-rung standard errors through the quadrature weights.
    """
    lams = np.asarray(lams, dtype=float)
    e = np.asarray(mean_pair_energy, dtype=float)
    se = np.asarray(stderr_pair_energy, dtype=float)
    if lams[0] != 0.0:
        raise EstimatorError("coupling ladder must start at lambda = 0")
    n = len(lams)
    logz = np.zeros(n)
    var = np.zeros(n)
    for i in range(1, n):
        dl = lams[i] - lams[i - 1]
        logz[i] = logz[i - 1] - 0.5 * dl * (e[i] + e[i - 1])
        var[i] = var[i - 1] + (0.5 * dl) ** 2 * (se[i] ** 2 + se[i - 1] ** 2)
    return logz, np.sqrt(var)


def extrapolate_in_inverse_T(T_values, values, errors):
    """Linear extrapolation v(T) = v_inf + slope / T to T -> infinity.

    Returns (v_inf, v_inf_err) from a weighted least-squares fit in 1/T.
    """
    T = np.asarray(T_values, dtype=float)
    v = np.asarray(values, dtype=float)
    e = np.asarray(errors, dtype=float)
    if len(T) < 2:
        return float(v[-1]), float(e[-1])
    x = 1.0 / T
    floor = max(1e-12, 1e-6 * float(np.abs(v).max()), float(e.max()) * 1e-6)
    w = 1.0 / np.maximum(e, floor) ** 2
    W = w.sum()
    xbar = (w * x).sum() / W
    vbar = (w * v).sum() / W
    sxx = (w * (x - xbar) ** 2).sum()
    slope = (w * (x - xbar) * (v - vbar)).sum() / sxx
    v_inf = vbar - slope * xbar
    var = 1.0 / W + xbar**2 / sxx
    return float(v_inf), float(np.sqrt(var))


def gelman_rubin(chains):
    """Split-free R-hat over a list of per-chain series."""
    arrs = [np.asarray(c, dtype=float) for c in chains if len(c) > 1]
    if len(arrs) < 2:
        return 1.0
    n = min(len(a) for a in arrs)
    arrs = [a[-n:] for a in arrs]
    means = np.array([a.mean() for a in arrs])
    variances = np.array([a.var(ddof=1) for a in arrs])
    W = variances.mean()
    B = n * means.var(ddof=1)
    if W <= 0:
        return 1.0
    var_hat = (n - 1) / n * W + B / n
    return float(np.sqrt(var_hat / W))
