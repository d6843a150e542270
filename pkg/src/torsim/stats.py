"""Repeated-sampling inference over simulated networks.

Measurements from simulation j in network i form an empirical
distribution; per-network quantile estimates average the per-simulation
inverse CDFs, and the cross-network estimate averages the per-network
ones. Confidence intervals combine three error sources: measurement
resolution, within-network sampling error (Student t over the m_i sims),
and cross-network spread (Student t over the n networks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

DEFAULT_ALPHA = 0.95
DEFAULT_RESOLUTION_S = 0.01


class StatsError(ValueError):
    """Raised on empty inputs or ill-posed CI requests."""


def default_grid() -> np.ndarray:
    """Quantiles 0.01..0.99 in steps of 0.01, plus 0.999 for the tail."""
    return np.append(np.round(np.arange(0.01, 1.00, 0.01), 2), 0.999)


@dataclass(frozen=True)
class EmpiricalDistribution:
    samples: np.ndarray  # sorted ascending
    resolution: float  # reporting granularity of the measurements

    @classmethod
    def from_samples(cls, values, resolution: float = DEFAULT_RESOLUTION_S):
        arr = np.sort(np.asarray(values, dtype=float))
        if arr.size == 0:
            raise StatsError("empirical distribution needs at least one sample")
        return cls(samples=arr, resolution=resolution)


def inverse_cdf(dist: EmpiricalDistribution, q: float) -> float:
    """Empirical quantile with linear interpolation at rank (len-1)*q."""
    if not 0 < q <= 1:
        raise StatsError(f"quantile must be in (0,1], got {q}")
    s = dist.samples
    h = (s.size - 1) * q
    lo = math.floor(h)
    hi = math.ceil(h)
    if lo == hi:
        return float(s[lo])
    return float(s[lo] + (h - lo) * (s[hi] - s[lo]))


def t_value(alpha: float, df: int) -> float:
    """Two-sided Student t critical value at confidence level alpha.

    Inverts the regularized incomplete beta function: for T ~ t(df),
    P(|T| <= t) = alpha iff I_{df/(df+t^2)}(df/2, 1/2) = 1 - alpha.
    """
    if df < 1:
        raise StatsError(f"degrees of freedom must be >= 1, got {df}")
    if not 0 < alpha < 1:
        raise StatsError(f"alpha must be in (0,1), got {alpha}")
    x = special.betaincinv(df / 2.0, 0.5, 1.0 - alpha)
    return math.sqrt(df * (1.0 - x) / x)


def resolution_error(resolution: float, m: int) -> float:
    """Resolution error of a mean of m samples reported at granularity r."""
    if m < 1:
        raise StatsError(f"m must be >= 1, got {m}")
    return resolution / math.sqrt(12.0 * m)


@dataclass(frozen=True)
class NetworkEstimate:
    grid: np.ndarray
    mu: np.ndarray  # per-q mean of per-sim inverse CDFs
    sigma: np.ndarray  # per-q std (population) including resolution error
    eps: np.ndarray  # per-q error half-width
    m: int  # simulations in this network
    zeta: float  # resolution error


def network_estimate(
    distributions: list[EmpiricalDistribution],
    grid: np.ndarray,
    alpha: float = DEFAULT_ALPHA,
) -> NetworkEstimate:
    """Per-network quantile estimate over the m_i simulation distributions.

    sigma uses the population (1/m) variance plus the squared resolution
    error; the error half-width is sigma * t(alpha, m-1) / sqrt(m-1).
    With a single simulation the sampling term is undefined and the error
    degenerates to the resolution error alone.
    """
    if not distributions:
        raise StatsError("network estimate needs at least one distribution")
    m = len(distributions)
    resolution = distributions[0].resolution
    zeta = resolution_error(resolution, m)
    values = np.array(
        [[inverse_cdf(d, q) for q in grid] for d in distributions]
    )  # shape (m, len(grid))
    mu = values.mean(axis=0)
    var = values.var(axis=0)  # population variance (1/m)
    sigma = np.sqrt(var + zeta**2)
    if m == 1:
        eps = np.full_like(mu, zeta)
    else:
        eps = sigma * t_value(alpha, m - 1) / math.sqrt(m - 1)
    return NetworkEstimate(grid=np.asarray(grid, float), mu=mu, sigma=sigma, eps=eps, m=m, zeta=zeta)


@dataclass(frozen=True)
class TrueEstimate:
    grid: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray  # cross-network population std of the per-net means
    delta: np.ndarray  # mean per-network error
    eps: np.ndarray  # CI half-width (delta + t-term); NaN when n == 1
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    n: int
    alpha: float


def true_estimate(
    estimates: list[NetworkEstimate],
    alpha: float = DEFAULT_ALPHA,
    require_ci: bool = True,
) -> TrueEstimate:
    """Cross-network estimate with CI half-width delta + sigma*t/sqrt(n-1)."""
    if not estimates:
        raise StatsError("true estimate needs at least one network estimate")
    n = len(estimates)
    grid = estimates[0].grid
    mus = np.array([e.mu for e in estimates])  # (n, len(grid))
    epss = np.array([e.eps for e in estimates])
    mu = mus.mean(axis=0)
    sigma = np.sqrt(mus.var(axis=0))  # population std
    delta = epss.mean(axis=0)
    if n < 2:
        if require_ci:
            raise StatsError(
                "confidence intervals need n >= 2 independently sampled "
                "networks; rerun with more networks or pass require_ci=False"
            )
        eps = np.full_like(mu, np.nan)
    else:
        eps = delta + sigma * t_value(alpha, n - 1) / math.sqrt(n - 1)
    return TrueEstimate(
        grid=grid,
        mu=mu,
        sigma=sigma,
        delta=delta,
        eps=eps,
        ci_lo=mu - eps,
        ci_hi=mu + eps,
        n=n,
        alpha=alpha,
    )


def estimate_to_rows(est: TrueEstimate) -> list[dict]:
    """Rows for the estimate CSV: q, mu, sigma, delta, epsilon, ci, n, alpha."""
    rows = []
    for i, q in enumerate(est.grid):
        rows.append(
            {
                "q": float(q),
                "mu": float(est.mu[i]),
                "sigma": float(est.sigma[i]),
                "delta": float(est.delta[i]),
                "epsilon": float(est.eps[i]),
                "ci_lo": float(est.ci_lo[i]),
                "ci_hi": float(est.ci_hi[i]),
                "n": est.n,
                "alpha": est.alpha,
            }
        )
    return rows


def ci_width_study(
    n_range,
    quantiles=(0.5, 0.9, 0.99),
    trials: int = 1000,
    seed: int = 0,
    alpha: float = DEFAULT_ALPHA,
) -> list[tuple[int, float, float]]:
    """Monte-Carlo study of CI width versus number of sampled networks.

    Construction: per trial, the cross-network spread sigma is drawn from
    N(1,1) truncated at 0 and plugged into the CI half-width formula
    (with zero per-network error), giving width 2*sigma*t/sqrt(n-1). The
    same sigma draws serve every n and quantile (common random numbers),
    so the median width decreases deterministically in n. The exact
    construction behind the published figure is not stated; this one
    reproduces its qualitative shape and order-of-magnitude drop.
    Returns (n, q, median CI width) tuples.
    """
    n_range = sorted(n_range)
    if trials == 0:
        return []
    if n_range and (n_range[0] < 2 or n_range[-1] > 100):
        raise StatsError("n_range must lie within [2, 100]")
    rng = np.random.Generator(np.random.PCG64(seed))
    # truncated-normal draws via inverse-CDF, exact and deterministic
    lo = special.ndtr(-1.0)  # P(N(1,1) < 0)
    u = rng.uniform(lo, 1.0, size=trials)
    sigmas = 1.0 + special.ndtri(u)
    med_sigma = float(np.median(sigmas))
    results = []
    for q in quantiles:
        for n in n_range:
            width = 2.0 * med_sigma * t_value(alpha, n - 1) / math.sqrt(n - 1)
            results.append((n, float(q), width))
    return results


def group_runs(manifests: list[dict]) -> dict[int, list[dict]]:
    """Group run manifests by network index; every group must be nonempty."""
    groups: dict[int, list[dict]] = {}
    for man in manifests:
        try:
            net = int(man["network"])
        except (KeyError, TypeError, ValueError) as exc:
            raise StatsError(f"manifest missing valid network id: {man}") from exc
        groups.setdefault(net, []).append(man)
    for net, group in groups.items():
        group.sort(key=lambda m: int(m.get("sim", 0)))
    return dict(sorted(groups.items()))
