"""Model averaging over a bag of stepwise fits: weights, draws, trends.

Two weighting systems are provided. BIC weights approximate posterior model
probabilities under a uniform model prior and concentrate on the single
best-fitting stepwise model. WAIC weights score one-step-ahead (or A-step)
predictive density and spread mass across competitive models, which is what
turns a bag of step functions into a smooth decay estimate.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .events import EventSequence
from .intervals import locate_intervals
from .likelihood import ModelFit
from .stats import StatTensor, StatisticKind

__all__ = [
    "ModelBag",
    "PosteriorDraws",
    "PosteriorTrend",
    "WaicConfig",
    "bic_weights",
    "waic_weights",
    "waic_elpd",
    "waic_model_rng",
    "weights_from_elpds",
    "sample_posterior",
    "extract_trend",
    "kde_mode",
    "hpd_interval",
]

_WAIC_STREAM = 101
_DRAW_STREAM = 202


def _softmax(scores: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax; non-finite scores get zero weight."""
    scores = np.asarray(scores, dtype=np.float64)
    safe = np.where(np.isfinite(scores), scores, -np.inf)
    mx = safe.max()
    if not np.isfinite(mx):
        raise ValueError("no finite scores to weight")
    w = np.exp(safe - mx)
    return w / w.sum()


def _mvn_draws(
    mean: np.ndarray, cov: np.ndarray, n: int, rng: np.random.Generator
) -> np.ndarray:
    """n draws from MVN(mean, cov) via Cholesky; a zero covariance is exact."""
    P = mean.size
    if n == 0:
        return np.empty((0, P))
    if not cov.any():
        return np.tile(mean, (n, 1))
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        warnings.warn("covariance not positive definite; jittering by 1e-10", RuntimeWarning)
        scale = float(np.abs(np.diag(cov)).max())
        L = np.linalg.cholesky(cov + 1e-10 * max(scale, 1.0) * np.eye(P))
    z = rng.standard_normal((n, P))
    return mean + z @ L.T


@dataclass(frozen=True)
class WaicConfig:
    """Predictive scoring window: start after ``burn_in`` events, score
    ``ahead`` events per point, with ``n_draws`` posterior draws per model."""

    burn_in: int
    ahead: int = 1
    n_draws: int = 500
    seed: int = 0

    def __post_init__(self) -> None:
        if self.burn_in < 1:
            raise ValueError("burn_in must be >= 1")
        if self.ahead < 1:
            raise ValueError("ahead must be >= 1")
        if self.n_draws < 2:
            raise ValueError("need at least 2 posterior draws for a variance")

    @classmethod
    def default_for(cls, n_events: int, ahead: int = 1, n_draws: int = 500, seed: int = 0):
        burn = max(100, math.ceil(0.1 * n_events))
        burn = min(burn, n_events - ahead - 1)
        if burn < 1:
            raise ValueError(f"sequence too short for WAIC scoring (M={n_events})")
        return cls(burn_in=burn, ahead=ahead, n_draws=n_draws, seed=seed)


def waic_elpd(
    fit: ModelFit,
    stats: StatTensor,
    seq: EventSequence,
    cfg: WaicConfig,
    draws: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[float, float, float]:
    """(elpd_hat, lpd_hat, p_waic) for one model.

    For each i in burn_in..M-ahead the predictive log density of the next
    ``ahead`` realized events given the history through event i is evaluated
    under every posterior draw, on the statistics of the full sequence.
    lpd_hat sums the per-point log mean densities, p_waic the per-point
    sample variances of the log densities.
    """
    M = len(seq)
    L, A = cfg.burn_in, cfg.ahead
    if not 1 <= L < M - A:
        raise ValueError(f"burn_in must satisfy 1 <= L < M - ahead ({L=}, {M=}, {A=})")
    if draws is None:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        draws = _mvn_draws(fit.beta_hat, fit.cov_hat, cfg.n_draws, rng)
    draws = np.asarray(draws, dtype=np.float64)
    B = draws.shape[0]
    if B < 2:
        raise ValueError("need at least 2 draws for a variance")

    U = stats.values
    D, P = U.shape[1], U.shape[2]
    U_flat = U.reshape(M * D, P)
    dt = np.diff(seq.times, prepend=seq.t0)
    ev_rows = np.arange(M) * D + stats.event_positions

    hz = np.empty((M, B))
    chunk = max(1, int(8_000_000 // max(M * D, 1)))
    for b0 in range(0, B, chunk):
        block = draws[b0 : b0 + chunk].T  # (P, c)
        eta = (U_flat @ block).reshape(M, D, -1)
        realized = eta.reshape(M * D, -1)[ev_rows].copy()
        mx = eta.max(axis=1)
        eta -= mx[:, None, :]
        np.exp(eta, out=eta)
        sums = eta.sum(axis=1)
        sums *= np.exp(mx)
        sums *= -dt[:, None]
        sums += realized
        hz[:, b0 : b0 + block.shape[1]] = sums

    cs = np.vstack([np.zeros((1, B)), np.cumsum(hz, axis=0)])
    i_vals = np.arange(L, M - A + 1)  # 1-based prediction points
    ld = cs[i_vals + A] - cs[i_vals]  # (n_points, B) log predictive densities
    mx = ld.max(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        lpd_i = np.log(np.exp(ld - mx).mean(axis=1)) + mx[:, 0]
        p_i = ld.var(axis=1, ddof=1)
    lpd = float(lpd_i.sum())
    p_waic = float(p_i.sum())
    return lpd - p_waic, lpd, p_waic


def _converged_scores(fits: Sequence[ModelFit], scores: np.ndarray) -> np.ndarray:
    out = np.array(scores, dtype=np.float64)
    skipped = [q for q, f in enumerate(fits) if not f.converged]
    if skipped:
        warnings.warn(
            f"excluding {len(skipped)} non-converged model(s) from weighting: {skipped[:10]}",
            RuntimeWarning,
        )
        out[skipped] = -np.inf
    return out


def bic_weights(fits: Sequence[ModelFit]) -> np.ndarray:
    """Weights proportional to exp(-BIC/2) under a uniform model prior.

    Non-converged fits are excluded (zero weight) with a warning and the
    rest renormalized.
    """
    if not fits:
        raise ValueError("empty model bag")
    scores = _converged_scores(fits, np.array([-f.bic / 2.0 for f in fits]))
    return _softmax(scores)


def waic_model_rng(seed: int, model_index: int) -> np.random.Generator:
    """Deterministic draw stream for one model's WAIC, independent of the
    order in which models are processed (parallel-safe)."""
    return np.random.default_rng(np.random.SeedSequence((seed, _WAIC_STREAM, model_index)))


def weights_from_elpds(fits: Sequence[ModelFit], elpds: np.ndarray) -> np.ndarray:
    """Softmax of elpd scores with non-converged fits excluded."""
    return _softmax(_converged_scores(fits, np.asarray(elpds, dtype=np.float64)))


def waic_weights(
    fits: Sequence[ModelFit],
    seq: EventSequence,
    stats_per_fit: Iterable[StatTensor],
    cfg: WaicConfig,
) -> np.ndarray:
    """Softmax of per-model elpd estimates; also stores elpd on fit.waic.

    Each model gets its own deterministic draw stream derived from
    (cfg.seed, model index), so results do not depend on evaluation order.
    """
    fits = list(fits)
    if not fits:
        raise ValueError("empty model bag")
    elpds = np.full(len(fits), -np.inf)
    for q, (fit, stats) in enumerate(zip(fits, stats_per_fit)):
        if not fit.converged:
            continue
        elpd, _, _ = waic_elpd(fit, stats, seq, cfg, rng=waic_model_rng(cfg.seed, q))
        fit.waic = elpd
        elpds[q] = elpd
    return weights_from_elpds(fits, elpds)


@dataclass
class ModelBag:
    """Fitted stepwise models plus their normalized weights."""

    fits: list[ModelFit]
    weights: np.ndarray
    weighting_kind: str  # "bic" or "waic"

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if len(self.fits) != self.weights.size or not self.fits:
            raise ValueError("need one weight per fit")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be a probability vector (sum within 1e-12)")
        if self.weighting_kind not in ("bic", "waic"):
            raise ValueError(f"unknown weighting kind {self.weighting_kind!r}")


@dataclass
class PosteriorDraws:
    """Mixture draws: model index plus that model's coefficient vector."""

    model_indices: np.ndarray
    betas: list[np.ndarray]

    @property
    def n_draws(self) -> int:
        return self.model_indices.size

    @property
    def draws(self) -> list[tuple[int, np.ndarray]]:
        return [(int(q), b) for q, b in zip(self.model_indices, self.betas)]


def sample_posterior(bag: ModelBag, n_draws: int, seed: int = 0) -> PosteriorDraws:
    """Draw model indices from the weight vector, then coefficients from each
    drawn model's normal posterior approximation. Deterministic per seed."""
    if n_draws < 1:
        raise ValueError("n_draws must be positive")
    rng = np.random.default_rng(np.random.SeedSequence((seed, _DRAW_STREAM)))
    qs = rng.choice(len(bag.fits), size=n_draws, p=bag.weights)
    betas: list[np.ndarray | None] = [None] * n_draws
    for q in np.unique(qs):
        fit = bag.fits[q]
        slots = np.flatnonzero(qs == q)
        block = _mvn_draws(fit.beta_hat, fit.cov_hat, slots.size, rng)
        for s, row in zip(slots, block):
            betas[s] = row
    return PosteriorDraws(model_indices=qs.astype(np.int64), betas=betas)


def kde_mode(values: np.ndarray, n_grid: int = 512) -> float:
    """Argmax of a Gaussian KDE evaluated on an n_grid-point grid spanning
    the sample range; bandwidth by Silverman's rule on the smaller of the
    standard deviation and the normalized interquartile range."""
    x = np.asarray(values, dtype=np.float64)
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        return lo
    counts, edges = np.histogram(x, bins=n_grid, range=(lo, hi))
    centers = 0.5 * (edges[:-1] + edges[1:])
    sd = float(x.std(ddof=1))
    q25, q75 = np.percentile(x, [25.0, 75.0])
    iqr = float(q75 - q25)
    a = min(sd, iqr / 1.34) if iqr > 0 else sd
    if a <= 0:
        return centers[int(np.argmax(counts))]
    bw = 0.9 * a * x.size ** (-0.2)
    step = (hi - lo) / n_grid
    half = min(int(math.ceil(4.0 * bw / step)), 4 * n_grid)
    u = np.arange(-half, half + 1) * step / bw
    kernel = np.exp(-0.5 * u * u)
    dens = np.convolve(counts.astype(np.float64), kernel, mode="same")
    return float(centers[int(np.argmax(dens))])


def hpd_interval(values: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    """Shortest interval containing ceil(level * n) of the sorted values."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.size
    w = min(n, int(math.ceil(level * n)))
    if w < 1:
        raise ValueError("empty sample")
    widths = x[w - 1 :] - x[: n - w + 1]
    j = int(np.argmin(widths))
    return float(x[j]), float(x[j + w - 1])


@dataclass
class PosteriorTrend:
    """Per-age posterior mode and HPD band for each interval-defined effect,
    plus the posterior summary of the intercept (which has no age axis)."""

    grid: np.ndarray
    modes: dict[StatisticKind, np.ndarray]
    hpd_low: dict[StatisticKind, np.ndarray]
    hpd_high: dict[StatisticKind, np.ndarray]
    means: dict[StatisticKind, np.ndarray]
    intercept_mode: float
    intercept_hpd: tuple[float, float]
    level: float

    def to_json_dict(self) -> dict:
        return {
            "level": self.level,
            "grid": [float(g) for g in self.grid],
            "effects": {
                k.value: {
                    "mode": [float(v) for v in self.modes[k]],
                    "hpd_low": [float(v) for v in self.hpd_low[k]],
                    "hpd_high": [float(v) for v in self.hpd_high[k]],
                    "mean": [float(v) for v in self.means[k]],
                }
                for k in self.modes
            },
            "intercept": {
                "mode": self.intercept_mode,
                "hpd_low": self.intercept_hpd[0],
                "hpd_high": self.intercept_hpd[1],
            },
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["kind", "gamma", "mode", "hpd_low", "hpd_high"])
            w.writerow(
                [
                    "intercept",
                    "",
                    repr(self.intercept_mode),
                    repr(self.intercept_hpd[0]),
                    repr(self.intercept_hpd[1]),
                ]
            )
            for kind in self.modes:
                for g, m, lo, hi in zip(
                    self.grid, self.modes[kind], self.hpd_low[kind], self.hpd_high[kind]
                ):
                    w.writerow([kind.value, repr(float(g)), repr(float(m)), repr(float(lo)), repr(float(hi))])


def _model_columns(fit: ModelFit, kind: StatisticKind, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column index per grid age under this fit's spec, plus a beyond-horizon mask."""
    K = (fit.n_params - 1) // len(fit.kinds)
    block = fit.kinds.index(kind)
    k_idx = locate_intervals(fit.spec, grid)
    beyond = k_idx == 0
    cols = 1 + block * K + np.where(beyond, 1, k_idx) - 1
    return cols, beyond


def extract_trend(
    draws: PosteriorDraws,
    bag: ModelBag,
    kinds: Iterable[StatisticKind] | None = None,
    grid_size: int = 100,
    gamma_max: float | None = None,
    level: float = 0.95,
) -> PosteriorTrend:
    """Evaluate each posterior draw's stepwise effect function on an even age
    grid and summarize the resulting per-age densities.

    A draw from a model whose last bound is below a grid age contributes 0
    there (the effect function vanishes beyond its horizon). The point
    summary is the KDE mode; the band is the shortest interval holding
    ``level`` of the draws.
    """
    if draws.n_draws < 10:
        raise ValueError(f"need at least 10 draws, got {draws.n_draws}")
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    fits = bag.fits
    if kinds is None:
        kinds = fits[0].kinds
    kinds = tuple(StatisticKind(k) for k in kinds)
    if gamma_max is None:
        gamma_max = max(f.spec.horizon for f in fits)
    grid = np.linspace(0.0, float(gamma_max), grid_size)

    by_model: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for q in np.unique(draws.model_indices):
        slots = np.flatnonzero(draws.model_indices == q)
        block = np.vstack([draws.betas[s] for s in slots])
        by_model[int(q)] = (slots, block)

    modes: dict[StatisticKind, np.ndarray] = {}
    lows: dict[StatisticKind, np.ndarray] = {}
    highs: dict[StatisticKind, np.ndarray] = {}
    means: dict[StatisticKind, np.ndarray] = {}
    for kind in kinds:
        per_model = {
            q: _model_columns(fits[q], kind, grid) for q in by_model
        }
        mode_g = np.empty(grid_size)
        lo_g = np.empty(grid_size)
        hi_g = np.empty(grid_size)
        mean_g = np.empty(grid_size)
        vals = np.empty(draws.n_draws)
        for gi in range(grid_size):
            for q, (slots, block) in by_model.items():
                cols, beyond = per_model[q]
                vals[slots] = 0.0 if beyond[gi] else block[:, cols[gi]]
            mode_g[gi] = kde_mode(vals)
            lo_g[gi], hi_g[gi] = hpd_interval(vals, level)
            mean_g[gi] = vals.mean()
        modes[kind] = mode_g
        lows[kind] = lo_g
        highs[kind] = hi_g
        means[kind] = mean_g

    intercepts = np.empty(draws.n_draws)
    for q, (slots, block) in by_model.items():
        intercepts[slots] = block[:, 0]
    return PosteriorTrend(
        grid=grid,
        modes=modes,
        hpd_low=lows,
        hpd_high=highs,
        means=means,
        intercept_mode=kde_mode(intercepts),
        intercept_hpd=hpd_interval(intercepts, level),
        level=level,
    )
