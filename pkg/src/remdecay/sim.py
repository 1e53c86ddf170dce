"""Synthetic relational event sequences with known continuous memory decay.

Dyad intensities are log-linear in continuously weighted statistics, with
each effect's weight given by a decay function of the event's age. Because
every weight is nonnegative and nonincreasing in age, the total intensity
can only fall between events, which makes the current intensity an exact
dominating rate for Ogata thinning: no discretization error enters the
generated sequences.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .decay import DecayFn, decay_from_json, decay_to_json
from .events import EventSequence, RiskSet
from .stats import FIRST_ORDER, SECOND_ORDER, StatisticKind

__all__ = ["SimConfig", "SimulationError", "simulate"]

_GRID = 1000


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Ground-truth generator settings.

    Exactly one stop rule applies: a target event count or an end time.
    Each effect's decay must be nonnegative and nonincreasing on
    [0, horizon]; ages beyond the horizon contribute nothing.
    """

    n_actors: int
    beta0: float
    effects: Mapping[StatisticKind, DecayFn] = field(default_factory=dict)
    horizon: float = np.inf
    n_events: int | None = None
    end_time: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_actors < 2:
            raise SimulationError("need at least 2 actors")
        if (self.n_events is None) == (self.end_time is None):
            raise SimulationError("set exactly one of n_events / end_time")
        if self.n_events is not None and self.n_events < 1:
            raise SimulationError("n_events must be positive")
        if self.end_time is not None and self.end_time <= 0:
            raise SimulationError("end_time must be positive")
        if not self.horizon > 0:
            raise SimulationError("horizon must be positive")
        effects = {StatisticKind(k): v for k, v in self.effects.items()}
        grid_hi = self.horizon if np.isfinite(self.horizon) else 1e4
        grid = np.linspace(0.0, grid_hi, _GRID)
        for kind, fn in effects.items():
            vals = np.asarray(fn(grid), dtype=np.float64)
            if np.any(vals < 0):
                raise SimulationError(f"decay for {kind.value} is negative on [0, horizon]")
            if np.any(np.diff(vals) > 1e-12 * max(1.0, np.abs(vals).max())):
                raise SimulationError(
                    f"decay for {kind.value} increases with age; thinning bound invalid"
                )
        object.__setattr__(self, "effects", effects)

    def to_json_dict(self) -> dict:
        return {
            "n_actors": self.n_actors,
            "beta0": self.beta0,
            "effects": {k.value: decay_to_json(v) for k, v in self.effects.items()},
            "horizon": self.horizon if np.isfinite(self.horizon) else None,
            "n_events": self.n_events,
            "end_time": self.end_time,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SimConfig":
        return cls(
            n_actors=d["n_actors"],
            beta0=d["beta0"],
            effects={
                StatisticKind(k): decay_from_json(v) for k, v in d["effects"].items()
            },
            horizon=d["horizon"] if d.get("horizon") is not None else np.inf,
            n_events=d.get("n_events"),
            end_time=d.get("end_time"),
            seed=d.get("seed", 0),
        )


class _HistoryState:
    """Growing event history with the aggregates the intensity needs."""

    def __init__(self, config: SimConfig, rs: RiskSet, capacity: int = 1024):
        self.cfg = config
        self.rs = rs
        self.n = 0
        self.left = 0  # oldest event still within the horizon
        self.times = np.empty(capacity)
        self.senders = np.empty(capacity, dtype=np.int64)
        self.receivers = np.empty(capacity, dtype=np.int64)
        self.pos_same = np.empty(capacity, dtype=np.int64)
        self.pos_rev = np.empty(capacity, dtype=np.int64)
        n_act = config.n_actors
        self.recv_times: list[list[float]] = [[] for _ in range(n_act)]
        self.recv_senders: list[list[int]] = [[] for _ in range(n_act)]

    def append(self, t: float, s: int, r: int) -> None:
        if self.n == self.times.size:
            for name in ("times", "senders", "receivers", "pos_same", "pos_rev"):
                old = getattr(self, name)
                grown = np.empty(old.size * 2, dtype=old.dtype)
                grown[: old.size] = old
                setattr(self, name, grown)
        i = self.n
        self.times[i] = t
        self.senders[i] = s
        self.receivers[i] = r
        self.pos_same[i] = self.rs.index_of(s, r)
        self.pos_rev[i] = self.rs.index_of(r, s)
        self.recv_times[r].append(t)
        self.recv_senders[r].append(s)
        self.n += 1

    def log_rates(self, t: float, dominating: bool = False) -> np.ndarray:
        """log intensity per risk-set dyad at time t, history strictly before t.

        With ``dominating=True`` the closure statistics count every inner
        event that could ever fall inside an outer event's backward window
        (not just those reached by time t). First-order weights only shrink
        with age and closure windows only grow, so the dominating variant
        bounds the true intensity at all later times: that is the envelope
        the thinning proposals are drawn from. For first-order effects the
        two variants coincide.
        """
        cfg, rs = self.cfg, self.rs
        while self.left < self.n and t - self.times[self.left] > cfg.horizon:
            self.left += 1
        expo = np.full(len(rs), cfg.beta0)
        lo, hi = self.left, self.n
        if lo == hi or not cfg.effects:
            return expo
        ages = t - self.times[lo:hi]
        for kind, decay in cfg.effects.items():
            w = np.asarray(decay(ages), dtype=np.float64)
            if kind is StatisticKind.INERTIA:
                np.add.at(expo, self.pos_same[lo:hi], w)
            elif kind is StatisticKind.RECIPROCITY:
                np.add.at(expo, self.pos_rev[lo:hi], w)
            elif kind in FIRST_ORDER:
                acc = np.zeros(cfg.n_actors)
                if kind in (StatisticKind.INDEGREE_SENDER, StatisticKind.INDEGREE_RECEIVER):
                    np.add.at(acc, self.receivers[lo:hi], w)
                else:
                    np.add.at(acc, self.senders[lo:hi], w)
                side = (
                    rs.senders
                    if kind in (StatisticKind.INDEGREE_SENDER, StatisticKind.OUTDEGREE_SENDER)
                    else rs.receivers
                )
                expo += acc[side]
            else:
                self._add_closure(expo, kind, w, lo, hi, t, dominating)
        return expo

    def _add_closure(
        self,
        expo: np.ndarray,
        kind: StatisticKind,
        w: np.ndarray,
        lo: int,
        hi: int,
        t: float,
        dominating: bool,
    ) -> None:
        rs, horizon = self.rs, self.cfg.horizon
        for off, e in enumerate(range(lo, hi)):
            we = w[off]
            if we == 0.0:
                continue
            te = self.times[e]
            l_act = int(self.senders[e])
            j_act = int(self.receivers[e])
            tl = self.recv_times[l_act]
            win_lo = te - horizon if dominating else te - (t - te)
            a = 0 if win_lo == -np.inf else bisect.bisect_left(tl, win_lo)
            b = bisect.bisect_left(tl, te)
            if a >= b:
                continue
            inner = np.asarray(self.recv_senders[l_act][a:b], dtype=np.int64)
            inner = inner[inner != j_act]
            if inner.size == 0:
                continue
            if kind is StatisticKind.TRANSITIVITY:
                pos = rs.positions(inner, np.full(inner.size, j_act, dtype=np.int64))
            else:
                pos = rs.positions(np.full(inner.size, j_act, dtype=np.int64), inner)
            np.add.at(expo, pos, we)


def simulate(config: SimConfig) -> EventSequence:
    """Draw one event sequence by exact thinning of the dyadic intensities."""
    rs = RiskSet(config.n_actors)
    rng = np.random.default_rng(config.seed)
    state = _HistoryState(config, rs)
    t_cur = 0.0
    target = config.n_events if config.n_events is not None else np.inf
    end_time = config.end_time if config.end_time is not None else np.inf
    has_closure = any(k in SECOND_ORDER for k in config.effects)

    bound_cur = float(np.exp(state.log_rates(t_cur, dominating=True)).sum())
    while state.n < target:
        if bound_cur <= 0.0:
            raise SimulationError(
                f"total intensity underflowed to zero at t={t_cur}; simulation stalls"
            )
        if not np.isfinite(bound_cur):
            raise SimulationError(
                f"total intensity overflowed at t={t_cur} after {state.n} events; "
                "the process is supercritical (weaken the effects or the baseline)"
            )
        t_prop = t_cur + rng.exponential(1.0 / bound_cur)
        if t_prop == t_cur:
            raise SimulationError(
                f"waiting times underflowed at t={t_cur} after {state.n} events; "
                "the process is supercritical (weaken the effects or the baseline)"
            )
        if t_prop > end_time:
            break
        lam_prop = np.exp(state.log_rates(t_prop))
        total_prop = float(lam_prop.sum())
        ratio = total_prop / bound_cur
        if ratio > 1.0 + 1e-9:
            raise SimulationError(
                "intensity exceeded its thinning envelope; a decay function is not nonincreasing"
            )
        if rng.uniform() <= ratio:
            p = lam_prop / total_prop
            d = int(rng.choice(len(rs), p=p / p.sum()))
            s, r = int(rs.senders[d]), int(rs.receivers[d])
            state.append(t_prop, s, r)
            t_cur = t_prop
            bound_cur = float(np.exp(state.log_rates(t_cur, dominating=True)).sum())
        else:
            t_cur = t_prop
            bound_cur = (
                float(np.exp(state.log_rates(t_cur, dominating=True)).sum())
                if has_closure
                else total_prop
            )

    n = state.n
    return EventSequence(
        state.times[:n].copy(),
        state.senders[:n].copy(),
        state.receivers[:n].copy(),
        config.n_actors,
        t0=0.0,
    )
