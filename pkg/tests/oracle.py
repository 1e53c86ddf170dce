"""Independent reference implementations used only by the tests.

Everything here recounts from scratch at every event time, straight from the
definitions, with no state carried across rows and none of the engine's
row-range machinery. Ages and window bounds use the same canonical float
expressions as the engine (t_row - t_event, and t_e - (t_row - t_e)), so
agreement is expected to be exact, not approximate.
"""

from __future__ import annotations

import math

import numpy as np

from remdecay.events import EventSequence, RiskSet
from remdecay.intervals import IntervalSpec
from remdecay.stats import StatisticKind, StatTensor


def rescan_stepwise_stats(
    seq: EventSequence, rs: RiskSet, kinds, spec: IntervalSpec
) -> StatTensor:
    """Full-history recount of the interval statistics at every event time."""
    kinds = tuple(StatisticKind(k) for k in kinds)
    times, S, R = seq.times, seq.senders, seq.receivers
    N, M, D, K = seq.n_actors, len(seq), len(rs), spec.size
    gamma = spec.gamma
    values = np.zeros((M, D, 1 + K * len(kinds)))
    values[:, :, 0] = 1.0
    dyad_class = S * N + R

    for m in range(M):
        t = times[m]
        ages = t - times[:m]
        in_h = ages <= gamma[-1]
        k_of = np.searchsorted(gamma, ages, side="left")
        # one table per row: counts by (sender, receiver, interval)
        sel = np.flatnonzero(in_h)
        tab = np.bincount(
            dyad_class[sel] * K + k_of[sel], minlength=N * N * K
        ).reshape(N, N, K)
        out_k = tab.sum(axis=1)  # events sent by actor a, per interval
        in_k = tab.sum(axis=0)  # events received by actor a, per interval

        col = 1
        for kind in kinds:
            if kind is StatisticKind.INERTIA:
                block = tab[rs.senders, rs.receivers, :]
            elif kind is StatisticKind.RECIPROCITY:
                block = tab[rs.receivers, rs.senders, :]
            elif kind is StatisticKind.INDEGREE_SENDER:
                block = in_k[rs.senders, :]
            elif kind is StatisticKind.OUTDEGREE_SENDER:
                block = out_k[rs.senders, :]
            elif kind is StatisticKind.INDEGREE_RECEIVER:
                block = in_k[rs.receivers, :]
            elif kind is StatisticKind.OUTDEGREE_RECEIVER:
                block = out_k[rs.receivers, :]
            else:
                block = _closure_row(seq, rs, kind, m, K, k_of, in_h)
            values[m, :, col : col + K] = block
            col += K

    return StatTensor(
        values=values,
        labels=("intercept",)
        + tuple(f"{k.value}_k{j + 1}" for k in kinds for j in range(K)),
        kinds=kinds,
        risk_set=rs,
        event_positions=rs.event_positions(seq),
        spec=spec,
    )


def _closure_row(seq, rs, kind, m, K, k_of, in_h):
    """Closure counts at row m: for every in-horizon outer event, scan the
    whole earlier history for inner partners inside the backward window."""
    times, S, R = seq.times, seq.senders, seq.receivers
    t = times[m]
    block = np.zeros((len(rs), K))
    for e in range(m):
        if not in_h[e]:
            continue
        te = times[e]
        lo = te - (t - te)
        prior = np.arange(m)
        window = (times[prior] >= lo) & (times[prior] < te)
        partner = R[prior] == S[e]  # inner receiver must equal outer sender
        for e_star in prior[window & partner]:
            if kind is StatisticKind.TRANSITIVITY:
                i, j = int(S[e_star]), int(R[e])
            else:  # cyclic: the pattern runs j -> l -> i before (i, j)
                i, j = int(R[e]), int(S[e_star])
            if i == j:
                continue
            block[rs.index_of(i, j), k_of[e]] += 1
    return block


def loop_stepwise_stats(seq, rs, kinds, spec):
    """Plain-loop recount for tiny cases: no numpy in the counting path."""
    kinds = tuple(StatisticKind(k) for k in kinds)
    times, S, R = seq.times, seq.senders, seq.receivers
    M, D, K = len(seq), len(rs), spec.size
    gamma = list(spec.gamma)
    values = np.zeros((M, D, 1 + K * len(kinds)))
    values[:, :, 0] = 1.0

    def bucket(age):
        if age > gamma[-1]:
            return None
        for k, g in enumerate(gamma):
            if age <= g:
                return k
        return None

    for m in range(M):
        t = times[m]
        for d in range(D):
            i, j = int(rs.senders[d]), int(rs.receivers[d])
            col = 1
            for kind in kinds:
                for e in range(m):
                    k = bucket(t - times[e])
                    if k is None:
                        continue
                    se, re = int(S[e]), int(R[e])
                    if kind is StatisticKind.INERTIA:
                        hit = (se, re) == (i, j)
                    elif kind is StatisticKind.RECIPROCITY:
                        hit = (se, re) == (j, i)
                    elif kind is StatisticKind.INDEGREE_SENDER:
                        hit = re == i
                    elif kind is StatisticKind.OUTDEGREE_SENDER:
                        hit = se == i
                    elif kind is StatisticKind.INDEGREE_RECEIVER:
                        hit = re == j
                    elif kind is StatisticKind.OUTDEGREE_RECEIVER:
                        hit = se == j
                    else:
                        hit = False
                        if kind is StatisticKind.TRANSITIVITY:
                            outer_ok = (re == j) and (se != i) and (se != j)
                        else:
                            outer_ok = (re == i) and (se != i) and (se != j)
                        if outer_ok:
                            lo = times[e] - (t - times[e])
                            inner = 0
                            for e2 in range(m):
                                if not (lo <= times[e2] < times[e]):
                                    continue
                                if kind is StatisticKind.TRANSITIVITY:
                                    if S[e2] == i and R[e2] == se:
                                        inner += 1
                                else:
                                    if S[e2] == j and R[e2] == se:
                                        inner += 1
                            values[m, d, col + k] += inner
                    if hit:
                        values[m, d, col + k] += 1
                col += K
    return values


def loop_continuous_stats(seq, rs, kinds, decay_per_kind):
    """Plain-loop continuous recount: each qualifying event adds decay(age)."""
    kinds = tuple(StatisticKind(k) for k in kinds)
    times, S, R = seq.times, seq.senders, seq.receivers
    M, D = len(seq), len(rs)
    values = np.zeros((M, D, 1 + len(kinds)))
    values[:, :, 0] = 1.0
    for m in range(M):
        t = times[m]
        for d in range(D):
            i, j = int(rs.senders[d]), int(rs.receivers[d])
            for c, kind in enumerate(kinds):
                decay = decay_per_kind[kind]
                total = 0.0
                for e in range(m):
                    age = t - times[e]
                    se, re = int(S[e]), int(R[e])
                    if kind is StatisticKind.INERTIA:
                        w = float((se, re) == (i, j))
                    elif kind is StatisticKind.RECIPROCITY:
                        w = float((se, re) == (j, i))
                    elif kind is StatisticKind.INDEGREE_SENDER:
                        w = float(re == i)
                    elif kind is StatisticKind.OUTDEGREE_SENDER:
                        w = float(se == i)
                    elif kind is StatisticKind.INDEGREE_RECEIVER:
                        w = float(re == j)
                    elif kind is StatisticKind.OUTDEGREE_RECEIVER:
                        w = float(se == j)
                    elif kind is StatisticKind.TRANSITIVITY:
                        w = 0.0
                        if re == j and se not in (i, j):
                            lo = times[e] - (t - times[e])
                            w = float(
                                sum(
                                    1
                                    for e2 in range(m)
                                    if lo <= times[e2] < times[e]
                                    and S[e2] == i
                                    and R[e2] == se
                                )
                            )
                    else:
                        w = 0.0
                        if re == i and se not in (i, j):
                            lo = times[e] - (t - times[e])
                            w = float(
                                sum(
                                    1
                                    for e2 in range(m)
                                    if lo <= times[e2] < times[e]
                                    and S[e2] == j
                                    and R[e2] == se
                                )
                            )
                    if w:
                        total += w * float(decay(age))
                values[m, d, 1 + c] = total
    return values


def loop_log_density(values, event_positions, times, t0, beta, first, last):
    """Per-event log factors summed over 1-based events first..last, by
    explicit loops over dyads (used by the predictive-density micro oracle)."""
    total = 0.0
    for j in range(first, last + 1):
        row = j - 1
        lam = [math.exp(float(np.dot(values[row, d], beta))) for d in range(values.shape[1])]
        dt = times[row] - (times[row - 1] if row > 0 else t0)
        total += math.log(lam[event_positions[row]]) - dt * sum(lam)
    return total


def random_sequence(rng: np.random.Generator, n_actors: int, n_events: int) -> EventSequence:
    gaps = rng.exponential(scale=float(rng.uniform(0.2, 2.0)), size=n_events)
    times = np.cumsum(gaps)
    senders = rng.integers(0, n_actors, size=n_events)
    shift = rng.integers(1, n_actors, size=n_events)
    receivers = (senders + shift) % n_actors
    return EventSequence(times, senders, receivers, n_actors)
