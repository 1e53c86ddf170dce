"""Batch front-end: simulate, generate interval bags, fit, weight, trend.

Every subcommand is a pure function of (config, input files, seed): rerunning
with the same inputs reproduces the data artifacts byte for byte (the timing
log is the one exception). Config comes from an optional flat JSON file, and
any field can be overridden by the flag of the same name.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from .bma import (
    ModelBag,
    WaicConfig,
    bic_weights,
    extract_trend,
    sample_posterior,
    waic_elpd,
    waic_model_rng,
    weights_from_elpds,
)
from .decay import decay_from_json
from .events import EventSequence, RiskSet, load_events
from .intervals import IntervalSpec, bag_from_json, bag_to_json, generate_interval_bag
from .likelihood import FitOptions, ModelFit, fit_mle
from .sim import SimConfig, simulate
from .stats import SECOND_ORDER, StatisticKind, build_triad_pairs, compute_stepwise_stats

__all__ = ["main", "cmd_simulate", "cmd_gen_intervals", "cmd_fit_bag", "cmd_trend", "cmd_report"]


class CliError(RuntimeError):
    pass


def _ensure_outputs(paths: list[str], force: bool) -> None:
    clashes = [p for p in paths if os.path.exists(p)]
    if clashes and not force:
        raise CliError(f"refusing to overwrite {clashes[0]} (use --force)")


def _write_json(path: str, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _echo_config(out_dir: str, cfg: dict, name: str = "config.json") -> None:
    _write_json(os.path.join(out_dir, name), cfg)


class _NdjsonLog:
    def __init__(self, path: str):
        self._f = open(path, "w")

    def write(self, **record) -> None:
        self._f.write(json.dumps(record, sort_keys=True) + "\n")
        self._f.flush()

    def close(self) -> None:
        self._f.close()


def _parse_kinds(text: str) -> tuple[StatisticKind, ...]:
    return tuple(StatisticKind(k.strip()) for k in text.split(",") if k.strip())


def _load_sequence(cfg: dict) -> EventSequence:
    return load_events(
        cfg["events"],
        tie_policy=cfg.get("tie_policy", "error"),
        tie_unit=cfg.get("tie_unit", 1.0),
    )


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(cfg: dict) -> dict:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    events_path = os.path.join(out, "events.csv")
    manifest_path = os.path.join(out, "manifest.json")
    _ensure_outputs([events_path, manifest_path], cfg.get("force", False))

    effects = {
        StatisticKind(k): decay_from_json(v) for k, v in cfg.get("effects", {}).items()
    }
    sim_cfg = SimConfig(
        n_actors=cfg["n_actors"],
        beta0=cfg["beta0"],
        effects=effects,
        horizon=cfg.get("horizon") if cfg.get("horizon") is not None else np.inf,
        n_events=cfg.get("n_events"),
        end_time=cfg.get("end_time"),
        seed=cfg.get("seed", 0),
    )
    seq = simulate(sim_cfg)
    seq.to_csv(events_path)
    _write_json(manifest_path, {"generator": sim_cfg.to_json_dict(), "n_events": len(seq)})
    _echo_config(out, cfg)
    return {"events": events_path, "manifest": manifest_path, "n_events": len(seq)}


# ---------------------------------------------------------------------------
# gen-intervals


def cmd_gen_intervals(cfg: dict) -> dict:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "intervals.json")
    _ensure_outputs([path], cfg.get("force", False))
    bag = generate_interval_bag(
        K_values=cfg.get("k_values", [3, 4, 5]),
        per_kind_count=cfg.get("per_kind_count", 250),
        min_size=cfg.get("min_size", 0.05),
        gamma_K=cfg["gamma_max"],
        rng_seed=cfg.get("seed", 0),
    )
    _write_json(path, {"gamma_max": cfg["gamma_max"], "specs": bag_to_json(bag)})
    _echo_config(out, cfg)
    return {"intervals": path, "n_specs": len(bag)}


# ---------------------------------------------------------------------------
# fit-bag

_WORKER: dict = {}


def _init_worker(payload: dict) -> None:
    seq = EventSequence(
        payload["times"],
        payload["senders"],
        payload["receivers"],
        payload["n_actors"],
        t0=payload["t0"],
    )
    rs = RiskSet(payload["n_actors"])
    _WORKER.clear()
    _WORKER.update(payload)
    _WORKER["seq"] = seq
    _WORKER["rs"] = rs
    _WORKER["pairs"] = {}


def _fit_one(task: tuple[int, dict]) -> dict:
    q, spec_dict = task
    seq: EventSequence = _WORKER["seq"]
    rs: RiskSet = _WORKER["rs"]
    kinds = tuple(StatisticKind(k) for k in _WORKER["kinds"])
    spec = IntervalSpec.from_json_dict(spec_dict)
    t_start = time.perf_counter()
    pairs = None
    if any(k in SECOND_ORDER for k in kinds):
        cache = _WORKER["pairs"]
        if spec.horizon not in cache:
            cache[spec.horizon] = build_triad_pairs(seq, rs, spec.horizon)
        pairs = cache[spec.horizon]
    stats = compute_stepwise_stats(seq, rs, kinds, spec, triad_pairs=pairs)
    fit = fit_mle(stats, seq, FitOptions(ridge=_WORKER["ridge"]))
    elpd = None
    if _WORKER["waic"] is not None and fit.converged:
        cfg = WaicConfig(**_WORKER["waic"])
        elpd, _, _ = waic_elpd(fit, stats, seq, cfg, rng=waic_model_rng(cfg.seed, q))
        fit.waic = elpd
    return {
        "model": q,
        "fit": fit.to_json_dict(),
        "elpd": elpd,
        "seconds": time.perf_counter() - t_start,
    }


def cmd_fit_bag(cfg: dict) -> dict:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    fits_path = os.path.join(out, "fits.json")
    weights_path = os.path.join(out, "weights.csv")
    log_path = os.path.join(out, "log.ndjson")
    _ensure_outputs([fits_path, weights_path], cfg.get("force", False))

    seq = _load_sequence(cfg)
    kinds = _parse_kinds(cfg.get("kinds", "inertia"))
    weighting = cfg.get("weighting", "bic")
    if weighting not in ("bic", "waic"):
        raise CliError(f"unknown weighting {weighting!r}")

    if cfg.get("intervals_file"):
        with open(cfg["intervals_file"]) as f:
            bag = bag_from_json(json.load(f)["specs"])
    else:
        if cfg.get("gamma_max") is None:
            raise CliError("need --intervals-file or --gamma-max to build a bag")
        bag = generate_interval_bag(
            K_values=cfg.get("k_values", [3, 4, 5]),
            per_kind_count=cfg.get("per_kind_count", 250),
            min_size=cfg.get("min_size", 0.05),
            gamma_K=cfg["gamma_max"],
            rng_seed=cfg.get("seed", 0),
        )
        _write_json(
            os.path.join(out, "intervals.json"),
            {"gamma_max": cfg["gamma_max"], "specs": bag_to_json(bag)},
        )

    waic_cfg = None
    if weighting == "waic":
        waic_cfg = {
            "burn_in": cfg.get("waic_burn_in")
            or WaicConfig.default_for(len(seq), seed=cfg.get("seed", 0)).burn_in,
            "ahead": cfg.get("waic_ahead", 1),
            "n_draws": cfg.get("waic_draws", 500),
            "seed": cfg.get("seed", 0),
        }

    payload = {
        "times": np.asarray(seq.times),
        "senders": np.asarray(seq.senders),
        "receivers": np.asarray(seq.receivers),
        "n_actors": seq.n_actors,
        "t0": seq.t0,
        "kinds": [k.value for k in kinds],
        "ridge": cfg.get("ridge", 0.0),
        "waic": waic_cfg,
    }
    tasks = [(q, spec.to_json_dict()) for q, spec in enumerate(bag)]
    jobs = int(cfg.get("jobs", 1))
    log = _NdjsonLog(log_path)
    log.write(event="start", n_models=len(bag), weighting=weighting, jobs=jobs)
    t0 = time.perf_counter()
    results: list[dict | None] = [None] * len(bag)
    if jobs <= 1:
        _init_worker(payload)
        for task in tasks:
            res = _fit_one(task)
            results[res["model"]] = res
            log.write(event="fit", model=res["model"], seconds=res["seconds"],
                      loglik=res["fit"]["loglik"], converged=res["fit"]["converged"],
                      elpd=res["elpd"])
    else:
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=jobs, initializer=_init_worker, initargs=(payload,)
        ) as pool:
            for res in pool.map(_fit_one, tasks, chunksize=max(1, len(tasks) // (8 * jobs))):
                results[res["model"]] = res
                log.write(event="fit", model=res["model"], seconds=res["seconds"],
                          loglik=res["fit"]["loglik"], converged=res["fit"]["converged"],
                          elpd=res["elpd"])
    wall = time.perf_counter() - t0

    fits = [ModelFit.from_json_dict(r["fit"]) for r in results]
    n_converged = sum(f.converged for f in fits)
    if n_converged == 0:
        log.close()
        raise CliError("no model converged; nothing to weight")
    if weighting == "bic":
        weights = bic_weights(fits)
    else:
        elpds = np.array(
            [r["elpd"] if r["elpd"] is not None else -np.inf for r in results]
        )
        weights = weights_from_elpds(fits, elpds)

    _write_json(fits_path, {"weighting": weighting, "fits": [f.to_json_dict() for f in fits]})
    with open(weights_path, "w") as f:
        f.write("model_id,kind_of_intervals,K,bic,waic,weight\n")
        for q, (fit, w) in enumerate(zip(fits, weights)):
            waic_s = repr(fit.waic) if fit.waic is not None else ""
            f.write(
                f"{q},{fit.spec.kind or 'custom'},{fit.spec.size},"
                f"{repr(fit.bic)},{waic_s},{repr(float(w))}\n"
            )
    log.write(event="done", seconds=wall, models_per_second=len(bag) / wall,
              n_converged=n_converged)
    log.close()
    _echo_config(out, cfg)
    return {
        "fits": fits_path,
        "weights": weights_path,
        "n_models": len(bag),
        "n_converged": n_converged,
        "seconds": wall,
    }


# ---------------------------------------------------------------------------
# trend


def _load_bag(out_or_fits: str) -> ModelBag:
    fits_path = (
        out_or_fits
        if out_or_fits.endswith(".json")
        else os.path.join(out_or_fits, "fits.json")
    )
    with open(fits_path) as f:
        doc = json.load(f)
    fits = [ModelFit.from_json_dict(d) for d in doc["fits"]]
    weighting = doc["weighting"]
    if weighting == "bic":
        weights = bic_weights(fits)
    else:
        elpds = np.array([f.waic if f.waic is not None else -np.inf for f in fits])
        weights = weights_from_elpds(fits, elpds)
    return ModelBag(fits=fits, weights=weights, weighting_kind=weighting)


def cmd_trend(cfg: dict) -> dict:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    csv_path = os.path.join(out, "trend.csv")
    json_path = os.path.join(out, "trend.json")
    _ensure_outputs([csv_path, json_path], cfg.get("force", False))

    bag = _load_bag(cfg.get("fits") or cfg["out"])
    draws = sample_posterior(bag, cfg.get("n_draws", 10000), seed=cfg.get("seed", 0))
    trend = extract_trend(
        draws,
        bag,
        grid_size=cfg.get("grid_size", 100),
        gamma_max=cfg.get("gamma_max"),
        level=cfg.get("level", 0.95),
    )
    trend.to_csv(csv_path)
    _write_json(json_path, trend.to_json_dict())
    _echo_config(out, cfg, name="trend_config.json")
    return {"trend_csv": csv_path, "trend_json": json_path}


# ---------------------------------------------------------------------------
# report


def cmd_report(cfg: dict) -> dict:
    out = cfg["out"]
    report_path = os.path.join(out, "report.md")
    _ensure_outputs([report_path], cfg.get("force", False))
    bag = _load_bag(cfg.get("fits") or out)
    order = np.argsort(-bag.weights)
    lines = ["# Model bag report", ""]
    lines.append(f"- models: {len(bag.fits)} ({sum(f.converged for f in bag.fits)} converged)")
    lines.append(f"- weighting: {bag.weighting_kind}")
    lines.append(f"- max weight: {bag.weights.max():.4f}")
    lines.append("")
    lines.append("| rank | model | kind | K | BIC | elpd | weight |")
    lines.append("|------|-------|------|---|-----|------|--------|")
    for rank, q in enumerate(order[:10], start=1):
        f = bag.fits[q]
        elpd = f"{f.waic:.2f}" if f.waic is not None else "-"
        lines.append(
            f"| {rank} | {q} | {f.spec.kind or 'custom'} | {f.spec.size} "
            f"| {f.bic:.2f} | {elpd} | {bag.weights[q]:.4f} |"
        )
    trend_json = os.path.join(out, "trend.json")
    if os.path.exists(trend_json):
        with open(trend_json) as fh:
            trend = json.load(fh)
        mode = trend["intercept"]["mode"]
        lines.append("")
        lines.append(
            f"- intercept posterior mode: {mode:.4f} "
            f"(baseline rate {np.exp(mode):.6f} events per time unit per dyad)"
        )
    with open(report_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return {"report": report_path}


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON config; flags override its fields")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--force", action="store_true", default=None,
                   help="overwrite existing outputs")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="remdecay", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic event sequence")
    _add_common(p)
    p.add_argument("--n-actors", dest="n_actors", type=int)
    p.add_argument("--beta0", type=float)
    p.add_argument("--effects", help="JSON map kind -> decay spec")
    p.add_argument("--horizon", type=float)
    p.add_argument("--n-events", dest="n_events", type=int)
    p.add_argument("--end-time", dest="end_time", type=float)

    p = sub.add_parser("gen-intervals", help="generate a bag of interval specs")
    _add_common(p)
    p.add_argument("--k-values", dest="k_values")
    p.add_argument("--per-kind-count", dest="per_kind_count", type=int)
    p.add_argument("--min-size", dest="min_size", type=float)
    p.add_argument("--gamma-max", dest="gamma_max", type=float)

    p = sub.add_parser("fit-bag", help="fit every stepwise model and weight the bag")
    _add_common(p)
    p.add_argument("--events", help="input events.csv")
    p.add_argument("--intervals-file", dest="intervals_file")
    p.add_argument("--k-values", dest="k_values")
    p.add_argument("--per-kind-count", dest="per_kind_count", type=int)
    p.add_argument("--min-size", dest="min_size", type=float)
    p.add_argument("--gamma-max", dest="gamma_max", type=float)
    p.add_argument("--kinds", help="comma-separated statistic kinds")
    p.add_argument("--weighting", choices=["bic", "waic"])
    p.add_argument("--waic-burn-in", dest="waic_burn_in", type=int)
    p.add_argument("--waic-ahead", dest="waic_ahead", type=int)
    p.add_argument("--waic-draws", dest="waic_draws", type=int)
    p.add_argument("--ridge", type=float)
    p.add_argument("--tie-policy", dest="tie_policy", choices=["error", "spread"])
    p.add_argument("--tie-unit", dest="tie_unit", type=float)
    p.add_argument("--jobs", type=int)

    p = sub.add_parser("trend", help="sample the averaged posterior and extract the decay trend")
    _add_common(p)
    p.add_argument("--fits", help="fits.json from fit-bag (or its directory)")
    p.add_argument("--n-draws", dest="n_draws", type=int)
    p.add_argument("--grid-size", dest="grid_size", type=int)
    p.add_argument("--gamma-max", dest="gamma_max", type=float)
    p.add_argument("--level", type=float)

    p = sub.add_parser("report", help="summarize a fitted bag")
    _add_common(p)
    p.add_argument("--fits")
    return ap


def _merge_config(args: argparse.Namespace) -> dict:
    cfg: dict = {}
    if args.config:
        with open(args.config) as f:
            cfg.update(json.load(f))
    for key, val in vars(args).items():
        if key in ("config", "command") or val is None:
            continue
        cfg[key] = val
    if "k_values" in cfg and isinstance(cfg["k_values"], str):
        cfg["k_values"] = [int(k) for k in cfg["k_values"].split(",")]
    if "effects" in cfg and isinstance(cfg["effects"], str):
        cfg["effects"] = json.loads(cfg["effects"])
    if not cfg.get("out"):
        raise CliError("an output directory is required (--out or config 'out')")
    return cfg


_COMMANDS = {
    "simulate": cmd_simulate,
    "gen-intervals": cmd_gen_intervals,
    "fit-bag": cmd_fit_bag,
    "trend": cmd_trend,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _merge_config(args)
        summary = _COMMANDS[args.command](cfg)
    except (CliError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
