"""Command-line entry point: ``qrmexec {simulate,impact,train,evaluate,sweep}``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import sys
import traceback
from dataclasses import replace
from pathlib import Path

import numpy as np

from .benchmarks import parse_policy
from .config import ConfigError, RunConfig, load_config, save_config
from .ddqn import DdqnPolicy, load_agent, q_surface, save_agent, train
from .evaluation import (
    compare,
    episode_analytics,
    evaluate,
    robustness_sweep,
    write_records_csv,
)
from .impact import ImpactExperimentSpec, depletion_response, impact_heatmap, repeated_depletion_path
from .io import emitted_since, run_manifest, snapshot, write_csv
from .qrm import sample_invariant_book, simulate_until
from .rng import BufferedUniform, stream


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    return cfg


def cmd_simulate(cfg: RunConfig, out: Path) -> None:
    params = cfg.params()
    rng = BufferedUniform(stream(cfg.seed, "simulate"))
    state = sample_invariant_book(params, rng)
    _, log = simulate_until(state, cfg.experiment.simulate.seconds, params, rng)
    write_csv(out / "events.csv", ["clock", "kind", "level", "size", "mid", "ref"],
              ((r.clock, r.kind.name.lower(), r.level, r.size, r.mid, r.ref) for r in log))
    print(f"{len(log)} events over {cfg.experiment.simulate.seconds:g} s -> {out / 'events.csv'}")


def cmd_impact(cfg: RunConfig, out: Path) -> None:
    params = cfg.params()
    im = cfg.experiment.impact
    spec = ImpactExperimentSpec(im.thetas, im.theta_reinits, im.n_sims, im.horizon,
                                im.mo_fraction, im.conditioning, None, im.lag)
    if len(spec.thetas) == 1 and len(spec.theta_reinits) == 1:
        p = replace(params, theta=spec.thetas[0], theta_reinit=spec.theta_reinits[0])
        res = depletion_response(spec, p, BufferedUniform(stream(cfg.seed, "impact")))
        write_csv(out / "impact_path.csv", ["event", "mean_mid_change", "se"],
                  zip(res.grid.tolist(), res.mean.tolist(), res.se.tolist()))
        print(f"jump {res.jump_mean:.6f} (se {res.jump_se:.6f}); next move {res.next_mean:.6f} "
              f"(se {res.next_se:.6f}); used {res.n_used}, aborted {res.n_aborted}")
    else:
        hm = impact_heatmap(spec, params, seed=cfg.seed)
        rows = []
        for i, th in enumerate(hm.thetas):
            for j, tr in enumerate(hm.theta_reinits):
                rows.append((th, tr, hm.short_mean[i, j], hm.short_se[i, j],
                             hm.long_mean[i, j], hm.long_se[i, j]))
        write_csv(out / "impact_heatmap.csv",
                  ["theta", "theta_reinit", "short_mean", "short_se", "long_mean", "long_se"], rows)
        print(f"heatmap {len(hm.thetas)}x{len(hm.theta_reinits)} -> {out / 'impact_heatmap.csv'}")
    if im.repeat_interval > 0:
        res = repeated_depletion_path(im.repeat_interval, im.repeat_trades, params,
                                      BufferedUniform(stream(cfg.seed, "impact-repeated")),
                                      n_sims=im.n_sims)
        write_csv(out / "impact_repeated.csv", ["time", "mean_mid_change", "se"],
                  zip(res.grid.tolist(), res.mean.tolist(), res.se.tolist()))


def cmd_train(cfg: RunConfig, out: Path) -> None:
    params = cfg.params()

    def progress(ep, r):
        done = r.episode_rewards[max(0, ep - 1000):ep]
        print(f"episode {ep}: mean reward (last 1000) {np.nanmean(done):+.4f}, "
              f"epsilon {r.meta.get('epsilon', float('nan')):.3f}, {r.seconds:.0f} s", flush=True)

    res = train(cfg.train, cfg.env, params, seed=cfg.seed, progress=progress,
                progress_every=max(1, cfg.train.episodes // 20))
    save_agent(out / "checkpoint.qnet", res.net, cfg.env, res.stats,
               {"seed": cfg.seed, "episodes": cfg.train.episodes})
    write_csv(out / "episode_rewards.csv", ["episode", "reward"],
              enumerate(res.episode_rewards.tolist()))
    write_csv(out / "td_loss.csv", ["update", "loss"], enumerate(res.losses.tolist()))
    surf = q_surface(res.net, res.stats, cfg.env, params.tick, p0=params.initial_ref_price)
    rows = []
    for a in range(surf.values.shape[0]):
        for i, t in enumerate(surf.times):
            for j, x in enumerate(surf.inventories):
                rows.append((cfg.env.action_set[a], t, x, surf.values[a, i, j]))
    write_csv(out / "q_surface.csv", ["action", "time", "inventory", "q"], rows)
    print(f"trained {cfg.train.episodes} episodes in {res.seconds:.0f} s "
          f"({res.n_updates} updates, {res.n_aborted} aborted)")


def _policies(cfg: RunConfig, specs):
    out, stats = [], None
    for text in specs:
        if text.startswith("ddqn"):
            path = text.split(":", 1)[1] if ":" in text else cfg.experiment.evaluate.checkpoint
            if not path:
                raise ConfigError(["ddqn policy needs a checkpoint (ddqn:PATH or "
                                   "[experiment.evaluate] checkpoint)"])
            net, stats, _ = load_agent(path, cfg.env)
            out.append(DdqnPolicy(net, cfg.env.action_set))
        else:
            try:
                out.append(parse_policy(text))
            except ValueError as exc:
                raise ConfigError([str(exc)]) from exc
    return out, stats


def cmd_evaluate(cfg: RunConfig, out: Path, policies=None) -> None:
    params = cfg.params()
    pols, stats = _policies(cfg, policies or cfg.experiment.evaluate.policies)
    n = cfg.experiment.evaluate.episodes
    reports = []
    for pol in pols:
        rep = evaluate(pol, cfg.env, params, n, seed=cfg.seed, stats=stats)
        reports.append(rep)
        tag = rep.name.replace("@", "_").replace("%", "pct")
        write_records_csv(out / f"episodes_{tag}.csv", rep.records)
        an = episode_analytics(rep.records, cfg.env.n_intervals)
        write_csv(out / f"lengths_{tag}.csv", ["length", "count"], an.length_hist.items())
        write_csv(out / f"gaps_{tag}.csv", ["length", "episodes", "mean_gap", "var_gap"],
                  ((g.length, g.count, g.mean, g.var) for g in an.gaps.values()))
        write_csv(out / f"trajectory_{tag}.csv", ["step", "mean_cumulative_shares"],
                  enumerate(an.mean_trajectory.tolist()))
        hist, edges = np.histogram(rep.rewards, bins=50)
        write_csv(out / f"reward_hist_{tag}.csv", ["bin_left", "bin_right", "count"],
                  zip(edges[:-1].tolist(), edges[1:].tolist(), hist.tolist()))
    report = compare(reports)
    rows = report.rows()
    write_csv(out / "report.csv", list(rows[0]), (list(r.values()) for r in rows))
    (out / "significance.txt").write_text(report.text() + "\n", encoding="utf-8")
    print(report.text())


def cmd_sweep(cfg: RunConfig, out: Path, policy=None) -> None:
    params = cfg.params()
    pols, stats = _policies(cfg, [policy or "ddqn"])
    sw = cfg.experiment.sweep
    res = robustness_sweep(pols[0], sw.thetas, sw.theta_reinits, cfg.env, params, sw.episodes,
                           seed=cfg.seed, stats=stats)
    res.write_csv(out / "sweep.csv")
    with np.printoptions(precision=4, suppress=True):
        print(res.relative)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qrmexec", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("simulate", "impact", "train", "evaluate", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML run configuration (defaults when omitted)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="override the output directory")
        if name == "evaluate":
            p.add_argument("--policy", action="append",
                           help="twap | popv:i:f | ddqn[:checkpoint]; repeatable")
        if name == "sweep":
            p.add_argument("--policy", help="ddqn[:checkpoint] (default: configured checkpoint)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        before = snapshot(out)
        if args.command == "evaluate":
            cmd_evaluate(cfg, out, args.policy)
        elif args.command == "sweep":
            cmd_sweep(cfg, out, args.policy)
        else:
            {"simulate": cmd_simulate, "impact": cmd_impact, "train": cmd_train}[args.command](cfg, out)
        save_config(cfg, out / "config.resolved.toml")
        cmd = " ".join(["qrmexec", *(argv if argv is not None else sys.argv[1:])])
        run_manifest(cfg, out, command=cmd, files=emitted_since(out, before))
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        traceback.print_exc()
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
