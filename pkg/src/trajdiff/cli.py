"""Batch front end.

Subcommands: gen-scenes, collect, train, eval, sweep-rho, plot, run.
``--config FILE`` loads JSON defaults, ``--set section.key=value`` overrides
individual keys, and a few common flags shadow frequently used keys.

Metrics go to a CSV file (fixed column order, deterministic formatting) and
a one-line summary to stdout; wall-clock timing is diagnostic only and goes
to stderr so repeated runs with the same seeds are byte-identical.

Exit codes: 0 success, 2 config error, 3 data error, 4 runtime divergence.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .config import (ExperimentConfig, apply_overrides, config_to_dict,
                     load_config_file)
from .costs import GuidanceConfig, base_rho
from .data import WindowSampler, collect_demos
from .denoiser import NetDims, init_params
from .errors import ConfigError, DataError, DivergenceError
from .render import render_episode_svg, render_frontier_svg
from .rollout import Policy, aggregate, evaluate, EpisodeTrace
from .sampling import SamplerConfig
from .scenes import TASKS, generate_scene
from .schedule import make_schedule
from .taskspec import TaskSpecError, parse_task_spec
from .training import train

CSV_COLUMNS = ("task", "scene_seed", "episode_seed", "success", "collided",
               "min_clearance", "path_length", "smoothness", "plans_issued")
SWEEP_COLUMNS = ("rho_multiplier", "rho", "episodes", "collision_rate",
                 "success_rate", "mean_min_clearance", "mean_smoothness")
RHO_GRID = (0.0, 0.5, 1.0, 2.0, 5.0, 10.0)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config_file(args.config) if args.config else ExperimentConfig()
    if args.set:
        cfg = apply_overrides(cfg, args.set)
    return cfg


def _dims_from_cfg(cfg: ExperimentConfig) -> NetDims:
    dn, sb = cfg.denoiser, cfg.sandbox
    return NetDims(cloud_dim=2, state_dim=3, obs_horizon=sb.obs_horizon,
                   horizon=sb.horizon, action_dim=2,
                   encoder_hidden=dn.encoder_hidden, feature_dim=dn.feature_dim,
                   film_hidden=dn.film_hidden, time_embed_dim=dn.time_embed_dim,
                   trunk_widths=dn.trunk_widths)


def _schedule_from_cfg(cfg: ExperimentConfig):
    sc = cfg.schedule
    return make_schedule(sc.steps, sc.kind, sc.beta_start, sc.beta_end)


def cmd_gen_scenes(args) -> int:
    _load_cfg(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        scene = generate_scene(args.task, args.seed_base + i)
        fileio.save_scene(str(out / f"scene_{args.seed_base + i:05d}.json"), scene)
    print(f"wrote {args.count} {args.task} scenes to {out}")
    return 0


def cmd_collect(args) -> int:
    cfg = _load_cfg(args)
    sb = cfg.sandbox
    task = args.task or sb.task
    episodes = args.episodes or sb.demo_episodes
    dataset = collect_demos(task=task, episodes=episodes, seed_base=args.seed_base,
                            n_points=sb.n_points, expert_steps=sb.expert_steps,
                            jitter=sb.expert_jitter, horizon=sb.horizon,
                            obs_horizon=sb.obs_horizon, exec_horizon=sb.exec_horizon)
    fileio.save_dataset(args.out, dataset)
    print(f"collected {episodes} {task} demos "
          f"({dataset.episodes[0].states.shape[0]} steps each) -> {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    dataset = fileio.load_dataset(args.dataset)
    schedule = _schedule_from_cfg(cfg)
    dims = _dims_from_cfg(cfg)
    prediction_type = args.prediction_type or cfg.denoiser.prediction_type
    steps = args.steps or cfg.training.steps
    rng = np.random.default_rng(np.random.SeedSequence([0x7EA1, cfg.seed]))
    params = init_params(dims, rng, prediction_type=prediction_type,
                         encoder_mode=cfg.denoiser.encoder_mode)
    sampler = WindowSampler(dataset, obs_horizon=dims.obs_horizon,
                            horizon=dims.horizon)
    losses = train(params, schedule, sampler, steps=steps,
                   batch_size=cfg.training.batch_size, rng=rng,
                   lr=cfg.training.lr, log_every=cfg.training.log_every)
    policy = Policy(params=params, schedule=schedule, stats=dataset.stats)
    fileio.save_checkpoint(args.out, policy, cfg.schedule.beta_start,
                           cfg.schedule.beta_end)
    tail = losses[-min(500, len(losses)):].mean()
    print(f"trained {prediction_type} policy for {steps} steps, "
          f"trailing loss {tail:.4f} -> {args.out}")
    return 0


def _episode_scenes(args, cfg) -> list:
    if args.scenes:
        paths = sorted(Path(args.scenes).glob("*.json"))
        if not paths:
            raise DataError(f"no scene files in {args.scenes}")
        return [fileio.load_scene(str(p)) for p in paths]
    task = args.task or cfg.sandbox.task
    return [generate_scene(task, args.seed_base + i) for i in range(args.episodes)]


def _write_rows(path: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            res = r.result
            w.writerow([_fmt(v) for v in (
                r.task, r.scene_seed, r.episode_seed, res.success, res.collided,
                res.min_clearance, res.path_length, res.smoothness,
                res.plans_issued)])


def _summary_line(agg: dict) -> str:
    keys = ("episodes", "success_rate", "collision_rate", "mean_min_clearance",
            "mean_path_length", "mean_smoothness", "mean_plans")
    return " ".join(f"{k}={_fmt(agg[k])}" for k in keys)


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    policy, _ = fileio.load_checkpoint(args.checkpoint)
    scenes = _episode_scenes(args, cfg)
    seeds = [args.seed_base + i for i in range(len(scenes))]
    guidance = cfg.guidance
    if args.guidance_mode:
        guidance = dataclasses.replace(guidance, mode=args.guidance_mode)
    if args.rho is not None:
        guidance = dataclasses.replace(guidance, rho=args.rho)
    sampler_cfg = cfg.sampler
    if args.sampler:
        sampler_cfg = dataclasses.replace(sampler_cfg, sampler=args.sampler)
    if args.sampler_steps:
        sampler_cfg = dataclasses.replace(sampler_cfg, steps=args.sampler_steps)
    traces: list[EpisodeTrace] | None = [] if args.traces_dir else None
    rows = evaluate(policy, scenes, guidance, sampler_cfg, seeds,
                    n_points=cfg.sandbox.n_points, max_plans=cfg.sandbox.max_plans,
                    success_eps_frac=cfg.sandbox.success_eps_frac,
                    exec_horizon=cfg.sandbox.exec_horizon,
                    skip_last=args.skip_last, traces=traces)
    if args.out:
        _write_rows(args.out, rows)
    if traces is not None:
        tdir = Path(args.traces_dir)
        tdir.mkdir(parents=True, exist_ok=True)
        for row, trace in zip(rows, traces):
            payload = {
                "scene": fileio.scene_to_dict(scenes[rows.index(row)]),
                "executed": np.asarray(trace.executed).tolist(),
                "plans": [p.tolist() for p in trace.plans],
                "result": {"success": row.result.success,
                           "collided": row.result.collided},
            }
            with open(tdir / f"episode_{row.episode_seed:05d}.json", "w") as fh:
                json.dump(payload, fh)
    agg = aggregate(rows)
    print(_summary_line(agg))
    print(f"timing: mean wall_ms_per_plan={agg['mean_wall_ms_per_plan']:.1f}",
          file=sys.stderr)
    return 0


def cmd_sweep_rho(args) -> int:
    cfg = _load_cfg(args)
    policy, _ = fileio.load_checkpoint(args.checkpoint)
    task = args.task or "reach_around"
    scenes = [generate_scene(task, args.seed_base + i) for i in range(args.episodes)]
    seeds = [args.seed_base + i for i in range(len(scenes))]
    q_ref = float(np.mean([s.q_star for s in scenes]))
    rho1 = base_rho(policy.stats, q_ref, policy.schedule.K, cfg.guidance.coord_mask)
    multipliers = (tuple(float(x) for x in args.rhos.split(","))
                   if args.rhos else RHO_GRID)
    out_rows = []
    for mult in multipliers:
        guidance = dataclasses.replace(cfg.guidance, mode="clean_estimate",
                                       rho=mult * rho1)
        rows = evaluate(policy, scenes, guidance, cfg.sampler, seeds,
                        n_points=cfg.sandbox.n_points,
                        max_plans=cfg.sandbox.max_plans,
                        success_eps_frac=cfg.sandbox.success_eps_frac,
                        exec_horizon=cfg.sandbox.exec_horizon)
        agg = aggregate(rows)
        out_rows.append({"rho_multiplier": mult, "rho": mult * rho1,
                         "episodes": agg["episodes"],
                         "collision_rate": agg["collision_rate"],
                         "success_rate": agg["success_rate"],
                         "mean_min_clearance": agg["mean_min_clearance"],
                         "mean_smoothness": agg["mean_smoothness"]})
        print(f"rho x{mult:g} ({mult * rho1:.4g}): "
              f"collision_rate={agg['collision_rate']:.2f} "
              f"clearance={agg['mean_min_clearance']:.4f} "
              f"smoothness={agg['mean_smoothness']:.5f}")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for row in out_rows:
            w.writerow([_fmt(row[c]) for c in SWEEP_COLUMNS])
    print(f"sweep written to {args.out}")
    return 0


def cmd_plot(args) -> int:
    if bool(args.episode) == bool(args.sweep):
        raise ConfigError("plot needs exactly one of --episode or --sweep")
    if args.episode:
        try:
            with open(args.episode) as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise DataError(f"cannot read episode trace {args.episode}: {err}")
        scene = fileio.scene_from_dict(payload["scene"])
        svg = render_episode_svg(scene, np.asarray(payload["executed"]),
                                 [np.asarray(p) for p in payload["plans"]])
    else:
        try:
            with open(args.sweep, newline="") as fh:
                rows = list(csv.DictReader(fh))
        except OSError as err:
            raise DataError(f"cannot read sweep file {args.sweep}: {err}")
        svg = render_frontier_svg(rows, label_key="rho_multiplier")
    with open(args.out, "w") as fh:
        fh.write(svg)
        fh.write("\n")
    print(f"wrote {args.out}")
    return 0


def cmd_run(args) -> int:
    cfg = _load_cfg(args)
    try:
        spec = parse_task_spec(args.instruction)
    except TaskSpecError as err:
        raise ConfigError(f"bad instruction: {err}")
    ckpt = Path(args.checkpoints_dir) / f"{spec.policy_name}.ckpt"
    if not ckpt.exists():
        raise DataError(f"no checkpoint for policy {spec.policy_name!r} at {ckpt}")
    policy, _ = fileio.load_checkpoint(str(ckpt))
    scene = fileio.load_scene(args.scene)
    known = {o.label for o in scene.objects}
    missing = (set(spec.target_labels) | set(spec.obstacle_labels)) - known
    if missing:
        raise DataError(f"scene has no objects labeled {sorted(missing)}")
    scene = dataclasses.replace(scene, target_labels=spec.target_labels,
                                obstacle_labels=spec.obstacle_labels)
    guidance = cfg.guidance
    if spec.obstacle_labels and guidance.mode == "none":
        guidance = dataclasses.replace(guidance, mode="clean_estimate")
    if args.rho is not None:
        guidance = dataclasses.replace(guidance, rho=args.rho)
    rows = evaluate(policy, [scene], guidance, cfg.sampler, [cfg.seed],
                    n_points=cfg.sandbox.n_points, max_plans=cfg.sandbox.max_plans,
                    success_eps_frac=cfg.sandbox.success_eps_frac,
                    exec_horizon=cfg.sandbox.exec_horizon)
    res = rows[0].result
    print(f"policy={spec.policy_name} success={_fmt(res.success)} "
          f"collided={_fmt(res.collided)} min_clearance={_fmt(res.min_clearance)} "
          f"plans={res.plans_issued}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="trajdiff",
                                  description="trajectory diffusion sandbox")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key")

    p = sub.add_parser("gen-scenes", help="write scene spec files")
    common(p)
    p.add_argument("--task", choices=TASKS, required=True)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_scenes)

    p = sub.add_parser("collect", help="collect scripted demonstrations")
    common(p)
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", help="train a denoiser on a demo dataset")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--prediction-type", choices=("epsilon", "sample"))
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a policy over seeded episodes")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scenes", help="directory of scene JSON files")
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--guidance-mode",
                   choices=("none", "clean_estimate", "noisy_baseline"))
    p.add_argument("--rho", type=float)
    p.add_argument("--sampler", choices=("ddpm", "ddim"))
    p.add_argument("--sampler-steps", type=int)
    p.add_argument("--skip-last", action="store_true",
                   help="omit guidance on the final denoising step")
    p.add_argument("--out", help="metrics CSV path")
    p.add_argument("--traces-dir", help="dump per-episode traces for plotting")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-rho", help="gradient-scale sweep")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--episodes", type=int, default=24)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--rhos", help="comma-separated multipliers of the base scale")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_rho)

    p = sub.add_parser("plot", help="render an episode trace or sweep frontier")
    common(p)
    p.add_argument("--episode", help="episode trace JSON")
    p.add_argument("--sweep", help="sweep CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("run", help="execute an instruction on a scene")
    common(p)
    p.add_argument("instruction",
                   help='e.g. "use reach on target avoid obstacle"')
    p.add_argument("--scene", required=True)
    p.add_argument("--checkpoints-dir", required=True)
    p.add_argument("--rho", type=float)
    p.set_defaults(func=cmd_run)
    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"data error: {err}", file=sys.stderr)
        return 3
    except DivergenceError as err:
        print(f"divergence: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
