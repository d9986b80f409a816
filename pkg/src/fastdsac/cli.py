"""Command-line entry point: ``train``, ``eval``, ``heatmap``, ``gradcheck``.

Exit codes: 0 success, 2 configuration error, 3 numerical fault,
4 corrupt checkpoint, 5 gradient check failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import load_config
from .envs import make_env
from .errors import CheckpointError, ConfigError, NumericalFault
from .gradcheck import run_gradcheck
from .trainer import METRIC_FIELDS, Trainer, evaluate, record_weights

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECKPOINT, EXIT_GRADCHECK = 0, 2, 3, 4, 5


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def csv_line(values) -> str:
    return ",".join(_fmt(v) for v in values) + "\n"


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


# -- train ----------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    trainer = Trainer(cfg.env, cfg.env_params, cfg.train, cfg.dem, cfg.critic)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(cfg.dumps())
    interval = cfg.train.eval_interval
    evals = None
    with open(out / "metrics.csv", "w", newline="") as metrics:
        metrics.write(",".join(METRIC_FIELDS) + "\n")
        if interval > 0:
            evals = open(out / "evals.csv", "w", newline="")
            evals.write("step,eval_return_mean\n")
        try:
            for _ in range(cfg.train.total_steps):
                try:
                    m = trainer.train_step()
                except NumericalFault as exc:
                    where = f" (parameter/sample: {exc.where})" if exc.where is not None else ""
                    _err(f"numerical fault at step {trainer.step_count + 1}: {exc}{where}")
                    return EXIT_NUMERIC
                metrics.write(csv_line(m.as_row()))
                if interval > 0 and m.step % interval == 0:
                    mean, _ = evaluate(
                        trainer.actor, trainer.make_eval_env, cfg.train.eval_episodes,
                        cfg.train.seed + m.step,
                    )
                    evals.write(csv_line([m.step, mean]))
                    checkpoint.save(
                        out / "checkpoints" / f"step_{m.step:08d}.ckpt",
                        checkpoint.from_trainer(trainer, cfg),
                    )
        finally:
            if evals is not None:
                evals.close()
    checkpoint.save(out / "checkpoints" / "final.ckpt", checkpoint.from_trainer(trainer, cfg))
    return EXIT_OK


# -- eval / heatmap ----------------------------------------------------------------------


def _env_for(ckpt, env_name):
    cfg = ckpt.run_config()
    if env_name is None or env_name == cfg.env:
        name, params = cfg.env, cfg.env_params
    else:
        name, params = env_name, None
    probe = make_env(name, params, 0)  # raises ConfigError for unknown names
    return name, params, probe.spec


def _check_dims(actor, spec):
    if (actor.obs_dim, actor.action_dim) != (spec.obs_dim, spec.action_dim):
        raise ConfigError(
            f"checkpoint actor is {actor.obs_dim}->{actor.action_dim}, environment "
            f"{spec.name} is {spec.obs_dim}->{spec.action_dim}"
        )


def cmd_eval(args) -> int:
    ckpt = checkpoint.load(args.checkpoint)
    actor = checkpoint.restore_actor(ckpt)
    name, params, spec = _env_for(ckpt, args.env)
    _check_dims(actor, spec)
    if args.episodes < 1:
        raise ConfigError("--episodes must be >= 1")
    mean, returns = evaluate(actor, lambda s: make_env(name, params, s), args.episodes, args.seed)
    print(f"mean={mean!r} min={min(returns)!r} max={max(returns)!r} episodes={len(returns)}")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    ckpt = checkpoint.load(args.checkpoint)
    actor = checkpoint.restore_actor(ckpt)
    if not actor.dem_enabled:
        _err("heatmap needs a checkpoint trained with the modulated actor (dem_enabled=true); "
             "the standard actor has no exploration weights")
        return EXIT_CONFIG
    name, params, spec = _env_for(ckpt, args.env)
    _check_dims(actor, spec)
    if args.tau is not None and not args.tau > 0:
        raise ConfigError("--tau must be positive")
    steps = args.episode_len or spec.max_episode_steps
    trace = record_weights(actor, make_env(name, params, args.seed), steps, args.tau)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        f.write(",".join(f"a{i}" for i in range(trace.shape[1])) + "\n")
        for row in trace:
            f.write(csv_line(row))
    return EXIT_OK


# -- gradcheck ----------------------------------------------------------------------------


def cmd_gradcheck(args) -> int:
    if args.instances < 1:
        raise ConfigError("--instances must be >= 1")
    summary = run_gradcheck(args.seed, args.instances, args.h, args.tol, args.order)
    for name, rep in summary.reports.items():
        verdict = "ok" if rep.passed else "FAIL"
        print(
            f"{name}: max_rel_error={rep.max_rel_error:.3e} mean_rel_error={rep.mean_rel_error:.3e} "
            f"checked={rep.n_checked} skipped={rep.n_skipped} instances={summary.instances} "
            f"worst={rep.worst} {verdict}"
        )
    if not summary.passed:
        _err(f"gradient check failed: {', '.join(summary.failing)}")
        return EXIT_GRADCHECK
    return EXIT_OK


# -- dispatch --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fastdsac", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run the trainer and write metrics/checkpoints")
    t.add_argument("--config", help="JSON config file (sections env/run/train/dem/critic)")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value; repeatable")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="deterministic evaluation of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--env", help="environment name (default: the one in the checkpoint)")
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_eval)

    h = sub.add_parser("heatmap", help="export exploration weights along a rollout as CSV")
    h.add_argument("--checkpoint", required=True)
    h.add_argument("--env")
    h.add_argument("--episode-len", type=int, default=None)
    h.add_argument("--out", required=True)
    h.add_argument("--tau", type=float, default=None, help="temperature override")
    h.add_argument("--seed", type=int, default=0)
    h.set_defaults(func=cmd_heatmap)

    g = sub.add_parser("gradcheck", help="finite-difference audit of all gradient paths")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--instances", type=int, default=100)
    g.add_argument("--h", type=float, default=1e-4)
    g.add_argument("--order", type=int, choices=(2, 4), default=4,
                   help="central-difference stencil order")
    g.add_argument("--tol", type=float, default=1e-4)
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except CheckpointError as exc:
        _err(f"checkpoint error: {exc}")
        return EXIT_CHECKPOINT
    except NumericalFault as exc:
        _err(f"numerical fault: {exc}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
