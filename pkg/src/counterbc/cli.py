"""Command line entry point: gen, train, sweep, plot, serve.

Every command is a thin shell over the library; anything it can do is also
doable (and tested) through the module functions it calls.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from counterbc import demonstrators as demo
from counterbc import harness, trainer
from counterbc.dataset import load_jsonl, save_jsonl
from counterbc.envs import env_ids, make_env


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="counterbc",
        description="Offline imitation learning from noisy demonstrations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic demonstration dataset")
    gen.add_argument("--env", required=True, choices=env_ids())
    gen.add_argument("--noise", default="uniform", choices=demo.NOISE_KINDS)
    gen.add_argument("--sigma", type=float, default=0.0)
    gen.add_argument("--pairs", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    train = sub.add_parser("train", help="train a policy on a dataset")
    train.add_argument("--data", required=True)
    train.add_argument("--loss", required=True, choices=trainer.LOSS_KINDS)
    train.add_argument("--delta", type=float, default=0.5)
    train.add_argument("--m-samples", type=int, default=16)
    train.add_argument("--detach-classifier", action="store_true")
    train.add_argument("--lam-reg", type=float, default=0.1)
    train.add_argument("--sync-epochs", type=int, default=10)
    train.add_argument("--epochs", type=int, default=500)
    train.add_argument("--batch-size", type=int, default=64)
    train.add_argument("--alpha", type=float, default=1e-3)
    train.add_argument("--hidden", type=int, default=256)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--env", default=None, choices=env_ids(),
                       help="action bounds source; defaults to the dataset's env")
    train.add_argument("--out", required=True)

    sweep = sub.add_parser("sweep", help="run a declarative experiment sweep")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out", default=None,
                       help="output directory (default: alongside the config)")
    sweep.add_argument("--workers", type=int, default=1)

    plot = sub.add_parser("plot", help="render a sweep CSV as an SVG line chart")
    plot.add_argument("--in", dest="infile", required=True)
    plot.add_argument("--out", required=True)
    plot.add_argument("--xlabel", default="value")
    plot.add_argument("--ylabel", default="performance")
    plot.add_argument("--title", default=None)

    serve = sub.add_parser("serve", help="run the teleoperation service")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--data-dir", default="teleop-data")
    serve.add_argument("--tick-ms", type=int, default=50)
    serve.add_argument("--static-dir", default=None,
                       help="directory of browser UI assets to serve at /")

    return parser


def cmd_gen(args) -> int:
    env = make_env(args.env)
    teacher = demo.OptimalTeacher(args.env)
    noise = demo.NoiseModel(args.noise, args.sigma)
    ds = demo.generate_dataset(
        env, teacher, noise, args.pairs, np.random.default_rng(args.seed)
    )
    save_jsonl(ds, args.out)
    print(f"wrote {len(ds)} pairs to {args.out}")
    return 0


def _resolve_env(args, ds) -> str:
    if args.env is not None:
        return args.env
    env_id = ds.provenance.get("env")
    if env_id not in env_ids():
        raise SystemExit(
            "dataset provenance does not name an env; pass --env explicitly"
        )
    return env_id


def cmd_train(args) -> int:
    ds = load_jsonl(args.data)
    env = make_env(_resolve_env(args, ds))
    cfg = trainer.TrainConfig(
        loss=args.loss,
        epochs=args.epochs,
        batch_size=args.batch_size,
        alpha=args.alpha,
        seed=args.seed,
        hidden=args.hidden,
        delta=args.delta,
        m_samples=args.m_samples,
        detach_classifier=args.detach_classifier,
        lam_reg=args.lam_reg,
        sync_epochs=args.sync_epochs,
    )
    try:
        result = trainer.train(ds, env.action_spec, cfg)
    except trainer.TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    deployed = trainer.DeployedPolicy(result.policy, result.stats)
    deployed.policy.meta.update({"loss": args.loss, "env": env.env_id})
    deployed.save(out)
    history_path = out.with_suffix(".history.csv")
    trainer.history_to_csv(result.history, history_path)
    print(f"saved checkpoint {out}")
    print(f"saved loss curve {history_path}")
    print(f"final loss {result.history[-1].loss!r}")
    return 0


def cmd_sweep(args) -> int:
    cfg = harness.load_config(args.config)
    out_dir = Path(args.out) if args.out else Path(args.config).parent / "sweep-out"
    rows = harness.run_sweep(
        cfg,
        out_dir=out_dir,
        workers=args.workers,
        progress=lambda r: print(
            f"[{r.algorithm} {cfg.variable}={r.value} seed={r.seed}] "
            + (f"error: {r.error}" if r.error else f"performance={r.performance:.6g}")
        ),
    )
    summary = harness.summarize(rows)
    harness.write_summary_csv(summary, out_dir / "summary.csv")
    table = harness.format_summary_table(summary)
    (out_dir / "summary.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    failed = sum(1 for r in rows if r.error is not None)
    if failed:
        print(f"{failed} of {len(rows)} cells errored", file=sys.stderr)
        return 1
    return 0


def cmd_plot(args) -> int:
    path = Path(args.infile)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
    if header.startswith("algorithm,variable,value"):
        rows = harness.summarize(harness.load_results_csv(path))
    else:
        rows = _summary_rows_from_csv(path)
    harness.plot_summary(
        rows, args.out, xlabel=args.xlabel, ylabel=args.ylabel, title=args.title
    )
    print(f"wrote {args.out}")
    return 0


def _summary_rows_from_csv(path) -> list:
    import csv

    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            mean = rec["mean"]
            stderr = rec["stderr"]
            try:
                value = int(rec["value"])
            except ValueError:
                value = float(rec["value"])
            rows.append(
                harness.SummaryRow(
                    algorithm=rec["algorithm"],
                    value=value,
                    mean=float(mean) if mean else None,
                    stderr=float(stderr) if stderr else None,
                    seeds=int(rec["seeds"]),
                    single_seed=rec["single_seed"] == "true",
                )
            )
    return rows


def cmd_serve(args) -> int:
    import uvicorn

    from counterbc.teleop import create_app

    app = create_app(
        args.data_dir, default_tick_ms=args.tick_ms, static_dir=args.static_dir
    )
    print(f"teleop service on http://{args.host}:{args.port} "
          f"(datasets in {args.data_dir})", flush=True)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {
        "gen": cmd_gen,
        "train": cmd_train,
        "sweep": cmd_sweep,
        "plot": cmd_plot,
        "serve": cmd_serve,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
