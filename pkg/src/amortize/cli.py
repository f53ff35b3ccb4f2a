"""``amortize`` command line: gen, train, solve, eval, bench, plot.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _hidden(text: str):
    text = text.strip()
    if text in ("0", ""):
        return ()
    try:
        out = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated widths or 0, got {text!r}") from None
    if any(h <= 0 for h in out):
        raise argparse.ArgumentTypeError("hidden widths must be positive")
    return out


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="amortize", description="Amortized design synthesis with learned surrogates.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file of option defaults; flags override it")

    g = sub.add_parser("gen", help="generate a dataset")
    common(g)
    g.add_argument("--task", choices=["ballistic", "fiber", "arm"])
    g.add_argument("--count", type=_positive_int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=_positive_int, default=None)
    g.add_argument("--out")

    t = sub.add_parser("train", help="train a decoder, encoder or direct-learning model")
    common(t)
    t.add_argument("--data")
    t.add_argument("--model", choices=["decoder", "encoder", "direct"])
    t.add_argument("--decoder", help="frozen decoder checkpoint (encoder mode)")
    t.add_argument("--out")
    t.add_argument("--epochs", type=_positive_int)
    t.add_argument("--lr", type=float)
    t.add_argument("--lr-decay", type=float)
    t.add_argument("--batch-size", type=_positive_int)
    t.add_argument("--reg", type=float, help="regulariser weight")
    t.add_argument("--seed", type=int)
    t.add_argument("--hidden", type=_hidden, help="comma-separated hidden widths; 0 for a linear model")

    s = sub.add_parser("solve", help="direct optimization for one goal of a dataset")
    common(s)
    s.add_argument("--data")
    s.add_argument("--decoder")
    s.add_argument("--index", type=int, default=0)
    s.add_argument("--split", choices=["train", "val", "test"], default="test")
    s.add_argument("--reg", type=float)
    s.add_argument("--max-iter", type=_positive_int, default=1000)
    s.add_argument("--out")

    e = sub.add_parser("eval", help="evaluate a method on the test split with the true simulator")
    common(e)
    e.add_argument("--data")
    e.add_argument("--method", choices=["encoder", "direct", "do", "identity"])
    e.add_argument("--model", help="encoder or direct-learning checkpoint")
    e.add_argument("--decoder", help="decoder checkpoint (method do)")
    e.add_argument("--reg", type=float)
    e.add_argument("--max-iter", type=_positive_int, default=1000)
    e.add_argument("--limit", type=int, default=None, help="evaluate only the first N test goals")
    e.add_argument("--seed", type=int, default=0, help="obstacle seed (arm task)")
    e.add_argument("--run", default="0", help="run label written to the report")
    e.add_argument("--out-dir")

    b = sub.add_parser("bench", help="median per-goal inference time")
    common(b)
    b.add_argument("--data")
    b.add_argument("--encoder")
    b.add_argument("--direct")
    b.add_argument("--decoder")
    b.add_argument("--goals", type=_positive_int, default=5)
    b.add_argument("--repetitions", type=_positive_int, default=5)
    b.add_argument("--max-iter", type=_positive_int, default=1000)
    b.add_argument("--out")

    pl = sub.add_parser("plot", help="SVG figure of one goal, or of the rest-pose arm")
    common(pl)
    pl.add_argument("--data")
    pl.add_argument("--index", type=int, default=0)
    pl.add_argument("--split", choices=["train", "val", "test"], default="test")
    pl.add_argument("--method", choices=["encoder", "direct", "do", "identity", "dataset"], default="dataset")
    pl.add_argument("--model")
    pl.add_argument("--decoder")
    pl.add_argument("--rest", action="store_true", help="draw the rest-pose arm (no dataset needed)")
    pl.add_argument("--out")
    return p


def _require(args, *names):
    missing = [n for n in names if getattr(args, n.replace("-", "_"), None) in (None, "")]
    if missing:
        raise UsageError(f"{args.command}: missing required option(s): " + ", ".join("--" + m for m in missing))


def _exists(path, what):
    if not Path(path).is_file():
        raise UsageError(f"{what} not found: {path}")


def _load_model(path, what="model"):
    from .nn import load_checkpoint

    _exists(path, what)
    return load_checkpoint(path)


def _load_data(path):
    from .core import load_dataset

    _exists(path, "dataset")
    return load_dataset(path)


def cmd_gen(args) -> int:
    from .core import save_dataset
    from .pipeline import gen_dataset

    _require(args, "task", "count", "out")
    ds = gen_dataset(args.task, args.count, args.seed, workers=args.workers)
    save_dataset(ds, args.out)
    n_tr, n_va, n_te = ds.split.sizes()
    print(f"task={ds.task} count={len(ds)} seed={ds.seed} train={n_tr} val={n_va} test={n_te} out={args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .nn import save_checkpoint
    from .pipeline import TrainConfig, train_decoder, train_direct_learning, train_encoder

    _require(args, "data", "model", "out")
    if args.model == "encoder" and not args.decoder:
        raise UsageError("train --model encoder needs --decoder CHECKPOINT")
    data = _load_data(args.data)
    try:
        cfg = TrainConfig.default(
            data.task,
            epochs=args.epochs,
            lr=args.lr,
            lr_decay=args.lr_decay,
            batch_size=args.batch_size,
            reg_weight=args.reg,
            seed=args.seed,
            hidden=args.hidden,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.model == "decoder":
        res = train_decoder(data, cfg)
    elif args.model == "direct":
        res = train_direct_learning(data, cfg)
    else:
        dec, meta = _load_model(args.decoder, "decoder checkpoint")
        if meta.get("task") not in (None, data.task):
            raise UsageError(f"decoder was trained on task {meta.get('task')!r}, dataset is {data.task!r}")
        res = train_encoder(data, dec, cfg)
    meta = {"task": data.task, "role": args.model, "train_config": cfg.to_dict(), "dataset_seed": data.seed}
    save_checkpoint(res.model, args.out, meta)
    csv_path = Path(str(args.out) + ".losses.csv")
    csv_path.write_text(res.losses_csv())
    last = res.history[-1]
    print(f"model={args.model} task={data.task} epochs={cfg.epochs} train_loss={last['train_loss']:.6g} val_loss={last['val_loss']:.6g} out={args.out}")
    return EXIT_OK


def _method(args, data, task):
    """Goal -> design callable for ``args.method``."""
    from .optim import BfgsConfig
    from .pipeline import do_method, encoder_method, identity_method

    if args.method == "identity":
        return identity_method
    if args.method in ("encoder", "direct"):
        _require(args, "model")
        model, meta = _load_model(args.model)
        if meta.get("task") not in (None, data.task):
            raise UsageError(f"model was trained on task {meta.get('task')!r}, dataset is {data.task!r}")
        return encoder_method(task, model)
    _require(args, "decoder")
    dec, _ = _load_model(args.decoder, "decoder checkpoint")
    return do_method(task, dec, getattr(args, "reg", None), BfgsConfig(max_iterations=getattr(args, "max_iter", 1000)))


def _split(data, which):
    if data.split is None:
        raise UsageError("dataset has no split")
    return data.subset(which)


def cmd_solve(args) -> int:
    from .optim import BfgsConfig
    from .pipeline import direct_optimize, task_for

    _require(args, "data", "decoder", "out")
    data = _load_data(args.data)
    task = task_for(data)
    samples = _split(data, args.split)
    if not 0 <= args.index < len(samples):
        raise UsageError(f"--index {args.index} outside the {args.split} split (size {len(samples)})")
    dec, _ = _load_model(args.decoder, "decoder checkpoint")
    s = samples[args.index]
    res = direct_optimize(task, s.goal, dec, args.reg, BfgsConfig(max_iterations=args.max_iter))
    out = {
        "task": data.task,
        "split": args.split,
        "index": args.index,
        "design": np.asarray(res.design).tolist(),
        "objective": res.objective,
        "initial_objective": res.initial_objective,
        "iterations": res.iterations,
        "termination": res.termination,
        "warning": res.warning,
    }
    Path(args.out).write_text(json.dumps(out))
    print(f"objective={res.objective:.6g} initial={res.initial_objective:.6g} iterations={res.iterations} termination={res.termination}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .pipeline import evaluate_path_method, evaluate_robot_method, task_for
    from .plotting import plot_metric_hist

    _require(args, "data", "method", "out-dir")
    data = _load_data(args.data)
    task = task_for(data)
    test = _split(data, "test")
    if args.limit is not None:
        test = test[: max(0, args.limit)]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    method = _method(args, data, task)
    if data.task == "fiber":
        rep = evaluate_path_method(method, test, args.method, args.run, task.cfg)
        metric = "chamfer"
    elif data.task == "arm":
        rep = evaluate_robot_method(method, test, args.seed, args.method, args.run, task.cfg)
        metric = "distance"
    else:
        rep = _eval_ballistic(method, test, args.method, args.run, task)
        metric = "abs_error"
    (out / "report.csv").write_text(rep.to_csv())
    summary = json.loads(rep.to_json()) if rep.records else {"task": data.task, "metrics": list(rep.metric_names), "aggregate": {}}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    if rep.records:
        plot_metric_hist(out / "metric.svg", {args.method: [r[metric] for r in rep.records]}, metric)
    agg = summary["aggregate"].get(args.method, {})
    brief = {k: v["mean"] for k, v in agg.items() if isinstance(v, dict)}
    print(f"task={data.task} method={args.method} goals={len(rep.records)} " + " ".join(f"{k}={v:.6g}" for k, v in brief.items()))
    return EXIT_OK


def _eval_ballistic(method, test, method_id, run, task):
    from .pipeline import EvalReport
    from .pipeline.evaluate import _timed

    rep = EvalReport("ballistic", ("abs_error", "rel_error"))
    for i, s in enumerate(test):
        design, dt, err = _timed(method, s.goal)
        a = float("nan")
        if not err:
            a = float(abs(task.realize(design)[0] - s.goal[0]))
        rep.records.append(
            {"method": method_id, "run": run, "index": i, "abs_error": a, "rel_error": a / task.scale, "wall_time": dt, "error": err}
        )
    return rep


def cmd_bench(args) -> int:
    from .optim import BfgsConfig
    from .pipeline import do_method, encoder_method, task_for, time_inference

    _require(args, "data", "out")
    data = _load_data(args.data)
    task = task_for(data)
    test = _split(data, "test")[: args.goals]
    if not test:
        raise UsageError("test split is empty")
    goals = [s.goal for s in test]
    if data.task == "arm":
        from .pipeline import eval_obstacles

        goals = [np.array([*s.goal[:2], *c, task.cfg.obstacle_radius]) for s, c in zip(test, eval_obstacles(test, 0, task.cfg))]
    methods = {}
    if args.encoder:
        methods["encoder"] = encoder_method(task, _load_model(args.encoder)[0])
    if args.direct:
        methods["direct"] = encoder_method(task, _load_model(args.direct)[0])
    if args.decoder:
        methods["do"] = do_method(task, _load_model(args.decoder, "decoder checkpoint")[0], None, BfgsConfig(max_iterations=args.max_iter))
    if not methods:
        raise UsageError("bench needs at least one of --encoder, --direct, --decoder")
    rows = []
    for name, m in methods.items():
        times = time_inference(m, goals, args.repetitions)
        rows.append({"method": name, "goals": len(goals), "repetitions": args.repetitions, "median": statistics.median(times), "per_goal": times})
    lines = ["method,goals,repetitions,median_seconds"]
    lines += [f"{r['method']},{r['goals']},{r['repetitions']},{r['median']!r}" for r in rows]
    Path(args.out).write_text("\n".join(lines) + "\n")
    Path(str(args.out) + ".json").write_text(json.dumps({"task": data.task, "results": rows}, indent=2))
    for r in rows:
        print(f"method={r['method']} median={r['median']:.3e}s repetitions={r['repetitions']} goals={r['goals']}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot_path_overlay, plot_robot_pose

    _require(args, "out")
    if args.rest:
        from .sim import ArmConfig

        plot_robot_pose(args.out, ArmConfig().rest_vertices(), title="rest pose")
        print(f"out={args.out}")
        return EXIT_OK
    _require(args, "data")
    from .pipeline import task_for

    data = _load_data(args.data)
    task = task_for(data)
    samples = _split(data, args.split)
    if not 0 <= args.index < len(samples):
        raise UsageError(f"--index {args.index} outside the {args.split} split (size {len(samples)})")
    s = samples[args.index]
    goal = s.goal
    if data.task == "arm":
        from .pipeline import eval_obstacles

        c = eval_obstacles(samples, 0, task.cfg)[args.index] if args.method != "dataset" else goal[2:4]
        goal = np.array([*goal[:2], *c, task.cfg.obstacle_radius])
    design = s.design if args.method == "dataset" else _method(args, data, task)(goal)
    if data.task == "fiber":
        plot_path_overlay(args.out, s.goal, design, task.realize(design), shade=True, title=args.method)
    elif data.task == "arm":
        plot_robot_pose(args.out, task.realize(design), goal[:2], goal[2:4], goal[4], title=args.method)
    else:
        raise UsageError("plot supports the fiber and arm tasks")
    print(f"out={args.out}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "solve": cmd_solve, "eval": cmd_eval, "bench": cmd_bench, "plot": cmd_plot}


def _apply_config(parser, argv):
    """Re-parse with defaults taken from ``--config`` so flags still win."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config, encoding="utf-8") as fh:
            conf = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(conf, dict):
        raise UsageError("config file must hold a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    unknown = sorted(set(k.replace("-", "_") for k in conf) - known)
    if unknown:
        raise UsageError(f"unknown config keys for {args.command}: {unknown}")
    conv = {}
    for a in sub._actions:
        key = next((k for k in conf if k.replace("-", "_") == a.dest), None)
        if key is None:
            continue
        v = conf[key]
        if a.type is not None and isinstance(v, str):
            v = a.type(v)
        elif a.dest == "hidden" and isinstance(v, list):
            v = tuple(int(x) for x in v)
        conv[a.dest] = v
    sub.set_defaults(**conv)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_USAGE if exc.code else EXIT_OK
    except UsageError as exc:
        print(f"amortize: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"amortize: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"amortize: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
