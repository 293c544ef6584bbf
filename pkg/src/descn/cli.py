"""Command-line entry point: ``descn generate | train | evaluate | experiment``.

Failures exit with status 1 and print one line ``error: <Type>: <message>``
on stderr.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import read_config, section
from .data_io import fit_standardizer, fmt_float, read_schema, read_table, write_table
from .dgp import SCENARIOS, default_config, generate
from .experiment import (
    evaluate_model,
    load_experiment,
    report_table,
    build_report,
    run_experiment,
    train_config_from,
    write_outputs,
)
from .model import ITE_MODES, KINDS, check_ite_mode, train
from .persist import load_model, save_model, write_history


def cmd_generate(args) -> int:
    cfg = default_config(args.preset, d=args.d, n_train=args.n_train, n_test=args.n_test, seed=args.seed)
    train_ds, test_ds = generate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_table(train_ds, out / "train.csv")
    write_table(test_ds, out / "test.csv")
    lines = [f"preset = {args.preset}"]
    for key, value in cfg.to_dict().items():
        if isinstance(value, list):
            value = ", ".join(fmt_float(v) for v in value)
        elif isinstance(value, float):
            value = fmt_float(value)
        lines.append(f"{key} = {value}")
    lines.append(f"train_treated = {int(train_ds.w.sum())}")
    lines.append(f"test_treated = {int(test_ds.w.sum())}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out / 'train.csv'} ({train_ds.n} rows), {out / 'test.csv'} ({test_ds.n} rows)")
    return 0


def _train_entries(args) -> dict[str, str]:
    entries = {}
    if args.config:
        cfg = read_config(args.config)
        entries.update(section(cfg, "train"))
        entries.update(section(cfg, f"model.{args.model}"))
    for key in ("epochs", "batch_size", "lr", "decay", "l2", "shared_hidden", "head_hidden", "depth",
                "alpha", "beta1", "beta0", "gamma1", "gamma0", "w_tr", "w_cr", "seed"):
        v = getattr(args, key)
        if v is not None:
            entries[key] = str(v)
    if args.ite_mode:
        entries["ite_mode"] = args.ite_mode
    return entries


def cmd_train(args) -> int:
    schema = read_schema(args.schema) if args.schema else None
    data = read_table(args.train, schema)
    cfg = train_config_from(_train_entries(args), args.model)
    st = fit_standardizer(data)
    params, history = train(args.model, st.apply(data), cfg)
    out = Path(args.out)
    save_model(out / "model.txt", params, st, cfg.ite_mode)
    write_history(history, out / "history.csv")
    last = f", final loss {history[-1]['total']:.6f}" if history else ""
    print(f"trained {args.model} for {cfg.epochs} epoch(s){last}; wrote {out / 'model.txt'}")
    return 0


def cmd_evaluate(args) -> int:
    params, st, saved_mode = load_model(args.params)
    mode = args.ite_mode or saved_mode
    check_ite_mode(params.kind, mode)
    schema = read_schema(args.schema) if args.schema else None
    test = read_table(args.test, schema)
    if st is not None:
        test = st.apply(test)
    metrics, _ = evaluate_model(params, test, mode)
    text = "".join(f"{k},{fmt_float(v)}\n" for k, v in metrics.items())
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_experiment(args) -> int:
    cfg = load_experiment(args.config, args.out)
    if args.workers is not None:
        cfg.workers = args.workers
    if args.no_figures:
        cfg.figures = False
    if cfg.out is None:
        raise ValueError("no output directory: pass --out or set 'output' in the config")

    def progress(cell):
        status = "failed: " + cell.error if cell.error else "done"
        print(f"[{cell.model} rep {cell.rep}] {status}", file=sys.stderr, flush=True)

    results = run_experiment(cfg, progress=None if args.quiet else progress)
    write_outputs(cfg, results, cfg.out)
    sys.stdout.write(report_table(build_report(cfg, results), cfg, results))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="descn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write synthetic train/test tables")
    g.add_argument("--preset", choices=SCENARIOS, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--n-train", type=int, default=50_000)
    g.add_argument("--n-test", type=int, default=20_000)
    g.add_argument("--d", type=int, default=20)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train one model on a table")
    t.add_argument("--train", required=True)
    t.add_argument("--schema")
    t.add_argument("--model", choices=KINDS, required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--config", help="key = value file with train.* / model.<kind>.* entries")
    t.add_argument("--ite-mode", choices=ITE_MODES)
    t.add_argument("--seed", type=int)
    for name, typ in (("epochs", int), ("batch-size", int), ("lr", float), ("decay", float),
                      ("l2", float), ("shared-hidden", int), ("head-hidden", int), ("depth", int),
                      ("alpha", float), ("beta1", float), ("beta0", float), ("gamma1", float),
                      ("gamma0", float), ("w-tr", float), ("w-cr", float)):
        t.add_argument(f"--{name}", type=typ)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="metrics of a trained model on a test table")
    e.add_argument("--params", required=True, help="model.txt written by 'train'")
    e.add_argument("--test", required=True)
    e.add_argument("--schema")
    e.add_argument("--ite-mode", choices=ITE_MODES)
    e.add_argument("--out", help="metrics file (name,value rows)")
    e.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("experiment", help="repeated multi-model runs with an aggregate report")
    x.add_argument("--config", required=True)
    x.add_argument("--out")
    x.add_argument("--workers", type=int)
    x.add_argument("--no-figures", action="store_true")
    x.add_argument("--quiet", action="store_true")
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
