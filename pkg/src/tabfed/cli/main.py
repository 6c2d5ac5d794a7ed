"""``tabfed`` command-line entry point."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..data.schema import TableSchema, load_csv, write_csv
from ..data.toy import TOY_SCHEMA, generate_toy
from ..errors import ConfigurationError, TabFedError
from ..metrics.report import HEATMAP_METRICS, evaluate, write_heatmap_csv
from . import experiment
from .checkpoint import load_checkpoint
from .config import OUTPUT_DIR_ENV, RunConfig, load_config, save_config


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file, or a shipped profile: desk, full")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. federation.rounds=50 (repeatable)")
    p.add_argument("--data", help="CSV file (same as --set data=...)")
    p.add_argument("--schema", help="schema YAML (same as --set schema=...)")
    p.add_argument("--out", help=f"output directory (default: config output_dir, ${OUTPUT_DIR_ENV}, ./tabfed_runs)")
    p.add_argument("--seed", type=int, help="override federation.seed")
    p.add_argument("--threads", type=int, help="client threads per round (results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tabfed", description="Federated diffusion models for mixed-type tables.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toydata", help="write the synthetic benchmark CSV and its schema")
    p.add_argument("--rows", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("prepare", help="partition the data, fit the codec, write artifacts")
    _add_run_options(p)

    p = sub.add_parser("train", help="train the federated model or one local baseline")
    _add_run_options(p)
    p.add_argument("--mode", default="federated", help="federated, or local:<client id>")
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("sample", help="generate synthetic rows from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("-n", "--rows", type=int, default=5000)
    p.add_argument("--output", required=True, help="CSV path")
    p.add_argument("--seed", type=int, help="sampling seed (default: the training seed)")

    p = sub.add_parser("evaluate", help="score a synthetic CSV against a real one")
    p.add_argument("--real", required=True)
    p.add_argument("--synth", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--label-column")
    p.add_argument("--no-utility", action="store_true")
    p.add_argument("--max-pairs", type=int, default=10_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="JSON path (default: print only)")

    p = sub.add_parser("report", help="cross-client heatmaps for a set of checkpoints")
    _add_run_options(p)
    p.add_argument("--checkpoints", nargs="+", required=True)
    p.add_argument("-n", "--rows", type=int, help="rows sampled per model (default: evaluation.n_synth)")
    return parser


def _run_config(args, reuse_saved: bool = False) -> RunConfig:
    """Config from --config, or (for commands after ``prepare``) the copy
    ``prepare`` saved in the output directory; then the command-line overrides."""
    source = args.config
    if source is None and reuse_saved:
        saved = RunConfig().resolve_output_dir(args.out) / "config.yaml"
        source = saved if saved.is_file() else None
    config = load_config(source)
    overrides = list(args.overrides)
    for key in ("data", "schema"):
        if getattr(args, key):
            overrides.append(f"{key}={getattr(args, key)}")
    if args.seed is not None:
        overrides.append(f"federation.seed={args.seed}")
    if args.threads is not None:
        overrides.append(f"federation.threads={args.threads}")
    return config.with_overrides(overrides).validate()


def _parse_mode(mode: str) -> int | None:
    if mode == "federated":
        return None
    prefix, _, ident = mode.partition(":")
    if prefix != "local" or not ident.isdigit():
        raise ConfigurationError(f"--mode must be 'federated' or 'local:<client id>', got {mode!r}")
    return int(ident)


def cmd_toydata(args) -> int:
    out = Path(args.out) if args.out else RunConfig().resolve_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    table = generate_toy(args.rows, args.seed)
    write_csv(table, out / "toy.csv")
    TOY_SCHEMA.save(out / "toy_schema.yaml")
    print(f"wrote {table.n_rows} rows to {out / 'toy.csv'} and schema {out / 'toy_schema.yaml'}")
    return 0


def cmd_prepare(args) -> int:
    config = _run_config(args)
    out = config.resolve_output_dir(args.out)
    prep = experiment.prepare(config)
    experiment.save_prepared(prep, out)
    # later commands may run from another directory
    config.schema = str(Path(config.schema).resolve())
    config.data = str(Path(config.data).resolve())
    save_config(config, out / "config.yaml")
    print("\n".join(prep.summary_lines()))
    print(f"artifacts written to {out}")
    return 0


def cmd_train(args) -> int:
    config = _run_config(args, reuse_saved=True)
    out = config.resolve_output_dir(args.out)
    prep = experiment.load_prepared(config, out)
    client = _parse_mode(args.mode)
    resume = load_checkpoint(args.resume, prep.fingerprint) if args.resume else None
    log = lambda line: print(line, flush=True)  # noqa: E731
    if client is None:
        path = experiment.train_federated(prep, out, resume, log)
    else:
        if not 1 <= client <= prep.partition.n_clients:
            raise ConfigurationError(f"client {client} outside 1..{prep.partition.n_clients}")
        path = experiment.train_local(prep, client, out, resume, log)
    print(f"checkpoint written to {path}")
    return 0


def cmd_sample(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    seed = args.seed if args.seed is not None else int(ckpt.config["federation"]["seed"])
    table = experiment.synthesize(ckpt, args.rows, seed)
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    write_csv(table, args.output)
    print(f"wrote {table.n_rows} synthetic rows to {args.output}")
    return 0


def cmd_evaluate(args) -> int:
    schema = TableSchema.load(args.schema)
    real = load_csv(args.real, schema)
    synth = load_csv(args.synth, schema, vocab=real.vocab)
    report = evaluate(real, synth, args.label_column, with_utility=not args.no_utility,
                      max_pairs=args.max_pairs, seed=args.seed)
    if args.output:
        Path(args.output).write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.table_row())
    return 0


def cmd_report(args) -> int:
    config = _run_config(args, reuse_saved=True)
    out = config.resolve_output_dir(args.out)
    prep = experiment.load_prepared(config, out)
    n_rows = args.rows if args.rows is not None else config.evaluation.n_synth
    rows, cols, grid = experiment.heatmap_report(prep, args.checkpoints, n_rows, config.federation.seed)
    for metric in HEATMAP_METRICS:
        path = out / f"{metric}_heatmap.csv"
        write_heatmap_csv(path, grid[metric], rows, cols)
        print(f"wrote {path}")
    return 0


COMMANDS = {
    "toydata": cmd_toydata,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "sample": cmd_sample,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (TabFedError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
