"""``yono`` command line: run experiments, ablations and embedding dumps.

Exit codes: 0 on success, 2 for configuration errors, 1 for anything that
goes wrong while running.
"""
import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig
from .encoder import embed, load_checkpoint
from .errors import ConfigError, DimensionMismatch, YonoError
from .metrics import AccuracyMatrix, write_accuracy_table, write_summary_csv
from .prototypes import PrototypeMemory
from .synthesis import Synthesizer, write_embedding_csv
from .trainer import canonical_ablation, run_stream

log = logging.getLogger("yono")


def _split_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _load_config(args):
    overrides = list(args.set or [])
    if getattr(args, "seed", None):
        overrides.append(f"run.seeds={args.seed}")
    if getattr(args, "mode", None):
        overrides.append(f"run.modes={args.mode}")
    if getattr(args, "out", None):
        overrides.append(f"run.out={args.out}")
    if getattr(args, "parallel", None) is not None:
        overrides.append(f"run.parallel={args.parallel}")
    return RunConfig.load(args.config, overrides)


def _execute(job):
    """Train one (mode, seed, toggles) combination and write its directory."""
    values, mode, seed, off, label, out_dir = job
    cfg = RunConfig(values)
    record = run_stream(cfg.stream(), cfg.trainer_config(mode, seed, off))
    record.write(out_dir)
    return {"mode": record.mode, "seed": seed, "ablation": label, "rows": record.accuracy.rows(),
            "metrics": record.metrics, "record": record.to_dict()}


def _run_jobs(jobs, parallel):
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(_execute, jobs))
    out = []
    for job in jobs:
        log.info("training %s seed=%d %s", job[1], job[2], job[4])
        out.append(_execute(job))
    return out


def _write_outputs(out, results, cfg, summary_name):
    out.mkdir(parents=True, exist_ok=True)
    table = [(r["mode"] if r["ablation"] == "full" else f"{r['mode']}/{r['ablation']}", r["seed"],
              AccuracyMatrix.from_rows(r["rows"])) for r in results]
    write_accuracy_table(out / "accuracy.csv", table)
    write_summary_csv(out / summary_name, [{"mode": r["mode"], "seed": r["seed"], "ablation": r["ablation"],
                                            **r["metrics"]} for r in results])
    doc = {"config": cfg.values, "runs": [r["record"] for r in results]}
    (out / "run.json").write_text(json.dumps(doc, indent=2) + "\n")


def cmd_run(args):
    cfg = _load_config(args)
    out = Path(cfg["run.out"])
    jobs = [(cfg.values, mode, seed, None, "full", str(out / f"{mode}-seed{seed}"))
            for mode in cfg.modes for seed in cfg.seeds]
    results = _run_jobs(jobs, cfg["run.parallel"])
    _write_outputs(out, results, cfg, "metrics.csv")
    for r in results:
        log.info("%s seed=%d avg_accuracy=%.4f avg_forgetting=%.4f", r["mode"], r["seed"],
                 r["metrics"]["avg_accuracy"], r["metrics"]["avg_forgetting"])
    return 0


def cmd_ablate(args):
    try:
        toggles = [canonical_ablation(t) for t in _split_list(args.off or "")]
    except ValueError as exc:
        raise ConfigError(f"--off: {exc}") from None
    cfg = _load_config(args)
    out = Path(cfg["run.out"])
    base_off = list(cfg["trainer.off"])
    variants = [("full", base_off)] + [(f"no-{t}", sorted(set(base_off) | {t})) for t in dict.fromkeys(toggles)]
    jobs = [(cfg.values, mode, seed, off, label, str(out / f"{mode}-seed{seed}" if label == "full"
                                                     else out / f"{mode}-seed{seed}-{label}"))
            for mode in cfg.modes for seed in cfg.seeds for label, off in variants]
    results = _run_jobs(jobs, cfg["run.parallel"])
    _write_outputs(out, results, cfg, "ablation.csv" if toggles else "metrics.csv")
    for r in results:
        log.info("%s seed=%d %s avg_accuracy=%.4f", r["mode"], r["seed"], r["ablation"], r["metrics"]["avg_accuracy"])
    return 0


def cmd_dump_embeddings(args):
    cfg = RunConfig.load(args.config, args.set or [])
    ckpt = Path(args.checkpoint)
    try:
        state = load_checkpoint(ckpt)
    except FileNotFoundError:
        raise YonoError(f"checkpoint not found: {ckpt}") from None
    mem_path = Path(args.memory) if args.memory else ckpt.with_name("memory.bin")
    try:
        memory = PrototypeMemory.read(mem_path)
    except FileNotFoundError:
        raise YonoError(f"prototype memory not found: {mem_path}") from None
    if memory.dim != state.arch.output_dim:
        raise DimensionMismatch(f"memory dimension {memory.dim} vs embedding dimension {state.arch.output_dim}")

    data = cfg.dataset()
    if data.dim != state.arch.input_dim:
        raise DimensionMismatch(f"dataset has {data.dim} features, checkpoint expects {state.arch.input_dim}")
    keep = np.isin(data.y, memory.class_ids)
    z = embed(state, data.x[keep])
    norms = np.linalg.norm(z, axis=1)
    nonzero = norms > 0
    extracted = z[nonzero] / norms[nonzero, None]
    labels = data.y[keep][nonzero]

    synth = Synthesizer(memory, kappa=args.kappa).per_class(args.per_class, np.random.default_rng(args.seed))
    write_embedding_csv(args.output, memory.dim, [("extracted", labels, extracted),
                                                  ("synthetic", synth.labels, synth.embeddings)])
    log.info("wrote %d extracted and %d synthetic rows to %s", len(labels), len(synth), args.output)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="yono", description=__doc__.splitlines()[0])
    parser.add_argument("-q", "--quiet", action="store_true", help="only report errors")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file (defaults apply when omitted)")
        p.add_argument("--set", action="append", metavar="K=V", help="override a config key, repeatable")

    def run_flags(p):
        common(p)
        p.add_argument("--out", help="output directory (run.out)")
        p.add_argument("--seed", help="comma-separated seeds (run.seeds)")
        p.add_argument("--mode", help="comma-separated modes: yono, yono+, naive, joint (run.modes)")
        p.add_argument("--parallel", type=int, help="worker processes (run.parallel)")

    p = sub.add_parser("run", help="train every (mode, seed) pair")
    run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="compare the full method against components switched off")
    run_flags(p)
    p.add_argument("--off", default="", help="comma-separated components: prototype-replay, synthesis, kd, "
                   "interpolation, partial-freeze (a no- prefix is accepted)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("dump-embeddings", help="export extracted and synthetic embeddings as CSV")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--memory", help="prototype memory file (default: memory.bin beside the checkpoint)")
    p.add_argument("--output", required=True)
    p.add_argument("--per-class", type=int, default=100, help="synthetic rows per stored class")
    p.add_argument("--kappa", type=float, default=1.96)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_dump_embeddings)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"yono: config error: {exc}", file=sys.stderr)
        return 2
    except (YonoError, OSError, ValueError, ArithmeticError) as exc:
        print(f"yono: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
