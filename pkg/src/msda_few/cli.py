"""Command-line entry point: ``msda-few {generate,train,verify,gradcheck,eval}``.

Exit codes: 0 success, 1 validation error, 2 numeric failure, 3 I/O error.
Set ``MSDA_FEW_LOG`` (DEBUG, INFO, WARNING, ...) for log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .config import RunConfig, load_config, to_dict
from .data import load_feature_csv, synth_mixed, write_dataset_csv
from .diagnostics import gradcheck_objective
from .exceptions import MSDAError, NumericError
from .nets import load_checkpoint, save_checkpoint
from .oracle import MIN_GRID, verify_optimum
from .trainer import METHODS, Networks, evaluate, metrics_to_csv, train

log = logging.getLogger("msda_few")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config)
    seeds = getattr(args, "seed", None)
    if seeds:
        cfg.apply_seed(seeds[0])
    if getattr(args, "method", None):
        cfg.train.method = args.method
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    return cfg


def _dataset(cfg: RunConfig):
    if cfg.data.source == "synthetic":
        return synth_mixed(cfg.data.synthetic)
    c = cfg.data.csv
    return load_feature_csv(c.alpha, c.beta, c.target, n_classes=c.n_classes)


def cmd_generate(args) -> int:
    cfg = _resolve(args)
    if cfg.data.source != "synthetic":
        raise MSDAError("generate needs data.source = 'synthetic'")
    out = Path(cfg.out_dir)
    paths = write_dataset_csv(synth_mixed(cfg.data.synthetic), out)
    manifest = {"seed": cfg.seed, "synthetic": to_dict(cfg.data.synthetic),
                "files": {k: p.name for k, p in paths.items()}}
    (out / "manifest.json").write_text(_dump(manifest))
    print(_dump({"written": sorted(str(p) for p in [*paths.values(), out / "manifest.json"])}),
          end="")
    return EXIT_OK


def _train_one(cfg: RunConfig) -> dict:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = _dataset(cfg)
    t0 = time.perf_counter()
    nets, records = train(dataset, cfg.train)
    wall = time.perf_counter() - t0
    (out / "metrics.csv").write_text(metrics_to_csv(records))
    save_checkpoint(out / "checkpoint.npz", nets.modules())
    evals = [(r.iter, r.target_acc) for r in records if r.target_acc is not None]
    best = max(evals, key=lambda e: e[1]) if evals else (None, None)
    summary = {
        "method": cfg.train.method,
        "seed": cfg.seed,
        "flags": {"uses_v1": cfg.train.uses_v1, "weighted": cfg.train.weighted,
                  "v2": cfg.train.v2_kind},
        "iterations": len(records),
        "final": {"l_cls": records[-1].l_cls, "v1": records[-1].v1, "v2": records[-1].v2,
                  "total": records[-1].total},
        "final_target_acc": evals[-1][1] if evals else None,
        "best_target_acc": best[1],
        "best_iter": best[0],
        "wall_time_s": wall,
    }
    (out / "summary.json").write_text(_dump(summary))
    (out / "config.json").write_text(_dump(to_dict(cfg)))
    return summary


def cmd_train(args) -> int:
    cfg = _resolve(args)
    seeds = args.seed or [cfg.seed]
    if len(seeds) == 1:
        print(_dump(_train_one(cfg)), end="")
        return EXIT_OK
    runs = []
    for s in seeds:
        c = _resolve(args)
        c.apply_seed(s)
        c.out_dir = str(Path(cfg.out_dir) / f"seed_{s}")
        runs.append(c)
    with ProcessPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        summaries = list(pool.map(_train_one, runs))
    print(_dump({"runs": summaries}), end="")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _resolve(args)
    dataset = _dataset(cfg)
    nets = Networks.build(dataset.dim, dataset.n_classes, cfg.train.model, cfg.seed,
                          conditional=cfg.train.v2_kind != "marginal")
    ckpt = Path(args.checkpoint) if args.checkpoint else Path(cfg.out_dir) / "checkpoint.npz"
    load_checkpoint(ckpt, nets.modules())
    acc = evaluate(nets.G, nets.head, dataset.target_X, dataset.target_labels_for_evaluation())
    print(_dump({"checkpoint": str(ckpt), "target_acc": acc}), end="")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _resolve(args)
    v = cfg.verify
    grid = args.grid if args.grid is not None else v.grid_resolution
    trials = args.trials if args.trials is not None else v.trials
    if grid < MIN_GRID:
        raise MSDAError(f"grid resolution {grid} too coarse; minimum is {MIN_GRID}")
    report = verify_optimum(grid_resolution=grid, trials=trials, max_support=v.max_support,
                            seed=cfg.seed)
    text = _dump(report)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "verify.json").write_text(text)
    print(text, end="")
    return EXIT_OK if report["passed"] else EXIT_NUMERIC


def cmd_gradcheck(args) -> int:
    cfg = _resolve(args)
    report = gradcheck_objective(cfg.gradcheck, seed=cfg.seed, method="few")
    print(_dump(report), end="")
    return EXIT_OK if report["passed"] else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msda-few", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, method=False, out=True):
        p.add_argument("--config", help="JSON run configuration (defaults when omitted)")
        p.add_argument("--seed", type=int, action="append",
                       help="unsigned 64-bit seed; repeat on train for several runs")
        if out:
            p.add_argument("--out", help="output directory (overrides out_dir)")
        if method:
            p.add_argument("--method", choices=METHODS)

    p = sub.add_parser("generate", help="write synthetic alpha/beta/target CSVs + manifest")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one method; writes metrics, checkpoint, summary")
    common(p, method=True)
    p.add_argument("--jobs", type=int, default=1, help="parallel processes for several seeds")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="target accuracy of a saved checkpoint")
    common(p, method=True)
    p.add_argument("--checkpoint", help="checkpoint path (default <out_dir>/checkpoint.npz)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="numerically check the optimal-discriminator identities")
    common(p)
    p.add_argument("--grid", type=int, help=f"grid resolution (>= {MIN_GRID})")
    p.add_argument("--trials", type=int, help="random distribution pairs")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gradcheck", help="finite-difference check of every loss term")
    common(p, out=False)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("MSDA_FEW_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        last = getattr(exc, "last_finite", None)
        print(f"numeric failure: {exc}", file=sys.stderr)
        if last is not None:
            print(f"last finite record: {last}", file=sys.stderr)
        return EXIT_NUMERIC
    except MSDAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
