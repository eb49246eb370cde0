"""``lmdbench`` command-line entry point.

Exit codes: 0 success, 2 config error, 3 I/O or format error, 4 numeric
error, 1 anything else. Failures print one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="RunConfig JSON file")
    common.add_argument("--seed", type=int, help="override init.seed and train.seed")
    common.add_argument("--out", help="output directory (overrides paths.out_dir)")
    common.add_argument("--threads", type=int, help="numeric library thread count")

    ap = argparse.ArgumentParser(prog="lmdbench", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="high-fidelity runs")
    t = sub.add_parser("train", parents=[common], help="train the surrogate")
    t.add_argument("--data", help="directory of run directories (overrides paths.data_dir)")
    r = sub.add_parser("rollout", parents=[common], help="surrogate roll-out")
    r.add_argument("--weights", help="weights file (default: OUT/model.uafw)")
    r.add_argument("--hybrid", type=int, metavar="N", help="HF relaxation steps after each leap")
    q = sub.add_parser("qoi", parents=[common], help="QoI timeseries of a snapshot directory")
    q.add_argument("snapshots", help="snapshot directory")
    m = sub.add_parser("metrics", parents=[common], help="errors against ground truth")
    m.add_argument("--pred", required=True, help="predicted snapshot directory")
    m.add_argument("--truth", required=True, nargs="+", help="ground-truth snapshot directories")
    rp = sub.add_parser("report", parents=[common], help="speedup report")
    rp.add_argument("--timing", help="timing.json written by rollout")
    rp.add_argument("--t-hf", type=float, help="seconds per HF step")
    rp.add_argument("--t-model", type=float, help="seconds per surrogate pass")
    return ap


def _fail(kind, code, message):
    print(json.dumps({"error": kind, "exit_code": code, "message": str(message)}), file=sys.stderr)
    return code


def _load_config(args):
    from .config import RunConfig

    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    over = {}
    if args.seed is not None:
        over["init"] = {"seed": args.seed}
        over["train"] = {"seed": args.seed}
    if args.out is not None:
        over["paths"] = {"out_dir": args.out}
    if getattr(args, "data", None) is not None:
        over.setdefault("paths", {})["data_dir"] = args.data
    if over:
        data = cfg.data
        for sec, vals in over.items():
            data[sec].update(vals)
        cfg = RunConfig(data)
    return cfg


def _dispatch(args):
    from . import workflows as wf

    cfg = _load_config(args)
    out = cfg.section("paths")["out_dir"]
    if args.command == "simulate":
        return wf.simulate(cfg, out)
    if args.command == "train":
        return wf.train_cmd(cfg, out)
    if args.command == "rollout":
        return wf.rollout_cmd(cfg, out, args.weights, args.hybrid)
    if args.command == "qoi":
        return wf.qoi_cmd(cfg, out, args.snapshots)
    if args.command == "metrics":
        return wf.metrics_cmd(cfg, out, args.pred, args.truth)
    return wf.report_cmd(cfg, out, args.timing, args.t_hf, args.t_model)


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            return _fail("config", 2, "--threads must be >= 1")
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)

    from .errors import LmdError

    try:
        summary = _dispatch(args)
    except LmdError as exc:
        return _fail(exc.kind, exc.exit_code, exc)
    except OSError as exc:
        return _fail("io", 3, exc)
    print(json.dumps(summary, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
