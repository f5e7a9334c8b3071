"""Command line: run, sweep, dump-rewards, check-theorem1, gradcheck."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, ExperimentConfig, load_config
from . import experiment as ex


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seeds:
        cfg = cfg.replace(seeds=args.seeds)
    return cfg


def cmd_run(args) -> int:
    cfg = _config(args)
    s = ex.run(cfg, args.out, workers=args.workers, save_checkpoint=args.save_checkpoint)
    for r in s.results:
        print(f"seed {r.seed}: final return {r.final_return:.4f}" + (f"  ERROR {r.error}" if r.error else ""))
    mean, std, _ = s.stats()
    print(f"summary: mean {mean:.4f} std {std:.4f} over {len(s.finals)} seed(s)")
    return 0 if s.ok else 1


def cmd_sweep(args) -> int:
    cfg = _config(args)
    res = ex.sweep(cfg, args.lengths, args.methods, args.out, workers=args.workers)
    for c in res.cells:
        mean, std, med = c.stats()
        status = "ok" if c.ok else "ERROR " + c.row()[-1]
        print(f"bag={c.bag:>5} {c.method:>5}: mean {mean:.4f} std {std:.4f} median {med:.4f}  {status}")
    print(f"summary: {res.summary_path}")
    return 0 if res.ok else 1


def cmd_dump(args) -> int:
    _, rho = ex.dump_from_checkpoint(args.checkpoint, args.env, args.bag_len, args.out, args.seed, args.horizon)
    print(f"wrote {args.out}; pearson(r_hat, hidden) = {rho:.4f}")
    return 0


def cmd_theorem1(args) -> int:
    reports = ex.theorem1_suite(args.instances, args.seed)
    failed = [i for i, r in enumerate(reports) if not r.passed]
    worst = max(r.max_gap for r in reports)
    print(f"{len(reports) - len(failed)}/{len(reports)} instances passed; worst objective gap {worst:.3g}")
    for i in failed:
        print(f"  instance {i}: {reports[i].reason or 'objectives or optimal sets differ'}")
    return 0 if not failed else 1


def cmd_gradcheck(args) -> int:
    errs = ex.gradcheck_suite(args.seeds or list(range(10)), args.h)
    for s, e in zip(args.seeds or range(10), errs):
        print(f"seed {s}: max relative error {e:.3e}")
    ok = max(errs) <= args.tol
    print(f"{'pass' if ok else 'FAIL'}: worst {max(errs):.3e} (tolerance {args.tol:g})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rlbr", description="Learning from bagged rewards: experiments and checks.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML experiment config")
        sp.add_argument("--seeds", type=int, nargs="+", help="override the config's seed list")
        sp.add_argument("--out", help="output directory (default: config output_dir)")
        sp.add_argument("--workers", type=int, default=1, help="parallel worker processes")

    sp = sub.add_parser("run", help="train every seed of one config")
    common(sp)
    sp.add_argument("--save-checkpoint", action="store_true", help="also save the reward model per seed")
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("sweep", help="bag length x method grid")
    common(sp)
    sp.add_argument("--lengths", nargs="+", help="bag lengths; 9999 or 'trajectory' for whole-trajectory bags")
    sp.add_argument("--methods", nargs="+", help="redistributors: raw, ircr, rrd, rbt")
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("dump-rewards", help="compare predicted, hidden and bag-uniform rewards on one episode")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--env", default="gridworld")
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--bag-len", default="25")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="CSV path")
    sp.set_defaults(fn=cmd_dump)

    sp = sub.add_parser("check-theorem1", help="exact objective comparison on random small MDPs")
    sp.add_argument("--instances", type=int, default=50)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_theorem1)

    sp = sub.add_parser("gradcheck", help="reward-model gradients against finite differences")
    sp.add_argument("--seeds", type=int, nargs="+")
    sp.add_argument("--h", type=float, default=1e-5)
    sp.add_argument("--tol", type=float, default=1e-4)
    sp.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
