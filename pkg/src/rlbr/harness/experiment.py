"""Seeded runs, bag-length sweeps and the reward-comparison dump.

Every cell and seed writes its own files; the summaries are produced afterwards
by a single reducer that re-reads the per-seed logs.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .. import envlab as el
from .. import oracle
from ..agent import QLearner, SacConfig, SacLite, make_redistributor, read_log, rlbr_loop
from ..agent.redistributors import RBTRedistributor
from ..rbt import RewardBagTransformer, checkpoint, model_gradcheck, pearson, relabel
from .config import ExperimentConfig, parse_regime, regime_label
from .plots import write_svg

SUMMARY_COLUMNS = ("env", "bag", "method", "n_seeds", "n_ok", "final_mean", "final_std", "final_median",
                   "status", "error")
DUMP_COLUMNS = ("t", "r_hat", "hidden_reward", "bag_uniform", "pearson_r")


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def build_learner(cfg: ExperimentConfig, env, seed: int):
    if cfg.learner == "qlearning":
        return QLearner(env.n_states, env.n_actions, cfg.total_steps,
                        batch_size=cfg.loop_config().batch_size, **cfg.learner_kwargs())
    return SacLite(env.obs_dim, env.action_dim, SacConfig(**cfg.learner_kwargs()), seed=seed)


# --------------------------------------------------------------------------- single runs


@dataclass
class SeedResult:
    seed: int
    log_path: str | None
    final_return: float
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class RunSummary:
    env: str
    bag: str
    method: str
    results: list[SeedResult] = field(default_factory=list)
    error: str | None = None

    @property
    def finals(self) -> np.ndarray:
        return np.array([r.final_return for r in self.results if r.ok])

    @property
    def ok(self) -> bool:
        return self.error is None and bool(self.results) and all(r.ok for r in self.results)

    def stats(self) -> tuple[float, float, float]:
        f = self.finals
        if not len(f):
            return float("nan"), float("nan"), float("nan")
        return float(np.mean(f)), float(np.std(f)), float(np.median(f))

    def row(self) -> list[str]:
        mean, std, med = self.stats()
        errs = [f"seed {r.seed}: {r.error}" for r in self.results if not r.ok]
        if self.error:
            errs.insert(0, self.error)
        return [self.env, self.bag, self.method, str(len(self.results)), str(len(self.finals)),
                _fmt(mean), _fmt(std), _fmt(med), "ok" if self.ok else "error", " | ".join(errs)]


def run_seed(cfg: ExperimentConfig, seed: int, out_dir, save_checkpoint: bool = False) -> SeedResult:
    """One training run; failures are captured in the result rather than raised."""
    out_dir = Path(out_dir)
    log_path = out_dir / f"seed_{seed}.csv"
    try:
        env = cfg.make_env()
        red = make_redistributor(cfg.redistributor, env.obs_dim, env.action_dim, cfg.rbt_config(),
                                 cfg.rrd_k, seed=seed)
        learner = build_learner(cfg, env, seed)
        log = rlbr_loop(env, red, learner, cfg.loop_config(), cfg.regime, seed, eval_env=cfg.make_env())
        log.write_csv(log_path)
        if save_checkpoint and isinstance(red, RBTRedistributor):
            checkpoint.save(red.model, out_dir / f"seed_{seed}.rbt")
        return SeedResult(seed, str(log_path), log.final_return)
    except Exception as exc:  # noqa: BLE001 - reported per seed
        return SeedResult(seed, None, float("nan"), f"{type(exc).__name__}: {exc}")


def _run_seed_job(args) -> SeedResult:
    return run_seed(*args)


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def final_from_log(path) -> float:
    rows = read_log(path)
    return rows[-1]["eval_return_mean"] if rows else float("nan")


def write_summary(path, summaries: list[RunSummary]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in summaries:
            w.writerow(s.row())


def read_summary(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _reduce(cfg: ExperimentConfig, results: list[SeedResult]) -> RunSummary:
    # finals are re-read from the logs so the summary is exactly what the files say
    for r in results:
        if r.ok:
            r.final_return = final_from_log(r.log_path)
    return RunSummary(cfg.env, regime_label(cfg.regime), cfg.redistributor, results)


def run(cfg: ExperimentConfig, out_dir=None, seeds=None, workers: int = 1,
        save_checkpoint: bool = False) -> RunSummary:
    """Train every seed, write ``seed_<n>.csv`` logs, ``config.yaml`` and ``summary.csv``."""
    if seeds is not None:
        cfg = cfg.replace(seeds=list(seeds))
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.yaml", "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)
    results = _map(_run_seed_job, [(cfg, s, out, save_checkpoint) for s in cfg.seeds], workers)
    summary = _reduce(cfg, results)
    write_summary(out / "summary.csv", [summary])
    return summary


# --------------------------------------------------------------------------- sweeps


@dataclass
class SweepResult:
    cells: list[RunSummary]
    summary_path: str
    plot_paths: list[str]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.cells)


def _cell_dir(out: Path, bag: str, method: str) -> Path:
    return out / f"bag_{bag}_{method}"


def _mean_curve(results: list[SeedResult]) -> list[tuple[float, float]]:
    logs = [read_log(r.log_path) for r in results if r.ok]
    if not logs:
        return []
    n = min(len(lg) for lg in logs)
    return [(logs[0][i]["step"], float(np.mean([lg[i]["eval_return_mean"] for lg in logs]))) for i in range(n)]


def sweep(cfg: ExperimentConfig, lengths=None, methods=None, out_dir=None, workers: int = 1) -> SweepResult:
    """Cross product of bag regimes and redistributors. A failing cell is recorded and the sweep goes on."""
    lengths = list(lengths if lengths is not None else cfg.sweep.get("lengths", [cfg.regime]))
    methods = list(methods if methods is not None else cfg.sweep.get("methods", [cfg.redistributor]))
    if not lengths or not methods:
        raise ValueError("lengths and methods must be nonempty")
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells: list[tuple[str, str, ExperimentConfig | None, str | None]] = []
    for length in lengths:
        for method in methods:
            label = str(length)
            try:
                regime = parse_regime(length)
                label = regime_label(regime)
                cells.append((label, method, cfg.replace(regime=regime, redistributor=method), None))
            except ValueError as exc:
                cells.append((label, method, None, f"{type(exc).__name__}: {exc}"))
    jobs, owners = [], []
    for i, (label, method, ccfg, _) in enumerate(cells):
        if ccfg is None:
            continue
        d = _cell_dir(out, label, method)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "config.yaml", "w") as fh:
            yaml.safe_dump(ccfg.to_dict(), fh, sort_keys=True)
        for s in ccfg.seeds:
            jobs.append((ccfg, s, d, False))
            owners.append(i)
    results = _map(_run_seed_job, jobs, workers)
    per_cell: dict[int, list[SeedResult]] = {}
    for i, r in zip(owners, results):
        per_cell.setdefault(i, []).append(r)

    summaries, curves = [], {}
    for i, (label, method, ccfg, err) in enumerate(cells):
        if ccfg is None:
            summaries.append(RunSummary(cfg.env, label, method, [], err))
            continue
        s = _reduce(ccfg, per_cell.get(i, []))
        write_summary(_cell_dir(out, label, method) / "summary.csv", [s])
        summaries.append(s)
        curves[f"{method} bag={label}"] = _mean_curve(s.results)
    summary_path = out / "sweep_summary.csv"
    write_summary(summary_path, summaries)
    plot_path = out / f"curves_{cfg.env}.svg"
    write_svg(plot_path, curves, title=f"{cfg.env}: mean eval return over {len(cfg.seeds)} seed(s)")
    return SweepResult(summaries, str(summary_path), [str(plot_path)])


# --------------------------------------------------------------------------- diagnostics


def _layout(bag_len, T: int) -> el.BagLayout:
    regime = parse_regime(bag_len)
    return el.layout_for(regime, T, np.random.default_rng(0))


def dump_reward_comparison(model: RewardBagTransformer, env, bag_len, path=None, seed: int = 0,
                           policy=None) -> tuple[list[dict], float]:
    """Relabel one evaluation episode and compare with the hidden and uniform-bag rewards.

    ``policy(obs, state_id, t, rng)`` picks actions; the default is uniformly random.
    """
    if (model.state_dim, model.action_dim) != (env.obs_dim, env.action_dim):
        raise checkpoint.CheckpointError(
            f"model dims {(model.state_dim, model.action_dim)} do not match env dims "
            f"{(env.obs_dim, env.action_dim)}")
    rng = np.random.default_rng(seed)
    if policy is None:
        if env.discrete:
            policy = lambda o, s, t, g: int(g.integers(env.n_actions))  # noqa: E731
        else:
            policy = lambda o, s, t, g: g.uniform(-1, 1, size=env.action_dim)  # noqa: E731
    tr, hidden = el.rollout(env, lambda o, s, t: policy(o, s, t, rng), rng)
    layout = _layout(bag_len, len(tr))
    r_hat = relabel(model, tr.observations, env.action_features(tr.actions))
    R = el.bag_rewards(hidden, layout)
    uniform = np.zeros(len(tr))
    for b, Rb in zip(layout, R):
        uniform[b.start:b.end] = Rb / b.length
    rho = pearson(r_hat, hidden)
    rows = [{"t": t, "r_hat": float(r_hat[t]), "hidden_reward": float(hidden[t]),
             "bag_uniform": float(uniform[t]), "pearson_r": rho} for t in range(len(tr))]
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DUMP_COLUMNS)
            for r in rows:
                w.writerow([r["t"]] + [_fmt(r[c]) for c in DUMP_COLUMNS[1:]])
    return rows, rho


def dump_from_checkpoint(ckpt_path, env_name: str, bag_len, path, seed: int = 0, horizon: int | None = None):
    env = el.make_env(env_name, horizon)
    model = checkpoint.load(ckpt_path, expect_dims=(env.obs_dim, env.action_dim))
    return dump_reward_comparison(model, env, bag_len, path, seed)


def theorem1_suite(n: int = 50, seed: int = 0) -> list[oracle.Theorem1Report]:
    """Random small tabular instances, alternating deterministic and stochastic dynamics."""
    rng = np.random.default_rng(seed)
    reports = []
    for i in range(n):
        mdp, layout, redist, brf = oracle.random_theorem1_instance(rng, deterministic=i % 2 == 0)
        reports.append(oracle.check_theorem1(mdp, layout, redist, brf))
    return reports


def gradcheck_suite(seeds, h: float = 1e-5) -> list[float]:
    return [model_gradcheck(s, h=h) for s in seeds]
