"""Experiment orchestration: training runs, single rollouts and safe-rate evaluation."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import barrier as bar
from .closed_loop import rollout, sample_initial_states
from .residual_learner import TrainingResult, learn_cbf, load_checkpoint, save_checkpoint
from .scenario import ScenarioConfig, load_bundled, load_scenario


@dataclass(frozen=True)
class RolloutSummary:
    index: int
    initial: tuple[float, float, float]
    reason: str
    min_h: float
    steps: int

    @property
    def safe(self) -> bool:
        return self.min_h > 0

    @property
    def goal(self) -> bool:
        return self.reason == "goal"


@dataclass
class RunReport:
    scenario: str
    filter: str  # "nominal" or "learned"
    seed: int
    rollouts: list[RolloutSummary] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.rollouts)

    @property
    def safe_rate(self) -> float:
        return sum(r.safe for r in self.rollouts) / self.n if self.rollouts else math.nan

    @property
    def goal_rate(self) -> float:
        return sum(r.goal for r in self.rollouts) / self.n if self.rollouts else math.nan

    @property
    def min_h(self) -> float:
        return min((r.min_h for r in self.rollouts), default=math.nan)

    def table(self) -> str:
        head = f"{'#':>3}  {'x0':>7} {'y0':>7} {'theta0':>7}  {'reason':<9} {'steps':>5}  {'min h':>10}  safe"
        lines = [f"scenario {self.scenario}, {self.filter} filter, seed {self.seed}", head, "-" * len(head)]
        for r in self.rollouts:
            x, y, th = r.initial
            lines.append(
                f"{r.index:>3}  {x:>7.3f} {y:>7.3f} {th:>7.3f}  {r.reason:<9} {r.steps:>5}  {r.min_h:>10.5f}  {'yes' if r.safe else 'no'}"
            )
        lines.append("-" * len(head))
        lines.append(f"safe rate {self.safe_rate:.0%}   goal rate {self.goal_rate:.0%}   worst min h {self.min_h:.5f}")
        return "\n".join(lines)

    def key_values(self) -> str:
        kv = [
            ("scenario", self.scenario),
            ("filter", self.filter),
            ("seed", self.seed),
            ("n", self.n),
            ("safe", sum(r.safe for r in self.rollouts)),
            ("goal", sum(r.goal for r in self.rollouts)),
            ("safe_rate", repr(self.safe_rate)),
            ("goal_rate", repr(self.goal_rate)),
            ("min_h", repr(self.min_h)),
        ]
        for r in self.rollouts:
            p = f"rollout.{r.index}"
            kv += [
                (f"{p}.initial", ",".join(repr(float(v)) for v in r.initial)),
                (f"{p}.reason", r.reason),
                (f"{p}.steps", r.steps),
                (f"{p}.min_h", repr(r.min_h)),
            ]
        return "\n".join(f"{k}={v}" for k, v in kv) + "\n"


def resolve_scenario(cfg) -> ScenarioConfig:
    """Accept a config object, a file path, or the name of a bundled scenario."""
    if isinstance(cfg, ScenarioConfig):
        return cfg
    path = Path(cfg)
    if path.exists():
        return load_scenario(path)
    try:
        return load_bundled(str(cfg))
    except FileNotFoundError:
        raise FileNotFoundError(f"no scenario file or bundled scenario named '{cfg}'") from None


def resolve_model(config: ScenarioConfig, model):
    """``None`` keeps the nominal filter; a path is loaded as a checkpoint."""
    if model is None or isinstance(model, (list, tuple)):
        return model
    if isinstance(model, TrainingResult):
        return model.estimators
    return load_checkpoint(model, config)


def _summarize(args) -> RolloutSummary:
    config, estimators, index, x0 = args
    log = rollout(config, x0, estimators)
    return RolloutSummary(index, tuple(float(v) for v in x0), log.reason, log.min_h, len(log) - 1)


def run_eval(config, model=None, n_samples: int = 50, seed: int | None = None, workers: int = 1) -> RunReport:
    """Safe-rate evaluation from ``n_samples`` seeded initial states.

    Rollouts are independent, so ``workers > 1`` spreads them over a process
    pool; the report is ordered by sample index either way.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    config = resolve_scenario(config)
    estimators = resolve_model(config, model)
    seed = config.seed if seed is None else int(seed)
    starts = sample_initial_states(config.initial_region, n_samples, np.random.default_rng(seed))
    jobs = [(config, estimators, i, x0) for i, x0 in enumerate(starts)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_summarize, jobs))
    else:
        summaries = [_summarize(j) for j in jobs]
    summaries.sort(key=lambda s: s.index)
    return RunReport(config.name, "nominal" if estimators is None else "learned", seed, summaries)


def write_report(report: RunReport, path) -> None:
    Path(path).write_text(report.key_values())


def read_report(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        key, sep, value = line.partition("=")
        if sep:
            out[key] = value
    return out


def loss_csv_path(checkpoint_path) -> Path:
    p = Path(checkpoint_path)
    return p.with_name(p.name + ".loss.csv")


def run_train(config, out_path) -> TrainingResult:
    """Train per-barrier estimators and write the checkpoint plus a loss CSV.

    The loss CSV sits next to the checkpoint (``<out_path>.loss.csv``) with
    one row per update and one loss column per barrier.
    """
    config = resolve_scenario(config)
    result = learn_cbf(config)
    seeds = [config.train.seed + i for i in range(len(config.barriers))]
    save_checkpoint(out_path, result.estimators, seeds)
    with open(loss_csv_path(out_path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["update", *(f"loss_{n}" for n in config.barrier_names)])
        for k, row in enumerate(zip(*result.losses)):
            w.writerow([k, *(repr(float(v)) for v in row)])
    return result


def run_rollout(config, model, initial, out_path):
    """Roll out the true plant from ``initial`` and write the trajectory CSV."""
    config = resolve_scenario(config)
    x0 = np.asarray(initial, dtype=float)
    if x0.shape != (3,) or not np.all(np.isfinite(x0)):
        raise ValueError("initial state must be three finite numbers x, y, theta")
    xmin, xmax, ymin, ymax = config.workspace
    if not (xmin <= x0[0] <= xmax and ymin <= x0[1] <= ymax):
        raise ValueError(f"initial position ({x0[0]}, {x0[1]}) lies outside the workspace")
    log = rollout(config, x0, resolve_model(config, model))
    log.to_csv(out_path)
    return log


def counterexample_table(x0s=(0.25, 1.0, 4.0), dt: float = 1e-3) -> list[dict]:
    """Hitting times of the non-Lipschitz example next to the Lipschitz companion."""
    rows = []
    for x0 in x0s:
        t_hit = bar.demo_nonlipschitz_alpha(x0, dt)
        h0 = bar.counterexample_h(x0)
        rows.append(dict(x0=x0, h0=h0, t_hit=t_hit, lipschitz_min_h=bar.demo_lipschitz_alpha(h0, dt, 10 * x0)))
    return rows
