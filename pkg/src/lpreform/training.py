"""REINFORCE-with-critic trainer over a scenario dataset.

Each step draws a batch of instances with replacement, samples one cluster
permutation per instance, scores it by the drop in simplex iterations against
the cached identity-order baseline, and takes one Adam step on the policy
(encoder + pointer) with advantage (reward - critic) and one on the critic
with the squared error. The critic sees detached embeddings, so the two
updates touch disjoint parameters.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .exceptions import (
    AllSolvesFailedError,
    NonFiniteError,
    NonOptimalStatusError,
    TooManyPermutationsError,
)
from .graph import featurize
from .lp import apply_permutation, expand_cluster_permutation
from .nets import GraphTensors, PolicyParams, adam_step, load_checkpoint, save_checkpoint
from .reformulate import (
    SplitConfig,
    k_shot_reformulate,
    policy_forward,
    split_variables,
)
from .simplex import Metric, SolveStatus, SolverConfig, evaluate_metric, solve

log = logging.getLogger(__name__)

METRICS_HEADER = ("step", "mean_reward", "critic_loss", "lr", "wall_time")


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 40000
    batch_size: int = 8
    lr: float = 1e-4
    lr_decay: float = 0.96
    decay_interval_steps: int = 1000
    clip_norm: float = 1.0
    k_clusters: int = 20
    pool: str = "mean"
    split_method: str = "contiguous"
    k_shot_eval: int = 3
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    train_size: int = 640
    val_size: int = 320
    reward_mode: str = "raw"  # or "relative"
    checkpoint_interval: int = 1000

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be >= 1")
        if self.reward_mode not in ("raw", "relative"):
            raise ValueError(f"unknown reward_mode {self.reward_mode!r}")

    @staticmethod
    def desk_profile(**overrides):
        """Laptop-scale profile: fewer steps, fewer clusters, higher lr."""
        base = dict(
            steps=5000,
            k_clusters=5,
            lr=1e-3,
            decay_interval_steps=500,
            train_size=200,
            val_size=50,
            checkpoint_interval=2500,
        )
        base.update(overrides)
        return TrainConfig(**base)

    @staticmethod
    def paper_profile(**overrides):
        return TrainConfig(**overrides)

    def split_config(self):
        return SplitConfig(k=self.k_clusters, method=self.split_method, pool=self.pool)

    def lr_at(self, step):
        return self.lr * self.lr_decay ** (step // self.decay_interval_steps)


@dataclass(frozen=True)
class RewardRecord:
    instance: str
    baseline_iterations: float
    permuted_iterations: float
    reward: float
    baseline_prediction: float


def compute_reward(baseline, permuted, mode="raw"):
    """raw: baseline - permuted. relative: the same scaled by the baseline."""
    if mode == "relative":
        return (baseline - permuted) / max(baseline, 1.0)
    return baseline - permuted


class _InstanceCache:
    """Per-instance precomputation: graph tensors, split, baseline metric."""

    def __init__(self, lp, split_cfg, solver_cfg):
        self.lp = lp
        self.tensors = GraphTensors(featurize(lp))
        k = min(split_cfg.k, lp.num_cols)
        self.split = split_variables(lp, k, split_cfg.method)
        _, metrics = solve(lp, solver_cfg)
        self.status = metrics.status
        self.baseline = float(metrics.iterations)


def _prepare_instances(instances, split_cfg, solver_cfg):
    cache = []
    for lp in instances:
        entry = _InstanceCache(lp, split_cfg, solver_cfg)
        if entry.status != SolveStatus.OPTIMAL:
            log.warning("dropping %s: baseline status %s", lp.name, entry.status.value)
            continue
        cache.append(entry)
    if not cache:
        raise ValueError("no usable training instances (none solve to Optimal)")
    return cache


def train(
    cfg,
    instances,
    out_dir=None,
    resume_from=None,
    clock=time.perf_counter,
    log_every=100,
):
    """Run Adam/REINFORCE for cfg.steps over ``instances``.

    Returns (params, metrics_rows) where each row matches METRICS_HEADER.
    Deterministic for a fixed (cfg.seed, instances): all sampling flows from
    one master RNG whose state rides along in checkpoints, so a resumed run
    reproduces the uninterrupted one exactly. Wall time comes from ``clock``
    (injectable for reproducible logs).
    """
    torch.set_num_threads(1)
    split_cfg = cfg.split_config()
    cache = _prepare_instances(instances, split_cfg, cfg.solver)

    params = PolicyParams(seed=cfg.seed, lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    start_step = 0
    metrics_rows = []

    if resume_from is not None:
        rng_state, extra = load_checkpoint(resume_from, params)
        if rng_state is not None:
            rng.bit_generator.state = rng_state
        start_step = params.step
    elif cache:
        # calibrate input conditioners on the first batch, then freeze them
        first = rng.integers(0, len(cache), size=cfg.batch_size)
        params.encoder.calibrate([cache[i].tensors for i in first])

    out_dir_path = None
    if out_dir is not None:
        from pathlib import Path

        out_dir_path = Path(out_dir)
        out_dir_path.mkdir(parents=True, exist_ok=True)

    t_start = clock()
    for step in range(start_step + 1, cfg.steps + 1):
        lr = cfg.lr_at(step - 1)
        picks = rng.integers(0, len(cache), size=cfg.batch_size)
        seeds = rng.integers(0, 2**62, size=cfg.batch_size)
        log_probs = []
        advantages = []
        critic_preds = []
        rewards = []
        for i in range(cfg.batch_size):
            entry = cache[int(picks[i])]
            generator = torch.Generator()
            generator.manual_seed(int(seeds[i]))
            sample, log_prob, var_embs = policy_forward(
                entry.lp,
                params,
                split_cfg,
                mode="sample",
                generator=generator,
                cached=(entry.tensors, entry.split),
            )
            try:
                permuted_iters = evaluate_metric(
                    entry.lp, sample.column_perm, Metric.ITERATIONS, cfg.solver
                )
            except NonOptimalStatusError as exc:
                log.warning("skipping %s in batch: %s", entry.lp.name, exc)
                continue
            reward = compute_reward(entry.baseline, permuted_iters, cfg.reward_mode)
            pred = params.critic.predict(var_embs)
            log_probs.append(log_prob)
            critic_preds.append(pred)
            advantages.append(reward - float(pred.detach()))
            rewards.append(reward)

        if log_probs:
            b_eff = len(log_probs)
            policy_loss = -sum(a * lp_ for a, lp_ in zip(advantages, log_probs)) / b_eff
            reward_t = torch.tensor(rewards, dtype=torch.float64)
            critic_loss = ((torch.stack(critic_preds) - reward_t) ** 2).mean()
            if not (torch.isfinite(policy_loss) and torch.isfinite(critic_loss)):
                raise NonFiniteError(f"non-finite loss at step {step}")
            params.policy_opt.zero_grad()
            params.critic_opt.zero_grad()
            policy_loss.backward()
            critic_loss.backward()
            adam_step(params.policy_opt, params.policy_parameters(), lr, cfg.clip_norm)
            adam_step(params.critic_opt, list(params.critic.parameters()), lr, cfg.clip_norm)
            mean_reward = float(np.mean(rewards))
            critic_loss_val = float(critic_loss.detach())
        else:
            mean_reward = math.nan
            critic_loss_val = math.nan
        params.step = step
        metrics_rows.append((step, mean_reward, critic_loss_val, lr, clock() - t_start))
        if log_every and step % log_every == 0:
            log.info(
                "step %d mean_reward=%.3f critic_loss=%.3f lr=%.2e",
                step,
                mean_reward,
                critic_loss_val,
                lr,
            )
        if out_dir_path is not None and (
            step % cfg.checkpoint_interval == 0 or step == cfg.steps
        ):
            save_checkpoint(
                out_dir_path / f"checkpoint_{step:06d}.npz",
                params,
                rng_state=rng.bit_generator.state,
            )

    if out_dir_path is not None:
        write_metrics_csv(out_dir_path / "metrics.csv", metrics_rows)
        save_checkpoint(
            out_dir_path / "checkpoint_final.npz", params, rng_state=rng.bit_generator.state
        )
    return params, metrics_rows


def write_metrics_csv(path, rows, append=False):
    mode = "a" if append else "w"
    with open(path, mode, newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if not append:
            writer.writerow(METRICS_HEADER)
        for step, mean_reward, critic_loss, lr, wall in rows:
            writer.writerow(
                (step, f"{mean_reward:.10g}", f"{critic_loss:.10g}", f"{lr:.10g}", f"{wall:.6f}")
            )


# ---------------------------------------------------------------------------
# Evaluation


@dataclass(frozen=True)
class EvalRow:
    instance: str
    num_rows: int
    num_cols: int
    nnz: int
    baseline_iterations: float
    best_iterations: float
    ratio: float
    improvement: float
    baseline_time: float
    best_time: float
    shots: tuple
    error: str = ""


@dataclass(frozen=True)
class EvalReport:
    rows: tuple
    k_shots: int

    def ratios(self):
        return np.array([r.ratio for r in self.rows if not r.error])

    def mean_iteration_reduction(self):
        """(mean, stderr) of 1 - ratio over evaluated instances."""
        red = 1.0 - self.ratios()
        if red.size == 0:
            return math.nan, math.nan
        stderr = red.std(ddof=1) / math.sqrt(red.size) if red.size > 1 else 0.0
        return float(red.mean()), float(stderr)

    def mean_time_reduction(self):
        rows = [r for r in self.rows if not r.error and r.baseline_time > 0]
        if not rows:
            return math.nan, math.nan
        red = np.array([1.0 - r.best_time / r.baseline_time for r in rows])
        stderr = red.std(ddof=1) / math.sqrt(red.size) if red.size > 1 else 0.0
        return float(red.mean()), float(stderr)

    def ratio_cdf(self):
        """Sorted (ratio, cumulative fraction) pairs."""
        ratios = np.sort(self.ratios())
        n = ratios.size
        return [(float(r), (i + 1) / n) for i, r in enumerate(ratios)]

    def save_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                (
                    "instance",
                    "m",
                    "n",
                    "nnz",
                    "baseline_iterations",
                    "best_iterations",
                    "ratio",
                    "improvement",
                    "shots",
                    "error",
                )
            )
            for r in self.rows:
                writer.writerow(
                    (
                        r.instance,
                        r.num_rows,
                        r.num_cols,
                        r.nnz,
                        f"{r.baseline_iterations:.10g}",
                        f"{r.best_iterations:.10g}",
                        f"{r.ratio:.10g}",
                        f"{r.improvement:.10g}",
                        ";".join(f"{s:.10g}" for s in r.shots if s is not None),
                        r.error,
                    )
                )

    def save_cdf_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(("ratio", "cumulative_probability"))
            for ratio, prob in self.ratio_cdf():
                writer.writerow((f"{ratio:.10g}", f"{prob:.10g}"))


def evaluate(params, instances, k_shots, cfg, sampler=None, base_seed=10_000):
    """Baseline vs best-of-k reformulated solve for every instance.

    ``sampler(lp, shot_index) -> PermutationSample`` overrides the policy
    (used for identity / uniform-random baselines in tests).
    """
    split_cfg = cfg.split_config()
    rows = []
    for idx, lp in enumerate(instances):
        solution, metrics = solve(lp, cfg.solver)
        if metrics.status != SolveStatus.OPTIMAL:
            rows.append(
                EvalRow(lp.name, lp.num_rows, lp.num_cols, lp.nnz, math.nan, math.nan,
                        math.nan, math.nan, math.nan, math.nan, (), error=metrics.status.value)
            )
            continue
        baseline = float(metrics.iterations)
        baseline_time = metrics.solve_time
        try:
            if sampler is None:
                best, samples = k_shot_reformulate(
                    lp,
                    params,
                    k_shots,
                    split_cfg,
                    cfg.solver,
                    base_seed=base_seed + idx * max(k_shots, 1),
                )
            else:
                samples = []
                best = None
                for shot in range(k_shots):
                    s = sampler(lp, shot)
                    iters = evaluate_metric(lp, s.column_perm, Metric.ITERATIONS, cfg.solver)
                    s = replace(s, reward=iters)
                    samples.append(s)
                    if best is None or iters < best.reward:
                        best = s
        except (NonOptimalStatusError, AllSolvesFailedError) as exc:
            rows.append(
                EvalRow(lp.name, lp.num_rows, lp.num_cols, lp.nnz, baseline, math.nan,
                        math.nan, math.nan, baseline_time, math.nan, (), error=str(exc))
            )
            continue
        target = lp if best.column_perm.is_identity else apply_permutation(lp, best.column_perm)
        _, best_metrics = solve(target, cfg.solver)
        rows.append(
            EvalRow(
                instance=lp.name,
                num_rows=lp.num_rows,
                num_cols=lp.num_cols,
                nnz=lp.nnz,
                baseline_iterations=baseline,
                best_iterations=float(best.reward),
                ratio=float(best.reward) / baseline if baseline else math.nan,
                improvement=baseline - float(best.reward),
                baseline_time=baseline_time,
                best_time=best_metrics.solve_time,
                shots=tuple(s.reward for s in samples),
            )
        )
    return EvalReport(rows=tuple(rows), k_shots=k_shots)


# ---------------------------------------------------------------------------
# Brute-force oracle


def brute_force_oracle(lp, split, cfg=None, max_permutations=1_000_000):
    """Iteration count of every cluster permutation, lexicographic order.

    Returns (best_perm, table) where table is [(perm tuple, iterations)] and
    best_perm is the argmin (lowest lexicographic on ties). Refuses k! above
    ``max_permutations``.
    """
    cfg = cfg or SolverConfig()
    k = split.k
    if math.factorial(k) > max_permutations:
        raise TooManyPermutationsError(f"{k}! exceeds {max_permutations}")
    table = []
    best_perm = None
    best_iters = math.inf
    for perm in itertools.permutations(range(k)):
        column_perm = expand_cluster_permutation(split, np.array(perm, dtype=np.int64))
        iters = evaluate_metric(lp, column_perm, Metric.ITERATIONS, cfg)
        table.append((perm, iters))
        if iters < best_iters:
            best_perm = perm
            best_iters = iters
    return best_perm, table
