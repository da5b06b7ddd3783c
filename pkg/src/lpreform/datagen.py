"""Synthetic scenario-specific LP generators plus dataset split management.

Three families mirror single-scenario industrial workloads:

* item_placement: assign items to bins under per-bin resource capacities
  (multi-dimensional multi-knapsack relaxation; fixed dimensions).
* apportionment: spread workloads across workers that must be opened at a
  cost (bin-packing-with-apportionment relaxation; dimensions vary).
* planning_chain: multi-period production/inventory balance with shared
  line capacity (dimensions vary).

Instances within a scenario share a base coefficient pattern drawn from the
scenario seed; each instance jitters it. Costs land on coarse grids on
purpose: exact reduced-cost ties are what make the simplex pivot sequence
sensitive to column order. Every emitted instance is verified to solve to
Optimal with at least one pivot.
"""

from __future__ import annotations

import json
import logging
import math
import string
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .exceptions import BadFractionsError, GenerationFailedError
from .lp import LpInstance, RowSense
from .mps import read_mps, write_mps
from .simplex import SolveStatus, SolverConfig, solve

log = logging.getLogger(__name__)

SCENARIOS = ("item_placement", "apportionment", "planning_chain")
MAX_ATTEMPTS = 8

_LETTERS = string.ascii_uppercase


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str
    instance_count: int
    seed: int
    split_fractions: tuple = (0.8, 0.1, 0.1)
    # item placement sizes (fixed across instances)
    items: int = 30
    bins: int = 5
    dims: int = 2
    dims_per_bin: tuple = None  # overrides `dims`, one entry per bin
    support_sizes: tuple = None  # cycled over capacity rows; None = all items
    # apportionment size ranges (sampled per instance)
    workloads_range: tuple = (12, 18)
    workers_range: tuple = (4, 6)
    # planning chain size ranges
    periods_range: tuple = (4, 8)
    products_range: tuple = (2, 4)
    # coefficient behavior
    jitter: float = 0.08
    cost_grid: float = 0.1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.instance_count < 1:
            raise ValueError("instance_count must be >= 1")

    @staticmethod
    def desk_item_placement(instance_count=310, seed=7):
        """Desk-scale profile: m=40, n=150 per instance."""
        return ScenarioSpec("item_placement", instance_count, seed, items=30, bins=5, dims=2)

    @staticmethod
    def paper_scale_bip(instance_count=10, seed=7):
        """Parameterized to the published BIP statistics: every instance has
        195 rows, 1083 columns and 7440 nonzeros."""
        dims_per_bin = (8,) * 5 + (7,) * 14  # 138 capacity rows over 19 bins
        support_sizes = (47,) * 9 + (46,) * 129  # 6357 capacity nonzeros
        return ScenarioSpec(
            "item_placement",
            instance_count,
            seed,
            items=57,
            bins=19,
            dims_per_bin=dims_per_bin,
            support_sizes=support_sizes,
        )


def _grid(values, grid):
    return np.round(np.asarray(values) / grid) * grid


class _ScenarioBase:
    """Scenario-level base pattern shared by all instances of one spec."""

    def __init__(self, spec):
        rng = np.random.default_rng([spec.seed, 0xBA5E])
        if spec.scenario == "item_placement":
            dims = spec.dims_per_bin or (spec.dims,) * spec.bins
            self.item_weight = rng.integers(1, 10, size=(spec.items, max(dims)))
            self.item_cost = np.exp(rng.uniform(np.log(0.5), np.log(8.0), size=spec.items))
            self.bin_mult = rng.uniform(0.8, 1.25, size=spec.bins)
        elif spec.scenario == "apportionment":
            hi = spec.workloads_range[1]
            self.demand = rng.integers(5, 21, size=hi)
            self.open_cost = np.exp(rng.uniform(np.log(4.0), np.log(16.0), size=spec.workers_range[1]))
            self.route_cost = rng.integers(1, 21, size=(hi, spec.workers_range[1]))
        else:
            tp, pp = spec.periods_range[1], spec.products_range[1]
            self.demand = rng.integers(4, 15, size=(tp, pp))
            self.make_cost = np.exp(rng.uniform(np.log(1.0), np.log(6.0), size=pp))
            self.period_factor = rng.uniform(0.85, 1.2, size=tp)
            self.hold_cost = rng.uniform(0.05, 0.4, size=pp)


def _build_item_placement(spec, base, rng):
    items, bins = spec.items, spec.bins
    dims = spec.dims_per_bin or (spec.dims,) * bins
    n = items * bins
    col = lambda i, b: i * bins + b
    col_names = [f"x{_LETTERS[b]}{i:03d}" for i in range(items) for b in range(bins)]

    weight = np.clip(
        np.round(base.item_weight * (1.0 + spec.jitter * rng.uniform(-1, 1, base.item_weight.shape))),
        1,
        None,
    )
    cost_item = base.item_cost * (1.0 + spec.jitter * rng.uniform(-1, 1, items))
    cost = _grid(np.outer(cost_item, base.bin_mult), spec.cost_grid)
    objective = np.zeros(n)
    for i in range(items):
        for b in range(bins):
            objective[col(i, b)] = cost[i, b]

    rows, cols, vals = [], [], []
    row_names = []
    rhs = []
    sense = []
    for i in range(items):
        row = len(row_names)
        row_names.append(f"assign{i:03d}")
        rhs.append(1.0)
        sense.append(int(RowSense.EQ))
        for b in range(bins):
            rows.append(row)
            cols.append(col(i, b))
            vals.append(1.0)

    cap_index = 0
    for b in range(bins):
        for d in range(dims[b]):
            row = len(row_names)
            row_names.append(f"cap{_LETTERS[b]}d{d}")
            if spec.support_sizes is not None:
                size = spec.support_sizes[cap_index % len(spec.support_sizes)]
                support = np.sort(rng.choice(items, size=size, replace=False))
            else:
                support = np.arange(items)
            cap_index += 1
            total = 0.0
            for i in support:
                rows.append(row)
                cols.append(col(int(i), b))
                vals.append(float(weight[int(i), d]))
                total += float(weight[int(i), d])
            slack_factor = rng.uniform(1.15, 1.5)
            rhs.append(float(math.ceil(slack_factor * total / bins)))
            sense.append(int(RowSense.LE))

    m = len(row_names)
    matrix = sp.csc_matrix((vals, (rows, cols)), shape=(m, n))
    return LpInstance(
        name="",
        objective=objective,
        matrix=matrix,
        rhs=np.array(rhs),
        row_sense=np.array(sense, dtype=np.int8),
        col_lower=np.zeros(n),
        col_upper=np.ones(n),
        col_names=tuple(col_names),
        row_names=tuple(row_names),
    )


def _build_apportionment(spec, base, rng):
    w = int(rng.integers(spec.workloads_range[0], spec.workloads_range[1] + 1))
    k = int(rng.integers(spec.workers_range[0], spec.workers_range[1] + 1))
    demand = np.clip(
        np.round(base.demand[:w] * (1.0 + spec.jitter * rng.uniform(-1, 1, w))), 2, None
    )
    open_cost = _grid(
        base.open_cost[:k] * (1.0 + spec.jitter * rng.uniform(-1, 1, k)), spec.cost_grid
    )
    route = _grid(base.route_cost[:w, :k] * 0.01, 0.01)

    n = w * k + k
    fcol = lambda i, j: i * k + j
    ycol = lambda j: w * k + j
    col_names = [f"f{_LETTERS[j]}{i:03d}" for i in range(w) for j in range(k)]
    col_names += [f"open{_LETTERS[j]}" for j in range(k)]
    objective = np.zeros(n)
    lower = np.zeros(n)
    upper = np.empty(n)
    for i in range(w):
        for j in range(k):
            objective[fcol(i, j)] = route[i, j]
            upper[fcol(i, j)] = float(demand[i])
    for j in range(k):
        objective[ycol(j)] = open_cost[j]
        upper[ycol(j)] = 1.0

    rows, cols, vals = [], [], []
    row_names, rhs, sense = [], [], []
    for i in range(w):
        row = len(row_names)
        row_names.append(f"demand{i:03d}")
        rhs.append(float(demand[i]))
        sense.append(int(RowSense.GE))
        for j in range(k):
            rows.append(row)
            cols.append(fcol(i, j))
            vals.append(1.0)
    cap = math.ceil(rng.uniform(1.3, 1.7) * float(demand.sum()) / k)
    for j in range(k):
        row = len(row_names)
        row_names.append(f"capacity{_LETTERS[j]}")
        rhs.append(0.0)
        sense.append(int(RowSense.LE))
        for i in range(w):
            rows.append(row)
            cols.append(fcol(i, j))
            vals.append(1.0)
        rows.append(row)
        cols.append(ycol(j))
        vals.append(-float(cap))

    m = len(row_names)
    matrix = sp.csc_matrix((vals, (rows, cols)), shape=(m, n))
    return LpInstance(
        name="",
        objective=objective,
        matrix=matrix,
        rhs=np.array(rhs),
        row_sense=np.array(sense, dtype=np.int8),
        col_lower=lower,
        col_upper=upper,
        col_names=tuple(col_names),
        row_names=tuple(row_names),
    )


def _build_planning_chain(spec, base, rng):
    t = int(rng.integers(spec.periods_range[0], spec.periods_range[1] + 1))
    p = int(rng.integers(spec.products_range[0], spec.products_range[1] + 1))
    demand = np.clip(
        np.round(base.demand[:t, :p] * (1.0 + spec.jitter * rng.uniform(-1, 1, (t, p)))),
        1,
        None,
    )
    make_cost = _grid(
        np.outer(base.period_factor[:t], base.make_cost[:p])
        * (1.0 + spec.jitter * rng.uniform(-1, 1, (t, p))),
        spec.cost_grid,
    )
    hold_cost = _grid(base.hold_cost[:p], 0.05) + 0.05

    n = 2 * t * p
    mcol = lambda ti, pi: ti * p + pi
    scol = lambda ti, pi: t * p + ti * p + pi
    col_names = [f"make{_LETTERS[pi]}{ti:02d}" for ti in range(t) for pi in range(p)]
    col_names += [f"store{_LETTERS[pi]}{ti:02d}" for ti in range(t) for pi in range(p)]
    objective = np.zeros(n)
    lower = np.zeros(n)
    upper = np.full(n, math.inf)
    make_cap = float(np.ceil(1.4 * demand.max()))
    for ti in range(t):
        for pi in range(p):
            objective[mcol(ti, pi)] = make_cost[ti, pi]
            objective[scol(ti, pi)] = hold_cost[pi]
            upper[mcol(ti, pi)] = make_cap

    rows, cols, vals = [], [], []
    row_names, rhs, sense = [], [], []
    for ti in range(t):
        for pi in range(p):
            row = len(row_names)
            row_names.append(f"bal{_LETTERS[pi]}{ti:02d}")
            rhs.append(float(demand[ti, pi]))
            sense.append(int(RowSense.EQ))
            rows.append(row)
            cols.append(mcol(ti, pi))
            vals.append(1.0)
            if ti > 0:
                rows.append(row)
                cols.append(scol(ti - 1, pi))
                vals.append(1.0)
            rows.append(row)
            cols.append(scol(ti, pi))
            vals.append(-1.0)
    line_cap = float(math.ceil(rng.uniform(1.25, 1.6) * float(demand.sum(axis=1).max())))
    for ti in range(t):
        row = len(row_names)
        row_names.append(f"line{ti:02d}")
        rhs.append(line_cap)
        sense.append(int(RowSense.LE))
        for pi in range(p):
            rows.append(row)
            cols.append(mcol(ti, pi))
            vals.append(1.0)

    m = len(row_names)
    matrix = sp.csc_matrix((vals, (rows, cols)), shape=(m, n))
    return LpInstance(
        name="",
        objective=objective,
        matrix=matrix,
        rhs=np.array(rhs),
        row_sense=np.array(sense, dtype=np.int8),
        col_lower=lower,
        col_upper=upper,
        col_names=tuple(col_names),
        row_names=tuple(row_names),
    )


_BUILDERS = {
    "item_placement": _build_item_placement,
    "apportionment": _build_apportionment,
    "planning_chain": _build_planning_chain,
}


def build_instance(spec, index, attempt=0):
    """Deterministically build one instance (no solvability check)."""
    base = _ScenarioBase(spec)
    rng = np.random.default_rng([spec.seed, index, attempt])
    lp = _BUILDERS[spec.scenario](spec, base, rng)
    return lp.with_name(f"{spec.scenario}_{spec.seed}_{index:04d}")


def generate(spec, out_dir, solver_cfg=None):
    """Generate, verify and write all instances of ``spec`` as MPS files.

    Returns the manifest dict (also written to out_dir/manifest.json). Every
    instance must solve to Optimal with >= 1 iteration; failures retry with a
    fresh sub-seed up to MAX_ATTEMPTS before GenerationFailedError.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    solver_cfg = solver_cfg or SolverConfig()
    entries = []
    base = _ScenarioBase(spec)
    for index in range(spec.instance_count):
        lp = None
        metrics = None
        for attempt in range(MAX_ATTEMPTS):
            rng = np.random.default_rng([spec.seed, index, attempt])
            candidate = _BUILDERS[spec.scenario](spec, base, rng).with_name(
                f"{spec.scenario}_{spec.seed}_{index:04d}"
            )
            _, metrics = solve(candidate, solver_cfg)
            if metrics.status == SolveStatus.OPTIMAL and metrics.iterations >= 1:
                lp = candidate
                break
            log.warning(
                "instance %d attempt %d rejected (status=%s, iterations=%d)",
                index,
                attempt,
                metrics.status.value,
                metrics.iterations,
            )
        if lp is None:
            raise GenerationFailedError(
                f"could not generate a solvable instance for index {index}"
            )
        path = out_dir / f"{lp.name}.mps"
        write_mps(lp, path)
        entries.append(
            {
                "name": lp.name,
                "path": path.name,
                "m": lp.num_rows,
                "n": lp.num_cols,
                "nnz": lp.nnz,
                "baseline_iterations": metrics.iterations,
            }
        )
    manifest = {
        "scenario": spec.scenario,
        "seed": spec.seed,
        "spec": asdict(spec),
        "instances": entries,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_manifest(path):
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    manifest["_dir"] = str(path.parent)
    return manifest


def load_instances(manifest, subset=None):
    """Read the MPS files listed in a manifest back as LpInstances."""
    root = Path(manifest.get("_dir", "."))
    out = []
    for entry in subset if subset is not None else manifest["instances"]:
        out.append(read_mps(root / entry["path"]))
    return out


def split_dataset(manifest, fractions=(0.8, 0.1, 0.1), seed=0):
    """Disjoint, covering, seed-deterministic (train, val, test) manifests."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise BadFractionsError(f"fractions {fractions} must be nonnegative and sum to 1")
    entries = manifest["instances"]
    order = np.random.default_rng(seed).permutation(len(entries))
    n_train = int(math.floor(fractions[0] * len(entries)))
    n_val = int(math.floor(fractions[1] * len(entries)))
    parts = (
        order[:n_train],
        order[n_train : n_train + n_val],
        order[n_train + n_val :],
    )
    out = []
    for tag, idx in zip(("train", "val", "test"), parts):
        sub = dict(manifest)
        sub["split"] = tag
        sub["instances"] = [entries[i] for i in sorted(idx)]
        out.append(sub)
    return tuple(out)
