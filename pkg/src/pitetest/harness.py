"""Replication-level simulation runner for type I error and power grids.

Replication ``r`` of a cell draws from ``substream(master_seed, key, r)``
where ``key`` is the cell's ``stream`` (default: its index in the grid).
Cells sharing a stream key see identical covariates, noise and permutation
draws, which pairs comparisons between them.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import CellFailure, ConfigError, PiteError
from .permtest import run_permutation_test
from .predictors import FOREST, ForestParams, PredictorSpec
from .simgen import AlsDesign, NullDesign, Spread, simulate
from .streams import draw_seed, substream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Cell:
    design: NullDesign | AlsDesign
    predictor: PredictorSpec = field(default_factory=PredictorSpec)
    permutations: int = 300
    replications: int = 300
    alpha: float = 0.05
    stream: int | None = None
    label: str = ""

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.permutations < 1:
            raise ConfigError("permutations must be >= 1")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")

    def to_dict(self):
        d = asdict(self.design)
        d["type"] = "null" if isinstance(self.design, NullDesign) else "als"
        if isinstance(self.design, AlsDesign):
            d["spread"] = self.design.spread.value
        return {
            "design": d,
            "predictor": self.predictor.to_dict(),
            "permutations": self.permutations,
            "replications": self.replications,
            "alpha": self.alpha,
            "stream": self.stream,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d):
        design = dict(d["design"])
        kind = design.pop("type", "null")
        if kind == "null":
            design = NullDesign(**design)
        elif kind == "als":
            if design.get("correlation") is not None:
                design["correlation"] = tuple(map(tuple, design["correlation"]))
            design = AlsDesign(**design)
        else:
            raise ConfigError(f"unknown design type {kind!r}")
        return cls(
            design=design,
            predictor=PredictorSpec.from_dict(d.get("predictor", {"kind": "linear"})),
            permutations=int(d.get("permutations", 300)),
            replications=int(d.get("replications", 300)),
            alpha=float(d.get("alpha", 0.05)),
            stream=d.get("stream"),
            label=d.get("label", ""),
        )


@dataclass(frozen=True)
class ExperimentGrid:
    cells: tuple
    master_seed: int
    label: str = ""

    def to_dict(self):
        return {"label": self.label, "master_seed": self.master_seed,
                "cells": [c.to_dict() for c in self.cells]}

    @classmethod
    def from_dict(cls, d):
        if "master_seed" not in d:
            raise ConfigError("grid requires a master_seed")
        return cls(tuple(Cell.from_dict(c) for c in d["cells"]), int(d["master_seed"]), d.get("label", ""))


@dataclass
class CellResult:
    index: int
    cell: Cell
    p_values: np.ndarray
    wall_time: float = 0.0

    @property
    def replications(self):
        return len(self.p_values)

    @property
    def rejections(self):
        return int(np.count_nonzero(self.p_values < self.cell.alpha))

    @property
    def rejection_rate(self):
        return self.rejections / self.replications

    @property
    def half_width(self):
        r = self.rejection_rate
        return 1.96 * math.sqrt(r * (1 - r) / self.replications)

    @property
    def mean_p_value(self):
        return float(np.mean(self.p_values))

    def to_dict(self, timings=False):
        out = {
            "index": self.index,
            "rejection_rate": self.rejection_rate,
            "rejections": self.rejections,
            "replications": self.replications,
            "mean_p_value": self.mean_p_value,
            "half_width": self.half_width,
            "p_values": [float(p) for p in self.p_values],
            "cell": self.cell.to_dict(),
        }
        if timings:
            out["wall_time"] = self.wall_time
        return out


@dataclass
class SimulationTable:
    grid: ExperimentGrid
    results: list

    def to_dict(self, timings=False):
        return {"grid": self.grid.to_dict(), "cells": [r.to_dict(timings) for r in self.results]}

    def rows(self):
        """One flat row per cell, in the column layout of the published tables."""
        out = []
        for r in self.results:
            d = r.cell.design
            row = {
                "label": r.cell.label,
                "model": "LM" if r.cell.predictor.kind == "linear" else "RF",
                "sample_size": d.n,
            }
            if isinstance(d, NullDesign):
                row.update(nuisance_continuous=d.n_nuisance_cont, nuisance_binary=d.n_nuisance_bin,
                           ate=d.ate, effect_size="", condition="null")
            else:
                nc, nb = d.nuisance_split
                row.update(nuisance_continuous=nc, nuisance_binary=nb, ate=d.ate,
                           effect_size=d.target_effect_size, condition=d.spread.label)
            row.update(rejection_rate=r.rejection_rate, half_width=r.half_width,
                       replications=r.replications, permutations=r.cell.permutations,
                       mean_p_value=r.mean_p_value)
            out.append(row)
        return out

    def write_csv(self, path):
        rows = self.rows()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["label"], lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})

    def by_label(self):
        return {r.cell.label: r for r in self.results}


def replication_p_value(cell: Cell, master_seed: int, key: int, rep: int, threads: int = 1) -> float:
    rng = substream(master_seed, key, rep)
    trial = simulate(cell.design, rng)
    report = run_permutation_test(trial.dataset, cell.predictor, cell.permutations,
                                  cell.alpha, seed=draw_seed(rng), threads=threads)
    return report.p_value


def run_cell(grid: ExperimentGrid, index: int, threads: int = 1) -> CellResult:
    """Run one cell of ``grid``; identical to that cell's result in a full-grid run."""
    cell = grid.cells[index]
    key = index if cell.stream is None else cell.stream
    t0 = time.perf_counter()

    def one(rep):
        try:
            return replication_p_value(cell, grid.master_seed, key, rep)
        except PiteError as exc:
            raise CellFailure(index, cell.label, rep, exc) from exc

    reps = range(cell.replications)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            p = list(pool.map(one, reps))
    else:
        p = [one(r) for r in reps]
    return CellResult(index, cell, np.array(p), time.perf_counter() - t0)


def _cell_fingerprint(grid, index):
    return json.dumps({"seed": grid.master_seed, "cell": grid.cells[index].to_dict()}, sort_keys=True)


def run_grid(grid: ExperimentGrid, threads: int = 1, checkpoint=None) -> SimulationTable:
    """Run every cell. With ``checkpoint``, finished cells are appended to that
    JSON-lines file as they complete and reused on the next call."""
    done = {}
    if checkpoint is not None:
        checkpoint = Path(checkpoint)
        if checkpoint.exists():
            for line in checkpoint.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    rec = json.loads(line)
                    done[rec["fingerprint"]] = rec
    results = []
    for i, cell in enumerate(grid.cells):
        fp = _cell_fingerprint(grid, i)
        if fp in done:
            rec = done[fp]
            results.append(CellResult(i, cell, np.array(rec["p_values"]), rec.get("wall_time", 0.0)))
            continue
        res = run_cell(grid, i, threads)
        log.info("cell %d %s: rejection %.3f (%d reps, %.1fs)", i, cell.label,
                 res.rejection_rate, res.replications, res.wall_time)
        results.append(res)
        if checkpoint is not None:
            with open(checkpoint, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"fingerprint": fp, "p_values": [float(p) for p in res.p_values],
                                     "wall_time": res.wall_time}) + "\n")
    return SimulationTable(grid, results)


def run_type1(grid: ExperimentGrid, threads: int = 1, checkpoint=None) -> SimulationTable:
    if not all(isinstance(c.design, NullDesign) for c in grid.cells):
        raise ConfigError("type I error grids must use null designs only")
    return run_grid(grid, threads, checkpoint)


def run_power(grid: ExperimentGrid, threads: int = 1, checkpoint=None) -> SimulationTable:
    if not all(isinstance(c.design, AlsDesign) for c in grid.cells):
        raise ConfigError("power grids must use ALS designs only")
    return run_grid(grid, threads, checkpoint)


# rows of the published type I error table: (n, continuous nuisance, binary nuisance, ate)
TYPE1_ROWS = [
    (100, 0, 0, 0.0), (100, 0, 0, 0.5),
    (250, 0, 0, 0.0), (250, 75, 35, 0.0), (250, 0, 0, 0.5), (250, 75, 35, 0.5),
    (500, 0, 0, 0.0), (500, 75, 35, 0.0), (500, 150, 70, 0.0),
    (500, 0, 0, 0.5), (500, 75, 35, 0.5), (500, 150, 70, 0.5),
    (1000, 0, 0, 0.0), (1000, 75, 35, 0.0), (1000, 150, 70, 0.0),
    (1000, 0, 0, 0.5), (1000, 75, 35, 0.5), (1000, 150, 70, 0.5),
]


def _predictors(models, trees):
    out = []
    for m in models:
        if m in ("lm", "linear"):
            out.append(PredictorSpec())
        elif m in ("rf", "forest"):
            out.append(PredictorSpec(FOREST, ForestParams(n_trees=trees)))
        else:
            raise ConfigError(f"unknown model {m!r}")
    return out


def type1_grid(master_seed, replications=300, permutations=300, models=("lm",), trees=100,
               rows=None, alpha=0.05, pair_ate=True) -> ExperimentGrid:
    """Type I error grid over the published rows.

    With ``pair_ate`` the ate = 0 and ate = 0.5 cells of otherwise identical
    rows share a stream key.
    """
    rows = TYPE1_ROWS if rows is None else rows
    cells = []
    keys = {}
    for spec in _predictors(models, trees):
        for n, nc, nb, ate in rows:
            stream = None
            if pair_ate:
                stream = keys.setdefault((spec.kind, n, nc, nb), len(keys))
            model = "LM" if spec.kind == "linear" else "RF"
            cells.append(Cell(NullDesign(n, ate, nc, nb), spec, permutations, replications, alpha,
                              stream, f"{model} n={n} nuis={nc}/{nb} ate={ate}"))
    if pair_ate:
        # keep paired keys clear of default index-based keys
        cells = [replace(c, stream=c.stream + len(cells)) for c in cells]
    return ExperimentGrid(tuple(cells), int(master_seed), "type1")


def power_grid(master_seed, effect_size=0.19, replications=300, permutations=300, models=("lm",),
               trees=100, sizes=(3000, 1000), nuisance=(0, 20, 50, 100), spreads=tuple(Spread),
               alpha=0.05) -> ExperimentGrid:
    cells = []
    for spec in _predictors(models, trees):
        model = "LM" if spec.kind == "linear" else "RF"
        for n in sizes:
            for k in nuisance:
                for sp in spreads:
                    sp = Spread(sp)
                    cells.append(Cell(AlsDesign(n, effect_size, sp, k), spec, permutations,
                                      replications, alpha, None,
                                      f"{model} n={n} nuis={k} ES={effect_size} {sp.value}"))
    return ExperimentGrid(tuple(cells), int(master_seed), f"power ES={effect_size}")
