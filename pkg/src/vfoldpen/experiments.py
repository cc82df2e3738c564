"""Replication loop and the C_or / C_path-or / C'_or benchmark statistics."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import VFoldError
from .histogram_core import build_collection, excess_loss, filter_admissible, fit
from .scenarios import RegressionScenario, generate
from .selectors import OVERPEN_PLUS, Method, SelectorSpec, run_selector

log = logging.getLogger(__name__)

PURPOSES = {"data": 0, "folds": 1, "stratified-folds": 2}


def stream(master_seed: int, replication: int, purpose: str, *extra: int) -> np.random.Generator:
    """Independent generator keyed by ``(master_seed, replication, purpose, *extra)``.

    Keys map to disjoint ``SeedSequence`` spawn keys, so streams do not
    depend on the order in which replications run.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(replication), PURPOSES[purpose], *extra))
    return np.random.Generator(np.random.PCG64(ss))


def table1_selectors() -> list[SelectorSpec]:
    """The roster of the main benchmark table, in its row order."""
    plus = OVERPEN_PLUS
    out = [
        SelectorSpec(Method.IDEAL_EXPECTED_PENALTY),
        SelectorSpec(Method.IDEAL_EXPECTED_PENALTY, overpen=plus),
        SelectorSpec(Method.MALLOWS),
        SelectorSpec(Method.MALLOWS, overpen=plus),
    ]
    out += [SelectorSpec(Method.VFCV, V=V) for V in (2, 5, 10, 20, "n")]
    out += [SelectorSpec(Method.PEN_VF_GENERAL, V=V) for V in (2, 5, 10, 20)]
    out += [SelectorSpec(Method.PEN_VF_CLOSED, V="n")]
    out += [SelectorSpec(Method.PEN_VF_GENERAL, V=V, overpen=plus) for V in (2, 5, 10, 20)]
    out += [SelectorSpec(Method.PEN_VF_CLOSED, V="n", overpen=plus)]
    return out


def appendix_selectors() -> list[SelectorSpec]:
    """Main roster plus Mallows with the true mean noise variance."""
    out = table1_selectors()
    out[4:4] = [SelectorSpec(Method.MALLOWS_STAR), SelectorSpec(Method.MALLOWS_STAR, overpen=OVERPEN_PLUS)]
    return out


@dataclass
class SelectorResult:
    chosen: int | None
    chosen_dim: int | None
    loss: float
    drops: int = 0
    error: str | None = None


@dataclass
class ReplicationResult:
    """Outcome of one simulated data set.

    ``model_losses`` maps every admissible model id to the excess loss of
    its fit; ``oracle_loss`` is their minimum.
    """

    replication: int
    oracle_loss: float
    model_losses: dict[int, float]
    selectors: list[SelectorResult]


def run_replication(
    scenario: RegressionScenario,
    selectors: Sequence[SelectorSpec],
    master_seed: int,
    replication: int = 0,
    collection=None,
) -> ReplicationResult:
    """Draw one data set and run every selector on the shared admissible set.

    Fold-based selectors with equal V share the same regular fold
    assignment. A selector that fails is recorded with NaN loss.
    """
    if collection is None:
        collection = build_collection(scenario.collection_kind, scenario.n)
    data = generate(scenario, stream(master_seed, replication, "data"))
    models = filter_admissible(data, collection)
    fits = {m.id: fit(data, m) for m in models}
    losses = {m.id: excess_loss(fits[m.id], scenario) for m in models}
    dims = {m.id: m.dim for m in models}
    oracle = min(losses.values())
    results = []
    for spec in selectors:
        V = spec.resolve_V(data.n) if spec.V is not None else 0
        rng = stream(master_seed, replication, "folds", V)
        try:
            out = run_selector(spec, data, models, scenario, rng=rng, fits=fits)
        except VFoldError as exc:
            results.append(SelectorResult(None, None, math.nan, 0, f"{type(exc).__name__}: {exc}"))
            continue
        results.append(SelectorResult(out.chosen, dims[out.chosen], losses[out.chosen], len(out.dropped)))
    return ReplicationResult(replication, oracle, losses, results)


@dataclass
class BenchmarkRow:
    selector: str
    method: str
    V: int | str | None
    C: float | None
    overpen: float
    C_or: float
    se_or: float
    C_path_or: float
    se_path_or: float
    C_prime_or: float
    N: int
    drops: int
    median_dim: float = math.nan
    failures: int = 0


@dataclass
class BenchmarkTable:
    scenario: str
    N: int
    master_seed: int
    rows: list[BenchmarkRow] = field(default_factory=list)

    def row(self, label: str) -> BenchmarkRow:
        for r in self.rows:
            if r.selector == label:
                return r
        raise KeyError(label)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkTable":
        return cls(d["scenario"], d["N"], d["master_seed"], [BenchmarkRow(**r) for r in d["rows"]])


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def _std(values) -> float:
    values = list(values)
    if len(values) < 2:
        return 0.0
    m = _mean(values)
    return math.sqrt(math.fsum((v - m) ** 2 for v in values) / (len(values) - 1))


def summarize(
    scenario: RegressionScenario,
    selectors: Sequence[SelectorSpec],
    reps: Sequence[ReplicationResult],
    master_seed: int = 0,
) -> BenchmarkTable:
    """Aggregate replications into accuracy indexes.

    ``C_or = mean(loss) / mean(oracle)``, ``C_path_or = mean(loss / oracle)``,
    ``C'_or = mean(loss) / min_m mean(loss_m)`` over models admissible in
    every replication. Standard errors are ``std / sqrt(N)``, with the
    oracle mean held fixed for ``C_or``.
    """
    reps = sorted(reps, key=lambda r: r.replication)
    N = len(reps)
    table = BenchmarkTable(scenario.name, N, master_seed)
    if N == 0:
        return table
    mean_oracle = _mean(r.oracle_loss for r in reps)
    common = set.intersection(*(set(r.model_losses) for r in reps))
    best_model_mean = min(_mean(r.model_losses[m] for r in reps) for m in common)
    for k, spec in enumerate(selectors):
        ok = [r for r in reps if not math.isnan(r.selectors[k].loss)]
        failures = N - len(ok)
        if ok:
            loss = [r.selectors[k].loss for r in ok]
            ratio = [r.selectors[k].loss / r.oracle_loss for r in ok]
            oracle_ok = _mean(r.oracle_loss for r in ok)
            c_or = _mean(loss) / oracle_ok
            se_or = _std(loss) / oracle_ok / math.sqrt(len(ok))
            c_path = _mean(ratio)
            se_path = _std(ratio) / math.sqrt(len(ok))
            c_prime = _mean(loss) / best_model_mean
            med = float(np.median([r.selectors[k].chosen_dim for r in ok]))
        else:
            c_or = se_or = c_path = se_path = c_prime = med = math.nan
        table.rows.append(
            BenchmarkRow(
                selector=spec.label,
                method=spec.method.value,
                V=spec.V,
                C=spec.C,
                overpen=spec.overpen,
                C_or=c_or,
                se_or=se_or,
                C_path_or=c_path,
                se_path_or=se_path,
                C_prime_or=c_prime,
                N=len(ok),
                drops=sum(r.selectors[k].drops for r in reps),
                median_dim=med,
                failures=failures,
            )
        )
    return table


def _run_chunk(args):
    scenario, selectors, master_seed, indices = args
    collection = build_collection(scenario.collection_kind, scenario.n)
    return [run_replication(scenario, selectors, master_seed, i, collection) for i in indices]


def resolve_workers(workers: int | None) -> int:
    if workers is None or workers == 0:
        env = os.environ.get("VFOLD_THREADS")
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


def run_replications(
    scenario: RegressionScenario,
    selectors: Sequence[SelectorSpec],
    N: int,
    master_seed: int,
    workers: int | None = 1,
) -> list[ReplicationResult]:
    """Run ``N`` replications, in parallel worker processes when ``workers > 1``.

    Results do not depend on the number of workers: each replication owns
    its random streams and results are returned in replication order.
    """
    workers = resolve_workers(workers)
    selectors = list(selectors)
    if workers == 1 or N == 1:
        return _run_chunk((scenario, selectors, master_seed, range(N)))
    chunks = [list(range(w, N, workers)) for w in range(workers)]
    chunks = [c for c in chunks if c]
    with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
        parts = pool.map(_run_chunk, [(scenario, selectors, master_seed, c) for c in chunks])
        reps = [r for part in parts for r in part]
    return sorted(reps, key=lambda r: r.replication)


def benchmark(
    scenario: RegressionScenario,
    selectors: Sequence[SelectorSpec],
    N: int,
    master_seed: int,
    workers: int | None = 1,
) -> BenchmarkTable:
    """Monte Carlo estimate of the accuracy indexes of each selector."""
    if N < 2:
        raise ValueError("benchmark needs N >= 2")
    log.debug("scenario %s: %d replications, %d selectors", scenario.name, N, len(selectors))
    reps = run_replications(scenario, selectors, N, master_seed, workers)
    return summarize(scenario, selectors, reps, master_seed)
