"""Count queries, loss accounting, and risk-driven scheme selection.

The released answer to a count query is its count over the shuffled
output database.  Because shuffling within a channel only permutes
payloads, a query whose attributes all sit inside the tied channel is
answered exactly; queries that span channels can drift, and the drift
is bounded by loss <= c' * |e^eps - 1|.

Scheme selection searches a finite grid of (t, S) candidates by
regularized empirical risk: seeded shuffle trials measure the workload's
mean loss, a complexity penalty lambda * G(scheme) discourages heavier
schemes, and the argmin wins with ties broken toward fewer shufflers,
then fewer batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import fmean
from typing import Callable, Sequence

from .dataset import Dataset, EncodedDataset, high_bit, one_hot_encode
from .partition import build_plan, plan_batches
from .privacy import epsilon_is
from .queryplan import (
    QuerySpec,
    TiedDataset,
    bucket_mask,
    horizon_mask,
    parse_query,
    relevant_attributes,
    tie_attributes,
    validate_query,
)
from .seeds import derive_seed
from .shuffler import iterative_shuffle


class RiskError(ValueError):
    """Raised for invalid risk configurations or broken risk guarantees."""


def _index_reader(db, attr_name: str) -> Callable[[int], int]:
    """Slot -> domain index accessor for one attribute."""
    if isinstance(db, TiedDataset):
        chan, pos = db.locate(attr_name)
        column = db.columns[chan]
        return lambda slot: high_bit(column[slot][pos])
    if isinstance(db, EncodedDataset):
        pos = db.schema.index_of(attr_name)
        rows = db.rows
        return lambda slot: high_bit(rows[slot].vectors[pos])
    raise TypeError(f"cannot count over {type(db).__name__}")


def count_query(db, query: QuerySpec, plan=None) -> int:
    """Rows of ``db`` satisfying every predicate and the time window.

    ``db`` is an encoded, tied, or shuffled dataset.  When ``plan`` is
    given the count is accumulated batch by batch over the plan's
    boundaries; the total is the same either way.
    """
    query = validate_query(query, db.schema)
    checks = []
    for pred in query.predicates:
        attr = db.schema.attribute(pred.attribute)
        checks.append((_index_reader(db, attr.name), bucket_mask(attr, pred)))
    if query.time_horizon is not None:
        attr = db.schema.attribute(query.time_horizon.attribute)
        checks.append(
            (_index_reader(db, attr.name), horizon_mask(attr, query.time_horizon))
        )

    def matches(slot: int) -> bool:
        return all(mask[read(slot)] for read, mask in checks)

    if plan is None:
        return sum(1 for slot in range(db.n) if matches(slot))
    if plan.n != db.n:
        raise RiskError(f"plan covers {plan.n} rows but the database has {db.n}")
    total = 0
    for start, end in plan.bounds:
        total += sum(1 for slot in range(start, end) if matches(slot))
    return total


def loss(c: float, c_prime: float) -> float:
    """Absolute count drift |c - c'|."""
    return abs(c - c_prime)


def loss_bound(c_prime: float, epsilon: float) -> float:
    """Guaranteed ceiling c' * |e^eps - 1| on the count drift."""
    if c_prime < 0:
        raise ValueError(f"counts are non-negative, got {c_prime}")
    return c_prime * abs(math.expm1(epsilon))


@dataclass(frozen=True)
class UtilityReport:
    """Input/output counts with the loss checked against its bound."""

    c: int
    c_prime: int
    loss: float
    loss_bound: float
    bound_satisfied: bool
    epsilon_used: float


def measure_utility(c: int, c_prime: int, epsilon: float) -> UtilityReport:
    drift = loss(c, c_prime)
    ceiling = loss_bound(c_prime, epsilon)
    return UtilityReport(
        c=c,
        c_prime=c_prime,
        loss=drift,
        loss_bound=ceiling,
        bound_satisfied=drift <= ceiling,
        epsilon_used=epsilon,
    )


@dataclass(frozen=True, order=True)
class Scheme:
    """One (t, S) randomization candidate."""

    t: int
    S: int


def default_regularizer(scheme: Scheme) -> float:
    """Complexity penalty G = S + ln(t): heavier schemes cost more."""
    return scheme.S + math.log(scheme.t)


@dataclass(frozen=True)
class RiskConfig:
    """Inputs to the empirical-risk sweep.

    ``lam`` is the regularization strength (config key "lambda").
    ``tied_attributes`` overrides the default tie set, which is the
    union of the workload queries' attributes.
    """

    hypothesis_grid: tuple[Scheme, ...]
    workload: tuple[QuerySpec | str, ...]
    lam: float = 0.01
    trials_per_scheme: int = 4
    tied_attributes: tuple[str, ...] | None = None
    time_attribute: str | None = None
    regularizer: Callable[[Scheme], float] = default_regularizer


@dataclass(frozen=True)
class RiskResult:
    """Regularized empirical risk of one candidate."""

    risk: float
    bound: float
    mean_loss: float
    penalty: float
    epsilon: float


def empirical_risk(
    per_run_losses: Sequence[float],
    c_primes: Sequence[float],
    epsilon: float,
    lam: float,
    scheme: Scheme,
    regularizer: Callable[[Scheme], float] = default_regularizer,
) -> RiskResult:
    """Mean loss plus complexity penalty, with its theoretical ceiling.

    The ceiling mean(e^eps * c') + lam * G dominates the risk whenever
    eps >= 0 and every run respected its loss bound; a violation there
    is surfaced as an error because it means the inputs did not come
    from a bound-respecting mechanism.
    """
    if not per_run_losses:
        raise RiskError("cannot compute risk of an empty workload")
    if len(per_run_losses) != len(c_primes):
        raise RiskError(
            f"{len(per_run_losses)} losses but {len(c_primes)} released counts"
        )
    if lam < 0:
        raise RiskError(f"regularization strength must be non-negative, got {lam}")
    penalty = lam * regularizer(scheme)
    mean_loss = fmean(per_run_losses)
    risk = mean_loss + penalty
    bound = fmean(math.exp(epsilon) * c for c in c_primes) + penalty
    if epsilon >= 0 and risk > bound * (1 + 1e-12) + 1e-12:
        raise RiskError(
            f"risk {risk} exceeds its ceiling {bound} at epsilon {epsilon}; "
            f"per-run losses must have violated their bounds"
        )
    return RiskResult(
        risk=risk, bound=bound, mean_loss=mean_loss, penalty=penalty, epsilon=epsilon
    )


@dataclass(frozen=True)
class SchemeRisk:
    """One row of the ranked risk table."""

    scheme: Scheme
    n1: int
    result: RiskResult


@dataclass(frozen=True)
class SchemeSelection:
    best: Scheme
    table: tuple[SchemeRisk, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "best": {"t": self.best.t, "S": self.best.S},
            "table": [
                {
                    "t": row.scheme.t,
                    "S": row.scheme.S,
                    "n1": row.n1,
                    "risk": row.result.risk,
                    "bound": row.result.bound,
                    "mean_loss": row.result.mean_loss,
                    "penalty": row.result.penalty,
                    "epsilon": row.result.epsilon,
                }
                for row in self.table
            ],
        }


def _resolve_workload(
    config: RiskConfig, schema
) -> tuple[tuple[QuerySpec, ...], tuple[str, ...]]:
    queries = []
    for entry in config.workload:
        if isinstance(entry, str):
            queries.append(parse_query(entry, schema, config.time_attribute))
        else:
            queries.append(validate_query(entry, schema))
    if config.tied_attributes is not None:
        tied = config.tied_attributes
    else:
        touched: set[str] = set()
        for query in queries:
            touched.update(relevant_attributes(query, schema))
        tied = tuple(name for name in schema.names if name in touched)
    return tuple(queries), tied


def select_scheme(
    config: RiskConfig, dataset: Dataset | EncodedDataset, seed: int
) -> SchemeSelection:
    """Pick the grid candidate with the lowest regularized empirical risk.

    Each candidate runs ``trials_per_scheme`` seeded shuffles of the
    whole workload; candidate trials draw from independent derived
    streams, so the table does not depend on evaluation order.  Ties
    break toward smaller S, then smaller t.
    """
    if not config.hypothesis_grid:
        raise RiskError("hypothesis grid is empty")
    if not config.workload:
        raise RiskError("workload is empty")
    if config.trials_per_scheme < 1:
        raise RiskError(
            f"need at least one trial per scheme, got {config.trials_per_scheme}"
        )
    encoded = (
        one_hot_encode(dataset) if isinstance(dataset, Dataset) else dataset
    )
    queries, tied = _resolve_workload(config, encoded.schema)
    tied_db = tie_attributes(encoded, tied)
    channels = tuple(ch.name for ch in tied_db.channels)
    input_counts = [count_query(tied_db, q) for q in queries]

    rows = []
    for scheme in config.hypothesis_grid:
        if scheme.S < 2:
            raise RiskError(f"candidate {scheme} needs at least 2 shufflers")
        sizes = plan_batches(tied_db.n, scheme.t)
        if sizes[0] < 2:
            raise RiskError(
                f"candidate {scheme} leaves batches of a single row; "
                f"its ratio is undefined"
            )
        epsilon = epsilon_is(scheme.t, sizes[0], scheme.S)
        losses: list[float] = []
        released: list[float] = []
        for trial in range(config.trials_per_scheme):
            plan = build_plan(
                tied_db.n,
                scheme.t,
                channels,
                scheme.S,
                derive_seed(seed, "risk", scheme.t, scheme.S, trial),
            )
            shuffled = iterative_shuffle(tied_db, plan)
            for query, c in zip(queries, input_counts):
                c_prime = count_query(shuffled, query)
                losses.append(loss(c, c_prime))
                released.append(c_prime)
        result = empirical_risk(
            losses, released, epsilon, config.lam, scheme, config.regularizer
        )
        rows.append(SchemeRisk(scheme=scheme, n1=sizes[0], result=result))

    rows.sort(key=lambda row: (row.result.risk, row.scheme.S, row.scheme.t))
    return SchemeSelection(best=rows[0].scheme, table=tuple(rows))
