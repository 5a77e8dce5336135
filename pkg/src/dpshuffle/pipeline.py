"""End-to-end orchestration: encode, tie, partition, shuffle, account,
measure, and release.

A run encodes the dataset, ties the query's attributes into one
channel, shuffles under the configured scheme, and releases the count
measured on the shuffled output together with its privacy budget.  If
the released count violates its loss bound the run re-shuffles with a
fresh derived seed, up to ``max_retries`` times.
Cumulative mode is refused outright when its budget is negative.

The emitted report never contains the input count, raw rows, or the
permutations; reruns with the same inputs produce byte-identical JSON.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .dataset import Dataset, Schema, load_csv, one_hot_encode
from .partition import build_plan, plan_batches
from .privacy import account, epsilon_is
from .queryplan import QuerySpec, parse_query, relevant_attributes, tie_attributes, validate_query
from .seeds import derive_seed
from .shuffler import cumulative_iterative_shuffle, iterative_shuffle
from .utility import (
    RiskConfig,
    Scheme,
    SchemeSelection,
    count_query,
    measure_utility,
    select_scheme,
)


class ConfigError(ValueError):
    """Raised for malformed or incomplete run configurations."""


class PipelineRefused(RuntimeError):
    """Raised instead of releasing under a negative privacy budget."""

    def __init__(self, message: str, epsilon: float):
        super().__init__(message)
        self.epsilon = epsilon


class RetriesExhausted(RuntimeError):
    """Raised when no retry produced a bound-satisfying release."""

    def __init__(self, message: str, attempts: tuple[AttemptRecord, ...]):
        super().__init__(message)
        self.attempts = attempts


@dataclass(frozen=True)
class AttemptRecord:
    attempt: int
    c_prime: int
    loss: float
    loss_bound: float


_CONFIG_KEYS = {
    "seed",
    "t",
    "S",
    "mode",
    "lambda",
    "max_retries",
    "hypothesis_grid",
    "trials",
    "tied_attributes",
    "time_attribute",
    "schema",
    "workload",
}


@dataclass(frozen=True)
class PipelineConfig:
    """Run parameters, usually loaded from a JSON config file."""

    seed: int
    t: int | None = None
    S: int | None = None
    mode: str = "IS"
    lam: float = 0.01
    max_retries: int = 16
    hypothesis_grid: tuple[Scheme, ...] = ()
    trials: int = 4
    tied_attributes: tuple[str, ...] | None = None
    time_attribute: str | None = None
    schema_path: str | None = None
    workload: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.mode not in ("IS", "CIS"):
            raise ConfigError(f"mode must be 'IS' or 'CIS', got {self.mode!r}")
        if (self.t is None) != (self.S is None):
            raise ConfigError("t and S must be configured together")
        if self.max_retries < 0:
            raise ConfigError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")


def _parse_grid(raw: object) -> tuple[Scheme, ...]:
    grid = []
    for entry in raw:
        if isinstance(entry, dict):
            grid.append(Scheme(int(entry["t"]), int(entry["S"])))
        else:
            t, s = entry
            grid.append(Scheme(int(t), int(s)))
    return tuple(grid)


def load_config(path: str) -> PipelineConfig:
    """Read a JSON config file, rejecting unknown keys."""
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)!r}")
    if "seed" not in raw:
        raise ConfigError(f"{path}: config needs a 'seed'")
    try:
        return PipelineConfig(
            seed=int(raw["seed"]),
            t=None if raw.get("t") is None else int(raw["t"]),
            S=None if raw.get("S") is None else int(raw["S"]),
            mode=raw.get("mode", "IS"),
            lam=float(raw.get("lambda", 0.01)),
            max_retries=int(raw.get("max_retries", 16)),
            hypothesis_grid=_parse_grid(raw.get("hypothesis_grid", ())),
            trials=int(raw.get("trials", 4)),
            tied_attributes=(
                None
                if raw.get("tied_attributes") is None
                else tuple(raw["tied_attributes"])
            ),
            time_attribute=raw.get("time_attribute"),
            schema_path=raw.get("schema"),
            workload=tuple(raw.get("workload", ())),
        )
    except (TypeError, ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from None


REPORT_FIELDS = (
    "query",
    "c_prime",
    "epsilon_signed",
    "epsilon_report",
    "loss_bound",
    "plan_digest",
    "seed",
    "retries_used",
    "t",
    "S",
    "mode",
    "bound_status",
)


@dataclass(frozen=True)
class DPReport:
    """The released artifact: answer, budget, and audit trail.

    Deliberately excludes the input count, the rows, and the drawn
    permutations; everything here is safe to publish.
    """

    query: str
    c_prime: int
    epsilon_signed: float
    epsilon_report: float
    loss_bound: float
    plan_digest: str
    seed: int
    retries_used: int
    t: int
    S: int
    mode: str
    bound_status: str

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in REPORT_FIELDS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [
            f"query:          {self.query}",
            f"released count: {self.c_prime}",
            f"epsilon:        {self.epsilon_report:.6f} "
            f"(signed {self.epsilon_signed:+.6f})",
            f"loss bound:     {self.loss_bound:.6f} ({self.bound_status})",
            f"scheme:         t={self.t} batches, S={self.S} shufflers, "
            f"mode {self.mode}",
            f"retries used:   {self.retries_used}",
            f"seed:           {self.seed}",
            f"plan digest:    {self.plan_digest}",
        ]
        return "\n".join(lines) + "\n"


def _resolve_scheme(
    config: PipelineConfig, dataset: Dataset, query: QuerySpec
) -> tuple[Scheme, SchemeSelection | None]:
    if config.t is not None and config.S is not None:
        return Scheme(config.t, config.S), None
    if not config.hypothesis_grid:
        raise ConfigError(
            "configure t and S, or provide a hypothesis_grid to search"
        )
    workload: tuple[QuerySpec | str, ...] = config.workload or (query,)
    selection = select_scheme(
        RiskConfig(
            hypothesis_grid=config.hypothesis_grid,
            workload=workload,
            lam=config.lam,
            trials_per_scheme=config.trials,
            tied_attributes=config.tied_attributes,
            time_attribute=config.time_attribute,
        ),
        dataset,
        derive_seed(config.seed, "select"),
    )
    return selection.best, selection


def run_on_dataset(
    config: PipelineConfig, dataset: Dataset, query: QuerySpec
) -> DPReport:
    """Run the full release flow on an in-memory dataset."""
    encoded = one_hot_encode(dataset)
    query = validate_query(query, dataset.schema)
    scheme, _ = _resolve_scheme(config, dataset, query)

    tied_names = config.tied_attributes or relevant_attributes(query, dataset.schema)
    tied_db = tie_attributes(encoded, tied_names)
    channels = tuple(ch.name for ch in tied_db.channels)

    sizes = plan_batches(tied_db.n, scheme.t)
    acct = account(config.mode, sizes, scheme.S)
    if config.mode == "CIS" and acct.epsilon < 0:
        raise PipelineRefused(
            f"cumulative shuffling with t={scheme.t}, S={scheme.S} on "
            f"{tied_db.n} rows (largest batch {sizes[0]}) has negative "
            f"privacy budget {acct.epsilon:.6f}; release refused, use "
            f"per-batch mode or a larger batch count",
            epsilon=acct.epsilon,
        )

    c = count_query(tied_db, query)
    attempts: list[AttemptRecord] = []
    for attempt in range(config.max_retries + 1):
        plan = build_plan(
            tied_db.n,
            scheme.t,
            channels,
            scheme.S,
            derive_seed(config.seed, "attempt", attempt),
        )
        if config.mode == "IS":
            shuffled = iterative_shuffle(tied_db, plan)
        else:
            shuffled = cumulative_iterative_shuffle(tied_db, plan)
        c_prime = count_query(shuffled, query)
        util = measure_utility(c, c_prime, acct.epsilon)
        if util.bound_satisfied:
            return DPReport(
                query=query.text(),
                c_prime=c_prime,
                epsilon_signed=acct.epsilon,
                epsilon_report=acct.epsilon_report,
                loss_bound=util.loss_bound,
                plan_digest=plan.digest(),
                seed=config.seed,
                retries_used=attempt,
                t=scheme.t,
                S=scheme.S,
                mode=config.mode,
                bound_status="satisfied",
            )
        attempts.append(
            AttemptRecord(attempt, c_prime, util.loss, util.loss_bound)
        )
    last = attempts[-1]
    raise RetriesExhausted(
        f"loss bound still violated after {config.max_retries} retries "
        f"(last attempt: loss {last.loss} > bound {last.loss_bound:.6f}); "
        f"no report released",
        attempts=tuple(attempts),
    )


def _load_inputs(
    config: PipelineConfig, dataset_path: str, schema_path: str | None
) -> Dataset:
    schema_file = schema_path or config.schema_path
    if schema_file is None:
        raise ConfigError(
            "a schema file is required (flag --schema or config 'schema')"
        )
    with open(schema_file, encoding="utf-8") as fh:
        schema = Schema.from_dict(json.load(fh))
    return load_csv(dataset_path, schema)


def run_pipeline(
    config: PipelineConfig,
    dataset_path: str,
    query_text: str,
    schema_path: str | None = None,
) -> DPReport:
    """Run the full release flow from files on disk."""
    dataset = _load_inputs(config, dataset_path, schema_path)
    query = parse_query(query_text, dataset.schema, config.time_attribute)
    return run_on_dataset(config, dataset, query)


def risk_sweep(
    config: PipelineConfig, dataset_path: str, schema_path: str | None = None
) -> SchemeSelection:
    """Rank the configured hypothesis grid on the configured workload."""
    dataset = _load_inputs(config, dataset_path, schema_path)
    if not config.workload:
        raise ConfigError("a risk sweep needs a non-empty 'workload' in the config")
    return select_scheme(
        RiskConfig(
            hypothesis_grid=config.hypothesis_grid,
            workload=config.workload,
            lam=config.lam,
            trials_per_scheme=config.trials,
            tied_attributes=config.tied_attributes,
            time_attribute=config.time_attribute,
        ),
        dataset,
        derive_seed(config.seed, "select"),
    )


# Reference configurations: rows, batches, largest batch as stated,
# shufflers, and the previously reported budget magnitude.
REFERENCE_EPSILONS: tuple[tuple[int, int, int, int, float], ...] = (
    (1_000, 130, 7, 3, 0.50),
    (11_000, 1_000, 11, 3, 0.0),
    (100_000, 5_500, 18, 3, 0.11),
    (1_000_000, 31_000, 32, 3, 0.03),
    (100_000_000, 1_000_000, 99, 3, 0.03),
    (1_000, 100, 10, 2, 0.2),
    (11_000, 500, 22, 2, 0.12),
    (100_000, 2_200, 45, 2, 0.1),
    (1_000_000, 10_000, 100, 2, 0.02),
    (100_000_000, 218_000, 458, 2, 0.04),
)

# A recomputed row counts as matching when its signed budget is
# non-negative and its magnitude lands within max(0.005, 10%) of the
# reported value; the rest are listed as discrepancies.
_ABS_TOL = 0.005
_REL_TOL = 0.10


@dataclass(frozen=True)
class ReferenceRow:
    index: int
    n: int
    t: int
    n1: int
    S: int
    reported: float
    epsilon_signed: float
    epsilon_magnitude: float
    delta: float
    matches: bool
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "n": self.n,
            "t": self.t,
            "n1": self.n1,
            "S": self.S,
            "reported": self.reported,
            "epsilon_signed": self.epsilon_signed,
            "epsilon_magnitude": self.epsilon_magnitude,
            "delta": self.delta,
            "matches": self.matches,
            "note": self.note,
        }


@dataclass(frozen=True)
class ReferenceReport:
    rows: tuple[ReferenceRow, ...]
    note: str = field(
        default=(
            "Budgets recomputed as ln(t / (n1-1)^S) with the batch sizes as "
            "stated; rows whose stated n1 disagrees with n/t are taken at "
            "face value.  Reported values are magnitudes, so rows with a "
            "negative recomputed budget are flagged."
        )
    )

    @property
    def matches(self) -> tuple[ReferenceRow, ...]:
        return tuple(row for row in self.rows if row.matches)

    @property
    def discrepancies(self) -> tuple[ReferenceRow, ...]:
        return tuple(row for row in self.rows if not row.matches)

    def to_dict(self) -> dict:
        return {
            "note": self.note,
            "rows": [row.to_dict() for row in self.rows],
            "matches": [row.index for row in self.matches],
            "discrepancies": [row.index for row in self.discrepancies],
        }

    def to_text(self) -> str:
        header = (
            f"{'row':>3} {'n':>11} {'t':>9} {'n1':>5} {'S':>2} "
            f"{'reported':>9} {'computed':>9} {'signed':>10} {'delta':>8}  status"
        )
        lines = [header, "-" * len(header)]
        for row in self.rows:
            status = "ok" if row.matches else "DISCREPANCY"
            lines.append(
                f"{row.index:>3} {row.n:>11} {row.t:>9} {row.n1:>5} {row.S:>2} "
                f"{row.reported:>9.2f} {row.epsilon_magnitude:>9.4f} "
                f"{row.epsilon_signed:>+10.4f} {row.delta:>8.4f}  {status}"
            )
        lines.append("")
        lines.append(f"matches: {[r.index for r in self.matches]}")
        lines.append("discrepancy section:")
        for row in self.discrepancies:
            lines.append(f"  row {row.index}: {row.note}")
        lines.append("")
        lines.append(self.note)
        return "\n".join(lines) + "\n"


def reproduce_table3(output_path: str | None = None) -> ReferenceReport:
    """Recompute every reference configuration's budget and diff it."""
    rows = []
    for index, (n, t, n1, s, reported) in enumerate(REFERENCE_EPSILONS, start=1):
        signed = epsilon_is(t, n1, s)
        magnitude = abs(signed)
        delta = abs(magnitude - reported)
        tolerance = max(_ABS_TOL, _REL_TOL * reported)
        matches = signed >= 0 and delta <= tolerance
        notes = []
        if signed < 0:
            notes.append(f"recomputed budget is negative ({signed:+.4f})")
        if delta > tolerance:
            notes.append(
                f"magnitude {magnitude:.4f} is {delta:.4f} from the reported "
                f"{reported}"
            )
        if n1 != math.ceil(n / t):
            notes.append(f"stated n1={n1} but n/t gives {math.ceil(n / t)}")
        rows.append(
            ReferenceRow(
                index=index,
                n=n,
                t=t,
                n1=n1,
                S=s,
                reported=reported,
                epsilon_signed=signed,
                epsilon_magnitude=magnitude,
                delta=delta,
                matches=matches,
                note="; ".join(notes),
            )
        )
    report = ReferenceReport(rows=tuple(rows))
    if output_path is not None:
        with open(output_path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return report
