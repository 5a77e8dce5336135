"""The two shuffle protocols: per-batch and cumulative.

Iterative shuffling (IS) permutes each batch independently; cumulative
iterative shuffling (CIS) permutes a growing prefix, stage i covering
batches 1..i, so earlier rows are re-shuffled at every later stage.

Stage randomness is re-derived from the plan seed per (mode, stage,
shuffler), never drawn from shared state; results are therefore
identical however stages are ordered or parallelised.  Within a stage
each attribute group gets one permutation, applied jointly to all of
the group's channels, and the group-to-shuffler assignment is re-drawn
per stage.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

from .partition import ShufflePlan, assignment_for_stage
from .queryplan import Payload, TiedDataset
from .seeds import derive_rng

MODES = ("IS", "CIS")


class ShuffleError(ValueError):
    """Raised for malformed shuffle inputs."""


@dataclass(frozen=True)
class Provenance:
    """How a shuffled dataset was produced."""

    mode: str
    seed: int | None
    plan_digest: str


@dataclass(frozen=True)
class ShuffledDataset(TiedDataset):
    """A tied dataset after shuffling; slot IDs keep their input order."""

    provenance: Provenance = Provenance("injected", None, "")

    def decoded_values(self, slot: int) -> tuple[str, ...]:
        """Domain labels now attached to ``slot``, in schema order."""
        labels = []
        for attr in self.schema.attributes:
            chan, pos = self.locate(attr.name)
            labels.append(attr.decode(self.columns[chan][slot][pos]))
        return tuple(labels)


def stage_permutation(
    plan: ShufflePlan, mode: str, stage_index: int, shuffler_id: int, size: int
) -> tuple[int, ...]:
    """The permutation a shuffler draws for one stage.

    Exposed for audits: entry i names the input slot whose payload lands
    in output slot i.
    """
    rng = derive_rng(plan.seed, "perm", mode, stage_index, shuffler_id)
    return tuple(int(i) for i in rng.permutation(size))


def shuffle_batch(
    columns: Mapping[str, Sequence[Payload]],
    plan: ShufflePlan,
    stage_index: int,
    mode_tag: str = "IS",
) -> dict[str, list[Payload]]:
    """Shuffle one batch (or prefix) of payload columns.

    Each attribute group's channels move under a single shared
    permutation drawn by the group's shuffler for this stage.
    """
    if mode_tag not in MODES:
        raise ShuffleError(f"unknown shuffle mode {mode_tag!r}")
    if set(columns) != set(plan.channels):
        raise ShuffleError(
            f"columns {sorted(columns)!r} do not match plan channels "
            f"{sorted(plan.channels)!r}"
        )
    if not 0 <= stage_index < plan.num_batches:
        raise ShuffleError(
            f"stage index {stage_index} outside the plan's "
            f"{plan.num_batches} stages"
        )
    lengths = {len(col) for col in columns.values()}
    if len(lengths) != 1:
        raise ShuffleError("all channel columns must have the same length")
    size = lengths.pop()
    if size == 0:
        raise ShuffleError("cannot shuffle an empty batch")

    assignment = assignment_for_stage(plan, stage_index)
    out: dict[str, list[Payload]] = {}
    for gi, group in enumerate(plan.attribute_groups):
        perm = stage_permutation(plan, mode_tag, stage_index, assignment[gi], size)
        for name in group:
            column = columns[name]
            out[name] = [column[src] for src in perm]
    return out


def _check_plan(tied: TiedDataset, plan: ShufflePlan) -> None:
    names = tuple(ch.name for ch in tied.channels)
    if set(names) != set(plan.channels):
        raise ShuffleError(
            f"plan channels {sorted(plan.channels)!r} do not match dataset "
            f"channels {sorted(names)!r}"
        )
    if plan.n != tied.n:
        raise ShuffleError(
            f"plan covers {plan.n} rows but the dataset has {tied.n}"
        )


def iterative_shuffle(tied: TiedDataset, plan: ShufflePlan) -> ShuffledDataset:
    """Shuffle every batch independently (one stage per batch)."""
    _check_plan(tied, plan)
    out: dict[str, list[Payload]] = {name: [] for name in plan.channels}
    for stage, (start, end) in enumerate(plan.bounds):
        batch = {name: tied.columns[name][start:end] for name in plan.channels}
        shuffled = shuffle_batch(batch, plan, stage, "IS")
        for name in plan.channels:
            out[name].extend(shuffled[name])
    return ShuffledDataset(
        schema=tied.schema,
        ids=tied.ids,
        channels=tied.channels,
        columns=out,
        tied_channel=tied.tied_channel,
        provenance=Provenance("IS", plan.seed, plan.digest()),
    )


def cumulative_iterative_shuffle(
    tied: TiedDataset, plan: ShufflePlan
) -> ShuffledDataset:
    """Shuffle growing prefixes: stage i re-shuffles batches 1..i together."""
    _check_plan(tied, plan)
    working = {name: list(tied.columns[name]) for name in plan.channels}
    for stage, (_, end) in enumerate(plan.bounds):
        prefix = {name: working[name][:end] for name in plan.channels}
        shuffled = shuffle_batch(prefix, plan, stage, "CIS")
        for name in plan.channels:
            working[name][:end] = shuffled[name]
    return ShuffledDataset(
        schema=tied.schema,
        ids=tied.ids,
        channels=tied.channels,
        columns=working,
        tied_channel=tied.tied_channel,
        provenance=Provenance("CIS", plan.seed, plan.digest()),
    )


def apply_channel_permutations(
    tied: TiedDataset, perms: Mapping[str, Sequence[int]]
) -> ShuffledDataset:
    """Apply explicit per-channel permutations (for tests and audits).

    ``perms[name][i]`` is the input slot whose payload moves to output
    slot i of channel ``name``.
    """
    names = tuple(ch.name for ch in tied.channels)
    if set(perms) != set(names):
        raise ShuffleError(
            f"permutations given for {sorted(perms)!r} but the dataset has "
            f"channels {sorted(names)!r}"
        )
    columns: dict[str, list[Payload]] = {}
    for name in names:
        perm = list(perms[name])
        if sorted(perm) != list(range(tied.n)):
            raise ShuffleError(
                f"permutation for channel {name!r} is not a permutation of "
                f"0..{tied.n - 1}"
            )
        column = tied.columns[name]
        columns[name] = [column[src] for src in perm]
    return ShuffledDataset(
        schema=tied.schema,
        ids=tied.ids,
        channels=tied.channels,
        columns=columns,
        tied_channel=tied.tied_channel,
        provenance=Provenance("injected", None, ""),
    )


def export_csv(shuffled: ShuffledDataset, path: str) -> None:
    """Write slot IDs plus decoded labels, with a provenance sidecar."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("id", *shuffled.schema.names))
        for slot, uid in enumerate(shuffled.ids):
            writer.writerow((uid, *shuffled.decoded_values(slot)))
    sidecar = {
        "mode": shuffled.provenance.mode,
        "seed": shuffled.provenance.seed,
        "plan_digest": shuffled.provenance.plan_digest,
    }
    with open(path + ".provenance.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
