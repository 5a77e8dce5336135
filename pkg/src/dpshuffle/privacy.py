"""Closed-form privacy accounting and its Monte-Carlo cross-check.

The adversary's evidence about one row is whether it kept its slot.  In
a batch of size b shuffled by S independent permutations, the chance of
staying fixed in all S is (1/b)^S against ((b-1)/b)^S for being
displaced in all S, giving the likelihood ratio 1/(b-1)^S.  Both events
also carry the probability of the group-to-shuffler assignment, which
cancels in the ratio.

Across runs the ratios aggregate to

    per-batch  IS:  t batches of size ~n1  ->  ratio t / (n1-1)^S
    cumulative CIS: prefixes absorb the batch count ->  1 / (n1-1)^S

with n1 the largest batch, and the privacy budget is the log of the
ratio.  The IS and CIS budgets therefore always differ by exactly
ln(t), and the CIS budget is negative whenever n1 > 2.

``mc_rr_estimate`` estimates the single-batch ratio by simulation, for
checking the closed forms rather than replacing them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .partition import ShufflePlan
from .seeds import derive_rng

MIN_ORACLE_TRIALS = 10_000
_ORACLE_CHUNK = 250_000


def _check_scale(n1: int, num_shufflers: int) -> None:
    if n1 < 2:
        raise ValueError(
            f"batch size must be at least 2 for a defined ratio, got {n1}"
        )
    if num_shufflers < 2:
        raise ValueError(f"need at least 2 shufflers, got {num_shufflers}")


def rr_batch(n1: int, num_shufflers: int) -> float:
    """Likelihood ratio 1/(n1-1)^S for one batch of size n1."""
    _check_scale(n1, num_shufflers)
    return 1.0 / (n1 - 1) ** num_shufflers


def epsilon_is(num_batches: int, n1: int, num_shufflers: int) -> float:
    """Privacy budget ln(t / (n1-1)^S) of per-batch shuffling."""
    _check_scale(n1, num_shufflers)
    if num_batches < 1:
        raise ValueError(f"batch count must be at least 1, got {num_batches}")
    return math.log(num_batches / (n1 - 1) ** num_shufflers)


def epsilon_cis(n1: int, num_shufflers: int) -> float:
    """Privacy budget ln(1 / (n1-1)^S) of cumulative shuffling."""
    _check_scale(n1, num_shufflers)
    return math.log(1.0 / (n1 - 1) ** num_shufflers)


@dataclass(frozen=True)
class PrivacyAccount:
    """Budget and per-stage ratios for one shuffle configuration."""

    mode: str
    num_batches: int
    n1: int
    num_shufflers: int
    stage_ratios: tuple[float, ...]
    total_ratio: float
    epsilon: float

    @property
    def epsilon_report(self) -> float:
        """Magnitude reported alongside the signed budget."""
        return abs(self.epsilon)


def account(
    mode: str, batch_sizes: Sequence[int], num_shufflers: int
) -> PrivacyAccount:
    """Account for a full run over the given batch sizes (largest first).

    IS stages cover single batches; CIS stage i covers the prefix of
    batches 1..i, so its ratios use cumulative sizes.  Every stage needs
    at least 2 rows, otherwise its ratio is undefined.
    """
    if mode not in ("IS", "CIS"):
        raise ValueError(f"unknown accounting mode {mode!r}")
    if not batch_sizes:
        raise ValueError("batch sizes must be non-empty")
    t = len(batch_sizes)
    n1 = batch_sizes[0]
    if max(batch_sizes) != n1:
        raise ValueError("batch sizes must be ordered largest first")
    if mode == "IS":
        scopes = list(batch_sizes)
    else:
        scopes, total = [], 0
        for size in batch_sizes:
            total += size
            scopes.append(total)
    for i, size in enumerate(scopes):
        if size < 2:
            raise ValueError(
                f"stage {i + 1} covers {size} row(s); ratios need at least 2"
            )
    stage_ratios = tuple(rr_batch(size, num_shufflers) for size in scopes)
    if mode == "IS":
        total_ratio = t / (n1 - 1) ** num_shufflers
        epsilon = epsilon_is(t, n1, num_shufflers)
    else:
        total_ratio = 1.0 / (n1 - 1) ** num_shufflers
        epsilon = epsilon_cis(n1, num_shufflers)
    return PrivacyAccount(
        mode=mode,
        num_batches=t,
        n1=n1,
        num_shufflers=num_shufflers,
        stage_ratios=stage_ratios,
        total_ratio=total_ratio,
        epsilon=epsilon,
    )


def account_for_plan(plan: ShufflePlan, mode: str) -> PrivacyAccount:
    return account(mode, plan.batch_sizes, plan.num_shufflers)


@dataclass(frozen=True)
class RROracleEstimate:
    """Monte-Carlo estimate of the single-batch likelihood ratio."""

    n1: int
    num_shufflers: int
    trials: int
    fixed_runs: int
    displaced_runs: int
    ratio: float
    std_error: float
    analytic_ratio: float

    @property
    def deviation_in_se(self) -> float:
        return abs(self.ratio - self.analytic_ratio) / self.std_error


def mc_rr_estimate(
    n1: int,
    num_shufflers: int,
    trials: int,
    seed: int,
    include_assignment: bool = True,
) -> RROracleEstimate:
    """Simulate one batch and estimate P(fixed) / P(displaced).

    Each trial draws S independent permutations of the batch (plus,
    when ``include_assignment`` is set, the group-to-shuffler assignment
    whose probability cancels in the ratio) and tracks the first row:
    fixed means it kept slot 0 in every permutation, displaced means it
    lost slot 0 in every permutation.  The assignment draw comes from
    its own derived stream, so skipping it cannot shift the estimate.
    """
    _check_scale(n1, num_shufflers)
    if trials < MIN_ORACLE_TRIALS:
        raise ValueError(
            f"need at least {MIN_ORACLE_TRIALS} trials for a stable "
            f"estimate, got {trials}"
        )
    rng_assign = derive_rng(seed, "rr-oracle", "assign", n1, num_shufflers)
    rng_perm = derive_rng(seed, "rr-oracle", "perm", n1, num_shufflers)

    fixed = displaced = 0
    remaining = trials
    while remaining:
        chunk = min(remaining, _ORACLE_CHUNK)
        remaining -= chunk
        if include_assignment:
            rng_assign.random((chunk, num_shufflers)).argsort(axis=1)
        # Sorting iid uniform keys yields a uniform permutation per
        # (trial, shuffler); slot 0's occupant is the argmin key.
        keys = rng_perm.random((chunk, num_shufflers, n1))
        slot0_source = keys.argmin(axis=2)
        fixed += int((slot0_source == 0).all(axis=1).sum())
        displaced += int((slot0_source != 0).all(axis=1).sum())

    if fixed == 0 or displaced == 0:
        raise ValueError(
            f"degenerate estimate (fixed={fixed}, displaced={displaced}); "
            f"increase trials"
        )
    conditioned = fixed + displaced
    q = fixed / conditioned
    ratio = fixed / displaced
    std_error = math.sqrt(q * (1 - q) / conditioned) / (1 - q) ** 2
    return RROracleEstimate(
        n1=n1,
        num_shufflers=num_shufflers,
        trials=trials,
        fixed_runs=fixed,
        displaced_runs=displaced,
        ratio=ratio,
        std_error=std_error,
        analytic_ratio=rr_batch(n1, num_shufflers),
    )
