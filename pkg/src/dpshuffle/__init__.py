"""Differentially private count reporting via batched iterative shuffling.

The flow: one-hot encode a dataset against its schema, tie the
attributes a query touches into one composite channel, partition rows
into near-equal batches, shuffle each batch (or growing prefixes) under
S independent shufflers, account for the privacy budget in closed form,
and release the count measured on the shuffled output once it satisfies
its loss bound.
"""

from .dataset import (
    Attribute,
    Dataset,
    DatasetError,
    EncodedDataset,
    EncodingError,
    Row,
    Schema,
    decode,
    load_csv,
    one_hot_encode,
)
from .partition import (
    PlanError,
    ShufflePlan,
    assign_shufflers,
    assignment_for_stage,
    batch_bounds,
    build_plan,
    group_attributes,
    plan_batches,
)
from .pipeline import (
    ConfigError,
    DPReport,
    PipelineConfig,
    PipelineRefused,
    REFERENCE_EPSILONS,
    ReferenceReport,
    RetriesExhausted,
    load_config,
    reproduce_table3,
    risk_sweep,
    run_on_dataset,
    run_pipeline,
)
from .privacy import (
    PrivacyAccount,
    RROracleEstimate,
    account,
    account_for_plan,
    epsilon_cis,
    epsilon_is,
    mc_rr_estimate,
    rr_batch,
)
from .queryplan import (
    Channel,
    Predicate,
    QueryError,
    QuerySpec,
    TiedDataset,
    TimeHorizon,
    parse_query,
    relevant_attributes,
    tie_attributes,
    validate_query,
)
from .seeds import derive_rng, derive_seed
from .shuffler import (
    Provenance,
    ShuffleError,
    ShuffledDataset,
    apply_channel_permutations,
    cumulative_iterative_shuffle,
    export_csv,
    iterative_shuffle,
    shuffle_batch,
    stage_permutation,
)
from .utility import (
    RiskConfig,
    RiskError,
    RiskResult,
    Scheme,
    SchemeRisk,
    SchemeSelection,
    UtilityReport,
    count_query,
    default_regularizer,
    empirical_risk,
    loss,
    loss_bound,
    measure_utility,
    select_scheme,
)

__version__ = "0.1.0"

__all__ = [
    "Attribute",
    "Channel",
    "ConfigError",
    "DPReport",
    "Dataset",
    "DatasetError",
    "EncodedDataset",
    "EncodingError",
    "PipelineConfig",
    "PipelineRefused",
    "PlanError",
    "Predicate",
    "PrivacyAccount",
    "Provenance",
    "QueryError",
    "QuerySpec",
    "REFERENCE_EPSILONS",
    "ReferenceReport",
    "RetriesExhausted",
    "RiskConfig",
    "RiskError",
    "RiskResult",
    "Row",
    "RROracleEstimate",
    "Schema",
    "Scheme",
    "SchemeRisk",
    "SchemeSelection",
    "ShuffleError",
    "ShuffledDataset",
    "ShufflePlan",
    "TiedDataset",
    "TimeHorizon",
    "UtilityReport",
    "account",
    "account_for_plan",
    "apply_channel_permutations",
    "assign_shufflers",
    "assignment_for_stage",
    "batch_bounds",
    "build_plan",
    "count_query",
    "cumulative_iterative_shuffle",
    "decode",
    "default_regularizer",
    "derive_rng",
    "derive_seed",
    "empirical_risk",
    "epsilon_cis",
    "epsilon_is",
    "export_csv",
    "group_attributes",
    "iterative_shuffle",
    "load_config",
    "load_csv",
    "loss",
    "loss_bound",
    "mc_rr_estimate",
    "measure_utility",
    "one_hot_encode",
    "parse_query",
    "plan_batches",
    "relevant_attributes",
    "reproduce_table3",
    "risk_sweep",
    "rr_batch",
    "run_on_dataset",
    "run_pipeline",
    "select_scheme",
    "shuffle_batch",
    "stage_permutation",
    "tie_attributes",
    "validate_query",
]
