"""Desk-scale pool-based active learning with dataset-cartography diagnostics."""

from .acquisition import (
    STRATEGIES,
    AcquisitionScore,
    DalConfig,
    predictive_entropy,
    score_bald,
    score_dal,
    score_mcme,
    select_batch,
)
from .cartography import (
    DatamapEntry,
    DifficultyThresholds,
    DynamicsTrace,
    ablate_hard_to_learn,
    acquisition_by_difficulty,
    build_difficulty_split,
    compute_datamap,
    run_cartography,
)
from .classifier import (
    Classifier,
    ClassifierConfig,
    TrainConfig,
    fit,
    load_checkpoint,
    save_checkpoint,
)
from .errors import (
    CapacityError,
    CartalError,
    ConfigError,
    DivergenceError,
    InsufficientDynamicsError,
    ParseError,
    SchemaError,
    StateError,
)
from .experiment import (
    ExperimentConfig,
    RoundLog,
    RunSummary,
    TestSetSpec,
    run_ablated_suite,
    run_al,
    run_difficulty_split,
    run_suite,
)
from .metrics import (
    acquisition_factor,
    class_distribution,
    input_diversity,
    output_uncertainty,
    stratified_accuracy,
)
from .pool import (
    Dataset,
    Example,
    PoolState,
    SyntheticSourceSpec,
    build_multi_source_pool,
    concat_datasets,
    generate_synthetic_source,
    load_dataset,
    seed_split,
    split_dataset,
    transfer,
)

__version__ = "0.1.0"
