"""Full active-learning runs: the multi-round loop, multi-seed suites, the
outlier-ablation variant, and difficulty-split training.

Seeding scheme: every run derives run_seed from (strategy, seed); each round
derives its fit/selection/MC seeds from (run_seed, round). No global RNG state
is touched, so runs are independent and reproducible in any execution order,
including across worker processes.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import classifier as clf
from .acquisition import DEFAULT_MC_SAMPLES, STRATEGIES, DalConfig, score_pool, select_batch
from .cartography import (
    DatamapEntry,
    DifficultyThresholds,
    ablate_hard_to_learn,
    build_difficulty_split,
    run_cartography_full,
    write_datamap_csv,
)
from .errors import CapacityError, ConfigError
from .metrics import (
    RoundMetrics,
    acquisition_factor,
    class_distribution,
    input_diversity,
    output_uncertainty,
    stratified_accuracy,
    tokens_of,
)
from .pool import (
    Dataset,
    SyntheticSourceSpec,
    build_multi_source_pool,
    concat_datasets,
    generate_synthetic_source,
    load_dataset,
    seed_split,
    split_dataset,
    transfer,
)
from .seeding import derive_seed

logger = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "TestSetSpec",
    "ExperimentData",
    "RunContext",
    "RoundLog",
    "RunResult",
    "RunSummary",
    "RunFailure",
    "SuiteResult",
    "build_experiment_data",
    "prepare_context",
    "run_al",
    "run_suite",
    "run_ablated_suite",
    "run_difficulty_split",
    "run_stratified",
    "write_suite_artifacts",
]


@dataclass(frozen=True)
class TestSetSpec:
    """A named test set: synthetic sources to generate, or files to load."""

    name: str
    synthetic_sources: tuple[SyntheticSourceSpec, ...] = ()
    files: tuple[str, ...] = ()
    file_format: str = "jsonl"


@dataclass(frozen=True)
class ExperimentConfig:
    # data
    synthetic_sources: tuple[SyntheticSourceSpec, ...] = ()
    source_files: tuple[str, ...] = ()
    file_format: str = "jsonl"
    per_source_cap: int = 20000
    val_fraction: float = 0.1
    data_seed: int = 11
    test_sets: tuple[TestSetSpec, ...] = ()
    # AL loop
    seed_size: int = 500
    k: int = 500
    rounds: int = 7
    strategies: tuple[str, ...] = ("random", "mcme", "bald", "dal")
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    # models
    hidden_dims: tuple[int, ...] = (32, 32)
    dropout_rate: float = 0.3
    activation: str = "relu"
    training: clf.TrainConfig = field(default_factory=clf.TrainConfig)
    cartography_training: clf.TrainConfig = field(
        default_factory=lambda: clf.TrainConfig(max_epochs=6, patience=6)
    )
    mc_samples: int = DEFAULT_MC_SAMPLES
    dal: DalConfig = field(default_factory=DalConfig)
    # diagnostics
    thresholds: DifficultyThresholds = field(default_factory=DifficultyThresholds)
    ablation_fraction: float | None = None
    difficulty_combos: tuple[str, ...] = ("EM", "EMH", "MH", "HI", "EMHI")
    difficulty_n: int | None = None
    dump_scores: bool = False

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1", key="al.rounds")
        if self.k < 1:
            raise ConfigError("k must be >= 1", key="al.k")
        if self.seed_size < 0:
            raise ConfigError("seed_size must be >= 0", key="al.seed_size")
        if not self.seeds:
            raise ConfigError("need at least one seed", key="al.seeds")
        if not self.synthetic_sources and not self.source_files:
            raise ConfigError("no data: set synthetic_sources or source_files", key="data")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ConfigError(
                    f"unknown strategy {s!r}; valid: {', '.join(STRATEGIES)}", key="al.strategies"
                )

    def classifier_config(self, input_dim: int, num_classes: int) -> clf.ClassifierConfig:
        return clf.ClassifierConfig(
            input_dim=input_dim,
            hidden_dims=self.hidden_dims,
            num_classes=num_classes,
            dropout_rate=self.dropout_rate,
            activation=self.activation,
        )


@dataclass
class ExperimentData:
    pool: Dataset
    val: Dataset
    tests: dict[str, Dataset]


@dataclass
class RunContext:
    """Shared per-suite state: data plus the full-pool cartography artifacts."""

    data: ExperimentData
    reference_model: clf.Classifier
    pool_datamap: list[DatamapEntry]


@dataclass(frozen=True)
class RoundLog:
    strategy: str
    seed: int
    round: int
    acquired_ids: tuple[int, ...]
    per_source_counts: dict[str, int]
    metrics: RoundMetrics
    val_accuracy: float
    labelled_size: int


@dataclass(frozen=True)
class RunProfile:
    """End-of-run profile of the full acquired training set."""

    input_diversity: float
    output_uncertainty: float
    class_distribution: tuple[float, ...]


@dataclass
class RunResult:
    strategy: str
    seed: int
    round_logs: list[RoundLog]
    final_model: clf.Classifier
    final_val_accuracy: float
    test_accuracies: dict[str, float]
    profile: RunProfile
    labelled_ids: tuple[int, ...]


@dataclass(frozen=True)
class RunSummary:
    strategy: str
    accuracies: dict[str, tuple[float, float, int]]  # test set -> (mean, std, runs)
    final_labelled_size: int


@dataclass(frozen=True)
class RunFailure:
    strategy: str
    seed: int
    error: str


@dataclass
class SuiteResult:
    summaries: list[RunSummary]
    results: list[RunResult]
    failures: list[RunFailure]


def _harmonize_classes(sources: list[Dataset]) -> list[Dataset]:
    # per-file label inference can undercount classes a small file never saw
    C = max(s.num_classes for s in sources)
    return [
        s if s.num_classes == C else Dataset(s.name, s.examples, C, s.metadata)
        for s in sources
    ]


def _load_sources(config: ExperimentConfig) -> list[Dataset]:
    if config.synthetic_sources:
        return [
            generate_synthetic_source(spec, derive_seed(config.data_seed, "source", spec.name))
            for spec in config.synthetic_sources
        ]
    return _harmonize_classes(
        [load_dataset(path, config.file_format) for path in config.source_files]
    )


def _concat_sources(sources, name: str) -> Dataset:
    return concat_datasets(sources, name)


def build_test_set(spec: TestSetSpec, data_seed: int) -> Dataset:
    if spec.synthetic_sources:
        sources = [
            generate_synthetic_source(s, derive_seed(data_seed, "test", spec.name, s.name))
            for s in spec.synthetic_sources
        ]
    else:
        sources = _harmonize_classes(
            [load_dataset(path, spec.file_format) for path in spec.files]
        )
    return _concat_sources(sources, spec.name)


def build_experiment_data(config: ExperimentConfig) -> ExperimentData:
    """Generate/load sources, hold out validation per source, build the pool.

    Validation is held out from each source *before* pooling and never enters
    the unlabelled pool.
    """
    sources = _load_sources(config)
    rests, helds = [], []
    for src in sources:
        rest, held = split_dataset(
            src, config.val_fraction, derive_seed(config.data_seed, "val", src.name)
        )
        rests.append(rest)
        helds.append(held)
    pool = build_multi_source_pool(
        rests, config.per_source_cap, derive_seed(config.data_seed, "pool")
    )
    val = _concat_sources(helds, "val") if helds else Dataset("val", [], pool.num_classes)
    tests = {t.name: build_test_set(t, config.data_seed) for t in config.test_sets}
    return ExperimentData(pool=pool, val=val, tests=tests)


def prepare_context(config: ExperimentConfig, data: ExperimentData | None = None) -> RunContext:
    """Build the shared cartography model + datamap over the full pool."""
    data = data or build_experiment_data(config)
    carto_tcfg = replace(
        config.cartography_training, rng_seed=derive_seed(config.data_seed, "cartography")
    )
    ccfg = config.classifier_config(data.pool.feature_dim, data.pool.num_classes)
    result = run_cartography_full(
        data.pool, data.pool, ccfg, carto_tcfg, val=data.val, thresholds=config.thresholds
    )
    return RunContext(data=data, reference_model=result.model, pool_datamap=result.entries)


def _dump_scores(scores_dir, strategy, seed, rnd, scores, pool):
    os.makedirs(scores_dir, exist_ok=True)
    path = os.path.join(scores_dir, f"{strategy}_seed{seed}_round{rnd}.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "source", "score"])
        for s in scores:
            writer.writerow([s.example_id, pool.by_id(s.example_id).source, _fmt(s.score)])


def run_al(config: ExperimentConfig, strategy: str, seed: int,
           context: RunContext | None = None, scores_dir=None) -> RunResult:
    """One full AL run: per-round fit / select / transfer, then a final refit.

    The final model is refit from scratch on the complete labelled set after
    the last transfer and evaluated on the validation set and every test set.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; valid: {', '.join(STRATEGIES)}")
    context = context or prepare_context(config)
    pool, val, tests = context.data.pool, context.data.val, context.data.tests

    needed = config.seed_size + config.rounds * config.k
    if needed > len(pool):
        exhaust_round = max(0, (len(pool) - config.seed_size) // config.k) + 1
        raise CapacityError(
            f"pool of {len(pool)} exhausted at round {exhaust_round}: "
            f"need {needed} for {config.rounds} rounds of k={config.k} from seed {config.seed_size}"
        )

    run_seed = derive_seed("run", strategy, seed)
    ccfg = config.classifier_config(pool.feature_dim, pool.num_classes)
    state = seed_split(pool, config.seed_size, derive_seed(run_seed, "split"))
    source_names = pool.sources()
    round_logs: list[RoundLog] = []

    for rnd in range(1, config.rounds + 1):
        train_ds = pool.subset(sorted(state.labelled))
        tcfg = replace(config.training, rng_seed=derive_seed(run_seed, rnd, "fit"))
        model = clf.fit(ccfg, train_ds, val=val, tcfg=tcfg)
        val_acc = model.accuracy(val, val.labels_array()) if len(val) else float("nan")

        select_seed = derive_seed(run_seed, rnd, "select")
        if scores_dir is not None and strategy != "random":
            scores = score_pool(strategy, state, model, select_seed,
                                mc_samples=config.mc_samples, dal_cfg=config.dal)
            _dump_scores(scores_dir, strategy, seed, rnd, scores, pool)
        batch = select_batch(
            strategy, state, model, config.k, select_seed,
            mc_samples=config.mc_samples, dal_cfg=config.dal,
        )
        batch_sorted = tuple(sorted(batch))
        batch_examples = [pool.by_id(i) for i in batch_sorted]
        remainder = [pool.by_id(i) for i in sorted(state.unlabelled - batch)]
        m = RoundMetrics(
            round=rnd,
            input_diversity=input_diversity(tokens_of(batch_examples), tokens_of(remainder)),
            output_uncertainty=output_uncertainty(context.reference_model, batch_examples),
            class_distribution=class_distribution(batch_examples, pool.num_classes),
            acquisition_factor=acquisition_factor(batch, state),
        )
        counts = {s: 0 for s in source_names}
        for e in batch_examples:
            counts[e.source] += 1
        state = transfer(state, batch)
        round_logs.append(
            RoundLog(
                strategy=strategy,
                seed=seed,
                round=rnd,
                acquired_ids=batch_sorted,
                per_source_counts=counts,
                metrics=m,
                val_accuracy=val_acc,
                labelled_size=len(state.labelled),
            )
        )
        logger.info("%s/seed %s round %d: val_acc=%.4f", strategy, seed, rnd, val_acc)

    labelled_ids = tuple(sorted(state.labelled))
    train_ds = pool.subset(labelled_ids)
    final_tcfg = replace(config.training, rng_seed=derive_seed(run_seed, "final"))
    final_model = clf.fit(ccfg, train_ds, val=val, tcfg=final_tcfg)
    final_val = final_model.accuracy(val, val.labels_array()) if len(val) else float("nan")
    test_acc = {name: final_model.accuracy(ds, ds.labels_array()) for name, ds in tests.items()}

    labelled_examples = [pool.by_id(i) for i in labelled_ids]
    remainder = [pool.by_id(i) for i in sorted(state.unlabelled)]
    profile = RunProfile(
        input_diversity=input_diversity(tokens_of(labelled_examples), tokens_of(remainder)),
        output_uncertainty=output_uncertainty(context.reference_model, labelled_examples),
        class_distribution=class_distribution(labelled_examples, pool.num_classes),
    )
    return RunResult(
        strategy=strategy,
        seed=seed,
        round_logs=round_logs,
        final_model=final_model,
        final_val_accuracy=final_val,
        test_accuracies=test_acc,
        profile=profile,
        labelled_ids=labelled_ids,
    )


def _run_job(args):
    config, strategy, seed, context, scores_dir = args
    try:
        return strategy, seed, run_al(config, strategy, seed, context, scores_dir), None
    except Exception as exc:  # suite must survive individual run failures
        logger.error("run %s/seed %s failed: %s", strategy, seed, exc)
        return strategy, seed, None, f"{type(exc).__name__}: {exc}"


def _aggregate(config: ExperimentConfig, results: list[RunResult]) -> list[RunSummary]:
    summaries = []
    final_size = config.seed_size + config.rounds * config.k
    for strategy in config.strategies:
        runs = [r for r in results if r.strategy == strategy]
        acc: dict[str, tuple[float, float, int]] = {}
        names = ["val"] + [t.name for t in config.test_sets]
        for name in names:
            vals = [
                r.final_val_accuracy if name == "val" else r.test_accuracies[name]
                for r in runs
            ]
            if vals:
                arr = np.array(vals)
                acc[name] = (float(arr.mean()), float(arr.std()), len(vals))
            else:
                acc[name] = (float("nan"), float("nan"), 0)
        summaries.append(RunSummary(strategy=strategy, accuracies=acc, final_labelled_size=final_size))
    return summaries


def run_suite(config: ExperimentConfig, context: RunContext | None = None,
              parallel: int = 1, scores_dir=None) -> SuiteResult:
    """Cross-product of strategies x seeds; failures are recorded, not fatal."""
    context = context or prepare_context(config)
    jobs = [(config, s, sd, context, scores_dir) for s in config.strategies for sd in config.seeds]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool_exec:
            outcomes = list(pool_exec.map(_run_job, jobs))
    else:
        outcomes = [_run_job(j) for j in jobs]

    results, failures = [], []
    for strategy, seed, result, error in outcomes:
        if error is None:
            results.append(result)
        else:
            failures.append(RunFailure(strategy, seed, error))
    return SuiteResult(_aggregate(config, results), results, failures)


def run_ablated_suite(config: ExperimentConfig, context: RunContext | None = None,
                      parallel: int = 1) -> tuple[SuiteResult, RunContext]:
    """Filter the pool's per-source bottom conf*var fraction, then run a suite.

    The full-pool cartography model/datamap are reused as the uncertainty
    reference and difficulty authority for the ablated runs.
    """
    context = context or prepare_context(config)
    fraction = 0.25 if config.ablation_fraction is None else config.ablation_fraction
    pool = context.data.pool
    retained = ablate_hard_to_learn(context.pool_datamap, pool.source_of(), fraction)
    filtered = pool.subset(sorted(retained), name="pool-ablated")
    logger.info("ablation keeps %d of %d pool examples", len(filtered), len(pool))
    ablated_ctx = RunContext(
        data=ExperimentData(pool=filtered, val=context.data.val, tests=context.data.tests),
        reference_model=context.reference_model,
        pool_datamap=context.pool_datamap,
    )
    return run_suite(config, ablated_ctx, parallel), ablated_ctx


def run_difficulty_split(config: ExperimentConfig,
                         context: RunContext | None = None) -> list[RunSummary]:
    """Train once per difficulty combo (no AL loop) and evaluate everywhere."""
    if config.difficulty_n is None:
        raise ConfigError("difficulty_n must be set for split experiments", key="difficulty_split.n")
    context = context or prepare_context(config)
    pool, val, tests = context.data.pool, context.data.val, context.data.tests
    ccfg = config.classifier_config(pool.feature_dim, pool.num_classes)

    summaries = []
    for combo in config.difficulty_combos:
        per_test: dict[str, list[float]] = {name: [] for name in ["val", *tests]}
        for seed in config.seeds:
            ids = build_difficulty_split(
                context.pool_datamap, combo, config.difficulty_n,
                derive_seed(config.data_seed, "split-sample", combo, seed),
            )
            tcfg = replace(config.training, rng_seed=derive_seed(config.data_seed, "split-fit", combo, seed))
            model = clf.fit(ccfg, pool.subset(sorted(ids)), val=val, tcfg=tcfg)
            per_test["val"].append(model.accuracy(val, val.labels_array()) if len(val) else float("nan"))
            for name, ds in tests.items():
                per_test[name].append(model.accuracy(ds, ds.labels_array()))
        acc = {
            name: (float(np.mean(v)), float(np.std(v)), len(v)) for name, v in per_test.items()
        }
        summaries.append(
            RunSummary(strategy=combo, accuracies=acc, final_labelled_size=config.difficulty_n)
        )
    return summaries


def run_stratified(config: ExperimentConfig, data: ExperimentData,
                   models: dict[tuple[str, int], clf.Classifier],
                   carto_seed: int | None = None) -> list[dict]:
    """Difficulty-stratified test accuracy for a set of final models.

    A fresh cartography model is trained on each *test set* to classify its
    examples by difficulty; rows are (strategy, seed, test_set, difficulty,
    count, accuracy).
    """
    rows = []
    for name, test_ds in data.tests.items():
        ccfg = config.classifier_config(test_ds.feature_dim, test_ds.num_classes)
        tcfg = replace(
            config.cartography_training,
            rng_seed=derive_seed(config.data_seed, "stratify", name, carto_seed or 0),
        )
        carto = run_cartography_full(
            test_ds, test_ds, ccfg, tcfg, val=data.val, thresholds=config.thresholds
        )
        for (strategy, seed), model in sorted(models.items()):
            res = stratified_accuracy(model, test_ds, carto.entries)
            for difficulty in sorted(res.counts):
                rows.append({
                    "strategy": strategy,
                    "seed": seed,
                    "test_set": name,
                    "difficulty": difficulty,
                    "count": res.counts[difficulty],
                    "accuracy": res.accuracies[difficulty],
                })
    return rows


# ---------------------------------------------------------------------------
# artifact writing

def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def write_rounds_csv(results: list[RunResult], pool: Dataset, path) -> None:
    sources = pool.sources()
    C = pool.num_classes
    header = (
        ["strategy", "seed", "round", "labelled_size", "val_acc"]
        + [f"acquired_{s}" for s in sources]
        + ["input_diversity", "output_uncertainty"]
        + [f"class_{c}" for c in range(C)]
        + [f"factor_{s}" for s in sources]
    )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in results:
            for log in r.round_logs:
                writer.writerow(
                    [log.strategy, log.seed, log.round, log.labelled_size, _fmt(log.val_accuracy)]
                    + [log.per_source_counts.get(s, 0) for s in sources]
                    + [_fmt(log.metrics.input_diversity), _fmt(log.metrics.output_uncertainty)]
                    + [_fmt(f) for f in log.metrics.class_distribution]
                    + [_fmt(log.metrics.acquisition_factor.get(s, 0.0)) for s in sources]
                )


def write_summary_csv(summaries: list[RunSummary], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "test_set", "mean", "std", "runs"])
        for s in summaries:
            for test_set, (mean, std, n) in s.accuracies.items():
                writer.writerow([s.strategy, test_set, _fmt(mean), _fmt(std), n])


def write_profile_csv(results: list[RunResult], num_classes: int, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["strategy", "seed", "input_diversity", "output_uncertainty"]
            + [f"class_{c}" for c in range(num_classes)]
        )
        for r in results:
            writer.writerow(
                [r.strategy, r.seed, _fmt(r.profile.input_diversity), _fmt(r.profile.output_uncertainty)]
                + [_fmt(f) for f in r.profile.class_distribution]
            )


def write_stratified_csv(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "seed", "test_set", "difficulty", "count", "accuracy"])
        for row in rows:
            writer.writerow([
                row["strategy"], row["seed"], row["test_set"], row["difficulty"],
                row["count"], _fmt(row["accuracy"]),
            ])


def write_suite_artifacts(suite: SuiteResult, context: RunContext, out_dir,
                          prefix: str = "", save_models: bool = True) -> None:
    """Write rounds/summary/profile CSVs (and model checkpoints) for a suite.

    ``prefix`` distinguishes suite variants in one directory, e.g.
    "ablated_" writes rounds_ablated.csv / summary_ablated.csv.
    """
    os.makedirs(out_dir, exist_ok=True)
    suffix = f"_{prefix.rstrip('_')}" if prefix else ""
    write_rounds_csv(suite.results, context.data.pool, os.path.join(out_dir, f"rounds{suffix}.csv"))
    write_summary_csv(suite.summaries, os.path.join(out_dir, f"summary{suffix}.csv"))
    write_profile_csv(
        suite.results, context.data.pool.num_classes, os.path.join(out_dir, f"profile{suffix}.csv")
    )
    if suite.failures:
        with open(os.path.join(out_dir, f"failures{suffix}.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["strategy", "seed", "error"])
            for f in suite.failures:
                writer.writerow([f.strategy, f.seed, f.error])
    if save_models:
        model_dir = os.path.join(out_dir, "models")
        os.makedirs(model_dir, exist_ok=True)
        for r in suite.results:
            clf.save_checkpoint(
                r.final_model, os.path.join(model_dir, f"{prefix}{r.strategy}_seed{r.seed}.json")
            )


def write_manifest(out_dir, extra: dict | None = None) -> None:
    manifest = {
        "final_eval": "refit on the full labelled set after the last transfer",
        "created_unix": time.time(),
    }
    manifest.update(extra or {})
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def write_pool_datamap(context: RunContext, out_dir) -> None:
    write_datamap_csv(
        context.pool_datamap, context.data.pool.source_of(), os.path.join(out_dir, "datamap.csv")
    )
