"""The five harness experiments: train, moments, emdist, bounds and oracle-check.

Each ``run_*`` function takes a validated ``ExperimentConfig``, appends its
CSV rows under ``cfg.out_dir`` and returns the in-memory results.
"""

import copy
import logging
import time
from collections.abc import Iterator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..autodiff import Tape, Tensor, backward, no_grad, softmax_cross_entropy
from ..core.config import ExperimentConfig, validate_for_mode
from ..core.constants import (
    CriticOptimizer,
    Defaults,
    FileNames,
    LayerMode,
    NormKind,
    RunMode,
    UnitizationMode,
)
from ..core.error_handling import (
    BoundViolationError,
    ContractError,
    ErrorCollector,
    MissingDataError,
    TrainingDivergedError,
    error_context,
)
from ..core.logging_config import log_performance
from ..data import (
    BatchPlan,
    Dataset,
    batches,
    load_idx,
    synth_appendix_uniform_pair,
    synth_gaussian_pair,
)
from ..estimator import (
    CriticConfig,
    EmEstimate,
    average_deep_layer_distance,
    estimate_em,
    train_critic,
)
from ..nn import Network, SgdConfig, SgdOptimizer, load_checkpoint, save_checkpoint
from ..stats import (
    MomentRecord,
    layer_moment_sweep,
    median_trajectory_std,
    trajectory_stability,
)
from ..transport import (
    LipschitzProbe,
    bound_sandwich,
    em_exact_1d,
    em_exact_assignment,
    lipschitz_violations,
    unbounded_example_lower,
    unitized_upper_bound,
)
from ..unitization import general_unitize, partial_unitize, vanilla_unitize
from .outputs import (
    BOUNDS_COLUMNS,
    EMDIST_COLUMNS,
    MOMENTS_COLUMNS,
    MOMENTS_COMMENT,
    ORACLE_COLUMNS,
    RUN_COLUMNS,
    STABILITY_COLUMNS,
    CsvAppender,
    RunRecord,
    write_manifest,
)

logger = logging.getLogger(__name__)

EVAL_CHUNK = 1024
LIPSCHITZ_PAIRS = 10_000
LIPSCHITZ_GRID = ((2, 3, 4), (0.5, 1.0, 2.0))
SCALAR_ALPHAS = (0.25, 0.5, 1.0)
APPENDIX_SCALES = (1.0, 10.0, 100.0)
LINEARITY_TOLERANCE = 1.2
TRIANGLE_SLACK = 1e-9
AGREEMENT_TOLERANCE = 1e-12


# Shared helpers


def _out_dir(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _norm_label(cfg: ExperimentConfig) -> str:
    return cfg.norms if isinstance(cfg.norms, str) else "+".join(cfg.norms)


def _load_split(cfg: ExperimentConfig, images: str, labels: str, limit: int) -> Dataset:
    dataset = load_idx(images, labels, cfg.num_classes).subset(limit)
    # conv blocks read N x C x H x W images
    return dataset if cfg.conv_channels else dataset.flatten()


def _build_network(
    cfg: ExperimentConfig, dataset: Dataset, kind: NormKind | None = None
) -> Network:
    """The configured network; ``kind`` overrides every dense and conv normalization."""
    norms = [kind] * len(cfg.hidden_widths) if kind is not None else cfg.norm_kinds()
    return Network.build(
        dataset.feature_dim,
        cfg.hidden_widths,
        norms,
        cfg.num_classes,
        cfg.seed,
        bn_eps=cfg.bn_eps,
        bn_momentum=cfg.bn_momentum,
        unit_eps=cfg.unit_eps,
        image_shape=dataset.images.shape[1:] if cfg.conv_channels else None,
        conv_channels=cfg.conv_channels,
        conv_norm=kind if kind is not None else NormKind(cfg.conv_norm),
    )


def _optimizer(cfg: ExperimentConfig, network: Network) -> SgdOptimizer:
    config = SgdConfig(
        lr=cfg.lr,
        momentum=cfg.momentum,
        nesterov=cfg.nesterov,
        weight_decay=cfg.weight_decay,
        milestones=tuple(cfg.milestones),
        decay_factor=cfg.decay_factor,
    )
    return SgdOptimizer(network.parameters(), config)


def _batch_plan(cfg: ExperimentConfig, dataset: Dataset) -> BatchPlan:
    # a trailing batch of one sample has no batch statistics
    return BatchPlan(cfg.seed, min(cfg.batch_size, len(dataset)), drop_last=True)


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([abs(part) for part in parts]).generate_state(1)[0])


@log_performance
def train_epoch(
    network: Network, optimizer: SgdOptimizer, dataset: Dataset, plan: BatchPlan, epoch: int
) -> float:
    """One pass of mini-batch SGD; returns the sample-weighted mean loss."""
    network.set_mode(LayerMode.TRAIN)
    total, seen = 0.0, 0
    for images, labels in batches(dataset, plan, epoch):
        with Tape() as tape:
            loss = softmax_cross_entropy(network(Tensor(images)), labels)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"training loss became {value} in epoch {epoch}", {"epoch": epoch}
                )
            grads = backward(tape, loss)
        optimizer.step([grads.wrt(param) for param in optimizer.params], epoch)
        network.clamp_alphas()
        total += value * len(labels)
        seen += len(labels)
    return total / seen


def evaluate_accuracy(network: Network, dataset: Dataset) -> float:
    network.set_mode(LayerMode.INFERENCE)
    correct = 0
    with no_grad():
        for start in range(0, len(dataset), EVAL_CHUNK):
            logits = network(Tensor(dataset.images[start : start + EVAL_CHUNK])).data
            correct += int(np.sum(logits.argmax(axis=1) == dataset.labels[start : start + EVAL_CHUNK]))
    return correct / len(dataset) if len(dataset) else 0.0


# train


def _training_epochs(
    cfg: ExperimentConfig,
    network: Network,
    train: Dataset,
    test: Dataset | None,
    label: str,
) -> Iterator[RunRecord]:
    optimizer = _optimizer(cfg, network)
    plan = _batch_plan(cfg, train)
    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        loss = train_epoch(network, optimizer, train, plan, epoch)
        accuracy = evaluate_accuracy(network, test) if test is not None else 0.0
        record = RunRecord(
            epoch=epoch,
            norm=label,
            train_loss=loss,
            test_accuracy=accuracy,
            wall_seconds=time.perf_counter() - started,
            alpha=network.alpha_summary(),
        )
        logger.info(
            f"[{label}] epoch {epoch}/{cfg.epochs}: loss {loss:.4f}, "
            f"accuracy {accuracy:.4f} ({record.wall_seconds:.1f}s)"
        )
        yield record


def run_train(cfg: ExperimentConfig) -> list[RunRecord]:
    """Train the configured network, checkpointing the weights after every epoch."""
    validate_for_mode(cfg, RunMode.TRAIN)
    out_dir = _out_dir(cfg)
    write_manifest(out_dir, cfg)
    train = _load_split(cfg, cfg.train_images, cfg.train_labels, cfg.max_train_samples)
    test = _load_split(cfg, cfg.test_images, cfg.test_labels, cfg.max_test_samples)

    network = _build_network(cfg, train)
    checkpoints = out_dir / FileNames.CHECKPOINT_DIR
    save_checkpoint(checkpoints / FileNames.checkpoint(0), network.state_dict())
    logger.info(
        f"Initialized {_norm_label(cfg)} network, weights {network.weight_checksum()[:12]}, "
        f"alpha summary {network.alpha_summary()}"
    )

    writer = CsvAppender(out_dir / FileNames.RUN_CSV, RUN_COLUMNS)
    records = []
    for record in _training_epochs(cfg, network, train, test, _norm_label(cfg)):
        writer.append(record.as_row())
        save_checkpoint(checkpoints / FileNames.checkpoint(record.epoch), network.state_dict())
        records.append(record)
    return records


# moments


def run_moments(cfg: ExperimentConfig) -> dict[str, list[MomentRecord]]:
    """Track the moments of one layer for BN and unitization trained from shared weights."""
    validate_for_mode(cfg, RunMode.MOMENTS)
    out_dir = _out_dir(cfg)
    write_manifest(out_dir, cfg)
    train = _load_split(cfg, cfg.train_images, cfg.train_labels, cfg.max_train_samples)

    variants = {
        kind.value: _build_network(cfg, train, kind)
        for kind in (NormKind.BN, NormKind.UNITIZATION)
    }
    checksums = {name: network.weight_checksum() for name, network in variants.items()}
    if len(set(checksums.values())) != 1:
        raise ContractError("variants do not share their initial weights", checksums)
    logger.info(f"Variants share initial weights {next(iter(checksums.values()))[:12]}")

    moments_csv = CsvAppender(
        out_dir / FileNames.MOMENTS_CSV, MOMENTS_COLUMNS, comments=[MOMENTS_COMMENT]
    )
    results: dict[str, list[MomentRecord]] = {}
    for name, network in variants.items():
        records: list[MomentRecord] = []
        for run_record in _training_epochs(cfg, network, train, None, name):
            sweep = layer_moment_sweep(network, cfg.moment_layer, train.images, run_record.epoch)
            moments_csv.extend(
                [name, r.epoch, r.unit, r.mean, r.var, r.skewness, r.kurtosis] for r in sweep
            )
            records.extend(sweep)
        results[name] = records

    if cfg.epochs >= 2:
        _write_stability(out_dir, results)
    else:
        logger.warning("Trajectory stability needs at least 2 epochs; stability.csv skipped")
    return results


def _write_stability(out_dir: Path, results: dict[str, list[MomentRecord]]) -> None:
    writer = CsvAppender(out_dir / FileNames.STABILITY_CSV, STABILITY_COLUMNS)
    medians: dict[str, dict[str, float]] = {}
    for name, records in results.items():
        summaries = trajectory_stability(records)
        writer.extend(
            [name, s.unit, s.mean_std, s.var_std, s.skewness_std, s.kurtosis_std]
            for s in summaries
        )
        medians[name] = {
            moment: median_trajectory_std(summaries, moment)
            for moment in ("skewness", "kurtosis")
        }
        logger.info(
            f"[{name}] median trajectory std: skewness {medians[name]['skewness']:.4g}, "
            f"kurtosis {medians[name]['kurtosis']:.4g}"
        )

    bn, unit = medians[NormKind.BN.value], medians[NormKind.UNITIZATION.value]
    steadier = all(unit[moment] < bn[moment] for moment in ("skewness", "kurtosis"))
    logger.info(
        "Unitization moments are "
        + ("steadier than" if steadier else "not steadier than")
        + " batch normalization on this run"
    )


# emdist


def _checkpoint_paths(cfg: ExperimentConfig) -> list[Path]:
    directory = Path(cfg.out_dir) / FileNames.CHECKPOINT_DIR
    paths = [directory / FileNames.checkpoint(epoch) for epoch in range(cfg.epochs + 1)]
    missing = [path.name for path in paths if not path.is_file()]
    if missing:
        raise MissingDataError(
            f"{len(missing)} checkpoints missing in {directory}; run 'train' first",
            {"missing": missing},
        )
    return paths


def _critic_config(cfg: ExperimentConfig, seed: int) -> CriticConfig:
    return CriticConfig(
        iterations=cfg.critic_iterations,
        batch_size=cfg.critic_batch_size,
        clip=cfg.critic_clip,
        lr=cfg.critic_lr,
        hidden_widths=tuple(cfg.critic_hidden),
        seed=seed,
        sigmoid_head=cfg.critic_sigmoid,
        optimizer=CriticOptimizer(cfg.critic_optimizer),
    )


def run_emdist(cfg: ExperimentConfig) -> list[EmEstimate]:
    """Estimate the per-epoch EM distance of each tracked layer from saved checkpoints."""
    validate_for_mode(cfg, RunMode.EMDIST)
    out_dir = _out_dir(cfg)
    write_manifest(out_dir, cfg)
    paths = _checkpoint_paths(cfg)
    train = _load_split(cfg, cfg.train_images, cfg.train_labels, cfg.max_train_samples)
    test = _load_split(cfg, cfg.test_images, cfg.test_labels, cfg.max_test_samples)
    train_x = train.images[: cfg.emdist_train_samples]
    test_x = test.images[: cfg.emdist_test_samples]

    template = _build_network(cfg, train)
    layers = [template.resolve_layer(layer) for layer in cfg.emdist_layers]

    def snapshot(path: Path) -> Network:
        network = copy.deepcopy(template)
        with error_context("load checkpoint", path=str(path)):
            network.load_state_dict(load_checkpoint(path))
        return network

    writer = CsvAppender(out_dir / FileNames.EMDIST_CSV, EMDIST_COLUMNS)
    estimates: list[EmEstimate] = []
    previous = snapshot(paths[0])
    for epoch in range(1, cfg.epochs + 1):
        current = snapshot(paths[epoch])

        def measure(position: int, layer: int) -> tuple[EmEstimate, float]:
            started = time.perf_counter()
            f_old, f_new = previous.local(layer), current.local(layer)
            critic = train_critic(
                f_old, f_new, train_x, _critic_config(cfg, _derived_seed(cfg.seed, epoch, position))
            )
            estimate = estimate_em(critic, f_old, f_new, test_x, layer, (epoch - 1, epoch))
            return estimate, time.perf_counter() - started

        if cfg.emdist_workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.emdist_workers) as pool:
                results = list(pool.map(measure, range(len(layers)), layers))
        else:
            results = [measure(position, layer) for position, layer in enumerate(layers)]

        epoch_estimates = [estimate for estimate, _ in results]
        writer.extend(
            [epoch, estimate.layer, estimate.value, runtime] for estimate, runtime in results
        )
        average = average_deep_layer_distance(epoch_estimates)
        writer.append([epoch, "avg", average, sum(runtime for _, runtime in results)])
        logger.info(f"Epoch {epoch}: average EM estimate {average:.6g} over {len(layers)} layers")

        estimates.extend(epoch_estimates)
        previous = current
    return estimates


# bounds


def _sandwich_instance(cfg: ExperimentConfig, trial: int):
    dims = cfg.bound_dims
    d = dims[trial % len(dims)]
    seed = cfg.seed + trial
    if (trial // len(dims)) % 2 == 0:
        shift, ratio = 0.5 * (trial % 5), 1.0 + 0.5 * (trial % 3)
        a, b = synth_gaussian_pair(cfg.bound_samples, d, shift, ratio, seed)
        return a, b, d, f"gaussian shift={shift} var_ratio={ratio}"
    c_prime = 1.0 + trial % 4
    a, b = synth_appendix_uniform_pair(c_prime, d, cfg.bound_samples, seed)
    return a, b, d, f"uniform C'={c_prime}"


def _probe_for(cfg: ExperimentConfig, a, b) -> LipschitzProbe:
    probe = LipschitzProbe.for_samples(a, b, p=cfg.probe_p)
    if cfg.probe_c > 0:
        probe = replace(probe, c=min(cfg.probe_c, probe.c0))
    return probe


def _sandwich_rows(cfg: ExperimentConfig, collector: ErrorCollector) -> list[list]:
    rows = []
    for trial in range(cfg.bound_trials):
        a, b, d, param = _sandwich_instance(cfg, trial)
        try:
            report = bound_sandwich(a, b, _probe_for(cfg, a, b))
            passed = True
        except BoundViolationError as e:
            report = e.details["report"]
            collector.add_error(e, check="sandwich", trial=trial)
            passed = False
        rows.append(["sandwich", trial, d, param, report.lower, report.exact, report.upper, passed])
    passes = sum(row[-1] for row in rows)
    logger.info(f"Sandwich: {passes}/{len(rows)} instances ordered")
    return rows


def _lipschitz_rows(cfg: ExperimentConfig, collector: ErrorCollector) -> list[list]:
    rows = []
    d = max(cfg.bound_dims)
    powers, clips = LIPSCHITZ_GRID
    for index, (p, c) in enumerate((p, c) for p in powers for c in clips):
        rng = np.random.default_rng(_derived_seed(cfg.seed, p, index))
        v = rng.normal(scale=2.0 * c, size=(LIPSCHITZ_PAIRS, d))
        w = v + rng.normal(scale=c, size=(LIPSCHITZ_PAIRS, d))
        count = lipschitz_violations(LipschitzProbe(p=p, c=c, d=d), v, w)
        if count:
            collector.add_error(
                BoundViolationError(f"probe p={p} C={c} broke the Lipschitz bound {count} times"),
                check="lipschitz",
            )
        rows.append(["lipschitz", index, d, f"p={p} C={c}", None, float(count), 0.0, count == 0])
    return rows


def _unitized_rows(cfg: ExperimentConfig, collector: ErrorCollector) -> list[list]:
    rows = []
    instances = max(1, cfg.bound_trials // 2)
    for trial in range(instances):
        d = cfg.bound_dims[trial % len(cfg.bound_dims)]
        seed = cfg.seed + trial
        a, b = synth_gaussian_pair(cfg.bound_samples, d, 1.0 + trial % 3, 2.0, seed)
        alpha_vector = np.random.default_rng(seed).uniform(0.25, 1.0, size=d)

        cases = [
            ("vanilla", vanilla_unitize, unitized_upper_bound(UnitizationMode.VANILLA)),
        ]
        for alpha in SCALAR_ALPHAS:
            cases.append(
                (
                    f"scalar alpha={alpha}",
                    lambda x, alpha=alpha: partial_unitize(x, alpha),
                    unitized_upper_bound(UnitizationMode.SCALAR, alpha),
                )
            )
        cases.append(
            (
                f"vector alpha_min={alpha_vector.min():.4f}",
                lambda x: general_unitize(x, alpha_vector),
                unitized_upper_bound(UnitizationMode.VECTOR, alpha_vector),
            )
        )

        for param, transform, upper in cases:
            exact = em_exact_assignment(transform(a.samples), transform(b.samples))
            passed = exact <= upper + Defaults.SANDWICH_SLACK
            if not passed:
                collector.add_error(
                    BoundViolationError(f"{param}: exact {exact} above bound {upper}"),
                    check="unitized",
                    trial=trial,
                )
            rows.append(["unitized", trial, d, param, None, exact, upper, passed])
    return rows


def _appendix_rows(cfg: ExperimentConfig, collector: ErrorCollector) -> list[list]:
    rows = []
    d = cfg.bound_dims[0]
    ratios = []
    for index, c_prime in enumerate(APPENDIX_SCALES):
        a, b = synth_appendix_uniform_pair(c_prime, d, Defaults.ORACLE_MAX_SAMPLES, cfg.seed)
        lower = unbounded_example_lower(c_prime, LipschitzProbe(p=cfg.probe_p, c=c_prime, d=d))
        exact = em_exact_assignment(a, b)
        passed = exact > lower
        if not passed:
            collector.add_error(
                BoundViolationError(f"C'={c_prime}: exact {exact} not above {lower}"),
                check="appendix",
            )
        ratios.append(exact / c_prime)
        rows.append(["appendix", index, d, f"C'={c_prime}", lower, exact, None, passed])

    spread = max(ratios) / min(ratios)
    linear = spread <= LINEARITY_TOLERANCE
    if not linear:
        collector.add_error(
            BoundViolationError(f"distance is not linear in C' (ratio spread {spread:.4f})"),
            check="appendix-linearity",
        )
    rows.append(
        ["appendix-linearity", 0, d, "C'=1,10,100", min(ratios), spread, LINEARITY_TOLERANCE, linear]
    )
    return rows


def run_bounds(cfg: ExperimentConfig) -> list[list]:
    """Run the bound battery; raises BoundViolationError after writing if any check failed."""
    validate_for_mode(cfg, RunMode.BOUNDS)
    out_dir = _out_dir(cfg)
    write_manifest(out_dir, cfg)

    collector = ErrorCollector()
    rows = []
    for battery in (_sandwich_rows, _lipschitz_rows, _unitized_rows, _appendix_rows):
        with error_context(battery.__name__.strip("_")):
            rows.extend(battery(cfg, collector))

    CsvAppender(out_dir / FileNames.BOUNDS_CSV, BOUNDS_COLUMNS).extend(rows)
    logger.info(f"Bounds: {sum(row[-1] for row in rows)}/{len(rows)} checks passed")
    collector.raise_if_errors(BoundViolationError)
    return rows


# oracle-check


def run_oracle_check(cfg: ExperimentConfig) -> list[list]:
    """Cross-check the assignment oracle against the 1-D oracle and the metric axioms."""
    validate_for_mode(cfg, RunMode.ORACLE_CHECK)
    out_dir = _out_dir(cfg)
    write_manifest(out_dir, cfg)

    collector = ErrorCollector()
    rows = []
    n = min(cfg.bound_samples, Defaults.ORACLE_MAX_SAMPLES)
    for trial in range(cfg.bound_trials):
        seed = cfg.seed + trial
        d = cfg.bound_dims[trial % len(cfg.bound_dims)]

        a, b = synth_gaussian_pair(n, 1, 0.25 * (trial % 8), 1.0 + 0.25 * (trial % 4), seed)
        gap = abs(em_exact_assignment(a, b) - em_exact_1d(a, b))
        rows.append(["1d-agreement", trial, gap, AGREEMENT_TOLERANCE, gap <= AGREEMENT_TOLERANCE])

        a, b = synth_gaussian_pair(n, d, 0.5, 1.5, seed)
        asymmetry = abs(em_exact_assignment(a, b) - em_exact_assignment(b, a))
        rows.append(["symmetry", trial, asymmetry, 0.0, asymmetry == 0.0])

        c, _ = synth_gaussian_pair(n, d, 0.0, 1.0, _derived_seed(seed, d))
        excess = em_exact_assignment(a, c) - em_exact_assignment(a, b) - em_exact_assignment(b, c)
        rows.append(["triangle", trial, excess, TRIANGLE_SLACK, excess <= TRIANGLE_SLACK])

    for row in rows:
        if not row[-1]:
            collector.add_error(
                BoundViolationError(f"oracle check '{row[0]}' failed on trial {row[1]}"),
                value=row[2],
            )

    CsvAppender(out_dir / FileNames.ORACLE_CSV, ORACLE_COLUMNS).extend(rows)
    logger.info(f"Oracle checks: {sum(row[-1] for row in rows)}/{len(rows)} passed")
    collector.raise_if_errors(BoundViolationError)
    return rows


RUNNERS = {
    RunMode.TRAIN: run_train,
    RunMode.MOMENTS: run_moments,
    RunMode.EMDIST: run_emdist,
    RunMode.BOUNDS: run_bounds,
    RunMode.ORACLE_CHECK: run_oracle_check,
}
