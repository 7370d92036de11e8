import logging
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from math import hypot
from pathlib import Path
from typing import Any, Final

import numpy as np
import yaml

from .cascade.percolation import (
    PercolationWeights,
    extinction_probability,
    sample_percolation_set,
)
from .cascade.realization import martingale_statistics, surviving_realization
from .cascade.weights import (
    expectation_terms,
    similarity_dimension,
    theoretical_alpha,
    theoretical_beta,
    theoretical_gamma,
    validate_weight_model,
)
from .config import ExperimentConfig, parse_config, with_value
from .distances import (
    box_counts,
    box_dimension,
    distance_set_cloud,
    nearest_atom,
    pinned_distance_measure,
    separating_cylinder,
    set_conservation,
)
from .errors import ConfigInvalid, Extinct
from .ifs import FloatArray, index_points
from .measures.conditional import PathMap, conditional_entropy, lln_diagnostics
from .measures.dimension import (
    DimensionEstimate,
    default_radii,
    entropy_curve,
    entropy_dimension,
    exactness_diagnostic,
    radius_schedule,
)
from .measures.discrete import DiscreteMeasure
from .parallel import ordered_map
from .projection import (
    E_q_estimate,
    ProjectionFrame,
    dimension_conservation_check,
    marstrand_check,
    projected_dimension_profile,
)
from .rotation import classify_group
from .seeds import derive_seed
from .tables import Table, format_summary

logger = logging.getLogger(__name__)

LLN_DEPTHS: Final = tuple(range(10, 21))
SURVIVOR_TEXT_LEVEL: Final = 8
DISTANCE_PAIRS: Final = 200_000


def tool_version() -> str:
    try:
        return version('pycascade')
    except PackageNotFoundError:
        return '0.0.0+unknown'


@dataclass(frozen=True)
class Outcome:
    summary: dict[str, Any]
    tables: dict[str, Table] = field(default_factory=dict)
    plots: dict[str, Table] = field(default_factory=dict)
    attachments: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class ResultRecord:
    config: dict[str, Any]
    version: str
    wall_clock: float
    summary: dict[str, Any]
    tables: dict[str, Table] = field(default_factory=dict)
    plots: dict[str, Table] = field(default_factory=dict)
    attachments: dict[str, str] = field(default_factory=dict)

    def __repr__(self) -> str:
        return f'ResultRecord(kind={self.config["kind"]}, tables={sorted(self.tables)})'

    def summary_text(self) -> str:
        lines = [
            f'pycascade {self.version}',
            f'kind: {self.config["kind"]}',
            f'seed: {self.config["seed"]}',
            f'wall_clock: {self.wall_clock:.3f}s',
            '',
            *format_summary(self.summary),
        ]
        return '\n'.join(lines) + '\n'

    def write(self, directory: Path, /) -> list[Path]:
        directory.mkdir(parents=True, exist_ok=True)
        written = [directory / 'config.yaml', directory / 'summary.txt']
        written[0].write_text(yaml.safe_dump(self.config, sort_keys=False), encoding='utf-8')
        written[1].write_text(self.summary_text(), encoding='utf-8')
        for name, table in self.tables.items():
            path = directory / f'{name}.csv'
            table.write(path)
            written.append(path)
        for name, text in self.attachments.items():
            path = directory / name
            path.write_text(text, encoding='utf-8')
            written.append(path)
        return written


def emit_plot_data(record: ResultRecord, directory: Path, /) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, table in record.plots.items():
        path = directory / f'plot_{name}.csv'
        table.write(path)
        written.append(path)
    return written


def _surviving_measure(config: ExperimentConfig, *, labels: bool = False) -> tuple[DiscreteMeasure, int]:
    survivor = surviving_realization(
        config.weights,
        config.ifs,
        config.level,
        derive_seed(config.seed, 'measure'),
        tail=config.tail,
        labels=labels,
    )
    return survivor.measure.normalized(), survivor.rejections


def _radii(config: ExperimentConfig, measure: DiscreteMeasure, /) -> FloatArray:
    return default_radii(measure) if config.radii is None else np.asarray(config.radii, dtype=np.float64)


def _estimate_table(rows: dict[str, DimensionEstimate], /) -> Table:
    return Table(
        header=('estimator', *DimensionEstimate.HEADER),
        rows=[(name, *estimate.row()) for name, estimate in rows.items()],
    )


def run_validate(config: ExperimentConfig, threads: int | None, /) -> Outcome:  # noqa: ARG001
    report = validate_weight_model(config.weights)
    if not report.passed:
        logger.warning('Weight model fails validation: %s', '; '.join(report.failures))
    entropy, contraction = expectation_terms(config.weights, config.ifs.ratios)
    summary: dict[str, Any] = {
        'similarity_dimension': similarity_dimension(config.ifs.ratios),
        'validation': report.to_summary(),
        'expected_entropy': entropy,
        'expected_log_ratio': contraction,
        'alpha_separated': theoretical_alpha(config.weights, config.ifs.ratios, 0.0, dimension=config.ifs.dimension),
        'group': classify_group(config.ifs.rotations).to_summary(),
    }
    moments = Table.from_columns(('p', 'moment_sum'), report.a1_witnesses.keys(), report.a1_witnesses.values())
    return Outcome(summary=summary, tables={'moments': moments})


def run_simulate(config: ExperimentConfig, threads: int | None, /) -> Outcome:
    seeds = [derive_seed(config.seed, 'martingale', index) for index in range(config.seeds)]
    statistics = martingale_statistics(config.weights, config.level, seeds, threads=threads)
    means, stderrs = statistics.means, statistics.stderrs
    table = Table.from_columns(
        ('level', 'mean', 'stderr', 'survival'),
        statistics.levels.tolist(),
        means,
        stderrs,
        statistics.survival,
    )
    lln = lln_diagnostics(
        config.weights,
        config.ifs.ratios,
        LLN_DEPTHS,
        config.points,
        derive_seed(config.seed, 'spine'),
    )
    summary = {
        'final_mean': float(means[-1]),
        'final_stderr': float(stderrs[-1]),
        'final_survival': float(statistics.survival[-1]),
        'mean_one_within_3_stderr': bool(abs(means[-1] - 1) <= max(3 * stderrs[-1], 1e-9)),
        'lln': lln.to_summary(),
    }
    plot = Table.from_columns(('level', 'Y_n_mean'), statistics.levels.tolist(), means)
    return Outcome(summary=summary, tables={'martingale': table}, plots={'martingale': plot})


def run_dims(config: ExperimentConfig, threads: int | None, /) -> Outcome:
    measure, rejections = _surviving_measure(config)
    radii = _radii(config, measure)
    curve = entropy_curve(measure, radii, seed=derive_seed(config.seed, 'entropy'))
    entropy = entropy_dimension(measure, radii, seed=derive_seed(config.seed, 'entropy'))
    exactness = exactness_diagnostic(measure, config.points, radii, derive_seed(config.seed, 'exactness'))
    depth = config.level // 2
    cond = conditional_entropy(
        config.weights,
        config.ifs,
        PathMap.identity(),
        depth,
        config.replicas,
        derive_seed(config.seed, 'conditional'),
        tail=config.tail,
        threads=threads,
    )
    ratios, dimension = config.ifs.ratios, config.ifs.dimension
    summary = {
        'atoms': len(measure),
        'rejections': rejections,
        'entropy_dimension': entropy.value,
        'entropy_dimension_stderr': entropy.stderr,
        'local_dimension': exactness.to_summary(),
        'conditional_entropy': {'depth': depth, **cond.to_summary()},
        'alpha_formula': theoretical_alpha(config.weights, ratios, cond.value, dimension=dimension),
    }
    counts, edges = exactness.histogram()
    histogram = Table.from_columns(('lower', 'upper', 'count'), edges[:-1], edges[1:], counts.astype(np.int64))
    tables = {
        'entropy_curve': Table(header=curve.HEADER, rows=curve.rows()),
        'dimensions': _estimate_table({'entropy': entropy, 'local': exactness.estimate()}),
        'local_histogram': histogram,
    }
    plot = Table.from_columns(('log_r', 'H_r'), np.log(curve.radii), curve.entropies)
    return Outcome(summary=summary, tables=tables, plots={'entropy': plot})


def run_project(config: ExperimentConfig, threads: int | None, /) -> Outcome:
    frames = config.projection_frames()
    measure, rejections = _surviving_measure(config)
    radii = _radii(config, measure)
    if config.alpha is None:
        alpha = exactness_diagnostic(measure, config.points, radii, derive_seed(config.seed, 'exactness')).mean
    else:
        alpha = config.alpha
    profile = projected_dimension_profile(
        measure,
        frames,
        points=config.points,
        radii=radii,
        seed=derive_seed(config.seed, 'profile'),
        threads=threads,
    )
    report = marstrand_check(profile, alpha, config.k, config.tolerance)
    rows = [
        (entry.frame.label, entry.report.mean, entry.report.stderr, float(entry.report.r2.mean()), passed)
        for entry, (_, _, passed) in zip(profile, report.rows, strict=True)
    ]
    values = np.array([entry.report.mean for entry in profile])
    summary = {
        'rejections': rejections,
        'alpha': alpha,
        'target': report.target,
        'tolerance': report.tolerance,
        'frames': len(profile),
        'mean_projected_dimension': float(values.mean()),
        'passed_fraction': report.passed_fraction,
        'all_passed': report.all_passed,
        'group': classify_group(config.ifs.rotations).to_summary(),
    }
    table = Table(header=('label', 'value', 'stderr', 'r2', 'passed'), rows=rows)
    plot = Table.from_columns(('angle', 'beta'), [entry.frame.label for entry in profile], values)
    return Outcome(summary=summary, tables={'profile': table}, plots={'profile': plot})


def _conservation_frame(config: ExperimentConfig, /) -> ProjectionFrame:
    if config.frames:
        return config.frames[0]
    if config.k >= config.ifs.dimension:
        raise ConfigInvalid('k', f'projections need k < d = {config.ifs.dimension}, got {config.k}')
    return ProjectionFrame.coordinate(config.ifs.dimension, tuple(range(config.k)))


def _formula_summary(config: ExperimentConfig, frame: ProjectionFrame, threads: int | None, /) -> dict[str, Any]:
    depth = config.level // 2
    seed = derive_seed(config.seed, 'conditional')
    cond, projected = (
        conditional_entropy(
            config.weights,
            config.ifs,
            path_map,
            depth,
            config.replicas,
            seed,
            tail=config.tail,
            threads=threads,
        )
        for path_map in (PathMap.identity(), PathMap.projection(frame.rows))
    )
    ratios = config.ifs.ratios
    return {
        'depth': depth,
        'cond_entropy': cond.value,
        'projected_cond_entropy': projected.value,
        'gamma_numerator': projected.value - cond.value,
        'gamma_numerator_stderr': hypot(cond.stderr, projected.stderr),
        'alpha': theoretical_alpha(config.weights, ratios, cond.value, dimension=config.ifs.dimension),
        'beta': theoretical_beta(config.weights, ratios, projected.value, dimension=frame.k),
        'gamma': theoretical_gamma(config.weights, ratios, cond.value, projected.value),
    }


def run_conserve(config: ExperimentConfig, threads: int | None, /) -> Outcome:
    frame = _conservation_frame(config)
    measure, rejections = _surviving_measure(config)
    radii = _radii(config, measure)
    report = dimension_conservation_check(
        measure,
        frame,
        config.slices,
        config.widths,
        derive_seed(config.seed, 'conservation'),
        points=config.points,
        radii=radii,
        threads=threads,
    )
    sets = set_conservation(measure.points, frame, radii, config.slices, derive_seed(config.seed, 'set-conservation'))
    summary = {
        'rejections': rejections,
        **report.to_summary(),
        'within_tolerance': bool(abs(report.residual) <= max(0.1, 3 * report.combined_stderr)),
        'sets': sets.to_summary(),
        'formula': _formula_summary(config, frame, threads),
    }
    table = Table.from_columns(('width', 'gamma', 'stderr'), report.widths, report.slice_means, report.slice_stderrs)
    return Outcome(summary=summary, tables={'conservation': table})


def run_percolate(config: ExperimentConfig, threads: int | None, /) -> Outcome:
    weights = config.weights
    if not isinstance(weights, PercolationWeights):
        raise ConfigInvalid('weights.kind', 'the percolate experiment needs a percolation weight model')
    law, ifs = weights.law, config.ifs
    seeds = [derive_seed(config.seed, 'percolation', index) for index in range(config.seeds)]
    samples = ordered_map(lambda seed: sample_percolation_set(law, ifs, config.level, seed), seeds, threads=threads)
    alive = np.array([not sample.extinct for sample in samples])
    if not alive.any():
        raise Extinct(f'All {config.seeds} percolation samples died out by level {config.level}')
    survivor = samples[int(alive.argmax())]
    points = index_points(ifs, survivor.survivors[-1], config.level)
    scales = ifs.radius_bound * ifs.rho ** np.arange(1, config.level + 1)
    counts = box_counts(points, scales)
    estimate = box_dimension(points, scales)
    frequency = float(alive.mean())
    summary = {
        'alpha': weights.alpha,
        'alpha_formula': theoretical_alpha(weights, ifs.ratios, 0.0),
        'expected_offspring': law.expected_card(),
        'extinction_probability': extinction_probability(law),
        'survival_frequency': frequency,
        'survival_stderr': float(np.sqrt(frequency * (1 - frequency) / config.seeds)),
        'box_dimension': estimate.value,
        'box_dimension_stderr': estimate.stderr,
        'surviving_cylinders': len(survivor.survivors[-1]),
    }
    attachments = {}
    if config.level <= SURVIVOR_TEXT_LEVEL:
        attachments['survivors.txt'] = survivor.to_text()
    table = Table.from_columns(('scale', 'count'), scales, counts.astype(np.int64))
    return Outcome(summary=summary, tables={'box_counts': table}, attachments=attachments)


def run_distances(config: ExperimentConfig, threads: int | None, /) -> Outcome:  # noqa: ARG001
    labels = config.exclusion is None or isinstance(config.exclusion, tuple)
    measure, rejections = _surviving_measure(config, labels=labels)
    if config.anchor is None:
        index = int(np.flatnonzero(measure.masses > 0)[0])
        anchor = measure.points[index]
    else:
        anchor = np.array(config.anchor, dtype=np.float64)
        index = nearest_atom(measure, anchor)
    exclusion = separating_cylinder(measure, index) if config.exclusion is None else config.exclusion
    logger.info('Pinned distances from %s, excluding %r', anchor.tolist(), exclusion)
    radii = _radii(config, measure)
    alpha = exactness_diagnostic(measure, config.points, radii, derive_seed(config.seed, 'exactness'))
    pinned = pinned_distance_measure(measure, anchor, exclusion)
    image = exactness_diagnostic(pinned, config.points, seed=derive_seed(config.seed, 'pinned'))
    distances = distance_set_cloud(measure.points, DISTANCE_PAIRS, derive_seed(config.seed, 'distance-set'))
    scales = radius_schedule(float(distances.max()) / 4, pinned.resolution)
    distance_set = box_dimension(distances.reshape(-1, 1), scales)
    target = min(1.0, alpha.mean)
    summary = {
        'rejections': rejections,
        'anchor': [float(v) for v in anchor],
        'exclusion': list(exclusion) if isinstance(exclusion, tuple) else exclusion,
        'alpha': alpha.mean,
        'target': target,
        'pinned_dimension': image.to_summary(),
        'pinned_deviation': abs(image.mean - target),
        'distance_set_box_dimension': distance_set.value,
    }
    tables = {'pinned': _estimate_table({'measure': alpha.estimate(), 'pinned': image.estimate()})}
    return Outcome(summary=summary, tables=tables)


def run_eq_scan(config: ExperimentConfig, threads: int | None, /) -> Outcome:
    frame = config.projection_frames()[0]
    info = classify_group(config.ifs.rotations)
    rows = []
    for q in config.q:
        if config.level < q:
            logger.warning('Level %d is coarser than the scale rho^%d, E_%d is unreliable', config.level, q, q)
        mean, stderr = E_q_estimate(
            config.weights,
            config.ifs,
            frame,
            q,
            config.replicas,
            derive_seed(config.seed, 'eq', q),
            info=info,
            level=config.level,
            samples=config.points,
            assume_dense=config.assume_dense,
            tail=config.tail,
            threads=threads,
        )
        rows.append((q, mean, stderr))
    summary: dict[str, Any] = {'group': info.to_summary(), 'frame': frame.to_mapping()['rows']}
    summary.update({f'E_{q}': mean for q, mean, _ in rows})
    if len(rows) > 1:
        summary['last_step'] = abs(rows[-1][1] - rows[-2][1])
    table = Table(header=('q', 'E_q', 'stderr'), rows=rows)
    plot = Table(header=('q', 'E_q'), rows=[(q, mean) for q, mean, _ in rows])
    return Outcome(summary=summary, tables={'eq': table}, plots={'eq': plot})


EXPERIMENTS: Final[dict[str, Callable[[ExperimentConfig, int | None], Outcome]]] = {
    'validate': run_validate,
    'simulate': run_simulate,
    'dims': run_dims,
    'project': run_project,
    'conserve': run_conserve,
    'percolate': run_percolate,
    'distances': run_distances,
    'eq-scan': run_eq_scan,
}


def _scalars(summary: dict[str, Any], /, *, prefix: str = '') -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in summary.items():
        if isinstance(value, dict):
            flat.update(_scalars(value, prefix=f'{prefix}{key}.'))
        elif isinstance(value, bool | int | float | str):
            flat[f'{prefix}{key}'] = value
    return flat


def run_sweep(config: ExperimentConfig, threads: int | None, /) -> Outcome:
    if config.sweep is None or config.experiment is None:
        raise ConfigInvalid('sweep', 'a sweep needs one gridded parameter and an experiment kind')
    name, grid = config.sweep
    experiment = EXPERIMENTS[config.experiment]
    header: tuple[str, ...] = ()
    rows = []
    for index, value in enumerate(grid):
        data = with_value(config.source, name, value)
        data.pop('sweep', None)
        data.pop('experiment', None)
        data.update(kind=config.experiment, seed=derive_seed(config.seed, 'sweep', index))
        logger.info('Sweep point %d/%d: %s = %r', index + 1, len(grid), name, value)
        scalars = _scalars(experiment(parse_config(data), threads).summary)
        if not header:
            header = tuple(scalars)
        label = value if isinstance(value, int | float) else str(value)
        rows.append((index, label, *(scalars.get(key, '') for key in header)))
    table = Table(header=('index', name, *header), rows=rows)
    summary = {'experiment': config.experiment, 'parameter': name, 'points': len(grid)}
    return Outcome(summary=summary, tables={'sweep': table})


def run(config: ExperimentConfig, /, *, threads: int | None = None) -> ResultRecord:
    start = time.perf_counter()
    logger.debug('Running %r', config)
    outcome = run_sweep(config, threads) if config.kind == 'sweep' else EXPERIMENTS[config.kind](config, threads)
    return ResultRecord(
        config=config.to_mapping(),
        version=tool_version(),
        wall_clock=time.perf_counter() - start,
        summary=outcome.summary,
        tables=outcome.tables,
        plots=outcome.plots,
        attachments=outcome.attachments,
    )


def sweep(config: ExperimentConfig, /, *, threads: int | None = None) -> ResultRecord:
    if config.kind != 'sweep':
        raise ConfigInvalid('kind', f'expected a sweep config, got {config.kind!r}')
    return run(config, threads=threads)
