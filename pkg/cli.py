# cli.py - Command-line pipeline: ingest -> validate -> analyze -> report
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import wraps

import click
from werkzeug.utils import secure_filename

from config import Config
from models.errors import EXIT_IO, EXIT_VALIDATION, DomainError, PreconditionError, ReferendumError
from models.referendum import (
    AggregationLevel,
    aggregate,
    expand_check,
    ingest,
    load_grouping_spec,
    load_reference_totals,
    reconcile,
    serialize,
)
from models.records import PoolingMethod, RegionEstimate
from utils.effect_core import (
    chin_effect_size,
    eligible_share,
    log_odds_to_proportion,
    required_split_for_eligible_majority,
)
from utils.meta_engine import cochran_q, loo_q_sensitivity, naive_log_odds, pool, pool_grouped
from utils.report import (
    format_p_value,
    forest_spec_from_result,
    regions_from_dict,
    render_forest,
    render_results_table,
    render_threshold_table,
    result_from_dict,
    result_to_dict,
    summary_line,
    to_json,
)
from utils.synthetic import GenerativeConfig, recovery_study, simulate

logger = logging.getLogger(__name__)

ALL_FORMATS = ('json', 'md', 'csv', 'svg')


def handle_errors(f):
    """Turn library errors into a JSON message on stderr and the stable exit code."""
    @wraps(f)
    def decorated_function(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ReferendumError as e:
            click.echo(json.dumps(e.to_dict()), err=True)
            sys.exit(e.exit_code)
        except OSError as e:
            click.echo(json.dumps({'error': 'io_error', 'message': str(e)}), err=True)
            sys.exit(EXIT_IO)
    return decorated_function


def _split_list(values):
    """Flatten repeatable, comma-separated option values."""
    items = []
    for value in values:
        items.extend(part.strip() for part in value.split(',') if part.strip())
    return items


def _write(path, text):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(text)


def _parse_level(value):
    """region13 | country5 | area | path to a group,label CSV."""
    try:
        level = AggregationLevel(value.lower())
        return level.value, level
    except ValueError:
        if not os.path.isfile(value):
            raise DomainError(f'unknown level {value!r}', field='level',
                              allowed=[l.value for l in AggregationLevel])
        name = os.path.splitext(os.path.basename(value))[0]
        return name, load_grouping_spec(value, name=name)


def _select_units(records, level, include=(), exclude=()):
    """Estimates for the units of `level`, after exclusions.

    An excluded label drops every record whose region or area carries it, and any
    unit with that label.
    """
    excluded = set(exclude)
    known = {r.region for r in records} | {r.area for r in records}
    kept = [r for r in records if r.region not in excluded and r.area not in excluded]
    if not kept:
        raise PreconditionError('exclusions leave no records', exclude=sorted(excluded))
    aggregates = aggregate(kept, level)
    known |= {a.label for a in aggregates}
    unknown = sorted(excluded - known)
    if unknown:
        raise PreconditionError(f'cannot exclude unknown label(s): {", ".join(unknown)}',
                                labels=unknown)
    units = [a for a in aggregates if a.label not in excluded]
    if include:
        missing = [label for label in include if label not in {a.label for a in units}]
        if missing:
            raise PreconditionError(f'included label(s) not found: {", ".join(missing)}',
                                    labels=missing)
        units = [a for a in units if a.label in include]
    return [a.estimate for a in units]


@dataclass(frozen=True)
class Scenario:
    level_name: str
    level: object
    method: PoolingMethod
    exclude: tuple

    @property
    def label(self):
        text = f'{self.level_name} {self.method.label}'
        if self.exclude:
            text += f' (excluding {", ".join(self.exclude)})'
        return text

    @property
    def slug(self):
        excluded = '-'.join(self.exclude) if self.exclude else 'all'
        return secure_filename(f'{self.level_name}_{self.method.value}_{excluded}')


@click.group()
@click.option('--verbose', '-v', is_flag=True, help='Log at DEBUG level.')
def cli(verbose):
    """Meta-analytic aggregation of binary referendum results."""
    logging.basicConfig(level=logging.DEBUG if verbose else Config.LOG_LEVEL,
                        format='%(levelname)s %(name)s: %(message)s')


@cli.command()
@click.argument('input_path', metavar='INPUT')
@click.option('--reference', default=None, help='Reference totals CSV (default: bundled reference totals).')
@click.option('--level', default='country5', show_default=True,
              help='Aggregation level the reference rows refer to.')
@click.option('--expand-check', 'expand_region', default=None, metavar='REGION',
              help='Recompute one region\'s SE from expanded respondent-level data.')
@click.option('--json', 'as_json', is_flag=True, help='Print the full reconciliation report as JSON.')
@handle_errors
def validate(input_path, reference, level, expand_region, as_json):
    """Check row identities and reconcile against declared totals."""
    records = ingest(input_path)
    click.echo(f'{len(records)} records read from {input_path}')
    references = load_reference_totals(reference or Config.data_path(Config.REFERENCE_FILE))
    _, parsed_level = _parse_level(level)
    report = reconcile(aggregate(records, parsed_level), references, Config.TOTAL_LABEL)

    if as_json:
        click.echo(report.to_json())
    else:
        for label, checks in report.entries:
            for name, check in checks.items():
                status = 'PASS' if check.passed else 'FAIL'
                click.echo(f'{label} {name}={check.expected:,} {status}')

    if expand_region:
        se_formula, se_expanded = expand_check(records, expand_region)
        click.echo(f'{expand_region} se formula={se_formula:.6g} expanded={se_expanded:.6g}')

    if not report.passed:
        failures = [{'label': label, 'field': name} for label, name in report.failures()]
        click.echo(json.dumps({'error': 'reconciliation_failed', 'failures': failures}), err=True)
        sys.exit(EXIT_VALIDATION)


@cli.command()
@click.argument('input_path', metavar='INPUT')
@click.option('--level', 'levels', multiple=True, default=('region13',), show_default=True,
              help='region13, country5, area or a group,label CSV. Repeatable.')
@click.option('--methods', default='fe,ivhet,re', show_default=True, help='Comma list of fe, ivhet, re.')
@click.option('--exclude', 'excludes', multiple=True, default=('none',), show_default=True,
              help='Comma-joined labels to drop together; repeat for separate scenarios.')
@click.option('--include', 'includes', multiple=True, help='Restrict pooling to these labels.')
@click.option('--out', 'out_dir', default=None, help='Output directory (default: $REFERENDUM_OUTPUT_DIR).')
@click.option('--formats', default=','.join(ALL_FORMATS), show_default=True,
              help='Comma list of json, md, csv, svg.')
@handle_errors
def analyze(input_path, levels, methods, excludes, includes, out_dir, formats):
    """Pool the chosen units with each method and write tables and forest plots."""
    out_dir = out_dir or Config.OUTPUT_DIR
    formats = _split_list([formats])
    unknown = sorted(set(formats) - set(ALL_FORMATS))
    if unknown:
        raise PreconditionError(f'unknown format(s): {", ".join(unknown)}', formats=unknown)
    method_list = [PoolingMethod.parse(m) for m in _split_list([methods])]
    if not method_list:
        raise PreconditionError('at least one method is required')
    include = tuple(_split_list(includes))

    records = ingest(input_path)
    scenarios = []
    for level_value in levels:
        level_name, level = _parse_level(level_value)
        for exclusion in excludes:
            labels = tuple(l for l in _split_list([exclusion]) if l.lower() != 'none')
            for method in method_list:
                scenarios.append(Scenario(level_name, level, method, labels))

    def run(scenario):
        regions = _select_units(records, scenario.level, include, scenario.exclude)
        result = pool(regions, scenario.method).with_label(scenario.label)
        logger.info('%s', summary_line(result))
        return scenario, regions, result

    # map() keeps scenario order regardless of completion order
    with ThreadPoolExecutor(max_workers=Config.MAX_WORKERS) as executor:
        outcomes = list(executor.map(run, scenarios))

    results = []
    for scenario, regions, result in outcomes:
        results.append(result)
        het = result.het
        click.echo(summary_line(result))
        click.echo(f'  Q={het.q:,.1f} df={het.df} p={format_p_value(het.p_value)} '
                   f'I2={100 * het.i_squared:.1f}% tau2={het.tau2:.4f}')
        if all(r.has_counts for r in regions):
            naive, _ = naive_log_odds(regions)
            click.echo(f'  head-count log-odds={naive:.3f} '
                       f'(proportion {log_odds_to_proportion(naive):.3f})')

        base = os.path.join(out_dir, scenario.slug)
        if 'json' in formats:
            document = result_to_dict(result, regions)
            effect = chin_effect_size(result.estimate)
            document.update({
                'level': scenario.level_name,
                'exclude': list(scenario.exclude),
                'effect_size': {'d': effect.d, 'band': effect.band.value,
                                'descriptor': effect.descriptor},
            })
            _write(base + '.json', to_json(document))
        if 'svg' in formats:
            spec = forest_spec_from_result(result, regions, title=scenario.label)
            _write(base + '.svg', render_forest(spec))

    markdown, csv_text = render_results_table(results)
    if 'md' in formats:
        _write(os.path.join(out_dir, 'results.md'), markdown)
    if 'csv' in formats:
        _write(os.path.join(out_dir, 'results.csv'), csv_text)


@cli.command()
@click.argument('input_path', metavar='INPUT')
@click.option('--level', default='region13', show_default=True)
@click.option('--spec', 'spec_path', default=None, help='group,label CSV (default: bundled England groups).')
@click.option('--within', default='re', show_default=True, help='Method pooling inside each group.')
@click.option('--across', default='fe,ivhet,re', show_default=True, help='Methods pooling the group summaries.')
@click.option('--include', 'includes', multiple=True, help='Units to regroup (default: every label in the grouping).')
@click.option('--exclude', 'excludes', multiple=True)
@click.option('--out', 'out_dir', default=None)
@handle_errors
def regroup(input_path, level, spec_path, within, across, includes, excludes, out_dir):
    """Leave-one-out heterogeneity ranking and hierarchical pooling over a grouping."""
    out_dir = out_dir or Config.OUTPUT_DIR
    grouping = load_grouping_spec(spec_path or Config.data_path(Config.ENGLAND_GROUPS_FILE),
                                  name=os.path.basename(spec_path) if spec_path else 'england_groups')
    exclude = tuple(_split_list(excludes))
    include = tuple(_split_list(includes)) or tuple(l for l in grouping.labels if l not in exclude)
    _, parsed_level = _parse_level(level)

    records = ingest(input_path)
    regions = _select_units(records, parsed_level, include, exclude)
    if len(regions) < 3:
        raise PreconditionError(f'regrouping needs at least 3 units, got {len(regions)}',
                                k=len(regions))
    grouping = grouping.restricted_to([r.label for r in regions])
    within = PoolingMethod.parse(within)

    het = cochran_q(regions)
    click.echo(f'Q={het.q:,.1f} df={het.df} p={format_p_value(het.p_value)} '
               f'I2={100 * het.i_squared:.1f}% tau2={het.tau2:.4f}')
    ranking = loo_q_sensitivity(regions)
    click.echo('Leave-one-out Q:')
    for rank, entry in enumerate(ranking, start=1):
        click.echo(f'  {rank}. {entry.label}: Q without={entry.q_without:,.0f} '
                   f'drop={entry.q_drop:,.0f}')

    document = {
        'units': [r.label for r in regions],
        'heterogeneity': {'q': het.q, 'df': het.df, 'i_squared': het.i_squared,
                          'tau2': het.tau2, 'p_value': het.p_value},
        'loo': [{'label': e.label, 'q_without': e.q_without, 'q_drop': e.q_drop} for e in ranking],
        'within': within.value,
        'across': [],
    }
    results = []
    for method in [PoolingMethod.parse(m) for m in _split_list([across])]:
        grouped = pool_grouped(regions, grouping, within=within, across=method)
        overall = grouped.overall.with_label(f'{grouping.name} {method.label} across groups')
        if not document['across']:
            click.echo(f'Groups ({within.label} within):')
            for name, result in grouped.groups:
                click.echo(f'  {summary_line(result)}')
            document['groups'] = [result_to_dict(result) for _, result in grouped.groups]
        click.echo(summary_line(overall))
        results.append(overall)
        summaries = _group_summaries(grouped)
        document['across'].append(result_to_dict(overall, summaries))
        spec = forest_spec_from_result(overall, summaries, title=overall.label)
        _write(os.path.join(out_dir, secure_filename(f'regroup_{method.value}') + '.svg'),
               render_forest(spec))

    _write(os.path.join(out_dir, 'regroup.json'), to_json(document))
    markdown, _ = render_results_table(results)
    _write(os.path.join(out_dir, 'regroup.md'), markdown)


def _group_summaries(grouped):
    return [RegionEstimate(name, result.estimate, result.se) for name, result in grouped.groups]


@cli.command()
@click.option('--turnout', type=float, default=None, help='Turnout as a proportion in (0.5, 1].')
@click.option('--split', type=float, default=None, help='Winning share of the votes cast.')
@handle_errors
def threshold(turnout, split):
    """Print the effect-size threshold table, and the turnout arithmetic if asked."""
    click.echo(render_threshold_table(), nl=False)
    if turnout is None:
        return
    required = required_split_for_eligible_majority(turnout)
    click.echo(f'required split {100 * required:.1f}%–{100 * (1 - required):.1f}% '
               f'at {100 * turnout:.1f}% turnout')
    share_split = split if split is not None else required
    share = eligible_share(share_split, turnout)
    click.echo(f'eligible share {100 * share:.1f}% '
               f'({100 * share_split:.1f}% of a {100 * turnout:.1f}% turnout)')


@cli.command('simulate')
@click.option('--config', 'config_path', default=None, help='KEY=VALUE generator config file.')
@click.option('--k', type=int, default=None)
@click.option('--mu', type=float, default=None)
@click.option('--tau2', type=float, default=None)
@click.option('--size', type=int, default=None, help='Voters per region.')
@click.option('--turnout', type=float, default=None)
@click.option('--seed', type=int, default=None)
@click.option('--out', 'out_path', default=None, help='Output CSV (default: <output dir>/synthetic.csv).')
@click.option('--recovery', type=int, default=None, metavar='N',
              help='Run N replicates and report tau2 recovery and FE coverage.')
@handle_errors
def simulate_command(config_path, k, mu, tau2, size, turnout, seed, out_path, recovery):
    """Generate area records under the beta-binomial random-effects model."""
    if config_path:
        config = GenerativeConfig.from_file(config_path, K=k, MU=mu, TAU2=tau2,
                                            REGION_SIZES=size, TURNOUT=turnout, SEED=seed)
    else:
        k = 13 if k is None else k
        config = GenerativeConfig.build(
            k=k,
            mu=0.5 if mu is None else mu,
            tau2=0.0 if tau2 is None else tau2,
            size=100000 if size is None else size,
            seed=0 if seed is None else seed,
            turnout=turnout,
        )

    if recovery:
        report = recovery_study(config, recovery)
        click.echo(to_json(report.to_dict()), nl=False)
        return

    out_path = out_path or os.path.join(Config.OUTPUT_DIR, 'synthetic.csv')
    directory = os.path.dirname(out_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    records = simulate(config)
    serialize(records, out_path)
    click.echo(f'{len(records)} synthetic records written to {out_path}')


@cli.command()
@click.argument('result_path', metavar='RESULT_JSON')
@click.option('--out', 'out_path', default=None, help='SVG path (default: next to the JSON).')
@click.option('--title', default=None)
@handle_errors
def forest(result_path, out_path, title):
    """Redraw a forest plot from a result JSON written by analyze."""
    with open(result_path, encoding='utf-8') as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise PreconditionError(f'{result_path}: not JSON ({e})')
    result = result_from_dict(data)
    spec = forest_spec_from_result(result, regions_from_dict(data), title=title)
    out_path = out_path or os.path.splitext(result_path)[0] + '.svg'
    _write(out_path, render_forest(spec))
    click.echo(f'forest plot written to {out_path}')


if __name__ == '__main__':
    cli()
