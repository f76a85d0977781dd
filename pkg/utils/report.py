# utils/report.py - SVG forest plots and markdown/CSV/JSON result tables
# Numbers are formatted before they reach the template, so identical inputs give identical bytes.
import io
import json
import math
from dataclasses import dataclass
from typing import Optional

import pandas as pd
from jinja2 import Environment, FileSystemLoader, select_autoescape

from config import Config
from models.errors import RenderError
from models.records import HeterogeneityStats, PooledResult, PoolingMethod, RegionEstimate
from utils.effect_core import chin_effect_size, generate_threshold_table, log_odds_to_proportion, odds_from_log_odds
from utils.meta_engine import P_VALUE_FLOOR

WIDTH = 800
HEADER = 40
FOOTER = 20
ROW_HEIGHT = 28
MAX_SIDE = 20.0
PLOT_LEFT = 190.0
PLOT_RIGHT = 560.0
TEXT_X = 575
WEIGHT_X = 790

RESULT_COLUMNS = ('Result', 'Log-odds (95% c.i.)', 'Odds of Leave', 'Proportion of Leavers',
                  'Effect size', 'Magnitude')
THRESHOLD_COLUMNS = ('Level of effect', "Effect size Cohen's d", 'log-OR', 'Odds Ratio OR',
                  'Proportion of leavers')

_env = Environment(
    loader=FileSystemLoader(Config.TEMPLATE_DIR),
    autoescape=select_autoescape(['svg', 'xml', 'html']),
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
)


@dataclass(frozen=True)
class ForestRow:
    label: str
    estimate: float
    ci95: tuple
    weight: float


@dataclass(frozen=True)
class PooledMarker:
    estimate: float
    ci95: tuple
    method_label: str


@dataclass(frozen=True)
class ForestPlotSpec:
    rows: tuple
    pooled: PooledMarker
    title: str
    axis: Optional[tuple] = None

    @property
    def height(self):
        # one band per region plus one for the pooled rhombus
        return HEADER + FOOTER + ROW_HEIGHT * (len(self.rows) + 1)


def forest_spec_from_result(result, regions, title=None, z=1.96):
    """Pair each input region with its normalized weight in `result`."""
    rows = []
    for region in regions:
        rows.append(ForestRow(
            label=region.label,
            estimate=region.log_odds,
            ci95=(region.log_odds - z * region.se, region.log_odds + z * region.se),
            weight=result.weight_of(region.label),
        ))
    pooled = PooledMarker(result.estimate, tuple(result.ci95), result.method.label)
    return ForestPlotSpec(tuple(rows), pooled, title or result.label or result.method.label)


def _fmt(value):
    return f'{value:.2f}'


def _nice_step(span, target=5):
    raw = span / target
    magnitude = 10 ** math.floor(math.log10(raw))
    for factor in (1, 2, 2.5, 5, 10):
        if raw <= factor * magnitude:
            return factor * magnitude
    return 10 * magnitude


def _axis_range(spec):
    if spec.axis is not None:
        low, high = spec.axis
    else:
        values = [0.0, *spec.pooled.ci95]
        for row in spec.rows:
            values.extend(row.ci95)
        low, high = min(values), max(values)
        pad = (high - low) * 0.05 or 1.0
        low, high = low - pad, high + pad
    if not (math.isfinite(low) and math.isfinite(high) and high > low):
        raise RenderError('axis range must be finite and increasing', axis=[low, high])
    return low, high


def _check(spec):
    if not spec.rows:
        raise RenderError('forest plot needs at least one row')
    numbers = [spec.pooled.estimate, *spec.pooled.ci95]
    for row in spec.rows:
        numbers.extend([row.estimate, *row.ci95, row.weight])
    if not all(math.isfinite(v) for v in numbers):
        raise RenderError('forest plot coordinates must be finite')
    total = sum(row.weight for row in spec.rows)
    if abs(total - 1.0) > 1e-6:
        raise RenderError(f'row weights sum to {total}, not 1', weight_sum=total)


def render_forest(spec):
    """SVG 1.1 forest plot: CI whiskers, weight-area squares and a pooled rhombus."""
    _check(spec)
    low, high = _axis_range(spec)
    scale = (PLOT_RIGHT - PLOT_LEFT) / (high - low)

    def x_of(value):
        return PLOT_LEFT + (value - low) * scale

    max_weight = max(row.weight for row in spec.rows)
    rows = []
    for i, row in enumerate(spec.rows):
        y = HEADER + ROW_HEIGHT * i + ROW_HEIGHT / 2
        # area, not side, is proportional to weight
        side = MAX_SIDE * math.sqrt(row.weight / max_weight) if max_weight > 0 else 0.0
        x = x_of(row.estimate)
        rows.append({
            'label': row.label,
            'y': _fmt(y),
            'text_y': _fmt(y + 4),
            'x_low': _fmt(x_of(row.ci95[0])),
            'x_high': _fmt(x_of(row.ci95[1])),
            'square_x': _fmt(x - side / 2),
            'square_y': _fmt(y - side / 2),
            'side': _fmt(side),
            'summary': f'{row.estimate:.3f} ({row.ci95[0]:.3f}, {row.ci95[1]:.3f})',
            'weight': f'{100 * row.weight:.1f}%',
        })

    y = HEADER + ROW_HEIGHT * len(spec.rows) + ROW_HEIGHT / 2
    half = ROW_HEIGHT * 0.3
    p_low, p_high = spec.pooled.ci95
    centre = x_of(spec.pooled.estimate)
    points = ' '.join([
        f'{_fmt(x_of(p_low))},{_fmt(y)}',
        f'{_fmt(centre)},{_fmt(y - half)}',
        f'{_fmt(x_of(p_high))},{_fmt(y)}',
        f'{_fmt(centre)},{_fmt(y + half)}',
    ])
    pooled = {
        'label': spec.pooled.method_label,
        'text_y': _fmt(y + 4),
        'points': points,
        'summary': f'{spec.pooled.estimate:.3f} ({p_low:.3f}, {p_high:.3f})',
    }

    plot_bottom = HEADER + ROW_HEIGHT * (len(spec.rows) + 1)
    step = _nice_step(high - low)
    ticks = []
    value = math.ceil(low / step) * step
    while value <= high + 1e-12:
        ticks.append({
            'x': _fmt(x_of(value)),
            'y2': _fmt(plot_bottom + 4),
            'text_y': _fmt(plot_bottom + 15),
            'text': f'{value + 0.0:g}',
        })
        value += step

    template = _env.get_template('forest.svg')
    return template.render(
        width=WIDTH,
        height=spec.height,
        title=spec.title,
        text_x=TEXT_X,
        weight_x=WEIGHT_X,
        zero_x=_fmt(x_of(0.0)) if low <= 0.0 <= high else _fmt(PLOT_LEFT if high < 0 else PLOT_RIGHT),
        plot_top=HEADER,
        plot_bottom=plot_bottom,
        plot_left=_fmt(PLOT_LEFT),
        plot_right=_fmt(PLOT_RIGHT),
        rows=rows,
        pooled=pooled,
        ticks=ticks,
    )


def direction(estimate):
    if estimate > 0:
        return 'for LEAVE'
    if estimate < 0:
        return 'for REMAIN'
    return 'for neither side'


def significance_marker(result):
    # a CI touching zero counts as containing it
    return '(NS)' if result.ci_contains_zero else '(*)'


def magnitude_cell(result):
    effect = chin_effect_size(result.estimate)
    return f'{effect.band.label} {direction(result.estimate)} {significance_marker(result)}'


def result_row(result):
    low, high = result.ci95
    effect = chin_effect_size(result.estimate)
    return {
        'Result': result.label or result.method.label,
        'Log-odds (95% c.i.)': f'{result.estimate:.3f} ({low:.3f}, {high:.3f})',
        'Odds of Leave': f'{odds_from_log_odds(result.estimate):.2f}',
        'Proportion of Leavers': f'{log_odds_to_proportion(result.estimate):.3f}',
        'Effect size': f'{effect.d:.3f}',
        'Magnitude': magnitude_cell(result),
    }


def _markdown(columns, rows):
    lines = ['| ' + ' | '.join(columns) + ' |', '|' + '|'.join('---' for _ in columns) + '|']
    for row in rows:
        lines.append('| ' + ' | '.join(str(row[c]) for c in columns) + ' |')
    return '\n'.join(lines) + '\n'


def _csv(columns, rows):
    buffer = io.StringIO()
    pd.DataFrame(rows, columns=list(columns)).to_csv(buffer, index=False, lineterminator='\n')
    return buffer.getvalue()


def render_results_table(results):
    """One row per result, in the published column layout. Returns (markdown, csv)."""
    if not results:
        raise RenderError('results table needs at least one result')
    rows = [result_row(result) for result in results]
    return _markdown(RESULT_COLUMNS, rows), _csv(RESULT_COLUMNS, rows)


def threshold_rows():
    return [{
        'Level of effect': row.level,
        "Effect size Cohen's d": f'{row.d:.2f}',
        'log-OR': f'{row.log_or:.4f}',
        'Odds Ratio OR': f'{row.odds_ratio:.4f}',
        'Proportion of leavers': f'{row.proportion:.3f}',
    } for row in generate_threshold_table()]


def render_threshold_table():
    return _markdown(THRESHOLD_COLUMNS, threshold_rows())


def render_threshold_table_csv():
    return _csv(THRESHOLD_COLUMNS, threshold_rows())


def format_p_value(p_value):
    return f'< {P_VALUE_FLOOR:g}' if p_value <= P_VALUE_FLOOR else f'{p_value:.3g}'


def summary_line(result):
    low, high = result.ci95
    effect = chin_effect_size(result.estimate)
    return (f'{result.label or result.method.label}: {result.estimate:.3f} '
            f'({low:.3f}, {high:.3f}) d={effect.d:.3f} {effect.band.label} '
            f'{direction(result.estimate)} {significance_marker(result)}')


def result_to_dict(result, regions=None):
    """JSON-ready dict. With `regions` (the pooled inputs) `forest` can redraw the plot."""
    het = result.het
    data = {
        'label': result.label,
        'method': result.method.value,
        'estimate': result.estimate,
        'se': result.se,
        'ci95': list(result.ci95),
        'weights': [[label, weight] for label, weight in result.weights],
        'het': {
            'q': het.q,
            'df': het.df,
            'i_squared': het.i_squared,
            'tau2': het.tau2,
            'p_value': het.p_value,
        },
    }
    if regions is not None:
        data['regions'] = [{'label': r.label, 'log_odds': r.log_odds, 'se': r.se}
                           for r in regions]
    return data


def regions_from_dict(data):
    try:
        return [RegionEstimate(str(r['label']), float(r['log_odds']), float(r['se']))
                for r in data['regions']]
    except KeyError:
        raise RenderError('result document carries no region inputs to plot')


def result_from_dict(data):
    try:
        het = data['het']
        return PooledResult(
            method=PoolingMethod.parse(data['method']),
            estimate=float(data['estimate']),
            se=float(data['se']),
            ci95=tuple(float(v) for v in data['ci95']),
            weights=tuple((str(label), float(weight)) for label, weight in data['weights']),
            het=HeterogeneityStats(q=float(het['q']), df=int(het['df']),
                                   i_squared=float(het['i_squared']), tau2=float(het['tau2']),
                                   p_value=float(het['p_value'])),
            label=data.get('label', ''),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise RenderError(f'not a pooled result document: {e}')


def to_json(data):
    return json.dumps(data, indent=2) + '\n'
