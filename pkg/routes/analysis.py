# routes/analysis.py - Pooling, sensitivity and effect-size routes
from flask import Blueprint, Response, jsonify, request

from models.errors import DomainError
from models.records import PoolingMethod, RegionEstimate
from utils.effect_core import (
    chin_effect_size,
    eligible_share,
    log_odds_to_proportion,
    odds_from_log_odds,
    required_split_for_eligible_majority,
)
from utils.meta_engine import loo_q_sensitivity, naive_log_odds, pool
from utils.report import forest_spec_from_result, render_forest, result_to_dict, threshold_rows

analysis_bp = Blueprint('analysis', __name__)


def parse_regions(data):
    """Region list from a request body: counts or a (log_odds, se) pair per entry."""
    if not isinstance(data, dict) or not isinstance(data.get('regions'), list):
        raise DomainError('body must be a JSON object with a regions list', field='regions')
    regions = []
    for i, entry in enumerate(data['regions']):
        if not isinstance(entry, dict) or 'label' not in entry:
            raise DomainError(f'regions[{i}] needs a label', field='regions', index=i)
        try:
            if 'n_leave' in entry and 'n_remain' in entry:
                regions.append(RegionEstimate.from_counts(str(entry['label']),
                                                          entry['n_leave'], entry['n_remain']))
            elif 'log_odds' in entry and 'se' in entry:
                regions.append(RegionEstimate(str(entry['label']), float(entry['log_odds']),
                                              float(entry['se'])))
            else:
                raise DomainError(f'regions[{i}] needs n_leave/n_remain or log_odds/se',
                                  field='regions', index=i)
        except DomainError:
            raise
        except (TypeError, ValueError) as e:
            raise DomainError(f'regions[{i}]: {e}', field='regions', index=i)
    return regions


def _pooled(data):
    regions = parse_regions(data)
    method = PoolingMethod.parse(data.get('method', 'fe'))
    result = pool(regions, method)
    if data.get('label'):
        result = result.with_label(str(data['label']))
    return regions, result


@analysis_bp.route('/pool', methods=['POST'])
def pool_regions():
    regions, result = _pooled(request.get_json(silent=True))
    effect = chin_effect_size(result.estimate)
    body = result_to_dict(result)
    body['effect_size'] = {'d': effect.d, 'band': effect.band.value,
                           'descriptor': effect.descriptor}
    if all(r.has_counts for r in regions):
        naive, _ = naive_log_odds(regions)
        body['naive_log_odds'] = naive
    return jsonify(body)


@analysis_bp.route('/loo', methods=['POST'])
def leave_one_out():
    regions = parse_regions(request.get_json(silent=True))
    ranking = loo_q_sensitivity(regions)
    return jsonify({'ranking': [{'label': e.label, 'q_without': e.q_without, 'q_drop': e.q_drop}
                                for e in ranking]})


@analysis_bp.route('/effect-size', methods=['GET'])
def effect_size():
    log_odds = request.args.get('log_odds', type=float)
    if log_odds is None:
        return jsonify({'error': 'domain_error', 'message': 'log_odds query parameter is required'}), 400
    effect = chin_effect_size(log_odds)
    return jsonify({
        'log_odds': log_odds,
        'odds': odds_from_log_odds(log_odds),
        'proportion': log_odds_to_proportion(log_odds),
        'd': effect.d,
        'band': effect.band.value,
        'band_label': effect.band.label,
        'descriptor': effect.descriptor,
    })


@analysis_bp.route('/threshold', methods=['GET'])
def threshold():
    body = {'table': threshold_rows()}
    turnout = request.args.get('turnout', type=float)
    if turnout is not None:
        required = required_split_for_eligible_majority(turnout)
        body['turnout'] = turnout
        body['required_split'] = required
        body['eligible_share'] = eligible_share(required, turnout)
    return jsonify(body)


@analysis_bp.route('/forest', methods=['POST'])
def forest():
    data = request.get_json(silent=True)
    regions, result = _pooled(data)
    spec = forest_spec_from_result(result, regions, title=data.get('title'))
    return Response(render_forest(spec), mimetype='image/svg+xml')
