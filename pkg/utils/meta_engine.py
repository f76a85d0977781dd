# utils/meta_engine.py - FE, IVhet and DerSimonian-Laird pooling, heterogeneity, LOO and grouped pooling
import logging
import math

import numpy as np
from scipy.stats import chi2

from models.errors import PreconditionError
from models.records import (
    GroupedResult,
    HeterogeneityStats,
    LooEntry,
    PooledResult,
    PoolingMethod,
    RegionEstimate,
)
from utils.effect_core import log_odds_from_counts

logger = logging.getLogger(__name__)

Z_95 = 1.96
P_VALUE_FLOOR = 1e-300


def _arrays(regions):
    log_odds = np.array([r.log_odds for r in regions], dtype=float)
    variances = np.array([r.se for r in regions], dtype=float) ** 2
    return log_odds, variances


def _require(regions, minimum, operation):
    if len(regions) < minimum:
        if not regions:
            raise PreconditionError(f'{operation}: no regions given', k=0)
        raise PreconditionError(f'{operation} needs at least {minimum} regions, got {len(regions)}',
                                k=len(regions), minimum=minimum)


def _fixed_effect(log_odds, variances):
    w = 1.0 / variances
    return float(np.sum(w * log_odds) / np.sum(w)), w


def _q_statistic(log_odds, variances):
    pooled, w = _fixed_effect(log_odds, variances)
    return float(np.sum(w * (log_odds - pooled) ** 2))


def _dl_tau2(log_odds, variances):
    q = _q_statistic(log_odds, variances)
    w = 1.0 / variances
    c = np.sum(w) - np.sum(w ** 2) / np.sum(w)
    k = len(log_odds)
    return max(0.0, float((q - (k - 1)) / c)) if c > 0 else 0.0


def _result(method, regions, estimate, variance, raw_weights, het):
    se = math.sqrt(variance)
    normalized = raw_weights / np.sum(raw_weights)
    weights = tuple((r.label, float(w)) for r, w in zip(regions, normalized))
    return PooledResult(
        method=method,
        estimate=estimate,
        se=se,
        ci95=(estimate - Z_95 * se, estimate + Z_95 * se),
        weights=weights,
        het=het,
    )


def cochran_q(regions):
    """Cochran's Q around the FE estimate, with df, chi-square p, I^2 and DL tau^2."""
    _require(regions, 2, 'cochran_q')
    log_odds, variances = _arrays(regions)
    q = _q_statistic(log_odds, variances)
    df = len(regions) - 1
    i_squared = max(0.0, (q - df) / q) if q > 0 else 0.0
    p_value = max(float(chi2.sf(q, df)), P_VALUE_FLOOR)
    return HeterogeneityStats(q=q, df=df, i_squared=i_squared,
                              tau2=_dl_tau2(log_odds, variances), p_value=p_value)


def dl_tau2(regions):
    """DerSimonian-Laird moment estimate of the between-region variance, truncated at 0."""
    _require(regions, 2, 'dl_tau2')
    return _dl_tau2(*_arrays(regions))


def pool_fixed_iv(regions):
    _require(regions, 1, 'pool_fixed_iv')
    log_odds, variances = _arrays(regions)
    estimate, w = _fixed_effect(log_odds, variances)
    het = cochran_q(regions) if len(regions) > 1 else HeterogeneityStats.none()
    return _result(PoolingMethod.FixedIV, regions, estimate, 1.0 / float(np.sum(w)), w, het)


def pool_random_effects(regions):
    _require(regions, 2, 'pool_random_effects')
    log_odds, variances = _arrays(regions)
    het = cochran_q(regions)
    w_star = 1.0 / (variances + het.tau2)
    estimate = float(np.sum(w_star * log_odds) / np.sum(w_star))
    logger.debug('RE pool over %d regions: tau2=%.6g', len(regions), het.tau2)
    return _result(PoolingMethod.RandomEffectsDL, regions, estimate,
                   1.0 / float(np.sum(w_star)), w_star, het)


def pool_ivhet(regions):
    """FE point estimate; variance inflated by tau^2 under the FE weights."""
    _require(regions, 2, 'pool_ivhet')
    log_odds, variances = _arrays(regions)
    het = cochran_q(regions)
    estimate, w = _fixed_effect(log_odds, variances)
    w_hat = w / np.sum(w)
    variance = float(np.sum(w_hat ** 2 * (variances + het.tau2)))
    return _result(PoolingMethod.IVhet, regions, estimate, variance, w, het)


_POOLERS = {
    PoolingMethod.FixedIV: pool_fixed_iv,
    PoolingMethod.IVhet: pool_ivhet,
    PoolingMethod.RandomEffectsDL: pool_random_effects,
}


def pool(regions, method):
    return _POOLERS[PoolingMethod.parse(method)](regions)


def naive_log_odds(regions):
    """Head-count aggregate: log-odds of the summed counts, ignoring all structure."""
    _require(regions, 1, 'naive_log_odds')
    missing = [r.label for r in regions if not r.has_counts]
    if missing:
        raise PreconditionError('naive aggregate needs counts on every region', labels=missing)
    return log_odds_from_counts(sum(r.n_leave for r in regions), sum(r.n_remain for r in regions))


def loo_q_sensitivity(regions):
    """Q with each region left out, ordered by how much Q drops (largest first)."""
    _require(regions, 3, 'loo_q_sensitivity')
    log_odds, variances = _arrays(regions)
    q_full = _q_statistic(log_odds, variances)
    entries = []
    for i, region in enumerate(regions):
        keep = np.arange(len(regions)) != i
        q_without = _q_statistic(log_odds[keep], variances[keep])
        entries.append(LooEntry(region.label, q_without, q_full - q_without))
    # sorted() is stable, so ties keep input order
    return sorted(entries, key=lambda e: -e.q_drop)


def pool_grouped(regions, spec, within=PoolingMethod.RandomEffectsDL,
                 across=PoolingMethod.FixedIV):
    """Pool each group with `within`, then pool the group summaries with `across`.

    Singleton groups pass through unchanged. Group summaries carry no counts: their
    SE comes from the within-group pool.
    """
    within = PoolingMethod.parse(within)
    across = PoolingMethod.parse(across)
    _require(regions, 1, 'pool_grouped')
    spec.check_covers([r.label for r in regions])
    by_label = {r.label: r for r in regions}

    groups = []
    summaries = []
    for group_name, labels in spec.groups:
        members = [by_label[label] for label in labels]
        if len(members) == 1:
            result = pool_fixed_iv(members)
        else:
            result = pool(members, within)
        result = result.with_label(group_name)
        groups.append((group_name, result))
        summaries.append(RegionEstimate(group_name, result.estimate, result.se))
        logger.debug('group %s: %.4f (se %.4g)', group_name, result.estimate, result.se)

    overall = pool(summaries, across)
    return GroupedResult(overall=overall, groups=tuple(groups))
