# utils/effect_core.py - Proportion, odds, log-odds and Cohen-scale effect-size transforms
# Natural logs throughout. Chin: d = log-odds / 1.81.
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit, logit

from models.errors import DomainError
from utils.validation import validate_count, validate_finite, validate_proportion, validate_turnout

CHIN_DIVISOR = 1.81


class CohenBand(Enum):
    Negligible = 'Negligible'
    VerySmall = 'VerySmall'
    Small = 'Small'
    Medium = 'Medium'
    Large = 'Large'
    VeryLarge = 'VeryLarge'

    @property
    def label(self):
        return _BAND_LABELS[self]


_BAND_LABELS = {
    CohenBand.Negligible: 'Negligible',
    CohenBand.VerySmall: 'Very small',
    CohenBand.Small: 'Small',
    CohenBand.Medium: 'Medium',
    CohenBand.Large: 'Large',
    CohenBand.VeryLarge: 'Very large',
}

# Lower edge of each band on |d|; intervals are [edge, next edge).
BAND_EDGES = (
    (0.0, CohenBand.Negligible),
    (0.05, CohenBand.VerySmall),
    (0.10, CohenBand.Small),
    (0.20, CohenBand.Medium),
    (0.50, CohenBand.Large),
    (1.30, CohenBand.VeryLarge),
)

_QUARTER_NAMES = ('lowest', 'second', 'third', 'upper')

# The threshold table: (level of effect, d) in the published order.
THRESHOLD_LEVELS = (
    ('Negligible to Very small', 0.05),
    ('Small-low', 0.10),
    ('Small', 0.15),
    ('Small-Medium', 0.20),
    ('Medium-low', 0.21),
    ('Medium', 0.30),
    ('Medium', 0.35),
    ('Medium-large', 0.50),
    ('Large', 0.80),
    ('Large', 1.00),
    ('Very large', 1.30),
)


@dataclass(frozen=True)
class EffectSize:
    d: float
    band: CohenBand

    @property
    def descriptor(self):
        return band_descriptor(self.d)


@dataclass(frozen=True)
class ThresholdRow:
    level: str
    d: float
    log_or: float
    odds_ratio: float
    proportion: float


def classify_band(d):
    magnitude = abs(validate_finite(d, 'd'))
    band = CohenBand.Negligible
    for edge, candidate in BAND_EDGES:
        if magnitude >= edge:
            band = candidate
    return band


def band_descriptor(d):
    """Quartile of the enclosing band, e.g. 'upper quarter of the Small range'."""
    magnitude = abs(validate_finite(d, 'd'))
    band = classify_band(magnitude)
    if band is CohenBand.VeryLarge:
        return band.label
    edges = [edge for edge, _ in BAND_EDGES]
    index = [b for _, b in BAND_EDGES].index(band)
    low, high = edges[index], edges[index + 1]
    quarter = min(int((magnitude - low) / (high - low) * 4), 3)
    return f'{_QUARTER_NAMES[quarter]} quarter of the {band.label} range'


def proportion_to_log_odds(p):
    return float(logit(validate_proportion(p)))


def log_odds_to_proportion(log_odds):
    return float(expit(validate_finite(log_odds, 'log_odds')))


def odds_from_log_odds(log_odds):
    return math.exp(validate_finite(log_odds, 'log_odds'))


def log_odds_from_counts(n_leave, n_remain):
    """Log-odds of leave over remain with its binomial SE sqrt(1/a + 1/b)."""
    a = validate_count(n_leave, 'n_leave')
    b = validate_count(n_remain, 'n_remain')
    if a == 0 or b == 0:
        raise DomainError('log-odds undefined when a count is zero',
                          field='counts', n_leave=a, n_remain=b)
    return math.log(a / b), math.sqrt(1.0 / a + 1.0 / b)


def chin_effect_size(log_odds):
    d = validate_finite(log_odds, 'log_odds') / CHIN_DIVISOR
    return EffectSize(d=d, band=classify_band(d))


def effect_size_to_proportion(d):
    return float(expit(CHIN_DIVISOR * validate_finite(d, 'd')))


def generate_threshold_table():
    rows = []
    for level, d in THRESHOLD_LEVELS:
        log_or = CHIN_DIVISOR * d
        rows.append(ThresholdRow(level=level, d=d, log_or=log_or,
                              odds_ratio=float(np.exp(log_or)),
                              proportion=effect_size_to_proportion(d)))
    return rows


def required_split_for_eligible_majority(turnout):
    """Winning share of the votes cast at which winners exceed half the electorate."""
    return 0.5 / validate_turnout(turnout)


def eligible_share(split, turnout):
    split = validate_proportion(split, 'split', allow_one=True)
    turnout = validate_proportion(turnout, 'turnout', allow_one=True)
    return split * turnout
