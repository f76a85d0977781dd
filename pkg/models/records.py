# models/records.py - Domain records: areas, region aggregates, pooling inputs and outputs
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from models.errors import DomainError, GroupingError, InvariantViolation
from utils.effect_core import log_odds_from_counts

# Closed-world region codes, in the order the results tables list them.
REGION_CODES = (
    'NE', 'NW', 'Yorksh', 'EMid', 'WMid', 'East', 'London', 'SE', 'SW',
    'Gibraltar', 'NIreland', 'Scotland', 'Wales',
)
ENGLISH_REGIONS = REGION_CODES[:9]
COUNTRY_CODES = ('England', 'Gibraltar', 'NIreland', 'Scotland', 'Wales')
COUNTRY_MAP = {code: ('England' if code in ENGLISH_REGIONS else code) for code in REGION_CODES}

COUNT_FIELDS = ('electorate', 'votes_cast', 'rejected', 'valid', 'leave', 'remain')
REASON_FIELDS = ('no_official', 'dual_answer', 'scribbled', 'unmarked')


def _leave_share(label, leave, valid):
    if valid == 0:
        raise DomainError(f'{label}: leave share undefined with no valid votes', field='valid')
    return leave / valid


CONSISTENCY_TOL = 1e-9


class PoolingMethod(Enum):
    FixedIV = 'fe'
    IVhet = 'ivhet'
    RandomEffectsDL = 're'

    @property
    def label(self):
        return {
            'fe': 'Fixed effects (IV)',
            'ivhet': 'IVhet',
            're': 'Random effects (DL)',
        }[self.value]

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        text = str(value).strip()
        for method in cls:
            if text.lower() in (method.value, method.name.lower()):
                return method
        raise DomainError(f'unknown pooling method {value!r}', field='method',
                          allowed=[m.value for m in cls])


@dataclass(frozen=True)
class AreaRecord:
    area: str
    region: str
    electorate: int
    votes_cast: int
    rejected: int
    valid: int
    leave: int
    remain: int
    no_official: Optional[int] = None
    dual_answer: Optional[int] = None
    scribbled: Optional[int] = None
    unmarked: Optional[int] = None

    def __post_init__(self):
        if self.region not in REGION_CODES:
            raise DomainError(f'unknown region code {self.region!r}', field='region',
                              allowed=list(REGION_CODES))
        for name in COUNT_FIELDS:
            if getattr(self, name) < 0:
                raise InvariantViolation(f'{self.area}: {name} is negative', identity='non_negative')
        failed = self.failed_identity()
        if failed:
            raise InvariantViolation(f'{self.area}: identity {failed} does not hold', identity=failed)

    @property
    def has_reasons(self):
        return all(getattr(self, name) is not None for name in REASON_FIELDS)

    @property
    def p_leave(self):
        return _leave_share(self.area, self.leave, self.valid)

    def failed_identity(self):
        if self.valid != self.leave + self.remain:
            return 'valid = leave + remain'
        if self.votes_cast != self.valid + self.rejected:
            return 'votes_cast = valid + rejected'
        if self.votes_cast > self.electorate:
            return 'votes_cast <= electorate'
        if self.has_reasons and sum(getattr(self, n) for n in REASON_FIELDS) != self.rejected:
            return 'reject reasons sum = rejected'
        return None

    def counts(self):
        return {name: getattr(self, name) for name in COUNT_FIELDS}


@dataclass(frozen=True)
class RegionEstimate:
    """A pooling input. Counts are optional when log-odds and SE are given directly."""

    label: str
    log_odds: float
    se: float
    n_leave: Optional[int] = None
    n_remain: Optional[int] = None

    def __post_init__(self):
        if not math.isfinite(self.log_odds):
            raise DomainError(f'{self.label}: log-odds must be finite', field='log_odds')
        if not (math.isfinite(self.se) and self.se > 0):
            raise DomainError(f'{self.label}: se must be positive', field='se', value=self.se)
        if self.n_leave is not None and self.n_remain is not None:
            expected, expected_se = log_odds_from_counts(self.n_leave, self.n_remain)
            if (abs(expected - self.log_odds) > CONSISTENCY_TOL
                    or abs(expected_se - self.se) > CONSISTENCY_TOL):
                raise InvariantViolation(
                    f'{self.label}: log-odds/se disagree with counts', identity='estimate = counts')

    @classmethod
    def from_counts(cls, label, n_leave, n_remain):
        log_odds, se = log_odds_from_counts(n_leave, n_remain)
        return cls(label, log_odds, se, int(n_leave), int(n_remain))

    @property
    def variance(self):
        return self.se ** 2

    @property
    def has_counts(self):
        return self.n_leave is not None and self.n_remain is not None


@dataclass(frozen=True)
class HeterogeneityStats:
    q: float
    df: int
    i_squared: float
    tau2: float
    p_value: float

    @classmethod
    def none(cls):
        """Placeholder for a single-input pool, where heterogeneity is undefined."""
        return cls(q=0.0, df=0, i_squared=0.0, tau2=0.0, p_value=1.0)


@dataclass(frozen=True)
class PooledResult:
    method: PoolingMethod
    estimate: float
    se: float
    ci95: tuple
    weights: tuple
    het: HeterogeneityStats
    label: str = ''

    @property
    def ci_contains_zero(self):
        low, high = self.ci95
        return low <= 0.0 <= high

    def weight_of(self, label):
        for name, weight in self.weights:
            if name == label:
                return weight
        raise KeyError(label)

    def with_label(self, label):
        return PooledResult(self.method, self.estimate, self.se, self.ci95,
                            self.weights, self.het, label)


@dataclass(frozen=True)
class GroupedResult:
    overall: PooledResult
    groups: tuple  # ((group name, PooledResult), ...)

    def group(self, name):
        for group_name, result in self.groups:
            if group_name == name:
                return result
        raise KeyError(name)


@dataclass(frozen=True)
class LooEntry:
    label: str
    q_without: float
    q_drop: float


@dataclass(frozen=True)
class GroupingSpec:
    """A named partition of unit labels: ((group name, (label, ...)), ...)."""

    groups: tuple
    name: str = 'custom'

    def __post_init__(self):
        seen = {}
        for group_name, labels in self.groups:
            if not labels:
                raise GroupingError(f'group {group_name!r} is empty', label=group_name)
            for label in labels:
                if label in seen:
                    raise GroupingError(
                        f'label {label!r} appears in both {seen[label]!r} and {group_name!r}',
                        label=label)
                seen[label] = group_name

    @classmethod
    def from_mapping(cls, mapping, name='custom'):
        """Build from {label: group}; group order follows first appearance."""
        ordered = {}
        for label, group_name in mapping.items():
            ordered.setdefault(group_name, []).append(label)
        return cls(tuple((g, tuple(labels)) for g, labels in ordered.items()), name)

    @classmethod
    def singletons(cls, labels):
        return cls(tuple((label, (label,)) for label in labels), 'singletons')

    @property
    def labels(self):
        return tuple(label for _, labels in self.groups for label in labels)

    @property
    def group_names(self):
        return tuple(name for name, _ in self.groups)

    def group_of(self, label):
        for group_name, labels in self.groups:
            if label in labels:
                return group_name
        raise GroupingError(f'label {label!r} is missing from grouping {self.name!r}', label=label)

    def check_covers(self, labels):
        """Every label must be grouped, and every grouped label must be present."""
        present = set(labels)
        for label in labels:
            self.group_of(label)
        for label in self.labels:
            if label not in present:
                raise GroupingError(
                    f'grouping {self.name!r} names unknown label {label!r}', label=label)

    def restricted_to(self, labels):
        """Drop labels not in `labels`, and any group left empty."""
        keep = set(labels)
        groups = tuple((g, tuple(l for l in members if l in keep)) for g, members in self.groups)
        return GroupingSpec(tuple((g, m) for g, m in groups if m), self.name)


@dataclass(frozen=True)
class RegionAggregate:
    label: str
    electorate: int
    votes_cast: int
    rejected: int
    valid: int
    leave: int
    remain: int
    members: tuple = ()
    reasons: Optional[tuple] = None

    @property
    def turnout_rate(self):
        if self.electorate == 0:
            raise DomainError(f'{self.label}: turnout undefined for an empty electorate',
                              field='electorate')
        return self.votes_cast / self.electorate

    @property
    def p_leave(self):
        return _leave_share(self.label, self.leave, self.valid)

    # Zero leave or remain counts aggregate fine; only the log-odds view rejects them.
    @property
    def estimate(self):
        return RegionEstimate.from_counts(self.label, self.leave, self.remain)

    def counts(self):
        return {name: getattr(self, name) for name in COUNT_FIELDS}


@dataclass(frozen=True)
class ReferenceTotals:
    label: str
    electorate: int
    votes_cast: int
    rejected: int
    valid: int
    leave: int
    remain: int
    reasons: Optional[dict] = field(default=None)

    def counts(self):
        return {name: getattr(self, name) for name in COUNT_FIELDS}
