# models/referendum.py - Ingest, aggregate and reconcile area-level referendum results
import json
import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd

from models.errors import DataParseError, DomainError, GroupingError, InvariantViolation, PreconditionError
from models.records import (
    COUNT_FIELDS,
    COUNTRY_CODES,
    COUNTRY_MAP,
    REASON_FIELDS,
    REGION_CODES,
    AreaRecord,
    GroupingSpec,
    ReferenceTotals,
    RegionAggregate,
)
from utils.validation import validate_count

logger = logging.getLogger(__name__)

AREA_COLUMNS = ('area', 'region') + COUNT_FIELDS
REFERENCE_COLUMNS = ('label',) + COUNT_FIELDS
RECONCILE_FIELDS = ('electorate', 'votes_cast', 'rejected', 'valid', 'leave', 'remain')


class AggregationLevel(Enum):
    Region13 = 'region13'
    Country5 = 'country5'
    Area = 'area'


def _read_csv(path):
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.EmptyDataError:
        raise DataParseError(f'{path}: file is empty', path=str(path))
    except pd.errors.ParserError as e:
        raise DataParseError(f'{path}: {e}', path=str(path))
    except UnicodeDecodeError as e:
        raise DataParseError(f'{path}: not valid UTF-8 ({e.reason} at byte {e.start})',
                             path=str(path))
    except ValueError as e:
        raise DataParseError(f'{path}: {e}', path=str(path))
    if frame.empty:
        raise DataParseError(f'{path}: no data rows', path=str(path))
    return frame


def _check_header(frame, required, optional, path):
    columns = tuple(frame.columns)
    if columns[:len(required)] != required:
        raise DataParseError(f'{path}: header must start with {",".join(required)}',
                             path=str(path), header=list(columns))
    extra = columns[len(required):]
    if extra and extra != optional:
        raise DataParseError(f'{path}: optional columns must be {",".join(optional)}',
                             path=str(path), header=list(columns))
    return bool(extra)


def _optional_count(value, name):
    if value == '':
        return None
    return validate_count(value, name)


def ingest(path):
    """Read an area-level CSV into AreaRecords, checking every row's identities.

    Row numbers in errors are 1-based data rows (the header is row 0).
    """
    frame = _read_csv(path)
    has_reasons = _check_header(frame, AREA_COLUMNS, REASON_FIELDS, path)

    records = []
    for row_number, row in enumerate(frame.itertuples(index=False), start=1):
        values = row._asdict()
        try:
            counts = {name: validate_count(values[name], name) for name in COUNT_FIELDS}
            reasons = {}
            if has_reasons:
                reasons = {name: _optional_count(values[name], name) for name in REASON_FIELDS}
            region = values['region'].strip()
            if region not in REGION_CODES:
                raise DataParseError(f'row {row_number}: unknown region code {region!r}',
                                     row=row_number, region=region)
            records.append(AreaRecord(area=values['area'], region=region, **counts, **reasons))
        except InvariantViolation as e:
            raise InvariantViolation(f'row {row_number} ({values["area"]}): {e.identity} violated',
                                     row=row_number, identity=e.identity, area=values['area'])
        except DomainError as e:
            raise DataParseError(f'row {row_number}: {e.message}', row=row_number,
                                 field=e.details.get('field'))

    logger.info('ingested %d area records from %s', len(records), path)
    return records


def serialize(records, path):
    """Write records in canonical form: fixed column order, LF line endings."""
    columns = list(AREA_COLUMNS)
    if any(record.has_reasons for record in records):
        columns += list(REASON_FIELDS)
    rows = []
    for record in records:
        row = []
        for name in columns:
            value = getattr(record, name)
            row.append('' if value is None else str(value))
        rows.append(row)
    frame = pd.DataFrame(rows, columns=columns)
    frame.to_csv(path, index=False, lineterminator='\n', encoding='utf-8')


def _group_labels(records, level):
    if isinstance(level, GroupingSpec):
        return [level.group_of(record.region) for record in records], list(level.group_names)
    level = AggregationLevel(level)
    if level is AggregationLevel.Region13:
        return [record.region for record in records], list(REGION_CODES)
    if level is AggregationLevel.Country5:
        return [COUNTRY_MAP[record.region] for record in records], list(COUNTRY_CODES)
    names = [record.area for record in records]
    if len(set(names)) != len(names):
        raise PreconditionError('area-level aggregation needs unique area names')
    return names, names


def aggregate(records, level=AggregationLevel.Region13):
    """Sum counts per unit of the chosen level (Region13, Country5, Area or a GroupingSpec)."""
    if not records:
        raise PreconditionError('aggregate: no records given')
    labels, order = _group_labels(records, level)

    frame = pd.DataFrame([record.counts() for record in records])
    frame['unit'] = labels
    frame['member'] = [record.region for record in records]
    sums = frame.groupby('unit', sort=False)[list(COUNT_FIELDS)].sum()

    aggregates = []
    for unit in order:
        if unit not in sums.index:
            continue
        members = tuple(dict.fromkeys(frame.loc[frame['unit'] == unit, 'member']))
        unit_records = [r for r, label in zip(records, labels) if label == unit]
        reasons = None
        if all(r.has_reasons for r in unit_records):
            reasons = tuple(sum(getattr(r, n) for r in unit_records) for n in REASON_FIELDS)
        counts = {name: int(sums.at[unit, name]) for name in COUNT_FIELDS}
        aggregates.append(RegionAggregate(label=unit, members=members, reasons=reasons, **counts))
    return aggregates


def regroup_aggregates(aggregates, mapping):
    """Further aggregate RegionAggregates by a {label: new label} mapping (e.g. COUNTRY_MAP)."""
    totals = {}
    for agg in aggregates:
        key = mapping.get(agg.label)
        if key is None:
            raise GroupingError(f'label {agg.label!r} has no target in the mapping', label=agg.label)
        current = totals.setdefault(key, dict.fromkeys(COUNT_FIELDS, 0))
        for name in COUNT_FIELDS:
            current[name] += getattr(agg, name)
    return [RegionAggregate(label=label, **counts) for label, counts in totals.items()]


def load_reference_totals(path):
    frame = _read_csv(path)
    has_reasons = _check_header(frame, REFERENCE_COLUMNS, REASON_FIELDS, path)
    references = []
    for row_number, row in enumerate(frame.itertuples(index=False), start=1):
        values = row._asdict()
        try:
            counts = {name: validate_count(values[name], name) for name in COUNT_FIELDS}
            reasons = None
            if has_reasons:
                parsed = {name: _optional_count(values[name], name) for name in REASON_FIELDS}
                if all(v is not None for v in parsed.values()):
                    reasons = parsed
        except DomainError as e:
            raise DataParseError(f'{path} row {row_number}: {e.message}', row=row_number)
        references.append(ReferenceTotals(label=values['label'], reasons=reasons, **counts))
    return references


def load_grouping_spec(path, name=None):
    """Grouping CSV with columns group,label; group order follows first appearance."""
    frame = _read_csv(path)
    if tuple(frame.columns) != ('group', 'label'):
        raise DataParseError(f'{path}: grouping header must be group,label', path=str(path))
    mapping = {}
    for row_number, (group, label) in enumerate(frame.itertuples(index=False), start=1):
        if label in mapping:
            raise GroupingError(f'{path} row {row_number}: label {label!r} assigned twice',
                                label=label)
        mapping[label] = group
    return GroupingSpec.from_mapping(mapping, name=name or str(path))


@dataclass(frozen=True)
class FieldCheck:
    expected: int
    observed: object
    passed: bool

    def to_dict(self):
        return {'expected': self.expected, 'observed': self.observed, 'pass': self.passed}


@dataclass(frozen=True)
class ReconciliationReport:
    entries: tuple  # ((label, {field: FieldCheck}), ...)

    @property
    def passed(self):
        return all(check.passed for _, checks in self.entries for check in checks.values())

    def failures(self):
        return [(label, name) for label, checks in self.entries
                for name, check in checks.items() if not check.passed]

    def to_dict(self):
        return {
            'pass': self.passed,
            'entries': {label: {name: check.to_dict() for name, check in checks.items()}
                        for label, checks in self.entries},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def reconcile(aggregates, declared, total_label='UK'):
    """Compare aggregates with declared totals field by field.

    A declared row labelled `total_label` is checked against the grand total;
    other declared rows against the aggregate with the same label. Declared
    reject reasons must add up to the declared rejected count.
    """
    observed = {agg.label: agg for agg in aggregates}
    grand = {name: sum(getattr(agg, name) for agg in aggregates) for name in COUNT_FIELDS}
    grand_reasons = None
    if aggregates and all(agg.reasons is not None for agg in aggregates):
        grand_reasons = tuple(sum(agg.reasons[i] for agg in aggregates)
                              for i in range(len(REASON_FIELDS)))

    entries = []
    for ref in declared:
        if ref.label == total_label:
            counts, reasons = grand, grand_reasons
        elif ref.label in observed:
            agg = observed[ref.label]
            counts, reasons = agg.counts(), agg.reasons
        else:
            counts, reasons = None, None

        checks = {}
        for name in RECONCILE_FIELDS:
            expected = getattr(ref, name)
            value = counts[name] if counts is not None else None
            checks[name] = FieldCheck(expected, value, value == expected)
        if ref.reasons is not None:
            reason_sum = sum(ref.reasons.values())
            checks['reject_reasons_sum'] = FieldCheck(ref.rejected, reason_sum,
                                                      reason_sum == ref.rejected)
            if reasons is not None:
                for name, value in zip(REASON_FIELDS, reasons):
                    checks[name] = FieldCheck(ref.reasons[name], value, value == ref.reasons[name])
        entries.append((ref.label, checks))

    report = ReconciliationReport(tuple(entries))
    for label, name in report.failures():
        logger.warning('reconciliation mismatch: %s.%s', label, name)
    return report


def expand_check(records, region):
    """Recompute a region's log-odds SE from literal respondent-level 0/1 data.

    Returns (binomial formula SE, expanded-data SE); the two agree to rounding.
    """
    members = [r for r in records if r.region == region]
    if not members:
        raise PreconditionError(f'no records for region {region!r}', region=region)
    leave = sum(r.leave for r in members)
    remain = sum(r.remain for r in members)
    votes = np.concatenate([np.ones(leave, dtype=np.int8), np.zeros(remain, dtype=np.int8)])
    n = votes.size
    p_hat = votes.mean(dtype=np.float64)
    # delta method: var(logit p) = var(p) / (p(1-p))^2
    se_expanded = math.sqrt(p_hat * (1 - p_hat) / n) / (p_hat * (1 - p_hat))
    se_formula = math.sqrt(1.0 / leave + 1.0 / remain)
    return se_formula, float(se_expanded)
