# tests/test_referendum_data.py - Ingest, aggregation, reconciliation and grouping files
import pytest

from config import Config
from models.errors import DataParseError, DomainError, GroupingError, InvariantViolation
from models.records import COUNTRY_MAP, AreaRecord, GroupingSpec, RegionAggregate
from models.referendum import (
    AggregationLevel,
    aggregate,
    expand_check,
    ingest,
    load_grouping_spec,
    load_reference_totals,
    reconcile,
    regroup_aggregates,
    serialize,
)


def test_ingest_bundled_regions(records):
    assert len(records) == 13
    first = records[0]
    assert first.area == 'North East'
    assert first.region == 'NE'
    assert first.leave == 778103
    assert not first.has_reasons


def test_bundled_totals_match_declared_uk(records):
    assert sum(r.electorate for r in records) == 46500001
    assert sum(r.valid for r in records) == 33551983
    assert sum(r.leave for r in records) == 17410742
    assert sum(r.rejected for r in records) == 25359


def test_identity_violation_reports_row(write_areas):
    path = write_areas([
        'A,NE,100,80,0,80,50,30',
        'B,NE,100,80,0,80,50,29',
    ])
    with pytest.raises(InvariantViolation) as excinfo:
        ingest(path)
    assert excinfo.value.row == 2
    assert excinfo.value.identity == 'valid = leave + remain'
    assert excinfo.value.exit_code == 2


def test_votes_above_electorate_is_a_violation(write_areas):
    path = write_areas(['A,NE,70,80,0,80,50,30'])
    with pytest.raises(InvariantViolation) as excinfo:
        ingest(path)
    assert excinfo.value.identity == 'votes_cast <= electorate'


@pytest.mark.parametrize('row', [
    'A,Atlantis,100,80,0,80,50,30',
    'A,NE,100,80,0,80,-50,130',
    'A,NE,"1,000",80,0,80,50,30',
    'A,NE,100,80,0,80,50.5,29.5',
])
def test_malformed_rows_are_parse_errors(write_areas, row):
    with pytest.raises(DataParseError) as excinfo:
        ingest(write_areas([row]))
    assert excinfo.value.details['row'] == 1


def test_wrong_header_is_rejected(write_areas):
    path = write_areas(['A,NE,100,80,0,80,50,30'],
                       header='area,region,electorate,votes,rejected,valid,leave,remain\n')
    with pytest.raises(DataParseError):
        ingest(path)


def test_empty_file_is_rejected(tmp_path):
    path = tmp_path / 'empty.csv'
    path.write_text('', encoding='utf-8')
    with pytest.raises(DataParseError):
        ingest(str(path))


def test_non_utf8_file_is_a_parse_error(tmp_path):
    path = tmp_path / 'latin1.csv'
    path.write_bytes(b'area,region,electorate,votes_cast,rejected,valid,leave,remain\n'
                     b'Ynys M\xf4n,Wales,100,80,0,80,50,30\n')
    with pytest.raises(DataParseError) as excinfo:
        ingest(str(path))
    assert excinfo.value.exit_code == 2
    assert 'UTF-8' in excinfo.value.message
    with pytest.raises(DataParseError):
        load_reference_totals(str(path))


def test_reject_reasons_must_sum(write_areas):
    header = ('area,region,electorate,votes_cast,rejected,valid,leave,remain,'
              'no_official,dual_answer,scribbled,unmarked\n')
    good = write_areas(['A,NE,100,80,4,76,50,26,1,1,1,1'], name='good.csv', header=header)
    assert ingest(good)[0].has_reasons
    bad = write_areas(['A,NE,100,80,4,76,50,26,1,1,1,0'], name='bad.csv', header=header)
    with pytest.raises(InvariantViolation) as excinfo:
        ingest(bad)
    assert excinfo.value.identity == 'reject reasons sum = rejected'


def test_serialize_is_canonical(records, tmp_path):
    first = tmp_path / 'first.csv'
    second = tmp_path / 'second.csv'
    serialize(records, str(first))
    serialize(ingest(str(first)), str(second))
    assert first.read_bytes() == second.read_bytes()
    assert b'\r\n' not in first.read_bytes()
    assert first.read_text(encoding='utf-8').splitlines()[0] == (
        'area,region,electorate,votes_cast,rejected,valid,leave,remain')


def test_aggregate_regions_and_countries(records):
    regions = aggregate(records, AggregationLevel.Region13)
    assert [a.label for a in regions][:3] == ['NE', 'NW', 'Yorksh']
    countries = {a.label: a for a in aggregate(records, 'country5')}
    england = countries['England']
    assert england.electorate == 38957543
    assert england.valid == 28435257
    assert england.leave == 15187583
    assert england.remain == 13247674
    assert len(england.members) == 9
    assert england.estimate.log_odds == pytest.approx(0.1367, abs=1e-4)
    assert countries['Gibraltar'].turnout_rate == pytest.approx(20172 / 24119)


def test_aggregate_by_area_and_by_grouping(records):
    areas = aggregate(records, AggregationLevel.Area)
    assert areas[0].label == 'North East'
    spec = GroupingSpec.from_mapping(COUNTRY_MAP, name='countries')
    by_spec = aggregate(records, spec)
    by_level = aggregate(records, AggregationLevel.Country5)
    assert {a.label: a.valid for a in by_spec} == {a.label: a.valid for a in by_level}


def test_regroup_aggregates_sums_counts(records):
    regions = aggregate(records, AggregationLevel.Region13)
    countries = regroup_aggregates(regions, COUNTRY_MAP)
    assert {a.label: a.leave for a in countries}['England'] == 15187583
    with pytest.raises(GroupingError):
        regroup_aggregates(regions, {'NE': 'England'})


def test_zero_count_unit_aggregates_but_has_no_estimate(write_areas, write_references):
    records = ingest(write_areas(['A,NE,100,80,0,80,80,0', 'B,NW,100,80,0,80,40,40']))
    aggregates = aggregate(records)
    assert [a.label for a in aggregates] == ['NE', 'NW']
    assert aggregates[0].remain == 0
    assert aggregates[0].p_leave == 1.0
    references = load_reference_totals(write_references(['UK,200,160,0,160,120,40']))
    assert reconcile(aggregates, references).passed
    assert aggregates[1].estimate.log_odds == 0.0
    with pytest.raises(DomainError):
        aggregates[0].estimate


def test_empty_unit_has_no_leave_share_or_turnout():
    empty = RegionAggregate('X', 0, 0, 0, 0, 0, 0)
    with pytest.raises(DomainError):
        empty.p_leave
    with pytest.raises(DomainError):
        empty.turnout_rate


def test_reconcile_bundled_totals_pass(records):
    references = load_reference_totals(Config.data_path(Config.REFERENCE_FILE))
    report = reconcile(aggregate(records, AggregationLevel.Country5), references)
    assert report.passed
    entries = dict(report.entries)
    assert entries['UK']['valid'].expected == 33551983
    assert entries['UK']['reject_reasons_sum'].passed
    assert report.to_dict()['pass'] is True


def test_reconcile_flags_mismatched_field(records, tmp_path):
    path = tmp_path / 'reference.csv'
    path.write_text('label,electorate,votes_cast,rejected,valid,leave,remain\n'
                    'UK,46500001,33577342,25359,33551983,17410741,16141241\n'
                    'Narnia,1,1,0,1,1,0\n', encoding='utf-8')
    report = reconcile(aggregate(records, AggregationLevel.Country5),
                       load_reference_totals(str(path)))
    assert not report.passed
    assert ('UK', 'leave') in report.failures()
    assert ('UK', 'valid') not in report.failures()
    assert ('Narnia', 'electorate') in report.failures()


def test_expand_check_agrees_with_formula(records):
    se_formula, se_expanded = expand_check(records, 'Gibraltar')
    assert se_formula == pytest.approx(0.03559, abs=1e-5)
    assert se_expanded == pytest.approx(se_formula, rel=1e-9)


def test_load_grouping_spec(tmp_path):
    spec = load_grouping_spec(Config.data_path(Config.ENGLAND_GROUPS_FILE))
    assert spec.group_names == ('Yorksh-Midlands-E-NE', 'NW-SE-SW', 'London')
    assert spec.group_of('SW') == 'NW-SE-SW'
    duplicate = tmp_path / 'dup.csv'
    duplicate.write_text('group,label\ng1,NE\ng2,NE\n', encoding='utf-8')
    with pytest.raises(GroupingError):
        load_grouping_spec(str(duplicate))


def test_area_record_rejects_unknown_region():
    with pytest.raises(DomainError):
        AreaRecord('A', 'Mars', 10, 8, 0, 8, 4, 4)


def test_moved_vote_passes_at_region_level_and_fails_at_area_level(
        moved_vote_areas, region_references, area_references):
    records = ingest(moved_vote_areas)
    by_region = reconcile(aggregate(records, AggregationLevel.Region13),
                          load_reference_totals(region_references))
    assert by_region.passed
    by_area = reconcile(aggregate(records, AggregationLevel.Area),
                        load_reference_totals(area_references))
    assert not by_area.passed
    assert sorted(by_area.failures()) == [
        ('Alpha', 'leave'), ('Alpha', 'valid'), ('Alpha', 'votes_cast'),
        ('Beta', 'leave'), ('Beta', 'valid'), ('Beta', 'votes_cast'),
    ]


def test_unmoved_areas_reconcile_at_both_levels(multi_areas, region_references, area_references):
    records = ingest(multi_areas)
    assert reconcile(aggregate(records, 'region13'), load_reference_totals(region_references)).passed
    assert reconcile(aggregate(records, 'area'), load_reference_totals(area_references)).passed


@pytest.mark.parametrize('level', [AggregationLevel.Region13, AggregationLevel.Country5])
def test_aggregate_leave_share_lies_between_members(multi_areas, records, level):
    for source in (ingest(multi_areas), records):
        labels = [r.region if level is AggregationLevel.Region13 else COUNTRY_MAP[r.region]
                  for r in source]
        for agg in aggregate(source, level):
            shares = [r.p_leave for r, label in zip(source, labels) if label == agg.label]
            assert min(shares) <= agg.p_leave <= max(shares)
