# tests/conftest.py - Shared fixtures
import pytest
from click.testing import CliRunner

from app import create_app
from config import Config
from models.records import ENGLISH_REGIONS
from models.referendum import AggregationLevel, aggregate, ingest


@pytest.fixture(scope='session')
def areas_path():
    return Config.data_path(Config.AREAS_FILE)


@pytest.fixture(scope='session')
def records(areas_path):
    return ingest(areas_path)


@pytest.fixture(scope='session')
def regions13(records):
    return [agg.estimate for agg in aggregate(records, AggregationLevel.Region13)]


@pytest.fixture(scope='session')
def england9(regions13):
    return [r for r in regions13 if r.label in ENGLISH_REGIONS]


@pytest.fixture(scope='session')
def countries5(records):
    return [agg.estimate for agg in aggregate(records, AggregationLevel.Country5)]


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def client():
    app = create_app()
    app.config['TESTING'] = True
    return app.test_client()


HEADER = 'area,region,electorate,votes_cast,rejected,valid,leave,remain\n'


@pytest.fixture
def write_areas(tmp_path):
    """Write area rows (without header) to a CSV and return its path."""
    def _write(rows, name='areas.csv', header=HEADER):
        path = tmp_path / name
        path.write_text(header + ''.join(row + '\n' for row in rows), encoding='utf-8')
        return str(path)
    return _write


# Six areas over three regions; region totals NE 1100/1093, NW 1350/1146, Scotland 800/1196.
MULTI_AREA_ROWS = (
    'Alpha,NE,1000,700,2,698,400,298',
    'Beta,NE,2000,1500,5,1495,700,795',
    'Gamma,NW,1500,1000,0,1000,550,450',
    'Delta,NW,800,600,1,599,300,299',
    'Epsilon,NW,1200,900,3,897,500,397',
    'Zeta,Scotland,3000,2000,4,1996,800,1196',
)

# One leave vote and its ballot moved from Alpha to Beta: region totals are unchanged.
MOVED_VOTE_ROWS = (
    'Alpha,NE,1000,699,2,697,399,298',
    'Beta,NE,2000,1501,5,1496,701,795',
) + MULTI_AREA_ROWS[2:]

REFERENCE_HEADER = 'label,electorate,votes_cast,rejected,valid,leave,remain\n'


@pytest.fixture
def multi_areas(write_areas):
    return write_areas(list(MULTI_AREA_ROWS), name='multi.csv')


@pytest.fixture
def write_references(tmp_path):
    """Write declared-total rows (without header) to a CSV and return its path."""
    def _write(rows, name='references.csv'):
        path = tmp_path / name
        path.write_text(REFERENCE_HEADER + ''.join(row + '\n' for row in rows), encoding='utf-8')
        return str(path)
    return _write


@pytest.fixture
def area_references(write_references):
    """Declared totals per area, taken from the unmoved rows."""
    rows = []
    for row in MULTI_AREA_ROWS:
        area, _, *counts = row.split(',')
        rows.append(','.join([area] + counts))
    return write_references(rows, name='area_references.csv')


@pytest.fixture
def region_references(write_references):
    return write_references([
        'NE,3000,2200,7,2193,1100,1093',
        'NW,3500,2500,4,2496,1350,1146',
        'Scotland,3000,2000,4,1996,800,1196',
        'UK,9500,6700,15,6685,3250,3435',
    ], name='region_references.csv')


@pytest.fixture
def moved_vote_areas(write_areas):
    return write_areas(list(MOVED_VOTE_ROWS), name='moved.csv')
