# config.py - Configuration settings
import os
from dotenv import load_dotenv

load_dotenv()

BASE_DIR = os.path.dirname(os.path.abspath(__file__))

class Config:
    MAX_CONTENT_LENGTH = 16 * 1024 * 1024

    # Paths
    DATA_DIR = os.getenv('REFERENDUM_DATA_DIR', os.path.join(BASE_DIR, 'data'))
    OUTPUT_DIR = os.getenv('REFERENDUM_OUTPUT_DIR', 'results')
    TEMPLATE_DIR = os.path.join(BASE_DIR, 'templates')

    # Bundled fixtures
    AREAS_FILE = 'brexit_2016_regions.csv'
    REFERENCE_FILE = 'brexit_2016_reference_totals.csv'
    ENGLAND_GROUPS_FILE = 'england_groups.csv'
    UK6_GROUPS_FILE = 'uk6_groups.csv'

    # Runtime
    LOG_LEVEL = os.getenv('REFERENDUM_LOG_LEVEL', 'WARNING')
    MAX_WORKERS = int(os.getenv('REFERENDUM_MAX_WORKERS', '4'))

    # Reconciliation
    TOTAL_LABEL = 'UK'

    @classmethod
    def data_path(cls, name):
        return os.path.join(cls.DATA_DIR, name)

config = Config
