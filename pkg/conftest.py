import os

import pytest

SLOW_TESTS_ENV: str = 'OPTEX_SLOW_TESTS'


def pytest_configure(config):
    config.addinivalue_line('markers', f'slow: long acceptance run, enabled by {SLOW_TESTS_ENV}=1')


def pytest_collection_modifyitems(config, items):
    if os.environ.get(SLOW_TESTS_ENV) == '1':
        return
    skip_slow = pytest.mark.skip(reason=f'set {SLOW_TESTS_ENV}=1 to run')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)
