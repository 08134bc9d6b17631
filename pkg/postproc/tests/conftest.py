import sys

import pytest

from plot_fixtures import SCRIPTS_DIR, sample_rows, series_text

sys.path.insert(0, SCRIPTS_DIR)


@pytest.fixture
def csv_pair(tmp_path):
    a = tmp_path / "ddfv.csv"
    b = tmp_path / "hfv.csv"
    a.write_text(series_text(sample_rows()))
    b.write_text(series_text(sample_rows(rate=2.2)))
    return a, b
