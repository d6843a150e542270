import pytest

from torsim import inetmap, staging

FIXTURES = __import__("pathlib").Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def staged_model():
    return staging.stage(
        staging.load_snapshots(FIXTURES / "snapshots.jsonl"),
        staging.load_descriptors(FIXTURES / "descriptors.jsonl"),
        staging.load_user_counts(FIXTURES / "users.jsonl"),
    )


@pytest.fixture(scope="session")
def internet_map():
    return inetmap.load_map(FIXTURES / "map.graphml")
