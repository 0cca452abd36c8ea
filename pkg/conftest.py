import json

import pytest

import main
from models import MapParams


@pytest.fixture
def collatz_3_1():
    return MapParams(3, 1)


@pytest.fixture
def collatz_5_1():
    return MapParams(5, 1)


@pytest.fixture
def cli(capsys):
    """Run the CLI in-process; returns (exit code, parsed json records, stderr)."""

    def invoke(*argv):
        code = main.run(list(argv))
        captured = capsys.readouterr()
        records = [json.loads(line) for line in captured.out.splitlines() if line.startswith("{")]
        return code, records, captured.err

    return invoke
