import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from texrnet.synthdata import generate_split, preset  # noqa: E402


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """A few easy samples per split, shared across tests (read-only)."""
    root = tmp_path_factory.mktemp("synth_small")
    cfg = preset("easy", seed=3)
    generate_split(cfg, 12, root, "train")
    generate_split(cfg, 4, root, "val")
    generate_split(cfg, 5, root, "test")
    return root


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
