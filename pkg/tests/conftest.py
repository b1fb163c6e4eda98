import sys
from pathlib import Path

import pytest

from dydq.data import partition_leave_one_out
from dydq.embeddings import EmbeddingStore, baseline_embed
from dydq.synthetic import ProceduralImageSource, demo_dataset

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def demo():
    return demo_dataset()


@pytest.fixture(scope="session")
def demo_split(demo):
    return partition_leave_one_out(demo, mode="paper_text", seed=0, val_user_fraction=0.10)


@pytest.fixture(scope="session")
def demo_store(demo):
    source = ProceduralImageSource(seed=0, size=32)
    store = EmbeddingStore(dim=48)
    for image_id in demo.all_images:
        store.add(image_id, baseline_embed(source(image_id)))
    return store


@pytest.fixture()
def fixture_tsv():
    return FIXTURES / "reviews_50.tsv"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One line per acceptance criterion at the end of the run."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            name = getattr(report, "location", ("", 0, ""))[2]
            if "test_acceptance" in report.nodeid and name.startswith("test_criterion"):
                label = name.removeprefix("test_").replace("_", " ")
                verdict = "PASS" if outcome == "passed" else "FAIL"
                lines.append((name, f"{label}: {verdict}"))
    if lines:
        print("\nacceptance summary", file=sys.stderr)
        for _, line in sorted(lines):
            print("  " + line, file=sys.stderr)
