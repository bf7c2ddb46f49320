import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ecgrecon.preprocess import preprocess_record
from ecgrecon.synth import SynthConfig, synth_generate

settings.register_profile("ecgrecon", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ecgrecon")


@pytest.fixture(scope="session")
def raw_corpus():
    """Eight 10 s synthetic records at 500 Hz with their ground truth."""
    return synth_generate(SynthConfig(num_records=8, seed=3))


@pytest.fixture(scope="session")
def working_records(raw_corpus):
    """The same records preprocessed to 12 x 512."""
    return [preprocess_record(r) for r in raw_corpus[0]]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """Repeat the one-line verdict of every acceptance criterion at the end."""
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if getattr(rep, "when", "call") != "call":
                continue
            lines.extend(v for k, v in getattr(rep, "user_properties", ()) if k == "acceptance")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
