import sys
from pathlib import Path

import pytest
from hypothesis import settings

from corpus_forge.audio import write_pcm

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile("default", deadline=None)
settings.load_profile("default")


def make_wav(path, num_frames, sample_rate_hz=16000, channels=1, bits_per_sample=16, fill=None):
    """Write a PCM file whose payload bytes are a recognizable pattern."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    width = (bits_per_sample + 7) // 8
    size = num_frames * channels * width
    if fill is None:
        seed = sum(path.name.encode())
        payload = bytes((seed + i) % 256 for i in range(size))
    else:
        payload = bytes([fill]) * size
    write_pcm(path, payload, sample_rate_hz, channels, bits_per_sample)
    return path


@pytest.fixture
def wav_factory(tmp_path):
    def factory(name, num_frames, **kwargs):
        return make_wav(tmp_path / name, num_frames, **kwargs)

    return factory


_acceptance = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _acceptance.append((report.nodeid.split("::")[-1], status))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in _acceptance:
        terminalreporter.write_line(f"{status:4}  {name}")
