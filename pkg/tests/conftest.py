import os
import shutil
import time

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record a pass/fail line for an acceptance criterion."""
    def record(number: int, passed: bool, detail: str):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])


TOY = dict(cap=2000, batch_size=500)


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    from graspsim.pipeline import write_toy_corpus

    root = tmp_path_factory.mktemp("toy_corpus")
    write_toy_corpus(root)
    return root


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory, toy_corpus):
    """The toy pipeline run once with one worker; returns (config, out, summary, seconds)."""
    from graspsim.config import PipelineConfig
    from graspsim.pipeline import run_pipeline

    cfg = PipelineConfig(corpus=str(toy_corpus), workers=1, **TOY)
    out = tmp_path_factory.mktemp("toy_w1")
    t0 = time.perf_counter()
    summary = run_pipeline(cfg, out)
    return cfg, out, summary, time.perf_counter() - t0


def tree_bytes(root, subdirs=("simulate", "postprocess", "split", "export")):
    """Relative path -> bytes for every final output file (stage bookkeeping excluded)."""
    from pathlib import Path

    root = Path(root)
    out = {}
    for sub in subdirs:
        base = root / sub
        if not base.exists():
            continue
        for p in sorted(base.rglob("*")):
            rel = p.relative_to(root)
            if p.is_file() and "jobs" not in rel.parts and p.name != "stage.json":
                out[str(rel)] = p.read_bytes()
    return out
