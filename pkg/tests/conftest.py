import numpy as np
import pytest
from hypothesis import settings

from mvwarp.synthetic import generate_synthetic_scene, two_plane_spec

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def two_plane_scene():
    spec = two_plane_spec(width=32, height=32, num_frames=5)
    frames, depths, oracle = generate_synthetic_scene(spec, seed=0)
    return spec, frames, depths, oracle


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """Records one pass/fail line per acceptance criterion for the terminal summary."""
    results = request.config.stash[_ACCEPTANCE_KEY]

    class Recorder:
        def __init__(self):
            self.detail = ""

        def __call__(self, name):
            self.name = name
            return self

        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            ok = exc_type is None
            detail = self.detail if ok else f"{self.detail} {exc_type.__name__}: {exc}".strip()
            results.append((self.name, ok, detail.splitlines()[0] if detail else ""))
            return False

    return Recorder()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE_KEY, [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in results:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
