import numpy as np
import pytest

from lindblad_krylov import models, oracle
from lindblad_krylov.kernels import BACKENDS


def pytest_addoption(parser):
    parser.addoption("--release", action="store_true", default=False,
                     help="also run the full-size (hours-long) release validation tier")


def pytest_configure(config):
    config.addinivalue_line("markers", "release: full-size validation, needs --release")
    config.addinivalue_line("markers", "slow: takes more than a few seconds")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--release"):
        return
    skip = pytest.mark.skip(reason="release tier; run with --release")
    for item in items:
        if "release" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def _cached_spectrum(config, model, keep, tag):
    """Dense ED of ``model``, stored in the pytest cache directory."""
    cache_dir = config.cache.mkdir("oracle-spectra")
    path = cache_dir / f"{tag}-{model.fingerprint}-{keep}.npz"
    if path.exists():
        data = np.load(path)
        return oracle.Spectrum(data["values"], "liouvillian", model.dim, data["vectors"])
    spec = oracle.exact_spectrum(oracle.build_liouvillian_matrix(model), vectors=True, keep=keep)
    np.savez(path, values=spec.values, vectors=spec.vectors)
    return spec


@pytest.fixture(scope="session")
def dimer_model():
    return models.preset("dimer-fig3")


@pytest.fixture(scope="session")
def dimer_oracle(request, dimer_model):
    """Full spectrum of the 4096 x 4096 dimer Liouvillian, 64 leading eigenmatrices."""
    return _cached_spectrum(request.config, dimer_model, 64, "dimer")


# one line per acceptance criterion, repeated in the terminal summary
_ACCEPTANCE: dict[str, str] = {}
ACCEPTANCE_IDS = ("1", "2", "3", "4-ci", "4", "5-ci", "5", "6", "7")


@pytest.fixture
def acceptance():
    def record(criterion: str, ok: bool, detail: str) -> bool:
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
        _ACCEPTANCE[criterion] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in ACCEPTANCE_IDS:
        terminalreporter.write_line(
            _ACCEPTANCE.get(cid, f"criterion {cid}: NOT RUN | not selected (release-tier items need --release)"))
