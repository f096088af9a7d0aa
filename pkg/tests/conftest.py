import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stemcalyx import _backend

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(params=_backend.available())
def backend(request):
    """Run a test once per available kernel backend."""
    before = _backend.current()
    _backend.set_backend(request.param)
    yield request.param
    _backend.set_backend(before)


def disk_mask(size, radius=None, centre=None):
    radius = size / 2 - 1 if radius is None else radius
    c = (size - 1) / 2 if centre is None else centre
    ys, xs = np.mgrid[:size, :size]
    return np.hypot(xs - c, ys - c) <= radius


def random_blob(rng, size=24, fill=0.55, smooth=1):
    """Random mask smoothed by majority voting, largest component kept."""
    from scipy import ndimage

    m = rng.random((size, size)) < fill
    for _ in range(smooth):
        m = ndimage.uniform_filter(m.astype(float), 3) > 0.5
    lab, n = ndimage.label(m, structure=np.ones((3, 3)))
    if n == 0:
        m = np.zeros((size, size), bool)
        m[size // 2 - 2:size // 2 + 2, size // 2 - 2:size // 2 + 2] = True
        return m
    sizes = np.bincount(lab.ravel())[1:]
    return lab == (np.argmax(sizes) + 1)


def seeded_shape(label, index, base, scale=(0.5, 1.0), scale_factor=1.0, turn=0.0):
    """Candidate mask of ``label`` drawn from a seeded stream.

    ``scale_factor`` and ``turn`` (degrees) re-rasterise the same shape
    larger or rotated, keeping every other parameter fixed.
    """
    from stemcalyx.labels import LABEL_ORDER
    from stemcalyx.synthgen import SplitMix64, SynthSpec, derive_seed, gen_candidate_shape

    rng = SplitMix64(derive_seed(base + LABEL_ORDER.index(label), index))
    s = rng.uniform(*scale)
    rot = rng.uniform(0, 360)
    jitter = rng.uniform(0, 1)
    seed = rng.seed()
    return gen_candidate_shape(SynthSpec(label, s * scale_factor, rot + turn, jitter, seed))


# ------------------------------------------------ acceptance criteria report

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed or rep.skipped):
        return
    number, title = marker.args
    status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
    previous = _CRITERIA.get(number, (title, "PASS"))[1]
    if previous != "PASS" and status == "PASS":
        status = previous
    _CRITERIA[number] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {title}")
