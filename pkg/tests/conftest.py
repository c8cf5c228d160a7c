from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

from shrinkerkit import flow, shrinkers, spectrum
from shrinkerkit.geometry import geometric_data, resample

# r_max of the shared specimen; the flows use the truncation at FLOW_R
SPECIMEN_RMAX = 40.0
FLOW_R = 30.0
FLOW_H = 0.02
SAVE_TIMES = tuple(np.round(np.arange(-1.0, 1e-9, 0.1), 12))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k): acceptance criterion number")
    config.addinivalue_line("markers", "slow: runs for longer than a minute")
    config._criteria = OrderedDict()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    k = mark.args[0]
    seen = item.config._criteria.setdefault(k, [])
    seen.append((item.name, rep.passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    crit = config._criteria
    if not crit:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(crit):
        items = crit[k]
        ok = all(p for _, p in items)
        failed = [n for n, p in items if not p]
        line = f"criterion {k}: {'PASS' if ok else 'FAIL'} ({len(items)} checks"
        line += f", failed: {', '.join(failed)})" if failed else ")"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def specimen_shot():
    return shrinkers.find_conical_specimen(r_max=SPECIMEN_RMAX)


@pytest.fixture(scope="session")
def specimen(specimen_shot):
    return specimen_shot.surface


@pytest.fixture(scope="session")
def specimen_spectrum(specimen):
    return spectrum.lowest_eigenpair(specimen)


@pytest.fixture(scope="session")
def specimen_cone(specimen):
    return shrinkers.asymptotic_cone(specimen).cone


@pytest.fixture(scope="session")
def eps0(specimen_spectrum, specimen_cone):
    from dataclasses import replace

    sp = specimen_spectrum
    Sigma, f = sp.truncated(20.0)
    sp_R = replace(sp, f=f, surface=Sigma, core=np.arange(Sigma.size))
    return spectrum.find_epsilon0(Sigma, sp_R, cone=specimen_cone)


def _flow_job(args):
    G, save = args
    return flow.run(G, 0.0, flow.Controller(save_times=save))


@pytest.fixture(scope="session")
def perturbed_flows(specimen_spectrum, specimen_cone, eps0):
    """Both flows of the perturbation with half the admissible size, keyed by sign."""
    sp = specimen_spectrum
    eps = 0.5 * eps0
    Sigma, f = sp.truncated(FLOW_R)
    starts = {}
    for sign in (1, -1):
        p = spectrum.build_perturbation(Sigma, f, sign * eps, mu=sp.mu, C0=sp.C0,
                                        cone=specimen_cone)
        starts[sign] = geometric_data(resample(p.surface.curve, spacing=FLOW_H))
    with ProcessPoolExecutor(max_workers=2) as pool:
        traces = list(pool.map(_flow_job, [(starts[s], SAVE_TIMES) for s in (1, -1)]))
    return {"eps": eps, "sigma": Sigma, 1: traces[0], -1: traces[1]}
