from dataclasses import replace

import numpy as np
import pytest

import taskreg as tr


@pytest.fixture(scope="session")
def seed():
    return 20240811


@pytest.fixture
def rng(seed):
    return np.random.default_rng(seed)


@pytest.fixture(scope="session")
def bundled():
    return tr.load_scenario(tr.bundled_scenario_path())


# The three 20 s reference rollouts are shared across test modules; they are
# by far the most expensive fixtures in the suite.

@pytest.fixture(scope="session")
def vf_run(bundled):
    return tr.simulate(bundled)


@pytest.fixture(scope="session")
def fs_run(bundled):
    return tr.simulate(replace(bundled, controller="full-state"))


@pytest.fixture(scope="session")
def sat_run(bundled):
    return tr.simulate(replace(bundled, controller="saturated"))


@pytest.fixture(scope="session")
def paper_exo():
    specs = [tr.SinusoidSpec(1.0, 0.1, 0.0, 1, "torque"),
             tr.SinusoidSpec(3.0, 0.1, 0.0, 2, "torque"),
             tr.SinusoidSpec(2.0, 0.1, 0.0, 1, "force"),
             tr.SinusoidSpec(4.0, 0.1, 0.0, 2, "force")]
    return tr.exo_from_sinusoids(specs, 2)


@pytest.fixture(scope="session")
def paper_ims():
    im1 = tr.build_internal_model([1.0, 3.0], 2, [1, 2], target_kind="torque")
    im2 = tr.build_internal_model([2.0, 4.0], 2, [1, 2], target_kind="force")
    return im1, im2
