import numpy as np
import pytest

import mcpep


@pytest.fixture(scope="module")
def model():
    return mcpep.synthetic_model(mcpep.seven_dof_arm(), k=16, edge=0.02)


def test_dynamics_consistency():
    chain = mcpep.seven_dof_arm()
    q = np.linspace(-0.5, 0.5, chain.dof)
    m = mcpep.mass_matrix(chain, q)
    assert np.allclose(m, m.T)
    ddq = np.arange(1.0, 8.0)
    tau = mcpep.inverse_dynamics(chain, q, np.zeros(7), ddq)
    assert np.allclose(tau, m @ ddq + mcpep.gravity_torques(chain, q), atol=1e-9)
    frames = mcpep.forward_kinematics(chain, q)
    assert len(frames) == 7 and frames[0].shape == (4, 4)


def test_chain_json_round_trip():
    chain = mcpep.seven_dof_arm()
    assert mcpep.parse_chain(chain.to_json()).to_json() == chain.to_json()
    with pytest.raises(mcpep.InputError):
        mcpep.parse_chain("{")


def test_config():
    c = mcpep.FilterConfig()
    assert c.particles_per_set == 100
    c.alpha = 20.0
    assert mcpep.FilterConfig.from_json(c.to_json()).alpha == 20.0
    c.step_p = 1.5
    with pytest.raises(mcpep.ValidationError):
        c.validate()


def test_true_contact_explains_measurement(model):
    q = np.zeros(7)
    point, normal = model.point(q, 3, 0)
    assert abs(np.linalg.norm(normal) - 1.0) < 1e-12
    w = np.zeros(13)
    res, forces = mcpep.contact_residual(model, q, w, [(3, 0)])
    assert res == 0.0 and np.allclose(forces[0], 0.0)


def test_simulate_and_estimate(model):
    scenario = mcpep.random_scenario_json(model, contacts=1, seed=4, settle=0.15)
    csv = mcpep.simulate(model, scenario)
    rows = mcpep.estimate(model, csv)
    assert rows[-1]["iteration"] == len(rows)
    last = rows[-1]["contacts"]
    assert len(last) == 1
    assert last[0]["force"].shape == (3,)


def test_benchmark_is_deterministic(model):
    a = mcpep.benchmark(model, contacts=1, trials=2, seed=3)
    b = mcpep.benchmark(model, contacts=1, trials=2, seed=3)
    assert a["csv"] == b["csv"]
    assert a["trials"] == 2
