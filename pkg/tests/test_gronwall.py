import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tfac.errors import ParameterDomainError
from tfac.gronwall import (
    GronwallHypothesisWarning,
    GronwallInstance,
    gronwall_bound,
    lambda_cap,
    make_instance,
    verify_gronwall,
)
from tfac.kernels import build_kernel_tables
from tfac.temporal_mesh import PI_A, build_graded_mesh, default_gamma


def _instance(mesh, alpha, v, xi, eta, zeta, lam=None, Lambda=0.0, delta=2.0):
    N = mesh.N
    lam = np.zeros((N, N + 1)) if lam is None else lam
    return GronwallInstance(
        alpha, mesh, build_kernel_tables(mesh, alpha), np.asarray(v, float),
        np.asarray(xi, float), np.asarray(eta, float), np.asarray(zeta, float), lam, Lambda, delta,
    )


def test_empty_forcing_gives_c_delta():
    mesh = build_graded_mesh(1.0, 8, 2.0, nu=0.25)
    inst = _instance(mesh, 0.5, np.r_[1.0, np.zeros(8)], np.zeros(8), np.zeros(8), np.zeros(8))
    for n in (1, 5, 8):
        assert gronwall_bound(inst, n) == pytest.approx(2.0, rel=1e-14)


def test_single_eta_term():
    mesh = build_graded_mesh(1.0, 8, 2.0, nu=0.25)
    inst = _instance(mesh, 0.5, np.zeros(9), np.zeros(8), np.ones(8), np.zeros(8))
    for n in (1, 4, 8):
        tn = mesh.nodes[n]
        assert gronwall_bound(inst, n) == pytest.approx(2.0 * math.sqrt(2 * PI_A * tn**0.5), rel=1e-14)


def test_random_instance_holds():
    mesh = build_graded_mesh(1.0, 32, default_gamma(0.5), nu=0.25)
    inst = make_instance(mesh, 0.5, np.random.default_rng(7))
    assert inst.step_condition_met
    assert np.all(inst.hypothesis_residuals() >= -1e-12)
    bounds = np.array([gronwall_bound(inst, n) for n in range(1, 33)])
    assert np.all(bounds >= inst.v[1:])


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7, 0.9])
@pytest.mark.parametrize("graded", [False, True])
def test_seed_sweep(alpha, graded):
    gamma = default_gamma(alpha) if graded else 1.0
    mesh = build_graded_mesh(1.0, 32, gamma, nu=alpha / 2)
    reports = [verify_gronwall(s, alpha, mesh) for s in range(100)]
    assert all(r.holds for r in reports)
    assert min(r.min_slack for r in reports) >= -1e-10


def test_zero_lambda_forcing_free_is_non_increasing():
    mesh = build_graded_mesh(1.0, 16, 3.0, nu=0.3)
    rng = np.random.default_rng(3)
    inst = make_instance(mesh, 0.6, rng, zero_lambda=True)
    # rebuild with no forcing from the same start
    N = mesh.N
    v = np.zeros(N + 1)
    v[0] = inst.v[0]
    K = inst.tables.K
    w = v**2
    for n in range(1, N + 1):
        hist = K[n - 1, : n - 1] @ np.diff(w[:n])
        w[n] = max(w[n - 1] - hist / K[n - 1, n - 1], 0.0)
    v = np.sqrt(w)
    assert np.all(np.diff(v) <= 1e-15)
    free = _instance(mesh, 0.6, v, np.zeros(N), np.zeros(N), np.zeros(N))
    assert all(gronwall_bound(free, n) >= v[n] for n in range(1, N + 1))


def test_bound_grows_as_delta_approaches_one():
    mesh = build_graded_mesh(1.0, 8, 1.0, nu=0.25)
    args = (mesh, 0.5, np.r_[1.0, np.zeros(8)], np.zeros(8), np.ones(8) * 0.1, np.zeros(8))
    vals = [gronwall_bound(_instance(*args, delta=d), 8) for d in (3.0, 2.0, 1.5, 1.1, 1.01)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_unmet_step_condition_warns():
    mesh = build_graded_mesh(1.0, 4, 1.0, nu=0.25)
    N = mesh.N
    lam = np.zeros((N, N + 1))
    lam[:, 1:] = np.eye(N) * 10 * lambda_cap(mesh, 0.5, 2.0)
    inst = _instance(mesh, 0.5, np.zeros(N + 1), np.zeros(N), np.zeros(N), np.zeros(N), lam=lam, Lambda=5.0)
    assert not inst.step_condition_met
    with pytest.warns(GronwallHypothesisWarning):
        gronwall_bound(inst, 2)


def test_instance_validation():
    mesh = build_graded_mesh(1.0, 4, 1.0, nu=0.25)
    z = np.zeros(4)
    with pytest.raises(ParameterDomainError):
        _instance(mesh, 0.5, -np.ones(5), z, z, z)
    with pytest.raises(ParameterDomainError):
        _instance(mesh, 0.5, np.zeros(4), z, z, z)
    lam = np.zeros((4, 5))
    lam[0, 3] = 0.1
    with pytest.raises(ParameterDomainError):
        _instance(mesh, 0.5, np.zeros(5), z, z, z, lam=lam, Lambda=1.0)
    with pytest.raises(ParameterDomainError):
        _instance(mesh, 0.5, np.zeros(5), z, z, z, delta=1.0)


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(0.2, 0.95), graded=st.booleans(), N=st.integers(2, 40), seed=st.integers(0, 10**6))
def test_generated_instances_meet_hypothesis(alpha, graded, N, seed):
    gamma = default_gamma(alpha) if graded else 1.0
    mesh = build_graded_mesh(1.0, N, gamma, nu=alpha / 2)
    inst = make_instance(mesh, alpha, np.random.default_rng(seed))
    res = inst.hypothesis_residuals()
    scale = 1.0 + np.abs(inst.tables.K).sum(axis=1) * inst.v.max() ** 2
    assert np.all(np.abs(res) <= 1e-12 * scale)
    assert verify_gronwall(seed, alpha, mesh).holds
