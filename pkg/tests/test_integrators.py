import numpy as np
import pytest
import scipy.linalg as dla

from wavesplit.errors import ConfigurationError, InstabilityError
from wavesplit.integrators import (AppendixEnergy, EnergyTrace, SchemeConfig,
                                   SplitBlocks, SplitStepper, WeightedStepper,
                                   explicit_energy, implicit_energy, run,
                                   splitting_energy, step_split,
                                   weighted_energy)

from conftest import random_spd


def _random_blocks(rng, n1, n2, coupled_mass=True):
    n = n1 + n2
    M = random_spd(rng, n)
    A = random_spd(rng, n, shift=0.2)
    if not coupled_mass:
        M[:n1, n1:] = 0.0
        M[n1:, :n1] = 0.0
    return SplitBlocks(M[:n1, :n1], M[:n1, n1:], M[n1:, n1:],
                       A[:n1, :n1], A[:n1, n1:], A[n1:, n1:])


def _safe_tau(blocks, frac=0.2):
    lam = dla.eigh(blocks.full_stiffness(), blocks.full_mass(),
                   eigvals_only=True)[-1]
    return frac * 2.0 / np.sqrt(lam)


def test_split_blocks_from_pair(pair16, operators16, blocks16):
    M, A = operators16
    b = blocks16
    assert b.n1 == pair16.n1 and b.n2 == pair16.n2
    assert b.M11.shape == (b.n1, b.n1) and b.M12.shape == (b.n1, b.n2)
    Mf, Af = b.full_mass(), b.full_stiffness()
    np.testing.assert_allclose(Mf, Mf.T, atol=1e-14)
    np.testing.assert_allclose(Af, Af.T, atol=1e-12)
    # against the unprojected route through the stacked basis
    B = pair16.combined()
    np.testing.assert_allclose(Mf, np.asarray((B.T @ (M @ B)).todense()),
                               atol=1e-13)
    u = np.arange(b.n1 + b.n2, dtype=float)
    u1, u2 = b.split(u)
    assert u1.size == b.n1 and u2[0] == b.n1
    with pytest.raises(ConfigurationError, match="surrogate"):
        SplitBlocks.from_pair(pair16, M, A, surrogate=True)


def test_weighted_energy_hand_values():
    M = np.eye(1)
    A = np.array([[4.0]])
    up, uc = np.array([1.0]), np.array([1.2])
    assert np.isclose(weighted_energy(M, A, up, uc, 0.1, 0.0), 8.8, rtol=1e-13)
    assert np.isclose(implicit_energy(M, A, up, uc, 0.1), 8.84, rtol=1e-13)
    assert np.isclose(explicit_energy(M, A, up, uc, 0.1), 8.8, rtol=1e-13)


def test_weighted_conservation():
    rng = np.random.default_rng(31)
    M = random_spd(rng, 10)
    A = random_spd(rng, 10, shift=0.2)
    alpha = np.sqrt(dla.eigh(A, M, eigvals_only=True)[-1])
    u0 = rng.standard_normal(10)
    v0 = rng.standard_normal(10)
    for sigma in (0.25, 0.0, 0.1):
        tau = 0.5 / alpha
        stepper = WeightedStepper(M, A, tau, sigma)
        up = u0.copy()
        uc = u0 + tau * v0       # any second level defines the invariant
        e0 = stepper.energy(up, uc)
        for _ in range(500):
            up, uc = uc, stepper.step(up, uc)
        assert abs(stepper.energy(up, uc) - e0) <= 1e-10 * abs(e0)


def test_split_conservation_coupled_mass():
    # the splitting invariant holds with a nonzero mass coupling block
    rng = np.random.default_rng(41)
    blocks = _random_blocks(rng, 6, 4, coupled_mass=True)
    assert np.abs(blocks.M12).max() > 0
    tau = _safe_tau(blocks)
    stepper = SplitStepper(blocks, tau, omega=1.0)
    assert not stepper.decoupled
    up = rng.standard_normal(10)
    uc = up + tau * rng.standard_normal(10)
    e0 = splitting_energy(blocks, up, uc, tau)
    for _ in range(500):
        up, uc = uc, stepper.step(up, uc)
    assert abs(splitting_energy(blocks, up, uc, tau) - e0) <= 1e-10 * abs(e0)


def test_split_omega0_appendix_energy():
    rng = np.random.default_rng(43)
    blocks = _random_blocks(rng, 6, 4, coupled_mass=False)
    tau = _safe_tau(blocks)
    stepper = SplitStepper(blocks, tau, omega=0.0)
    app = AppendixEnergy(blocks, tau)
    up = rng.standard_normal(10)
    uc = up + tau * rng.standard_normal(10)
    e0 = app(up, uc)
    for _ in range(300):
        up, uc = uc, stepper.step(up, uc)
    assert abs(app(up, uc) - e0) <= 1e-9 * abs(e0)


def test_appendix_energy_requires_orthogonality():
    rng = np.random.default_rng(44)
    blocks = _random_blocks(rng, 5, 3, coupled_mass=True)
    with pytest.raises(ConfigurationError, match="orthogonal"):
        AppendixEnergy(blocks, 0.01)


def test_appendix_fast_seminorm_identity():
    # ||v2||_n^2 = tau^2/2 * a-energy of the pair (-d(v2), v2)
    rng = np.random.default_rng(45)
    blocks = _random_blocks(rng, 6, 4, coupled_mass=False)
    tau = 0.05
    app = AppendixEnergy(blocks, tau)
    for _ in range(50):
        v2 = rng.standard_normal(4)
        w1 = -app.op_d(v2)
        a_sq = (w1 @ (blocks.A11 @ w1) + 2.0 * w1 @ (blocks.A12 @ v2)
                + v2 @ (blocks.A22 @ v2))
        lhs = app.n_norm_sq(v2)
        assert abs(lhs - tau ** 2 / 2.0 * a_sq) <= 1e-9 * abs(lhs)


def test_degeneration_no_fast_component():
    # empty second component: the split step is the sigma=1/2 average scheme
    rng = np.random.default_rng(47)
    n1 = 6
    blocks = SplitBlocks(random_spd(rng, n1), np.zeros((n1, 0)),
                         np.zeros((0, 0)), random_spd(rng, n1, shift=0.2),
                         np.zeros((n1, 0)), np.zeros((0, 0)))
    tau = _safe_tau(blocks)
    split = SplitStepper(blocks, tau, omega=1.0)
    ref = WeightedStepper(blocks.M11, blocks.A11, tau, 0.5)
    up = rng.standard_normal(n1)
    uc = rng.standard_normal(n1)
    for _ in range(100):
        un_split = split.step(up, uc)
        un_ref = ref.step(up, uc)
        np.testing.assert_allclose(un_split, un_ref, rtol=0,
                                   atol=1e-10 * np.abs(un_ref).max())
        up, uc = uc, un_ref


def test_degeneration_no_slow_component():
    # empty first component: the split step is the leapfrog on the rest
    rng = np.random.default_rng(48)
    n2 = 6
    blocks = SplitBlocks(np.zeros((0, 0)), np.zeros((0, n2)),
                         random_spd(rng, n2), np.zeros((0, 0)),
                         np.zeros((0, n2)), random_spd(rng, n2, shift=0.2))
    tau = _safe_tau(blocks)
    split = SplitStepper(blocks, tau, omega=1.0)
    ref = WeightedStepper(blocks.M22, blocks.A22, tau, 0.0)
    up = rng.standard_normal(n2)
    uc = rng.standard_normal(n2)
    for _ in range(100):
        un_split = split.step(up, uc)
        un_ref = ref.step(up, uc)
        np.testing.assert_allclose(un_split, un_ref, rtol=0,
                                   atol=1e-10 * np.abs(un_ref).max())
        up, uc = uc, un_ref


def test_decoupled_fast_path():
    rng = np.random.default_rng(51)
    n1, n2 = 5, 4
    blocks = SplitBlocks(random_spd(rng, n1), np.zeros((n1, n2)),
                         np.diag(rng.uniform(0.5, 2.0, n2)),
                         random_spd(rng, n1, shift=0.2),
                         rng.standard_normal((n1, n2)),
                         random_spd(rng, n2, shift=0.2))
    tau = _safe_tau(blocks)
    stepper = SplitStepper(blocks, tau, omega=1.0)
    assert stepper.decoupled
    up = rng.standard_normal(n1 + n2)
    uc = rng.standard_normal(n1 + n2)
    un = stepper.step(up, uc)
    # the result satisfies both scheme rows of the coupled formulation
    b = blocks
    u1p, u2p = b.split(up)
    u1c, u2c = b.split(uc)
    u1n, u2n = b.split(un)
    row1 = (b.M11 @ (u1n - 2 * u1c + u1p) + b.M12 @ (u2n - 2 * u2c + u2p)
            + tau ** 2 / 2.0 * (b.A11 @ (u1n + u1p)) + tau ** 2 * (b.A12 @ u2c))
    row2 = (b.M12.T @ (u1n - 2 * u1c + u1p) + b.M22 @ (u2n - 2 * u2c + u2p)
            + tau ** 2 * (b.A12.T @ u1c) + tau ** 2 * (b.A22 @ u2c))
    scale = np.abs(un).max()
    assert np.abs(row1).max() <= 1e-12 * scale
    assert np.abs(row2).max() <= 1e-12 * scale
    # non-diagonal fast mass or averaged coupling row disable the fast path
    blocks2 = _random_blocks(rng, n1, n2, coupled_mass=False)
    assert not SplitStepper(blocks2, tau, omega=1.0).decoupled or \
        not np.any(blocks2.M22 - np.diag(np.diag(blocks2.M22)))
    assert not SplitStepper(blocks, tau, omega=0.5).decoupled


def test_split_stepper_validation():
    rng = np.random.default_rng(53)
    blocks = _random_blocks(rng, 3, 2)
    with pytest.raises(ConfigurationError, match="omega"):
        SplitStepper(blocks, 0.01, omega=1.5)
    # one-shot helper agrees with the stepper object
    up = rng.standard_normal(5)
    uc = rng.standard_normal(5)
    np.testing.assert_allclose(step_split(blocks, up, uc, 0.01),
                               SplitStepper(blocks, 0.01).step(up, uc),
                               rtol=1e-14)


def test_scheme_config():
    cfg = SchemeConfig("implicit", 0.01, 0.5)
    assert cfg.n_steps == 50
    assert not cfg.is_split
    assert SchemeConfig("split_omega1", 0.1, 1.0).is_split
    with pytest.raises(ConfigurationError, match="unknown scheme"):
        SchemeConfig("magic", 0.01, 1.0)
    with pytest.raises(ConfigurationError, match="tau"):
        SchemeConfig("implicit", 0.0, 1.0)
    with pytest.raises(ConfigurationError, match="shorter"):
        SchemeConfig("implicit", 0.5, 0.1)


def test_run_taylor_second_level():
    rng = np.random.default_rng(57)
    M = random_spd(rng, 4)
    A = random_spd(rng, 4, shift=0.2)
    u0 = rng.standard_normal(4)
    v0 = rng.standard_normal(4)
    tau = 0.01
    cfg = SchemeConfig("implicit", tau, 2 * tau)
    res = run(cfg, (M, A), initial=(u0, v0))
    acc = np.linalg.solve(M, -A @ u0)
    expect = u0 + tau * v0 + tau ** 2 / 2.0 * acc
    np.testing.assert_allclose(res.state_at(1), expect, atol=1e-13)
    np.testing.assert_allclose(res.state_at(0), u0, atol=0)


def test_run_records_and_energy_layout():
    rng = np.random.default_rng(58)
    M = random_spd(rng, 4)
    A = random_spd(rng, 4, shift=0.2)
    cfg = SchemeConfig("implicit", 0.01, 0.1)
    res = run(cfg, (M, A), initial=(rng.standard_normal(4), np.zeros(4)))
    assert sorted(res.states) == list(range(11))
    assert res.energy.scheme == "implicit"
    np.testing.assert_array_equal(res.energy.steps, np.arange(1, 10))
    assert res.energy.values.size == 9
    assert res.energy.drift <= 1e-12
    np.testing.assert_allclose(res.times(), 0.01 * np.arange(11), atol=1e-15)
    np.testing.assert_array_equal(res.final_pair[1], res.state_at(10))

    res2 = run(cfg, (M, A), initial=(rng.standard_normal(4), np.zeros(4)),
               record_steps={0, 5}, collect_energy=False)
    assert sorted(res2.states) == [0, 5]
    assert res2.energy is None


def test_run_source_linearity():
    rng = np.random.default_rng(59)
    M = random_spd(rng, 4)
    A = random_spd(rng, 4, shift=0.2)
    load = rng.standard_normal(4)
    cfg = SchemeConfig("implicit", 0.01, 0.1)
    one = run(cfg, (M, A), source=lambda t: np.sin(t) * load)
    two = run(cfg, (M, A), source=lambda t: 2.0 * np.sin(t) * load)
    np.testing.assert_allclose(two.final_pair[1], 2.0 * one.final_pair[1],
                               rtol=1e-10)


def test_run_split_requires_blocks():
    rng = np.random.default_rng(60)
    M = random_spd(rng, 4)
    A = random_spd(rng, 4)
    with pytest.raises(ConfigurationError, match="projected split blocks"):
        run(SchemeConfig("split_omega1", 0.01, 0.1), (M, A))


def test_instability_error_carries_partial_result():
    M = np.eye(1)
    A = np.array([[1e8]])
    cfg = SchemeConfig("explicit", 1.0, 60.0)
    with pytest.raises(InstabilityError) as info:
        run(cfg, (M, A), initial=(np.array([1.0]), np.array([0.0])))
    exc = info.value
    assert exc.step is not None and 2 <= exc.step <= 60
    assert np.all(np.isfinite(exc.result.final_pair[1]))
    assert exc.result.energy is not None
    assert "explicit" in str(exc)


def test_one_dof_cfl_orbits():
    alpha = 10.0
    M = np.eye(1)
    A = np.array([[alpha ** 2]])
    tau_max = 2.0 / alpha

    stepper = WeightedStepper(M, A, 0.9 * tau_max, 0.0)
    up, uc = np.array([1.0]), np.array([1.0])
    peak = 1.0
    for _ in range(1000):
        up, uc = uc, stepper.step(up, uc)
        peak = max(peak, abs(uc[0]))
    assert peak <= 3.0      # bounded orbit (amplitude set by the crude start)

    stepper = WeightedStepper(M, A, 1.5 * tau_max, 0.0)
    up, uc = np.array([1.0]), np.array([1.0])
    grew = False
    for _ in range(1000):
        up, uc = uc, stepper.step(up, uc)
        if abs(uc[0]) >= 1e3:
            grew = True
            break
    assert grew


def test_energy_trace_drift():
    tr = EnergyTrace("implicit", np.arange(1, 4), np.array([2.0, 2.2, 1.9]), 2.0)
    assert np.isclose(tr.drift, 0.1)
    tr0 = EnergyTrace("implicit", np.arange(1, 3), np.array([0.5, 0.25]), 0.0)
    assert np.isclose(tr0.drift, 0.5)
