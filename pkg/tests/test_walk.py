import numpy as np
import pytest

from ionwalk.dynamics import SIGMA_Y, FidelityModel
from ionwalk.fock import (
    HilbertParams,
    MotionalEnsemble,
    SpinMotionState,
    coherent_state,
    exact_position_density,
)
from ionwalk import probe, walk

from conftest import split_halves


def _sigma_y_single(state: SpinMotionState, ion: int = 0) -> float:
    rho = state.spin_density()
    if state.params.n_ions == 1:
        op = SIGMA_Y
    else:
        ops = [np.eye(2, dtype=complex), np.eye(2, dtype=complex)]
        ops[ion] = SIGMA_Y
        op = np.kron(ops[0], ops[1])
    return float(np.trace(rho @ op).real)


def test_prepare_initial_single_ion():
    p = HilbertParams(n_max=32)
    for model in (FidelityModel.LAMB_DICKE, FidelityModel.ALL_ORDER):
        state = walk.prepare_initial(p, model)
        assert abs(_sigma_y_single(state) - 1.0) < 1e-12
        pops = state.motional_populations()
        assert pops[0] > 1.0 - 1e-12          # carrier leaves the motion alone


def test_prepare_initial_two_ions():
    p = HilbertParams(n_max=16, n_ions=2)
    state = walk.prepare_initial(p)
    assert abs(_sigma_y_single(state, 0) - 1.0) < 1e-12
    assert abs(_sigma_y_single(state, 1) - 1.0) < 1e-12


def test_config_validation():
    p = HilbertParams(n_max=16)
    with pytest.raises(ValueError):
        walk.WalkConfig(n_steps=-1, params=p)
    with pytest.raises(ValueError):
        walk.WalkConfig(n_steps=1, params=p, trials=0)
    assert walk.WalkConfig(n_steps=1, params=p).step_size == 2.0
    p2 = HilbertParams(n_max=16, n_ions=2)
    assert walk.WalkConfig(n_steps=1, params=p2).step_size == 4.0


def test_zero_steps_returns_initial():
    cfg = walk.WalkConfig(n_steps=0, params=HilbertParams(n_max=32))
    result = walk.quantum_walk(cfg)
    assert len(result.snapshots) == 1
    assert abs(walk.width_x(result.snapshots[0]) - 1.0) < 1e-9


def test_one_step_density_two_balanced_peaks():
    cfg = walk.WalkConfig(n_steps=1, params=HilbertParams(n_max=64))
    result = walk.quantum_walk(cfg)
    assert len(result.snapshots) == 2
    grid = np.arange(-10.0, 10.0001, 0.01)
    dens = walk.snapshot_density(result, 1, grid)
    left, right = split_halves(grid, dens)
    assert abs(left - 0.5) < 1e-6 and abs(right - 0.5) < 1e-6
    peak = grid[np.argmax(dens)]
    assert abs(abs(peak) - 2.0) < 0.05


def test_walk_density_parity_and_odd_components():
    cfg = walk.WalkConfig(n_steps=6, params=HilbertParams(n_max=128))
    result = walk.quantum_walk(cfg)
    grid = np.arange(-20.0, 20.0001, 0.02)
    h = grid[1] - grid[0]
    for n in range(7):
        dens = walk.snapshot_density(result, n, grid)
        assert abs(np.sum(grid * dens) * h) < 1e-6
    ens = walk.snapshot_ensemble(result, 6)
    for k in (0.3, 0.9, 1.7, 2.5):
        assert abs(probe.expected_observable(ens, "plus_y", k)) < 1e-8


def test_momentum_width_constant_every_step(walk15_ld):
    for snap in walk15_ld.snapshots:
        assert abs(walk.width_p(snap) - 1.0) < 1e-6


def _lattice_walk_widths(n_steps: int, d: float = 2.0) -> np.ndarray:
    """Ideal point-particle walk oracle: spin components in the displacement
    eigenbasis on an integer lattice, coin exp(i pi/4 sigma_y) in that basis;
    widths are sqrt(d^2 <m^2> + 1) including the packet variance."""
    mid = n_steps + 1
    amp = np.zeros((2, 2 * n_steps + 3), dtype=complex)
    amp[0, mid] = np.exp(1j * np.pi / 4) / np.sqrt(2)
    amp[1, mid] = np.exp(-1j * np.pi / 4) / np.sqrt(2)
    coin = np.array([[1.0, -1.0], [1.0, 1.0]]) / np.sqrt(2)
    m = np.arange(2 * n_steps + 3) - mid
    widths = [1.0]
    for _ in range(n_steps):
        shifted = np.zeros_like(amp)
        shifted[0, 1:] = amp[0, :-1]
        shifted[1, :-1] = amp[1, 1:]
        amp = coin @ shifted
        widths.append(np.sqrt(d ** 2 * float(np.sum(np.abs(amp) ** 2 * m ** 2)) + 1.0))
    return np.array(widths)


def test_widths_match_lattice_oracle(walk15_ld):
    # exact agreement while branches stay spin-orthogonal; beyond that the
    # e^{-2} packet overlap of the d = 2 walk shaves a few percent off the
    # ideal point-particle spread
    oracle = _lattice_walk_widths(15)
    sim = np.array([walk.width_x(s) for s in walk15_ld.snapshots])
    assert np.max(np.abs(sim[:3] - oracle[:3])) < 1e-9
    assert np.all(sim[3:] <= oracle[3:])
    assert np.max(np.abs(sim - oracle) / oracle) < 0.07


def test_thirteen_step_density_concentrates_at_edges(walk15_ld):
    # ballistic horns near |x| = 2N/sqrt(2), strongly suppressed center
    grid = np.arange(-34.0, 34.0001, 0.05)
    dens = walk.snapshot_density(walk15_ld, 13, grid)
    h = grid[1] - grid[0]
    horn = abs(grid[np.argmax(dens)])
    assert 14.0 <= horn <= 22.0
    center = dens[np.argmin(np.abs(grid))]
    assert dens.max() > 4.0 * center
    outer_mass = dens[np.abs(grid) > 13.0].sum() * h
    assert outer_mass > 0.5


def test_phonon_growth_quadratic(walk15_ld):
    steps = np.arange(1, 16)
    nbar = np.array([walk.mean_phonon(walk15_ld.snapshots[n]) for n in steps])
    coeffs = np.polyfit(steps, nbar, 2)
    resid = nbar - np.polyval(coeffs, steps)
    r_sq = 1.0 - np.sum(resid ** 2) / np.sum((nbar - nbar.mean()) ** 2)
    assert r_sq > 0.99


def test_reversed_walk_exact_for_one_step():
    cfg = walk.WalkConfig(n_steps=1, params=HilbertParams(n_max=64))
    result = walk.reversed_walk(cfg)
    assert len(result.snapshots) == 3
    assert walk.reversal_fidelity(result) > 1.0 - 1e-9


@pytest.mark.parametrize("model", [FidelityModel.LAMB_DICKE, FidelityModel.ALL_ORDER])
def test_reversed_walk_five_steps(model):
    cfg = walk.WalkConfig(n_steps=5, params=HilbertParams(n_max=256), model=model)
    result = walk.reversed_walk(cfg)
    assert walk.reversal_fidelity(result) >= 0.999


@pytest.mark.parametrize("model", [FidelityModel.LAMB_DICKE, FidelityModel.ALL_ORDER])
def test_reversibility_up_to_eight_steps(model):
    cfg = walk.WalkConfig(n_steps=8, params=HilbertParams(n_max=400), model=model)
    result = walk.reversed_walk(cfg)
    assert walk.reversal_fidelity(result) >= 0.999


def test_walk_rejects_x_only_models():
    # the corrected couplings exist only on the x quadrature and cannot
    # drive the walk's momentum kicks
    p = HilbertParams(n_max=64)
    with pytest.raises(ValueError):
        walk.WalkConfig(n_steps=2, params=p, model=FidelityModel.THIRD_ORDER)
    with pytest.raises(ValueError):
        walk.WalkConfig(n_steps=2, params=p, model=FidelityModel.X_DIAGONAL)


def test_recombine_pure_spin_state():
    p = HilbertParams(n_max=32)
    state = SpinMotionState.from_product(np.array([1.0, 0.0]),
                                         coherent_state(1.0, p), p)
    ens = walk.recombine_spin(state)
    assert len(ens.members) == 1
    w, vec = ens.members[0]
    assert abs(w - 1.0) < 1e-12
    assert abs(abs(np.vdot(vec, coherent_state(1.0, p))) - 1.0) < 1e-12
    with pytest.raises(ValueError):
        walk.recombine_spin(state, new_spin="plus_x")


def test_recombine_one_step_branches():
    cfg = walk.WalkConfig(n_steps=1, params=HilbertParams(n_max=64))
    result = walk.quantum_walk(cfg)
    ens = walk.recombine_spin(result.snapshots[1])
    assert len(ens.members) == 2
    weights = sorted(w for w, _ in ens.members)
    assert abs(weights[0] - 0.5) < 1e-9 and abs(weights[1] - 0.5) < 1e-9
    p = cfg.params
    targets = [coherent_state(1.0, p), coherent_state(-1.0, p)]
    for _, vec in ens.members:
        best = max(abs(np.vdot(t, vec)) ** 2 for t in targets)
        assert best > 1.0 - 1e-9


def test_recombination_preserves_position_density():
    cfg = walk.WalkConfig(n_steps=3, params=HilbertParams(n_max=128))
    result = walk.quantum_walk(cfg)
    state = result.snapshots[3]
    grid = np.arange(-14.0, 14.0001, 0.02)
    ens = walk.recombine_spin(state)
    dens_ens = exact_position_density(ens, grid)
    # direct density of the entangled state: sum of branch densities
    branches = state.branch_matrix()
    dens_direct = np.zeros_like(grid)
    for row in branches:
        w = float(np.real(np.vdot(row, row)))
        if w > 1e-14:
            member = MotionalEnsemble.from_pure(row / np.sqrt(w), cfg.params)
            dens_direct += w * exact_position_density(member, grid,
                                                      check_coverage=False)
    assert np.max(np.abs(dens_ens - dens_direct)) < 1e-10


def test_classical_single_step_matches_quantum_distribution():
    # phase randomization cannot matter in one step on average; at finite
    # trials the peak weights fluctuate by ~0.7/sqrt(trials)
    trials = 4000
    cfg = walk.WalkConfig(n_steps=1, params=HilbertParams(n_max=48),
                          seed=123, trials=trials)
    result = walk.classical_walk(cfg)
    grid = np.arange(-8.0, 8.0001, 0.02)
    dens = exact_position_density(result.snapshots[1], grid)
    left, right = split_halves(grid, dens)
    tol = 4.0 * 0.71 / np.sqrt(2 * trials)
    assert abs(left - 0.5) < tol and abs(right - 0.5) < tol


def test_classical_walk_matches_binomial_second_moment():
    cfg = walk.WalkConfig(n_steps=6, params=HilbertParams(n_max=128),
                          seed=9, trials=300)
    result = walk.classical_walk(cfg)
    for n, snap in enumerate(result.snapshots):
        expected = 4.0 * n + 1.0
        sigma = 4.0 * n / np.sqrt(cfg.trials) * 1.5 + 0.3
        assert abs(walk.second_moment_x(snap) - expected) < 4 * sigma


def test_classical_walk_deterministic_and_thread_independent():
    cfg = walk.WalkConfig(n_steps=4, params=HilbertParams(n_max=64),
                          seed=21, trials=32)
    r1 = walk.classical_walk(cfg, threads=1)
    r2 = walk.classical_walk(cfg, threads=3)
    r3 = walk.classical_walk(cfg, threads=1)
    for a, b in ((r1, r2), (r1, r3)):
        for sa, sb in zip(a.snapshots, b.snapshots):
            assert np.allclose(sa.member_matrix(), sb.member_matrix(), atol=1e-13)
            assert np.allclose(sa.weights(), sb.weights(), atol=1e-15)


def test_classical_reference_width_formula():
    assert abs(walk.classical_width_reference(0, 2.0) - 1.0) < 1e-12
    assert abs(walk.classical_width_reference(10, 2.0)
               - np.sqrt(80.0 / np.pi + 1.0)) < 1e-12


def test_two_ion_requires_two_ions():
    with pytest.raises(ValueError):
        walk.two_ion_walk(walk.WalkConfig(n_steps=1, params=HilbertParams(n_max=16)))


def test_two_ion_single_step_three_peaks():
    p = HilbertParams(n_max=192, n_ions=2)
    cfg = walk.WalkConfig(n_steps=1, params=p)
    assert cfg.step_size == 4.0
    result = walk.two_ion_walk(cfg)
    grid = np.arange(-10.0, 10.0001, 0.02)
    dens = walk.snapshot_density(result, 1, grid)
    comps = np.column_stack([np.exp(-(grid - c) ** 2 / 2) / np.sqrt(2 * np.pi)
                             for c in (-4.0, 0.0, 4.0)])
    weights, *_ = np.linalg.lstsq(comps, dens, rcond=None)
    assert np.allclose(weights, [0.25, 0.5, 0.25], atol=1e-6)


def test_two_ion_five_steps_support():
    p = HilbertParams(n_max=256, n_ions=2)
    result = walk.two_ion_walk(walk.WalkConfig(n_steps=5, params=p))
    grid = np.arange(-30.0, 30.0001, 0.05)
    dens = walk.snapshot_density(result, 5, grid)
    h = grid[1] - grid[0]
    # support stays within the 5 * 4 = 20 ballistic cone plus packet tails
    assert dens[np.abs(grid) > 22.0].sum() * h < 1e-3


def test_two_ion_ground_state_stays_gaussian():
    p = HilbertParams(n_max=32, n_ions=2)
    result = walk.two_ion_walk(walk.WalkConfig(n_steps=0, params=p))
    grid = np.arange(-6.0, 6.0001, 0.02)
    dens = walk.snapshot_density(result, 0, grid)
    assert np.allclose(dens, np.exp(-grid ** 2 / 2) / np.sqrt(2 * np.pi), atol=1e-9)


def test_leak_error_names_the_step():
    cfg = walk.WalkConfig(n_steps=8, params=HilbertParams(n_max=24))
    with pytest.raises(Exception, match=r"step \d"):
        walk.quantum_walk(cfg)
