import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtraj.hilbert import (EXCITED, GROUND, PROJ_G, SIGMA_MINUS, SIGMA_PLUS,
                           NearZeroNorm, norm_sq)
from qtraj.model import (Channel, LindbladModel, Schedule, build_eigenstate_jump_model,
                         build_two_level_direct)
from qtraj.trajectory import (DriftSegment, JumpEvent, StepTooLarge, TrajectoryRecord,
                              backward_construct, forward_simulate, philox_stream,
                              sample_initial_state, validate_record)

FIG3_K1 = dict(omega0=8e-4, tau=1 / 2.7e-3, g1=4.8e-4, tau1=1 / 1.3e-3,
               g2=8e-5, tau2=1 / 1e-3)


def pure_decay(gamma):
    return LindbladModel(2, (), (
        Channel(SIGMA_MINUS, Schedule.constant(gamma), Schedule.constant(0.0), 1),
        Channel(SIGMA_PLUS, Schedule.constant(0.0), Schedule.constant(gamma), 0),
    ))


def eigenstate_3level():
    return build_eigenstate_jump_model(
        [0.0, 1.0e-3, 2.35e-3],
        {(0, 1): 1.6e-3, (0, 2): 1.1e-3, (1, 2): 1.4e-3},
        {(0, 1): 9.0e-4, (0, 2): 4.0e-4, (1, 2): 6.0e-4})


def records_equal(a, b):
    if a.n_jumps != b.n_jumps or a.direction != b.direction:
        return False
    if not np.array_equal(a.final_state, b.final_state):
        return False
    for ja, jb in zip(a.jumps, b.jumps):
        if ja.step != jb.step or ja.channel != jb.channel:
            return False
        if not (np.array_equal(ja.pre_state, jb.pre_state)
                and np.array_equal(ja.post_state, jb.post_state)):
            return False
    for sa, sb in zip(a.drifts, b.drifts):
        if sa.log_survival != sb.log_survival or sa.t_start != sb.t_start:
            return False
    return True


class TestSampleInitialState:
    def test_reproducible(self):
        a = sample_initial_state(philox_stream(99, 3))
        b = sample_initial_state(philox_stream(99, 3))
        assert np.array_equal(a, b)

    def test_normalized_and_ground_real(self):
        rng = philox_stream(1, 0)
        for _ in range(200):
            psi = sample_initial_state(rng)
            assert norm_sq(psi) == pytest.approx(1.0, abs=1e-12)
            assert psi[0].imag == 0.0 and psi[0].real >= 0.0

    def test_population_not_uniform(self):
        # the excited-population fraction piles up in the tails: for uniform
        # moduli, P(x < 0.1) = P(ratio > 3) = 1/6, well above the 0.1 a
        # uniform x would give
        rng = philox_stream(2, 0)
        xs = np.array([abs(sample_initial_state(rng)[1]) ** 2 for _ in range(20000)])
        low = np.mean(xs < 0.1)
        assert low > 0.14
        assert abs(low - 1.0 / 6.0) < 0.02


class TestForwardSimulate:
    def test_deterministic(self):
        m = build_two_level_direct(**FIG3_K1)
        psi0 = sample_initial_state(philox_stream(5, 1))
        a = forward_simulate(m, psi0, 1.0, 500.0, philox_stream(5, 2))
        b = forward_simulate(m, psi0, 1.0, 500.0, philox_stream(5, 2))
        assert records_equal(a, b)

    def test_rate_free_model_is_one_unitary_drift(self):
        m = LindbladModel(2, ((Schedule.constant(0.01), np.array(
            [[0.0, 1.0], [1.0, 0.0]], dtype=complex)),), ())
        psi0 = GROUND.copy()
        rec = forward_simulate(m, psi0, 1.0, 400.0, philox_stream(6, 0))
        assert rec.n_jumps == 0
        assert len(rec.drifts) == 1
        assert abs(rec.drifts[0].log_survival) < 1e-12
        # constant Hamiltonian: the composed propagator is exactly exp(-i H T)
        import scipy.linalg
        ref = scipy.linalg.expm(-1j * 400.0 * 0.01 * np.array([[0, 1], [1, 0]])) @ psi0
        assert np.max(np.abs(rec.final_state - ref)) < 1e-8

    def test_first_jump_time_exponential(self):
        # pure decay from |e>: the dwell in |e> is geometric with p = gamma dt,
        # so the recorded first-jump time averages (1-p)/gamma within O(dt)
        gamma = 0.004
        m = pure_decay(gamma)
        times = []
        for i in range(10000):
            rec = forward_simulate(m, EXCITED.copy(), 1.0, 2500.0,
                                   philox_stream(7, i), want_kappa=False)
            if rec.n_jumps:
                times.append(rec.jumps[0].time)
        mean = np.mean(times)
        assert len(times) > 9900
        assert abs(mean - 1.0 / gamma) < 0.05 / gamma

    def test_eigenstate_states_are_basis_vectors(self):
        m = eigenstate_3level()
        rng = philox_stream(8, 0)
        psi0 = np.zeros(3, dtype=complex)
        psi0[2] = 1.0
        found_jump = False
        for i in range(40):
            rec = forward_simulate(m, psi0, 1.0, 1250.0, philox_stream(8, i))
            for jump in rec.jumps:
                found_jump = True
                for state in (jump.pre_state, jump.post_state):
                    mags = np.sort(np.abs(state))
                    assert mags[-1] == pytest.approx(1.0, abs=1e-10)
                    assert np.all(mags[:-1] < 1e-10)
        assert found_jump

    def test_survival_identity_pure_decay(self):
        gamma = 0.01
        m = pure_decay(gamma)
        for i in range(50):
            rec = forward_simulate(m, EXCITED.copy(), 1.0, 800.0, philox_stream(9, i))
            if not rec.n_jumps:
                continue
            seg = rec.drifts[0]
            t1 = rec.jumps[0].time
            assert seg.log_survival == pytest.approx(-gamma * t1, abs=1e-10 * (1 + t1))

    def test_step_too_large_guard(self):
        m = pure_decay(0.5)  # gamma dt = 0.5 >= 0.1 from |e>
        with pytest.raises(StepTooLarge) as err:
            forward_simulate(m, EXCITED.copy(), 1.0, 50.0, philox_stream(10, 0))
        assert err.value.total_probability >= 0.1
        assert err.value.step == 0
        assert "dt" in str(err.value)

    def test_unnormalized_initial_state_rejected(self):
        m = pure_decay(0.001)
        with pytest.raises(ValueError, match="normalized"):
            forward_simulate(m, 2.0 * EXCITED, 1.0, 10.0, philox_stream(11, 0))

    @given(st.integers(0, 5000))
    @settings(max_examples=40, deadline=None)
    def test_record_invariants(self, seed):
        m = build_two_level_direct(omega0=8e-3, tau=100.0, g1=5e-3, tau1=300.0,
                                   g2=2e-3, tau2=200.0)
        rng = philox_stream(12, seed)
        psi0 = sample_initial_state(rng)
        rec = forward_simulate(m, psi0, 1.0, 300.0, rng)
        validate_record(rec, m)


class TestBackwardConstruct:
    def test_unitary_reversal(self):
        m = LindbladModel(2, ((Schedule.exp_rise(0.02, 40.0), np.array(
            [[0.0, 1.0], [1.0, 0.0]], dtype=complex)),), ())
        psi0 = sample_initial_state(philox_stream(13, 0))
        fwd = forward_simulate(m, psi0, 1.0, 350.0, philox_stream(13, 1))
        bwd = backward_construct(m, fwd)
        assert bwd.n_jumps == 0
        assert np.max(np.abs(bwd.final_state - psi0)) < 1e-8

    def test_no_randomness_consumed(self):
        m = build_two_level_direct(**FIG3_K1)
        fwd = forward_simulate(m, sample_initial_state(philox_stream(14, 0)),
                               1.0, 900.0, philox_stream(14, 1))
        a = backward_construct(m, fwd)
        b = backward_construct(m, fwd)
        assert records_equal(a, b)
        assert a.aux_rev_exit_log is not None
        assert np.array_equal(a.aux_rev_exit_log, b.aux_rev_exit_log)

    def test_eigenstate_visits_reversed(self):
        m = eigenstate_3level()
        psi0 = np.zeros(3, dtype=complex)
        psi0[1] = 1.0
        for i in range(60):
            fwd = forward_simulate(m, psi0, 1.0, 1250.0, philox_stream(15, i))
            if fwd.n_jumps < 2:
                continue
            bwd = backward_construct(m, fwd)
            fwd_levels = [int(np.argmax(np.abs(j.post_state))) for j in fwd.jumps]
            bwd_levels = [int(np.argmax(np.abs(j.pre_state))) for j in bwd.jumps]
            # walking down, the backward process sits in the forward post-jump
            # levels in reversed order
            assert bwd_levels == fwd_levels[::-1]
            validate_record(bwd, m)

    def test_generic_trajectory_does_not_return(self):
        m = build_two_level_direct(omega0=8e-3, tau=100.0, g1=5e-3, tau1=300.0,
                                   g2=2e-3, tau2=200.0)
        hits = 0
        for i in range(40):
            psi0 = sample_initial_state(philox_stream(16, 2 * i))
            fwd = forward_simulate(m, psi0, 1.0, 600.0, philox_stream(16, 2 * i + 1))
            if not fwd.n_jumps:
                continue
            bwd = backward_construct(m, fwd)
            hits += 1
            if np.max(np.abs(bwd.final_state - psi0)) > 1e-3:
                break
        else:
            pytest.fail("every backward trajectory returned to the initial state")
        assert hits >= 1

    def test_annihilating_backward_jump_raises(self):
        # a projector jump followed by a lowering jump: walking down, the
        # raising adjoint maps |g> to |e>, which the projector then kills
        proj = Channel(PROJ_G, Schedule.constant(1e-3), Schedule.constant(1e-3), 0)
        lower = Channel(SIGMA_MINUS, Schedule.constant(1e-3), Schedule.constant(0.0), 2)
        raise_ = Channel(SIGMA_PLUS, Schedule.constant(0.0), Schedule.constant(1e-3), 1)
        m = LindbladModel(2, (), (proj, lower, raise_))
        sup = np.array([1.0, 1.0], dtype=complex) / math.sqrt(2.0)
        fwd = TrajectoryRecord(
            direction="forward", dt=1.0, horizon=2.0, n_steps=2, rng_seed=None,
            initial_state=sup, final_state=GROUND.copy(),
            jumps=(JumpEvent(time=0.0, channel=0, pre_state=sup,
                             post_state=GROUND.copy(), step=0),
                   JumpEvent(time=1.0, channel=1, pre_state=EXCITED.copy(),
                             post_state=GROUND.copy(), step=1)),
            drifts=(DriftSegment(0.0, 0.0, sup, sup, 0.0),
                    DriftSegment(1.0, 1.0, GROUND.copy(), GROUND.copy(), 0.0),
                    DriftSegment(2.0, 2.0, GROUND.copy(), GROUND.copy(), 0.0)))
        with pytest.raises(NearZeroNorm, match="discard"):
            backward_construct(m, fwd)

    def test_backward_of_backward_rejected(self):
        m = build_two_level_direct(**FIG3_K1)
        fwd = forward_simulate(m, sample_initial_state(philox_stream(17, 0)),
                               1.0, 200.0, philox_stream(17, 1))
        bwd = backward_construct(m, fwd)
        with pytest.raises(ValueError, match="forward"):
            backward_construct(m, bwd)
