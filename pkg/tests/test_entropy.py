import math

import numpy as np
import pytest

from qtraj.entropy import (EntropyLedger, appendix_I1, appendix_I2,
                           appendix_var1_expansion, direct_rate, drift_flux_exact,
                           drift_kappa, eta, jump_flux, ledger_for_trajectory,
                           reversed_rate, sigma_with_boundary_densities, var1_state)
from qtraj.estimator import trajectory_weight
from qtraj.hilbert import (EXCITED, GROUND, PROJ_E, SIGMA_MINUS, SIGMA_PLUS, SIGMA_X,
                           NearZeroNorm, norm_sq)
from qtraj.model import (Channel, LindbladModel, Schedule, build_eigenstate_jump_model,
                         effective_hamiltonian)
from qtraj.trajectory import (backward_construct, forward_simulate, philox_stream,
                              sample_initial_state)

SUPER = np.array([1.0, 1.0], dtype=complex) / math.sqrt(2.0)


def channel_pair(op, gamma, gamma_b):
    """op at a constant forward rate, adjoint partner at the backward rate."""
    return (Channel(op, Schedule.constant(gamma), Schedule.constant(gamma_b), 1),
            Channel(op.conj().T, Schedule.constant(gamma_b), Schedule.constant(gamma), 0))


def pure_decay_model(gamma, gamma_b=0.0, hamiltonian=()):
    return LindbladModel(2, hamiltonian, channel_pair(SIGMA_MINUS, gamma, gamma_b))


class TestRates:
    def test_direct_rate_excited(self):
        ch = channel_pair(SIGMA_MINUS, 2.0, 3.0)[0]
        assert direct_rate(ch, 0.0, EXCITED) == pytest.approx(2.0, abs=1e-15)

    def test_direct_rate_superposition(self):
        ch = channel_pair(SIGMA_MINUS, 2.0, 3.0)[0]
        assert direct_rate(ch, 0.0, SUPER) == pytest.approx(1.0, abs=1e-15)

    def test_direct_rate_ground(self):
        ch = channel_pair(SIGMA_MINUS, 2.0, 3.0)[0]
        assert direct_rate(ch, 0.0, GROUND) == 0.0

    def test_reversed_rate_excited(self):
        # Lambda = |e><e| is a projector: both moments are 1 on |e>
        ch = channel_pair(SIGMA_MINUS, 2.0, 3.0)[0]
        assert reversed_rate(ch, 0.0, EXCITED) == pytest.approx(3.0, abs=1e-14)

    def test_reversed_rate_superposition(self):
        # <Lambda^2> = 1/2 and ||A chi||^2 = 1/2 cancel
        ch = channel_pair(SIGMA_MINUS, 2.0, 3.0)[0]
        assert reversed_rate(ch, 0.0, SUPER) == pytest.approx(3.0, abs=1e-14)

    def test_reversed_rate_on_basis_state_of_projector_channel(self):
        m = build_eigenstate_jump_model([0.0, 1.0], {(0, 1): 0.4}, {(0, 1): 0.25})
        assert reversed_rate(m.channels[0], 0.0, EXCITED) == pytest.approx(0.25)

    def test_reversed_rate_impossible_jump(self):
        ch = channel_pair(SIGMA_MINUS, 2.0, 3.0)[0]
        with pytest.raises(NearZeroNorm):
            reversed_rate(ch, 0.0, GROUND)


class TestEta:
    def test_eigenvector_gives_zero(self):
        ch = channel_pair(SIGMA_MINUS, 2.0, 3.0)[0]
        assert eta(ch, EXCITED) == pytest.approx(0.0, abs=1e-14)

    def test_hand_value_superposition(self):
        # Var(|e><e|) = 1/4 and ||A chi||^4 = 1/4, so eta = -1 and the
        # nonthermal flux is ln 2
        ch = channel_pair(SIGMA_MINUS, 2.0, 3.0)[0]
        e = eta(ch, SUPER)
        assert e == pytest.approx(-1.0, abs=1e-12)
        assert math.log(1.0 - e) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_always_nonpositive_and_cross_identity(self):
        rng = np.random.default_rng(21)
        for _ in range(300):
            dim = int(rng.integers(2, 5))
            op = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            gamma, gamma_b = rng.uniform(0.2, 3.0, size=2)
            ch = Channel(op, Schedule.constant(gamma), Schedule.constant(gamma_b), 0)
            chi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
            chi /= math.sqrt(norm_sq(chi))
            if norm_sq(op @ chi) < 1e-6:
                continue
            e = eta(ch, chi)
            assert e <= 1e-12
            r_d = direct_rate(ch, 0.0, chi)
            r_r = reversed_rate(ch, 0.0, chi)
            assert e == pytest.approx(1.0 - gamma * r_r / (gamma_b * r_d), abs=1e-10)


class TestVar1:
    def test_eigenvector(self):
        assert var1_state(PROJ_E, EXCITED) == pytest.approx(0.0, abs=1e-14)

    def test_projector_on_superposition(self):
        assert var1_state(PROJ_E, SUPER) == pytest.approx(0.25, abs=1e-14)

    def test_identity(self):
        rng = np.random.default_rng(22)
        psi = rng.normal(size=3) + 1j * rng.normal(size=3)
        psi /= math.sqrt(norm_sq(psi))
        assert var1_state(np.eye(3, dtype=complex), psi) == pytest.approx(0.0, abs=1e-12)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError, match="Hermitian"):
            var1_state(SIGMA_MINUS, SUPER)


class TestJumpFlux:
    def test_thermal_pair_from_excited(self):
        # from an eigenstate the flux is purely thermal: ln(gamma_b / gamma)
        m = pure_decay_model(2.0, 3.0)
        from qtraj.trajectory import JumpEvent
        jump = JumpEvent(time=0.0, channel=0, pre_state=EXCITED.copy(),
                         post_state=GROUND.copy(), step=0)
        ledger = jump_flux(EntropyLedger(), jump, m)
        entry = ledger.per_jump[0]
        assert entry.thermal == pytest.approx(math.log(3.0 / 2.0), abs=1e-12)
        assert entry.nonthermal == pytest.approx(0.0, abs=1e-12)
        assert ledger.jump_flux == pytest.approx(math.log(3.0 / 2.0), abs=1e-12)

    def test_superposition_all_nonthermal(self):
        # gamma == gamma_b: R_D = gamma/2, R_R = gamma, so the flux is ln 2
        m = pure_decay_model(2.0, 2.0)
        from qtraj.trajectory import JumpEvent
        jump = JumpEvent(time=0.0, channel=0, pre_state=SUPER.copy(),
                         post_state=GROUND.copy(), step=0)
        ledger = jump_flux(EntropyLedger(), jump, m)
        entry = ledger.per_jump[0]
        assert entry.R_D == pytest.approx(1.0, abs=1e-14)
        assert entry.R_R == pytest.approx(2.0, abs=1e-14)
        assert entry.thermal == pytest.approx(0.0, abs=1e-14)
        assert ledger.jump_flux == pytest.approx(math.log(2.0), abs=1e-12)

    def test_decomposition_identity_random(self):
        rng = np.random.default_rng(23)
        from qtraj.trajectory import JumpEvent
        for _ in range(200):
            op = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            gamma, gamma_b = rng.uniform(0.2, 3.0, size=2)
            m = LindbladModel(2, (), channel_pair(op, gamma, gamma_b))
            chi = rng.normal(size=2) + 1j * rng.normal(size=2)
            chi /= math.sqrt(norm_sq(chi))
            if norm_sq(op @ chi) < 1e-6:
                continue
            ledger = jump_flux(EntropyLedger(), JumpEvent(0.0, 0, chi, chi, 0), m)
            e = ledger.per_jump[0]
            assert e.thermal + e.nonthermal == pytest.approx(
                -math.log(e.R_D / e.R_R), abs=1e-10)


class TestDriftFlux:
    def test_unitary_is_zero(self):
        m = LindbladModel(2, ((Schedule.constant(0.02), SIGMA_X),), ())
        fwd = forward_simulate(m, SUPER.copy(), 1.0, 200.0, philox_stream(24, 0))
        bwd = backward_construct(m, fwd)
        assert drift_flux_exact(fwd.drifts[0], bwd.drifts[0]) == pytest.approx(
            0.0, abs=1e-10)

    def test_pure_decay_forward_norm(self):
        gamma = 0.01
        m = pure_decay_model(gamma, 0.0)
        fwd = forward_simulate(m, EXCITED.copy(), 1.0, 300.0, philox_stream(25, 3),
                               want_kappa=False)
        if fwd.n_jumps == 0:
            seg = fwd.drifts[0]
            assert seg.log_survival == pytest.approx(-gamma * 300.0, rel=1e-9)

    def test_interval_mismatch(self):
        from qtraj.trajectory import DriftSegment
        a = DriftSegment(0.0, 5.0, SUPER, SUPER, -0.1)
        b = DriftSegment(0.0, 4.0, SUPER, SUPER, -0.1)
        with pytest.raises(ValueError, match="mismatch"):
            drift_flux_exact(a, b)


class TestAppendixExpansion:
    def test_i1_constant(self):
        m = pure_decay_model(0.7, 0.0)
        out = appendix_I1(m, 0.0, 0.02)
        assert np.allclose(out, 0.7 * 0.02 * PROJ_E, atol=1e-15)

    def test_i1_zero_channels(self):
        m = LindbladModel(2, ((Schedule.constant(1.0), SIGMA_X),), ())
        assert np.max(np.abs(appendix_I1(m, 0.0, 0.1))) == 0.0

    def test_i1_exp_decay_closed_form(self):
        g, tau, t, dt = 0.8, 2.0, 0.3, 0.005
        m = LindbladModel(2, (), (
            Channel(SIGMA_MINUS, Schedule.exp_decay(g, tau), Schedule.constant(0.0), 1),
            Channel(SIGMA_PLUS, Schedule.constant(0.0), Schedule.exp_decay(g, tau), 0)))
        exact = g * tau * (math.exp(-t / tau) - math.exp(-(t + dt) / tau))
        out = appendix_I1(m, t, dt)
        assert abs(out[1, 1].real - exact) < 1e-10
        assert abs(out[0, 0]) == 0.0

    def test_i2_reduces_to_square_for_constant(self):
        m = pure_decay_model(0.7, 0.0)
        i1 = appendix_I1(m, 0.0, 0.02)
        i2 = appendix_I2(m, 0.0, 0.02)
        assert np.allclose(i2, i1 @ i1, atol=1e-16)

    def test_var1_expansion_hand_value(self):
        # constant Omega = gamma |e><e| on the superposition: gamma^2 dt^2 / 4
        gamma, dt = 1.0, 0.01
        m = pure_decay_model(gamma, 0.0)
        got = appendix_var1_expansion(m, 0.0, dt, SUPER)
        assert got == pytest.approx((gamma * dt) ** 2 / 4.0, rel=1e-12)

    def test_var1_expansion_eigenvector(self):
        m = pure_decay_model(1.0, 0.0)
        assert appendix_var1_expansion(m, 0.0, 0.01, EXCITED) == pytest.approx(
            0.0, abs=1e-18)

    def test_order_of_accuracy(self):
        # exact Var(U^dag U) minus the expansion shrinks ~8x per dt halving
        gamma = 1.0
        m = pure_decay_model(gamma, 0.0)
        errs = []
        for dt in (1e-2, 5e-3, 2.5e-3):
            x = gamma * dt
            exact = 0.5 * (1 + math.exp(-2 * x)) - 0.25 * (1 + math.exp(-x)) ** 2
            errs.append(abs(exact - appendix_var1_expansion(m, 0.0, dt, SUPER)))
        for a, b in zip(errs, errs[1:]):
            assert 6.0 <= a / b <= 10.0


class TestDriftKappa:
    def test_unitary_zero(self):
        m = LindbladModel(2, ((Schedule.constant(0.3), SIGMA_X),), ())
        assert drift_kappa(m, 0.0, 0.05, SUPER) == pytest.approx(0.0, abs=1e-13)

    def test_small_dt_hand_value(self):
        gamma, dt = 1.0, 1e-3
        m = pure_decay_model(gamma, 0.0)
        got = drift_kappa(m, 0.0, dt, SUPER)
        assert got == pytest.approx(-(gamma * dt) ** 2 / 4.0, rel=3 * gamma * dt)

    def test_eigenstate_basis_zero(self):
        m = build_eigenstate_jump_model([0.0, 1.0, 2.35],
                                        {(0, 1): 0.3, (0, 2): 0.2, (1, 2): 0.1},
                                        {(0, 1): 0.05})
        psi = np.zeros(3, dtype=complex)
        psi[1] = 1.0
        assert drift_kappa(m, 0.0, 0.01, psi) == pytest.approx(0.0, abs=1e-15)

    def test_kappa_second_order_while_jump_term_is_not(self):
        # per-step kappa scales like dt^2; the jump nonthermal flux does not
        gamma = 1.0
        m = pure_decay_model(gamma, 0.0)
        ln_nt = math.log(1.0 - eta(m.channels[0], SUPER))
        kappas = [abs(drift_kappa(m, 0.0, dt, SUPER)) for dt in (2e-2, 1e-2, 5e-3)]
        for a, b in zip(kappas, kappas[1:]):
            assert 3.3 <= a / b <= 4.7
        assert ln_nt == pytest.approx(math.log(2.0), abs=1e-12)


class TestLedger:
    def test_zero_jump_unitary_all_zero(self):
        m = LindbladModel(2, ((Schedule.constant(0.015), SIGMA_X),), ())
        fwd = forward_simulate(m, SUPER.copy(), 1.0, 300.0, philox_stream(26, 0))
        bwd = backward_construct(m, fwd)
        ledger = ledger_for_trajectory(fwd, bwd, m)
        assert ledger.jump_flux == 0.0
        assert ledger.drift_flux == pytest.approx(0.0, abs=1e-10)
        assert ledger.total_flux == pytest.approx(0.0, abs=1e-10)

    def test_eigenstate_fluxes_are_thermal(self):
        m = build_eigenstate_jump_model(
            [0.0, 1.0e-3, 2.35e-3],
            {(0, 1): 1.6e-3, (0, 2): 1.1e-3, (1, 2): 1.4e-3},
            {(0, 1): 9.0e-4, (0, 2): 4.0e-4, (1, 2): 6.0e-4})
        psi0 = np.zeros(3, dtype=complex)
        psi0[1] = 1.0
        checked = 0
        for i in range(40):
            fwd = forward_simulate(m, psi0, 1.0, 1250.0, philox_stream(27, i))
            if not fwd.n_jumps:
                continue
            bwd = backward_construct(m, fwd)
            ledger = ledger_for_trajectory(fwd, bwd, m)
            checked += 1
            assert ledger.nonthermal_jump_total == pytest.approx(0.0, abs=1e-10)
            expected = sum(
                math.log(float(m.channels[j.channel].backward_rate(0.0))
                         / float(m.channels[j.channel].rate(0.0)))
                for j in fwd.jumps)
            assert ledger.thermal_total == pytest.approx(expected, abs=1e-10)
            assert ledger.jump_flux == pytest.approx(expected, abs=1e-10)
            assert ledger.drift_flux == pytest.approx(0.0, abs=1e-9)
        assert checked > 10

    def test_drift_flux_matches_segmentwise_helper(self):
        m = LindbladModel(2, ((Schedule.constant(0.002), SIGMA_X),),
                          channel_pair(SIGMA_MINUS, 0.004, 0.002))
        fwd = forward_simulate(m, SUPER.copy(), 1.0, 900.0, philox_stream(28, 5))
        bwd = backward_construct(m, fwd)
        ledger = ledger_for_trajectory(fwd, bwd, m)
        nj = fwd.n_jumps
        total = sum(drift_flux_exact(fwd.drifts[k], bwd.drifts[nj - k])
                    for k in range(nj + 1))
        assert ledger.drift_flux == pytest.approx(total, abs=1e-12)

    def test_single_jump_superposition_contains_ln2(self):
        # force a jump from the exact superposition by building the records
        # around a handmade trajectory: see the estimator oracle test for the
        # full arithmetic cross-check
        m = pure_decay_model(0.05, 0.05)
        fwd = None
        for i in range(300):
            cand = forward_simulate(m, SUPER.copy(), 1.0, 40.0, philox_stream(29, i))
            if cand.n_jumps == 1 and cand.jumps[0].step == 0:
                fwd = cand
                break
        assert fwd is not None
        bwd = backward_construct(m, fwd)
        ledger = ledger_for_trajectory(fwd, bwd, m)
        entry = ledger.per_jump[0]
        # jump fired from the untouched superposition at the first step
        assert entry.nonthermal == pytest.approx(math.log(2.0), abs=1e-12)
        assert entry.thermal == pytest.approx(0.0, abs=1e-12)

    def test_sigma_reduces_to_flux_difference(self):
        m = pure_decay_model(0.01, 0.005)
        fwd = forward_simulate(m, SUPER.copy(), 1.0, 400.0, philox_stream(30, 1))
        bwd = backward_construct(m, fwd)
        ledger = ledger_for_trajectory(fwd, bwd, m)
        assert sigma_with_boundary_densities(ledger, 0.7, 0.7) == pytest.approx(
            -ledger.total_flux, abs=1e-12)

    def test_zero_jump_unitary_sigma_zero(self):
        m = LindbladModel(2, ((Schedule.constant(0.015), SIGMA_X),), ())
        fwd = forward_simulate(m, SUPER.copy(), 1.0, 300.0, philox_stream(31, 0))
        bwd = backward_construct(m, fwd)
        ledger = ledger_for_trajectory(fwd, bwd, m)
        assert sigma_with_boundary_densities(ledger, 0.0, 0.0) == pytest.approx(
            0.0, abs=1e-10)

    def test_sigma_consistent_with_weight_and_path_ratio(self):
        # with the reversed drift norms taken on the forward exit states (the
        # weight's own convention), exp(-sigma) factorizes exactly into the
        # pair weight times the jump/drift path-probability ratio
        m = LindbladModel(2, ((Schedule.constant(0.2), SIGMA_X),),
                          channel_pair(SIGMA_MINUS, 0.03, 0.01))
        found = 0
        for i in range(400):
            fwd = forward_simulate(m, sample_initial_state(philox_stream(32, 2 * i)),
                                   1.0, 60.0, philox_stream(32, 2 * i + 1))
            if fwd.n_jumps != 1:
                continue
            found += 1
            bwd = backward_construct(m, fwd)
            ledger = ledger_for_trajectory(fwd, bwd, m, mode="exit")
            sigma = sigma_with_boundary_densities(ledger, 0.0, 0.0)
            w = trajectory_weight(fwd, bwd, m)

            # independent path-probability ratio of the constructed backward
            # trajectory over the forward one (rates at the step midpoints)
            nj = fwd.n_jumps
            log_ratio = 0.0
            for k, jf in enumerate(fwd.jumps):
                jb = bwd.jumps[nj - 1 - k]
                t_mid = jf.time + 0.5
                log_ratio += math.log(direct_rate(m.channels[jb.channel], t_mid,
                                                  jb.pre_state))
                log_ratio -= math.log(direct_rate(m.channels[jf.channel], t_mid,
                                                  jf.pre_state))
            for k in range(nj + 1):
                log_ratio += bwd.drifts[nj - k].log_survival
                log_ratio -= fwd.drifts[k].log_survival
            assert math.exp(-sigma) == pytest.approx(w * math.exp(log_ratio),
                                                     rel=1e-10)
            if found > 5:
                break
        assert found >= 1

    def test_modes_differ_only_in_drift(self):
        m = LindbladModel(2, ((Schedule.constant(0.1), SIGMA_X),),
                          channel_pair(SIGMA_MINUS, 0.02, 0.01))
        fwd = forward_simulate(m, sample_initial_state(philox_stream(33, 0)),
                               1.0, 300.0, philox_stream(33, 1))
        bwd = backward_construct(m, fwd)
        ledgers = {mode: ledger_for_trajectory(fwd, bwd, m, mode=mode)
                   for mode in ("backward", "paper", "exit")}
        assert len({round(l.jump_flux, 14) for l in ledgers.values()}) == 1
        if fwd.n_jumps:
            fluxes = {mode: l.drift_flux for mode, l in ledgers.items()}
            assert fluxes["backward"] != fluxes["paper"] or fwd.n_jumps == 0


def test_effective_hamiltonian_antihermitian_part_negative():
    m = pure_decay_model(0.5, 0.2)
    h_eff = effective_hamiltonian(m, 0.0)
    anti = (h_eff - h_eff.conj().T) / 2j  # = -Omega/2, must be <= 0
    assert np.max(np.linalg.eigvalsh(anti)) <= 1e-14
