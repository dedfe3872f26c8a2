import itertools
import math

import numpy as np
import pytest

from irsplan.channel import (Beamformer, ChannelDraw, draw_channel, optimal_beamformer,
                             optimal_snr_closed_form, optimal_snr_samples, snr,
                             ula_response)
from irsplan.errors import DegenerateChannelError
from irsplan.scenario import LinkClass, scenario_overrides

LOS = LinkClass(True, True)


def small_array_scenario(empty_scenario, m=2, n=2):
    return scenario_overrides(empty_scenario, n_irs_elements=m, n_antennas=n)


def test_same_seed_is_bit_identical(empty_scenario):
    a = draw_channel([20.0, 12.0], empty_scenario, LOS, seed=123)
    b = draw_channel([20.0, 12.0], empty_scenario, LOS, seed=123)
    assert np.array_equal(a.fading_irs, b.fading_irs)
    assert np.array_equal(a.fading_direct, b.fading_direct)
    assert snr(a, optimal_beamformer(a), empty_scenario) == snr(
        b, optimal_beamformer(b), empty_scenario
    )


def test_array_responses_are_unit_norm(empty_scenario):
    d = draw_channel([20.0, 12.0], empty_scenario, LOS, seed=5)
    assert np.linalg.norm(d.irs_response) == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.norm(d.ap_response) == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.abs(np.abs(d.irs_response) - 1 / math.sqrt(64)) < 1e-12)


def test_no_irs_reduces_to_maximum_ratio_combining(empty_scenario):
    sc = scenario_overrides(empty_scenario, n_irs_elements=0)
    d = draw_channel([20.0, 12.0], sc, LOS, seed=9)
    assert d.fading_irs.size == 0
    bf = optimal_beamformer(d)
    mrc = d.fading_direct / np.linalg.norm(d.fading_direct)
    assert np.allclose(bf.combiner, mrc, atol=1e-12)
    # SNR reduces to the direct term rho * d^-mu * ||h~||^2 * p/sigma^2
    expected = (sc.ref_gain * d.d_ap ** (-2.0)
                * float(np.sum(np.abs(d.fading_direct) ** 2)) * sc.snr_scale)
    assert snr(d, bf, sc) == pytest.approx(expected, rel=1e-12)
    assert optimal_snr_closed_form(d, d.d_ap, d.d_irs, sc) == pytest.approx(
        expected, rel=1e-12
    )


def test_fading_is_unit_variance(empty_scenario):
    # law of large numbers: mean ||h~_d||^2 / N over 10k draws -> 1.0 +- 0.05
    sc = scenario_overrides(empty_scenario, n_irs_elements=0, n_antennas=4)
    samples = optimal_snr_samples([25.0, 15.0], sc, LOS, n_draws=10_000, seed=1)
    d = draw_channel([25.0, 15.0], sc, LOS, seed=1)
    per_unit = sc.ref_gain * d.d_ap ** (-2.0) * sc.snr_scale
    mean_h2_over_n = float(np.mean(samples)) / per_unit / sc.n_antennas
    assert abs(mean_h2_over_n - 1.0) < 0.05


def test_closed_form_matches_beamformed_snr(empty_scenario):
    for seed in range(10):
        d = draw_channel([18.0, 9.0], empty_scenario, LinkClass(True, False), seed=seed)
        via_bf = snr(d, optimal_beamformer(d), empty_scenario)
        closed = optimal_snr_closed_form(d, d.d_ap, d.d_irs, empty_scenario)
        assert via_bf == pytest.approx(closed, rel=1e-9)


def test_beamformer_beats_exhaustive_phase_grid(empty_scenario):
    sc = small_array_scenario(empty_scenario, m=2, n=1)
    levels = np.arange(64) * 2 * math.pi / 64
    for seed in (42, 43):
        d = draw_channel([20.0, 12.0], sc, LOS, seed=seed)
        opt = snr(d, optimal_beamformer(d), sc)
        best = 0.0
        for phases in itertools.product(levels, repeat=2):
            bf = Beamformer(phases=np.array(phases),
                            combiner=optimal_beamformer(d).combiner,
                            global_phase=0.0)
            # matched filter for this phase choice: renormalize by hand
            from irsplan.channel import _effective_channel
            h_eff = _effective_channel(d, np.array(phases), 0.0)
            best = max(best, float(np.linalg.norm(h_eff) ** 2) * sc.snr_scale)
        assert opt >= best * (1 - 1e-9)


def test_global_phase_leaves_snr_unchanged(empty_scenario):
    d = draw_channel([20.0, 12.0], empty_scenario, LOS, seed=11)
    bf = optimal_beamformer(d)
    shifted = Beamformer(phases=bf.phases, combiner=bf.combiner,
                         global_phase=bf.global_phase + 1.2345)
    # |.|^2 removes a phase common to the whole effective channel only when
    # the combiner is re-matched; compare effective-channel magnitudes instead
    from irsplan.channel import _effective_channel
    h0 = _effective_channel(d, bf.phases, bf.global_phase)
    h1 = _effective_channel(d, np.mod(bf.phases + 0.777, 2 * math.pi),
                            bf.global_phase - 0.777)
    assert np.linalg.norm(h0) == pytest.approx(np.linalg.norm(h1), rel=1e-12)


def test_zero_transmit_power_gives_zero_snr(empty_scenario):
    sc = scenario_overrides(empty_scenario, tx_power=0.0)
    d = draw_channel([20.0, 12.0], sc, LOS, seed=2)
    assert snr(d, optimal_beamformer(d), sc) == 0.0


def test_snr_is_quadratic_in_combiner(empty_scenario):
    d = draw_channel([20.0, 12.0], empty_scenario, LOS, seed=3)
    bf = optimal_beamformer(d)
    half = Beamformer(phases=bf.phases, combiner=0.5 * bf.combiner,
                      global_phase=bf.global_phase)
    assert snr(d, half, empty_scenario) == pytest.approx(
        0.25 * snr(d, bf, empty_scenario), rel=1e-12
    )


def test_closed_form_monotone_decreasing_in_distances(empty_scenario):
    d = draw_channel([20.0, 12.0], empty_scenario, LOS, seed=4)
    base = optimal_snr_closed_form(d, 10.0, 10.0, empty_scenario)
    assert optimal_snr_closed_form(d, 12.0, 10.0, empty_scenario) < base
    assert optimal_snr_closed_form(d, 10.0, 12.0, empty_scenario) < base


def test_batch_samples_match_single_draws(empty_scenario):
    samples = optimal_snr_samples([20.0, 12.0], empty_scenario, LOS, n_draws=1, seed=77)
    d = draw_channel([20.0, 12.0], empty_scenario, LOS, seed=77)
    assert samples[0] == pytest.approx(
        optimal_snr_closed_form(d, d.d_ap, d.d_irs, empty_scenario), rel=1e-12
    )


def test_degenerate_all_zero_channel_raises(empty_scenario):
    d = draw_channel([20.0, 12.0], empty_scenario, LOS, seed=5)
    dead = ChannelDraw(
        fading_irs=np.zeros(d.n_irs_elements, dtype=complex),
        fading_direct=np.zeros(d.n_antennas, dtype=complex),
        irs_response=d.irs_response, ap_response=d.ap_response,
        gamma=d.gamma, ref_gain=d.ref_gain, d_ap=d.d_ap, d_irs=d.d_irs,
        exp_ap=d.exp_ap, exp_irs=d.exp_irs,
    )
    with pytest.raises(DegenerateChannelError):
        optimal_beamformer(dead)


def test_nlos_exponent_drives_path_scaling(empty_scenario):
    d_los = draw_channel([20.0, 12.0], empty_scenario, LinkClass(True, True), seed=6)
    d_nlos = draw_channel([20.0, 12.0], empty_scenario, LinkClass(False, True), seed=6)
    assert d_nlos.exp_ap == 4.5 and d_los.exp_ap == 2.0
    assert d_nlos.path_gain_direct < d_los.path_gain_direct


def test_ula_response_degenerate_sizes():
    assert ula_response(0, 0.3).size == 0
    assert ula_response(1, 0.3) == pytest.approx(1.0)
