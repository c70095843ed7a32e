from dataclasses import replace

import numpy as np
import pytest

from src.algorithms import (
    EnergySplittingAlgorithm,
    ModeSwitchingAlgorithm,
    SolveOptions,
    TimeSwitchingAlgorithm,
)
from src.channel import ChannelSet
from src.config import BINARY_TOL, dbm_to_watts
from src.driver import (
    solve_broadcast,
    solve_es,
    solve_ms,
    solve_reflecting_only,
    solve_scheme,
    solve_ts,
)
from src.errors import DomainError
from src.model import ProtocolKind, SystemSpec, Traffic


@pytest.fixture
def tiny_spec() -> SystemSpec:
    return SystemSpec(n_tx=2, n_user_t=1, n_user_r=1, n_streams=(1, 1), m_elements=2)


@pytest.fixture
def tiny_channels(tiny_spec, channel_factory) -> ChannelSet:
    return channel_factory(tiny_spec, 21)


AMP_STEPS = 32
PHASE_STEPS = 64
SHARE_STEPS = 128
TAU_STEPS = 64


@pytest.fixture
def scalar_spec() -> SystemSpec:
    return SystemSpec(
        n_tx=1,
        n_user_t=1,
        n_user_r=1,
        n_streams=(1, 1),
        m_elements=2,
        power_budget=1.0,
        noise_power=0.1,
    )


@pytest.fixture
def scalar_channels() -> ChannelSet:
    """Single-antenna links where the transmit side is clearly the stronger one."""
    return ChannelSet(
        f=np.array([[0.9 + 0.3j], [0.4 - 0.7j]]),
        h_t=2.0 * np.array([[0.8 - 0.2j, 0.5 + 0.6j]]),
        h_r=np.array([[0.6 + 0.1j, -0.3 + 0.5j]]),
    )


def cascade_gain(h: np.ndarray, f: np.ndarray) -> np.ndarray:
    """|sum_m sqrt(alpha_m) e^{j phi_m} h_m f_m|^2 on the amplitude grid, best grid phase."""
    cascade = h[0] * f[:, 0]
    amp = np.sqrt(np.arange(AMP_STEPS + 1) / AMP_STEPS)
    turn = np.exp(2j * np.pi * np.arange(PHASE_STEPS) / PHASE_STEPS)
    field = cascade[0] * amp[:, None, None] + cascade[1] * amp[None, :, None] * turn
    return np.max(np.abs(field) ** 2, axis=2)


def energy_split_grid_optimum(spec: SystemSpec, channels: ChannelSet) -> float:
    gain_t = cascade_gain(channels.h_t, channels.f)[..., None]
    # alpha_r = 1 - alpha_t walks the same grid backwards
    gain_r = cascade_gain(channels.h_r, channels.f)[::-1, ::-1, None]
    share = np.linspace(0.0, 1.0, SHARE_STEPS + 1)
    p_t, p_r = share * spec.power_budget, (1.0 - share) * spec.power_budget
    noise = spec.noise_power
    rate_t = np.log2(1.0 + gain_t * p_t / (gain_t * p_r + noise))
    rate_r = np.log2(1.0 + gain_r * p_r / (gain_r * p_t + noise))
    return float(np.max(spec.weights[0] * rate_t + spec.weights[1] * rate_r))


def time_split_grid_optimum(spec: SystemSpec, channels: ChannelSet) -> float:
    gain_t = cascade_gain(channels.h_t, channels.f)[-1, -1]
    gain_r = cascade_gain(channels.h_r, channels.f)[-1, -1]
    snr = spec.power_budget / spec.noise_power
    ends = max(
        spec.weights[0] * np.log2(1.0 + gain_t * snr),
        spec.weights[1] * np.log2(1.0 + gain_r * snr),
    )
    tau = (np.arange(1, TAU_STEPS) / TAU_STEPS)[:, None]
    share = np.linspace(0.0, 1.0, SHARE_STEPS + 1)[None, :]
    rate_t = tau * np.log2(1.0 + gain_t * share * snr / tau)
    rate_r = (1.0 - tau) * np.log2(1.0 + gain_r * (1.0 - share) * snr / (1.0 - tau))
    inner = np.max(spec.weights[0] * rate_t + spec.weights[1] * rate_r)
    return float(max(ends, inner))


def ensemble_mean(label, spec, channel_factory, seeds, options) -> float:
    return float(
        np.mean(
            [
                solve_scheme(label, spec, channel_factory(spec, seed), options).final_wsr
                for seed in seeds
            ]
        )
    )


class TestEnergySplitting:
    def test_zero_channels(self, tiny_spec, fast_options):
        zeros = ChannelSet(
            f=np.zeros((2, 2), dtype=complex),
            h_t=np.zeros((1, 2), dtype=complex),
            h_r=np.zeros((1, 2), dtype=complex),
        )
        report = solve_es(tiny_spec, zeros, fast_options)
        assert report.final_wsr == 0.0
        assert report.iterations <= 1

    def test_history_is_monotone(self, small_spec, small_channels, fast_options):
        report = solve_es(small_spec, small_channels, fast_options)
        assert report.is_monotone()
        assert report.final_wsr == pytest.approx(report.wsr_history[-1])
        assert report.final_wsr > report.wsr_history[0] - 1e-9
        assert report.constraint_residuals["energy"] <= 1e-8
        assert report.constraint_residuals["power"] <= 1e-8

    def test_rates_add_up(self, small_spec, small_channels, fast_options):
        report = solve_es(small_spec, small_channels, fast_options)
        rate_t, rate_r = report.per_user_rates
        weighted = small_spec.weights[0] * rate_t + small_spec.weights[1] * rate_r
        assert report.final_wsr == pytest.approx(weighted, rel=1e-12)

    def test_deterministic(self, tiny_spec, tiny_channels, fast_options):
        first = solve_es(tiny_spec, tiny_channels, fast_options)
        second = solve_es(tiny_spec, tiny_channels, fast_options)
        assert first.wsr_history == second.wsr_history

    def test_seeded_start(self, tiny_spec, tiny_channels, fast_options):
        report = solve_es(tiny_spec, tiny_channels, replace(fast_options, seed=5))
        assert report.is_monotone()
        assert report.final_wsr > 0.0


class TestModeSwitching:
    def test_amplitudes_are_binary(self, small_spec, small_channels, fast_options):
        report = solve_ms(small_spec, small_channels, fast_options)
        assert report.config.protocol is ProtocolKind.MS
        assert report.constraint_residuals["binary"] <= BINARY_TOL
        assert report.is_monotone()

    def test_starts_where_energy_splitting_starts(self, small_spec, small_channels):
        ms_star, ms_precoders = ModeSwitchingAlgorithm().initial_point(small_spec, small_channels)
        es_star, es_precoders = EnergySplittingAlgorithm().initial_point(
            small_spec, small_channels
        )
        np.testing.assert_allclose(ms_star.alpha("t"), 0.5)
        for side in ("t", "r"):
            np.testing.assert_allclose(ms_star.alpha(side), es_star.alpha(side))
            np.testing.assert_allclose(ms_star.phase(side), es_star.phase(side))
            np.testing.assert_allclose(ms_precoders.user(side), es_precoders.user(side))


class TestTimeSwitching:
    def test_full_weight_on_transmit_user(self, tiny_spec, tiny_channels, fast_options):
        spec = replace(tiny_spec, weights=(1.0, 0.0))
        report = solve_ts(spec, tiny_channels, fast_options)
        assert report.tau_star == pytest.approx(1.0)
        assert report.per_user_rates[1] == 0.0

    def test_mirrored_instance_is_symmetric(self, tiny_spec, tiny_channels, fast_options):
        options = replace(fast_options, tau_refine_rounds=0)
        curve = solve_ts(tiny_spec, tiny_channels, options).tau_curve
        mirrored = solve_ts(tiny_spec.mirrored(), tiny_channels.mirrored(), options).tau_curve
        for tau in options.tau_grid():
            assert curve[float(tau)] == pytest.approx(mirrored[float(1.0 - tau)], rel=1e-3)

    def test_curve_covers_grid(self, tiny_spec, tiny_channels, fast_options):
        report = solve_ts(tiny_spec, tiny_channels, fast_options)
        assert set(map(float, fast_options.tau_grid())) <= set(report.tau_curve)
        assert report.final_wsr == pytest.approx(max(report.tau_curve.values()))
        assert report.constraint_residuals["unit_modulus"] <= 1e-12

    def test_fixed_split_history_is_monotone(self, small_spec, small_channels, fast_options):
        outcome = TimeSwitchingAlgorithm().solve_fixed_tau(
            small_spec, small_channels, 0.4, fast_options
        )
        history = np.asarray(outcome.history)
        assert np.all(np.diff(history) >= -1e-6 * np.abs(history[:-1]))


class TestReflectingOnly:
    def test_transmit_user_gets_nothing(self, small_spec, small_channels, fast_options):
        report = solve_reflecting_only(small_spec, small_channels, fast_options)
        assert report.per_user_rates[0] == 0.0
        assert report.label == "RO"
        assert report.is_monotone()

    def test_matches_single_slot_time_switching(self, tiny_spec, tiny_channels, fast_options):
        spec = replace(tiny_spec, weights=(0.0, 1.0))
        baseline = solve_reflecting_only(spec, tiny_channels, fast_options)
        slot = TimeSwitchingAlgorithm().solve_fixed_tau(spec, tiny_channels, 0.0, fast_options)
        assert baseline.final_wsr == pytest.approx(slot.wsr, rel=0.02)


class TestBroadcast:
    def test_requires_broadcast_traffic(self, tiny_spec, tiny_channels):
        with pytest.raises(DomainError):
            solve_broadcast(tiny_spec, tiny_channels)

    def test_shared_precoder(self, tiny_spec, tiny_channels, fast_options):
        spec = replace(tiny_spec, traffic=Traffic.BROADCAST)
        report = solve_broadcast(spec, tiny_channels, fast_options, ProtocolKind.ES)
        assert report.precoders.shared
        assert report.is_monotone()

    def test_time_switching_matches_unicast(self, tiny_spec, tiny_channels, fast_options):
        spec = replace(tiny_spec, traffic=Traffic.BROADCAST)
        broadcast = solve_broadcast(spec, tiny_channels, fast_options, ProtocolKind.TS)
        unicast = solve_ts(tiny_spec, tiny_channels, fast_options)
        assert broadcast.final_wsr == unicast.final_wsr
        assert broadcast.tau_star == unicast.tau_star

    def test_identical_users(self, fast_options):
        spec = SystemSpec(
            n_tx=2,
            n_user_t=1,
            n_user_r=1,
            n_streams=(1, 1),
            m_elements=2,
            traffic=Traffic.BROADCAST,
        )
        rng = np.random.default_rng(4)
        f = 1e-3 * (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
        h = 1e-3 * (rng.standard_normal((1, 2)) + 1j * rng.standard_normal((1, 2)))
        report = solve_broadcast(spec, ChannelSet(f=f, h_t=h, h_r=h.copy()), fast_options)
        rate_t, rate_r = report.per_user_rates
        assert report.final_wsr == pytest.approx(0.5 * (rate_t + rate_r))
        assert report.final_wsr <= max(rate_t, rate_r) + 1e-12


class TestDispatch:
    def test_unknown_scheme(self, tiny_spec, tiny_channels):
        with pytest.raises(DomainError):
            solve_scheme("XX", tiny_spec, tiny_channels)

    def test_dimension_mismatch(self, tiny_spec, small_channels):
        with pytest.raises(DomainError):
            solve_scheme("ES", tiny_spec, small_channels)

    def test_invalid_options(self):
        with pytest.raises(DomainError):
            SolveOptions(tau_grid_step=0.3)

    def test_unknown_solver_option(self):
        with pytest.raises(DomainError):
            SolveOptions(solver="nope")

    def test_labels_are_case_insensitive(self, tiny_spec, tiny_channels, fast_options):
        assert solve_scheme("ro", tiny_spec, tiny_channels, fast_options).label == "RO"


class TestExhaustiveGrid:
    def test_energy_splitting_matches_grid(self, scalar_spec, scalar_channels):
        report = solve_es(scalar_spec, scalar_channels)
        best = energy_split_grid_optimum(scalar_spec, scalar_channels)
        assert report.final_wsr == pytest.approx(best, rel=0.02)

    def test_time_switching_matches_grid(self, scalar_spec, scalar_channels):
        report = solve_ts(scalar_spec, scalar_channels)
        best = time_split_grid_optimum(scalar_spec, scalar_channels)
        assert report.final_wsr == pytest.approx(best, rel=0.02)
        # equal weights: the whole frame goes to the stronger link
        assert report.tau_star == pytest.approx(1.0)


@pytest.mark.slow
class TestEnsemble:
    def test_mean_rate_grows_with_power(self, small_spec, channel_factory):
        options = SolveOptions(bcd_max_iter=20)
        for label in ("ES", "MS", "TS", "RO"):
            means = [
                ensemble_mean(
                    label,
                    replace(small_spec, power_budget=dbm_to_watts(p_dbm)),
                    channel_factory,
                    range(10),
                    options,
                )
                for p_dbm in (10.0, 20.0, 30.0)
            ]
            assert np.all(np.diff(means) > 0.0), (label, means)

    def test_time_switching_leads_at_high_power(self, small_spec, channel_factory):
        options = SolveOptions(bcd_max_iter=20)
        spec = replace(small_spec, power_budget=dbm_to_watts(30.0))
        ts = ensemble_mean("TS", spec, channel_factory, range(10), options)
        es = ensemble_mean("ES", spec, channel_factory, range(10), options)
        assert ts >= es

    def test_mean_rate_grows_with_elements(self, small_spec, channel_factory):
        options = SolveOptions(bcd_max_iter=20)
        means = [
            ensemble_mean(
                "TS", replace(small_spec, m_elements=m), channel_factory, range(10), options
            )
            for m in (4, 8, 12)
        ]
        assert np.all(np.diff(means) > 0.0), means

    def test_broadcast_favours_energy_splitting(self, small_spec, channel_factory):
        options = SolveOptions(bcd_max_iter=20)
        spec = replace(small_spec, traffic=Traffic.BROADCAST)
        es = ensemble_mean("ES", spec, channel_factory, range(10), options)
        ts = ensemble_mean("TS", spec, channel_factory, range(10), options)
        assert es >= ts

    def test_dominance_chain_on_average(self, small_spec, channel_factory):
        options = SolveOptions(bcd_max_iter=20)
        totals = {"ES": 0.0, "MS": 0.0, "RO": 0.0}
        for seed in range(10):
            channels = channel_factory(small_spec, 100 + seed)
            for label in totals:
                totals[label] += solve_scheme(label, small_spec, channels, options).final_wsr
        assert totals["RO"] <= totals["ES"] + 1e-6
        assert totals["MS"] <= totals["ES"] + 1e-6

    def test_monotone_over_seeds(self, small_spec, channel_factory):
        options = SolveOptions(bcd_max_iter=20)
        for seed in range(20):
            channels = channel_factory(small_spec, seed)
            for label in ("ES", "MS", "TS"):
                report = solve_scheme(label, small_spec, channels, options)
                assert report.is_monotone()
