import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.channel import (
    AntennaCounts,
    FadingParams,
    ScenarioGeometry,
    build_scenario,
    path_loss,
    sample_rician,
    steering_vector,
)
from src.config import REFERENCE_DISTANCE
from src.errors import DomainError


class TestPathLoss:
    def test_unit_distance_gives_reference_gain(self):
        params = FadingParams(pathloss_ref_gain=1e-3, pathloss_exponent_ris=2.2)
        assert path_loss(1.0, params) == pytest.approx(1e-3, rel=1e-15)

    @given(beta=st.floats(min_value=0.1, max_value=6.0))
    def test_reference_distance_identity(self, beta):
        params = FadingParams(pathloss_ref_gain=1e-3, pathloss_exponent_ris=beta)
        assert path_loss(REFERENCE_DISTANCE, params) == pytest.approx(1e-3, rel=1e-12)

    def test_thirty_metres(self):
        params = FadingParams(pathloss_ref_gain=1e-3, pathloss_exponent_ris=2.2)
        expected = 1e-3 * math.exp(-2.2 * math.log(30.0))
        assert path_loss(30.0, params) == pytest.approx(expected, rel=1e-12)
        assert path_loss(30.0, params) == pytest.approx(5.6277e-07, rel=1e-3)

    @pytest.mark.parametrize("distance", [0.0, -1.0])
    def test_non_positive_distance_rejected(self, distance):
        with pytest.raises(DomainError):
            path_loss(distance, FadingParams())


class TestSteeringVector:
    def test_broadside_is_all_ones(self):
        np.testing.assert_allclose(steering_vector(4, 0.0), np.ones(4))

    @given(angle=st.floats(min_value=-math.pi, max_value=math.pi))
    def test_norm_is_sqrt_n(self, angle):
        assert np.linalg.norm(steering_vector(4, angle)) == pytest.approx(2.0)

    def test_endfire_alternates(self):
        np.testing.assert_allclose(steering_vector(2, math.pi / 2), [1.0, -1.0], atol=1e-12)

    def test_zero_elements_rejected(self):
        with pytest.raises(DomainError):
            steering_vector(0, 0.3)


class TestSampleRician:
    def test_los_limit(self):
        a, b = steering_vector(3, 0.4), steering_vector(2, -0.7)
        h = sample_rician(3, 2, a, b, 1e12, np.random.default_rng(0))
        np.testing.assert_allclose(h, np.outer(a, b.conj()), atol=1e-5)

    def test_same_seed_same_matrix(self):
        a, b = steering_vector(4, 0.1), steering_vector(3, 0.2)
        h1 = sample_rician(4, 3, a, b, 3.0, np.random.default_rng(11))
        h2 = sample_rician(4, 3, a, b, 3.0, np.random.default_rng(11))
        np.testing.assert_array_equal(h1, h2)

    def test_rayleigh_unit_variance(self):
        rng = np.random.default_rng(5)
        one = np.ones(1)
        samples = np.array([sample_rician(1, 1, one, one, 0.0, rng)[0, 0] for _ in range(100_000)])
        assert np.var(samples) == pytest.approx(1.0, rel=0.02)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(DomainError):
            sample_rician(3, 2, np.ones(2), np.ones(2), 1.0, np.random.default_rng(0))


class TestBuildScenario:
    def test_default_geometry_distance(self):
        geometry = ScenarioGeometry.on_half_circles(math.pi / 3, math.pi / 4)
        assert geometry.distance(geometry.tx_position, geometry.ris_position) == 30.0

    def test_unit_distance_los_magnitudes(self):
        # every link spans exactly the reference distance
        geometry = ScenarioGeometry(
            tx_position=(0.0, -1.0, 0.0),
            ris_position=(0.0, 0.0, 0.0),
            user_positions=((0.0, 1.0, 0.0), (1.0, -0.0001, 0.0)),
        )
        counts = AntennaCounts(n_tx=2, m_elements=3, n_user_t=2, n_user_r=2)
        params = FadingParams(rician_k=1e12, pathloss_ref_gain=1e-3)
        channels = build_scenario(geometry, params, counts, np.random.default_rng(1))
        for matrix in (channels.f, channels.h_t):
            np.testing.assert_allclose(np.abs(matrix), math.sqrt(1e-3), rtol=1e-5)

    def test_fingerprint_is_stable(self, small_spec, channel_factory):
        first = channel_factory(small_spec, 3)
        second = channel_factory(small_spec, 3)
        assert first.fingerprint() == second.fingerprint()
        assert first.fingerprint() != channel_factory(small_spec, 4).fingerprint()

    def test_shapes(self, small_spec, small_channels):
        assert small_channels.f.shape == (small_spec.m_elements, small_spec.n_tx)
        assert small_channels.h_t.shape == (small_spec.n_user_t, small_spec.m_elements)
        assert small_channels.h_r.shape == (small_spec.n_user_r, small_spec.m_elements)

    def test_users_on_their_half_spaces(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            geometry = ScenarioGeometry.sample(rng)
            assert geometry.t_user[1] > geometry.ris_position[1] > geometry.r_user[1]

    def test_user_on_wrong_side_rejected(self):
        with pytest.raises(DomainError):
            ScenarioGeometry(
                tx_position=(0.0, 0.0, 10.0),
                ris_position=(0.0, 30.0, 10.0),
                user_positions=((0.0, 25.0, 2.0), (0.0, 25.0, 2.0)),
            )

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**31 - 1))
    def test_channels_are_finite(self, seed):
        counts = AntennaCounts(n_tx=2, m_elements=3, n_user_t=2, n_user_r=1)
        rng = np.random.default_rng(seed)
        channels = build_scenario(ScenarioGeometry.sample(rng), FadingParams(), counts, rng)
        assert all(np.all(np.isfinite(m)) for m in (channels.f, channels.h_t, channels.h_r))
