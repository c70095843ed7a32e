import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.channel import ChannelSet
from src.config import BINARY_TOL, TWO_PI
from src.errors import DomainError
from src.model import PrecoderSet, ProtocolKind, StarConfig, SystemSpec
from src.precoder import initial_precoders
from src.solvers import embed_real
from src.tarc import (
    RhoSchedule,
    TarcQuadratic,
    assemble_tarc,
    chi_update,
    es_subproblem,
    max_eigenvalue,
    solve_es,
    solve_ms,
    solve_ts,
    solve_ts_mm,
)
from src.wmmse import WmmseState, current_mse, update_state


def quadratic(z_t, zv_t, z_r, zv_r) -> TarcQuadratic:
    return TarcQuadratic(
        z_mat=(np.asarray(z_t, dtype=complex), np.asarray(z_r, dtype=complex)),
        z_vec=(np.asarray(zv_t, dtype=complex), np.asarray(zv_r, dtype=complex)),
    )


def psd(cplx, m: int, scale: float = 1.0) -> np.ndarray:
    x = cplx(m, m)
    return scale * (x @ x.conj().T)


def random_config(rng: np.random.Generator, protocol: ProtocolKind, m: int) -> StarConfig:
    phase_t, phase_r = rng.uniform(0.0, TWO_PI, m), rng.uniform(0.0, TWO_PI, m)
    if protocol is ProtocolKind.TS:
        return StarConfig.time_split(phase_t, phase_r, 0.4)
    return StarConfig.energy_split(rng.uniform(size=m), phase_t, phase_r)


class TestAssembleTarc:
    def test_zero_precoders(self, small_spec, small_channels):
        star = StarConfig.uniform(ProtocolKind.ES, small_spec.m_elements)
        precoders = PrecoderSet.zeros(small_spec.n_tx, small_spec.n_streams)
        state = WmmseState(
            u=(np.ones((2, 1)), np.ones((2, 1))), v=(np.eye(1), np.eye(1)), d=(1.0, 1.0)
        )
        quad = assemble_tarc(small_spec, small_channels, precoders, state, star.protocol)
        for z_mat, z_vec in (quad.side("t"), quad.side("r")):
            assert not np.any(z_mat)
            assert not np.any(z_vec)

    def test_scalar_expansion(self):
        spec = SystemSpec(
            n_tx=1, n_user_t=1, n_user_r=1, n_streams=(1, 1), m_elements=1, weights=(0.3, 0.7)
        )
        h_t, f = 0.5 - 0.2j, 1.5 + 0.4j
        channels = ChannelSet(f=np.array([[f]]), h_t=np.array([[h_t]]), h_r=np.array([[1.0]]))
        w_t, w_r = 0.8 + 0.1j, 0.3j
        u, v = 1.2 - 0.5j, 2.0
        precoders = PrecoderSet(w_t=np.array([[w_t]]), w_r=np.array([[w_r]]))
        state = WmmseState(
            u=(np.array([[u]]), np.array([[1.0]])),
            v=(np.array([[v]]), np.array([[1.0]])),
            d=(1.0, 1.0),
        )
        quad = assemble_tarc(spec, channels, precoders, state, ProtocolKind.ES)
        z_mat, z_vec = quad.side("t")
        expected_z = 0.3 * v * abs(u * h_t) ** 2 * abs(f) ** 2 * (abs(w_t) ** 2 + abs(w_r) ** 2)
        assert z_mat[0, 0] == pytest.approx(expected_z)
        assert z_vec[0] == pytest.approx(0.3 * f * w_t * v * np.conj(u) * h_t)

    @pytest.mark.parametrize("protocol", [ProtocolKind.ES, ProtocolKind.TS])
    def test_objective_tracks_weighted_mse(self, protocol, small_spec, small_channels):
        m = small_spec.m_elements
        rng = np.random.default_rng(17)
        start = random_config(rng, protocol, m)
        precoders = initial_precoders(small_spec, small_channels, start)
        state = update_state(small_spec, small_channels, precoders, start)
        quad = assemble_tarc(small_spec, small_channels, precoders, state, protocol)
        for idx, side in enumerate(("t", "r")):
            gaps = []
            for _ in range(5):
                star = random_config(rng, protocol, m)
                mse = current_mse(small_spec, small_channels, precoders, star, state)
                weighted = small_spec.weights[idx] * float(
                    np.real(np.trace(state.v[idx] @ mse[idx]))
                )
                gaps.append(weighted - quad.side_objective(side, star.coefficients(side)))
            np.testing.assert_allclose(gaps, gaps[0], rtol=1e-8, atol=1e-10)

    def test_non_psd_rejected(self):
        with pytest.raises(DomainError):
            quadratic(-np.eye(2), np.ones(2), np.eye(2), np.ones(2))


class TestChi:
    def test_fixed_points(self):
        np.testing.assert_allclose(chi_update(np.array([0.0, 1.0])), [0.0, 1.0])

    def test_half(self):
        assert chi_update(np.array([0.5]))[0] == pytest.approx(0.6)


class TestMaxEigenvalue:
    def test_identity(self):
        assert max_eigenvalue(np.eye(4)) == pytest.approx(1.0)

    def test_diagonal(self):
        assert max_eigenvalue(np.diag([1.0, 2.0, 3.0])) == pytest.approx(3.0)

    def test_matches_dense_solver(self, cplx):
        x = cplx(8, 8)
        h = x + x.conj().T
        assert max_eigenvalue(h) == pytest.approx(np.linalg.eigvalsh(h)[-1], abs=1e-10)

    def test_non_hermitian_rejected(self):
        with pytest.raises(DomainError):
            max_eigenvalue(np.array([[1.0, 2.0], [0.0, 1.0]]))


class TestMajorizationMinimization:
    def test_linear_term_only(self, cplx):
        z = cplx(5)
        phi = solve_ts_mm(np.zeros((5, 5)), z, np.ones(5))
        np.testing.assert_allclose(phi, np.exp(1j * np.angle(np.conj(z))), atol=1e-12)

    def test_single_element_ignores_quadratic(self):
        z = np.array([0.3 - 1.1j])
        phi = solve_ts_mm(np.array([[4.0]]), z, np.array([1.0 + 0j]))
        assert phi[0] == pytest.approx(np.exp(1j * np.angle(np.conj(z[0]))))

    def test_two_elements_against_grid(self, cplx):
        z_mat, z_vec = psd(cplx, 2, 0.3), 2.0 * cplx(2)
        phi = solve_ts_mm(z_mat, z_vec, np.exp(1j * np.angle(np.conj(z_vec))))
        quad = quadratic(z_mat, z_vec, np.zeros((2, 2)), np.zeros(2))
        value = quad.side_objective("t", phi)
        grid = np.exp(1j * np.linspace(0.0, TWO_PI, 256, endpoint=False))
        p1, p2 = np.meshgrid(grid, grid, indexing="ij")
        cross = 2.0 * np.real(np.conj(p1) * z_mat[0, 1] * p2)
        diag = np.real(z_mat[0, 0] + z_mat[1, 1])
        linear = 2.0 * np.real(np.conj(p1) * np.conj(z_vec[0]) + np.conj(p2) * np.conj(z_vec[1]))
        best = float(np.min(diag + cross - linear))
        assert value <= best + 0.01 * abs(best)

    def test_never_increases(self, cplx):
        z_mat, z_vec = psd(cplx, 6), cplx(6)
        start = np.exp(1j * np.linspace(0.0, 3.0, 6))
        quad = quadratic(z_mat, z_vec, np.zeros((6, 6)), np.zeros(6))
        phi = solve_ts_mm(z_mat, z_vec, start)
        assert quad.side_objective("t", phi) <= quad.side_objective("t", start) + 1e-12
        np.testing.assert_allclose(np.abs(phi), 1.0)

    @given(
        seed=st.integers(min_value=0, max_value=2**32 - 1),
        m=st.integers(min_value=1, max_value=8),
    )
    @settings(max_examples=100, deadline=None)
    def test_single_step_never_increases(self, seed, m):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        z_mat = x @ x.conj().T
        z_vec = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        start = np.exp(1j * rng.uniform(0.0, TWO_PI, m))
        quad = quadratic(z_mat, z_vec, np.zeros((m, m)), np.zeros(m))
        phi = solve_ts_mm(z_mat, z_vec, start, max_iter=1)
        before = quad.side_objective("t", start)
        assert quad.side_objective("t", phi) <= before + 1e-9 * max(1.0, abs(before))


class TestSolveEs:
    def test_linear_single_user(self):
        quad = quadratic(np.zeros((1, 1)), np.ones(1), np.zeros((1, 1)), np.zeros(1))
        init = StarConfig.uniform(ProtocolKind.ES, 1)
        result = solve_es(quad, init)
        assert result.config.alpha("t")[0] >= 0.99
        assert math.cos(result.config.phase("t")[0]) == pytest.approx(1.0, abs=1e-3)

    def test_zero_quadratic_returns_init(self):
        quad = quadratic(np.zeros((2, 2)), np.zeros(2), np.zeros((2, 2)), np.zeros(2))
        init = StarConfig.uniform(ProtocolKind.ES, 2)
        result = solve_es(quad, init)
        assert result.iterations == 0
        np.testing.assert_array_equal(result.config.amp_t, init.amp_t)

    def test_history_non_increasing(self, cplx):
        quad = quadratic(psd(cplx, 3), cplx(3), psd(cplx, 3), cplx(3))
        result = solve_es(quad, StarConfig.uniform(ProtocolKind.ES, 3), max_outer=6)
        history = np.asarray(result.history)
        assert np.all(np.diff(history) <= 1e-6 * np.abs(history[:-1]))
        assert result.config.protocol is ProtocolKind.ES

    def test_single_element_against_grid(self):
        z_t, z_r = np.array([[0.4]]), np.array([[0.9]])
        zv_t, zv_r = np.array([0.7 - 0.2j]), np.array([0.5 + 0.6j])
        quad = quadratic(z_t, zv_t, z_r, zv_r)
        result = solve_es(quad, StarConfig.uniform(ProtocolKind.ES, 1))
        alpha = np.linspace(0.0, 1.0, 33)[:, None, None]
        phases = np.exp(1j * np.linspace(0.0, TWO_PI, 64, endpoint=False))
        phi_t = np.sqrt(alpha) * phases[None, :, None]
        phi_r = np.sqrt(1.0 - alpha) * phases[None, None, :]
        values = (
            0.4 * np.abs(phi_t) ** 2
            - 2.0 * np.real(np.conj(phi_t) * np.conj(zv_t[0]))
            + 0.9 * np.abs(phi_r) ** 2
            - 2.0 * np.real(np.conj(phi_r) * np.conj(zv_r[0]))
        )
        best = float(np.min(values))
        assert result.objective <= best + 0.02 * abs(best)

    def test_subproblem_embeds(self, cplx):
        quad = quadratic(psd(cplx, 2), cplx(2), psd(cplx, 2), cplx(2))
        program = embed_real(es_subproblem(quad, StarConfig.uniform(ProtocolKind.ES, 2)))
        assert [block.size for block in program.blocks] == [10, 10]


class TestSolveMs:
    def test_result_is_binary(self, cplx):
        quad = quadratic(psd(cplx, 3, 0.1), cplx(3), psd(cplx, 3, 0.1), cplx(3))
        init = StarConfig.energy_split(
            np.array([1.0, 0.0, 1.0]), np.zeros(3), np.zeros(3), ProtocolKind.MS
        )
        result = solve_ms(quad, init, RhoSchedule(), max_outer=8)
        alpha = result.config.alpha("t")
        assert np.all(np.minimum(alpha, 1.0 - alpha) <= BINARY_TOL)
        assert result.config.protocol is ProtocolKind.MS
        assert result.objective <= quad.objective(init) + 1e-9

    def test_two_elements_against_enumeration(self):
        # element 0 favours transmission, element 1 reflection
        zv_t, zv_r = np.array([2.0 + 0.5j, 0.1j]), np.array([0.1, -1.5 + 1.0j])
        z_t = np.array([[0.2, 0.05], [0.05, 0.2]], dtype=complex)
        z_r = np.array([[0.3, -0.04j], [0.04j, 0.3]], dtype=complex)
        quad = quadratic(z_t, zv_t, z_r, zv_r)
        result = solve_ms(quad, StarConfig.uniform(ProtocolKind.ES, 2), max_outer=8)

        grid = np.linspace(0.0, TWO_PI, 64, endpoint=False)
        best = math.inf
        for bits in ((0, 0), (0, 1), (1, 0), (1, 1)):
            alpha_t = np.array(bits, dtype=float)
            for a in grid:
                for b in grid:
                    config = StarConfig.energy_split(alpha_t, np.array([a, b]), np.array([a, b]))
                    best = min(best, quad.objective(config))
        assert result.objective <= best + 0.05 * abs(best)

    def test_keeps_better_binary_start(self):
        quad = quadratic(np.zeros((1, 1)), np.ones(1), np.zeros((1, 1)), np.zeros(1))
        init = StarConfig.energy_split(np.ones(1), np.zeros(1), np.zeros(1), ProtocolKind.MS)
        result = solve_ms(quad, init)
        assert result.objective <= quad.objective(init) + 1e-12
        assert result.config.alpha("t")[0] == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(8))
    def test_never_beats_energy_splitting_from_same_start(self, seed):
        rng = np.random.default_rng(seed)
        z_t, z_r = rng.uniform(0.2, 1.0, (2, 1, 1))
        zv_t, zv_r = rng.standard_normal((2, 1)) + 1j * rng.standard_normal((2, 1))
        quad = quadratic(z_t, zv_t, z_r, zv_r)
        start = StarConfig.uniform(ProtocolKind.ES, 1)
        es = solve_es(quad, start).objective
        ms = solve_ms(quad, start, max_outer=8).objective
        assert es <= ms + 0.02 * max(abs(ms), abs(es))


class TestSolveTs:
    def test_keeps_time_split_and_unit_modulus(self, cplx):
        quad = quadratic(psd(cplx, 4), cplx(4), psd(cplx, 4), cplx(4))
        zeros = np.zeros(4)
        init = StarConfig.time_split(zeros, zeros, 0.3)
        result = solve_ts(quad, init)
        assert result.config.tau_t == pytest.approx(0.3)
        np.testing.assert_allclose(result.config.amp_t, 1.0)
        assert result.objective <= quad.objective(init) + 1e-12
