"""
Pruebas del motor de iteraciones: reducciones exactas, promedios,
función de Lyapunov y bucle de corrida.
"""

import math

import numpy as np
import pytest

from itercomp.core.algorithms import (
    DIVERGENCE_FACTOR,
    FixedPointSamples,
    IterateState,
    Mode,
    RunSpec,
    RunStreams,
    VrParams,
    WorkerState,
    lyapunov_psi,
    run_loop,
    step_plain,
    step_single,
    step_single_vr,
    step_vr,
)
from itercomp.core.compressors import CompressorSpec
from itercomp.core.errors import DivergenceError
from itercomp.core.numerics import RngStream, squared_distance
from itercomp.core.operators import MapKind, MapSpec, QuadraticProblem, apply_map, expected_map, solve_reference
from itercomp.core.simnet import Transcript


def diag_spec():
    problem = QuadraticProblem([np.diag([1.0, 2.0])], [np.array([1.0, 2.0])])
    return MapSpec(MapKind.GD, 0.5, problem)


def manual_iterates(spec, x0, K):
    xs = [np.array(x0, dtype=np.float64)]
    for _ in range(K):
        xs.append(apply_map(spec, 0, xs[-1]))
    return xs


class TestReduccionSinCompresion:

    def test_plain_identico_a_iteracion_sin_comprimir(self):
        spec = diag_spec()
        expected = manual_iterates(spec, np.zeros(2), 100)
        state = IterateState(np.zeros(2), 0)
        streams = RunStreams.from_seed(0)
        transcript = Transcript()
        for k in range(100):
            state, _ = step_plain(state, spec, CompressorSpec.identity(), 1, streams, transcript)
            assert np.array_equal(state.x, expected[k + 1])

    def test_vr_alfa_eta_uno_identico(self):
        spec = diag_spec()
        expected = manual_iterates(spec, np.zeros(2), 100)
        state = IterateState(np.zeros(2), 0)
        workers = [WorkerState.starting_at(np.zeros(2))]
        streams = RunStreams.from_seed(0)
        for k in range(100):
            state, workers, _ = step_vr(state, workers, VrParams(1.0, 1.0), spec, CompressorSpec.identity(),
                                        1, streams)
            assert np.array_equal(state.x, expected[k + 1])

    def test_primer_paso_vr(self):
        state, workers, messages = step_vr(IterateState(np.zeros(2)), [WorkerState.starting_at(np.zeros(2))],
                                           VrParams(1.0, 1.0), diag_spec(), CompressorSpec.identity(), 1,
                                           RunStreams.from_seed(0))
        assert np.array_equal(state.x, [0.5, 1.0])
        assert np.array_equal(workers[0].h, [0.5, 1.0])
        assert np.array_equal(workers[0].last_delta, [0.5, 1.0])
        assert np.array_equal(messages[0], workers[0].last_delta)
        assert state.k == 1

    def test_forma_cerrada(self):
        A = np.array([[2.0, 0.5], [0.5, 1.0]])
        problem = QuadraticProblem([A], [np.array([1.0, 1.0])])
        gamma = 1.0 / problem.smoothness()
        spec = MapSpec(MapKind.GD, gamma, problem)
        x_star = solve_reference(problem)
        x0 = np.array([5.0, -3.0])
        rows = run_loop(RunSpec(Mode.PLAIN, spec, CompressorSpec.identity(), x_star), 40, 0, x0)
        M = np.eye(2) - gamma * A
        for row in rows:
            error = np.linalg.matrix_power(M, row.k) @ (x0 - x_star)
            assert row.r_sq == pytest.approx(float(error @ error), abs=1e-12)


class TestPromedio:

    def test_promedio_de_dos_nodos(self):
        problem = QuadraticProblem([np.eye(2), np.eye(2)], [np.array([2.0, 0.0]), np.array([0.0, 2.0])])
        spec = MapSpec(MapKind.GD, 1.0, problem)
        state, messages = step_plain(IterateState(np.zeros(2)), spec, CompressorSpec.identity(), 2,
                                     RunStreams.from_seed(0))
        assert np.array_equal(messages[0], [2.0, 0.0])
        assert np.array_equal(messages[1], [0.0, 2.0])
        assert np.array_equal(state.x, [1.0, 1.0])

    def test_esperanza_de_un_paso(self):
        A = np.diag([1.0, 3.0])
        problem = QuadraticProblem([A], [np.zeros(2)])
        spec = MapSpec(MapKind.GD, 0.25, problem)
        x = np.array([1.3, -0.7])
        draws = np.array([
            step_plain(IterateState(x, 0), spec, CompressorSpec.natural(), 1, RunStreams.from_seed(s))[0].x
            for s in range(10_000)])
        expected = (np.eye(2) - 0.25 * A) @ x
        stderr = draws.std(axis=0, ddof=1) / math.sqrt(draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - expected) <= 4 * stderr)

    def test_eta_cero_congela(self):
        x = np.array([0.3, 0.9])
        state, _, _ = step_vr(IterateState(x, 4), [WorkerState.starting_at(np.ones(2))], VrParams(0.5, 0.0),
                              diag_spec(), CompressorSpec.rand_k(1), 1, RunStreams.from_seed(2))
        assert np.array_equal(state.x, x)
        assert state.k == 5

    def test_trabajadores_incorrectos(self):
        with pytest.raises(ValueError):
            step_vr(IterateState(np.zeros(2)), [], VrParams(0.5, 0.5), diag_spec(), CompressorSpec.identity(), 1,
                    RunStreams.from_seed(0))

    @pytest.mark.parametrize("alpha, eta", [(0.0, 0.5), (1.5, 0.5), (0.5, -0.1), (0.5, 1.1)])
    def test_parametros_vr_invalidos(self, alpha, eta):
        with pytest.raises(ValueError):
            VrParams(alpha, eta)


class TestUnNodo:

    @pytest.mark.parametrize("comp", [CompressorSpec.identity(), CompressorSpec.rand_k(1), CompressorSpec.natural()])
    def test_plain_un_nodo_coincide(self, comp):
        spec = diag_spec()
        streams = RunStreams.from_seed(7)
        x = np.array([0.2, -0.4])
        state = IterateState(x.copy(), 0)
        for k in range(20):
            x = step_single(x, spec, comp, streams, k)
            state, _ = step_plain(state, spec, comp, 1, streams)
            assert np.array_equal(x, state.x)

    def test_vr_un_nodo_coincide(self):
        spec = diag_spec()
        comp = CompressorSpec.natural()
        params = VrParams(8 / 9, 1 / 3)
        streams = RunStreams.from_seed(3)
        x, h = np.zeros(2), np.zeros(2)
        state, workers = IterateState(np.zeros(2)), [WorkerState.starting_at(np.zeros(2))]
        for k in range(20):
            x, h = step_single_vr(x, h, params, spec, comp, streams, k)
            state, workers, _ = step_vr(state, workers, params, spec, comp, 1, streams)
            assert np.array_equal(x, state.x)
            assert np.array_equal(h, workers[0].h)


class TestLyapunov:

    def _samples(self, spec, x_star):
        return FixedPointSamples(spec, x_star, 10, RngStream(0))

    def test_ejemplo_numerico(self):
        spec = diag_spec()
        x_star = np.array([1.0, 1.0])
        psi = lyapunov_psi(IterateState(np.zeros(2)), [WorkerState.starting_at(np.zeros(2))],
                           VrParams(8 / 9, 1 / 3), x_star, 0.125, 1, self._samples(spec, x_star))
        assert psi.value == pytest.approx(2.125)
        assert psi.std_error == 0.0

    def test_estado_estacionario(self):
        spec = diag_spec()
        x_star = solve_reference(spec.problem)
        h = expected_map(spec, 0, x_star)
        psi = lyapunov_psi(IterateState(x_star), [WorkerState.starting_at(h)], VrParams(0.5, 0.5),
                           x_star, 0.125, 1, self._samples(spec, x_star))
        assert psi.value == pytest.approx(0.0, abs=1e-24)

    def test_sin_compresion_es_distancia(self):
        spec = diag_spec()
        x_star = np.array([1.0, 1.0])
        x = np.array([0.5, 3.0])
        psi = lyapunov_psi(IterateState(x), [WorkerState.starting_at(np.full(2, 9.0))], VrParams(1.0, 1.0),
                           x_star, 0.0, 1, self._samples(spec, x_star))
        assert psi.value == squared_distance(x, x_star)


class TestBucle:

    def test_k_uno_es_un_paso(self):
        spec = diag_spec()
        comp = CompressorSpec.natural()
        x_star = np.array([1.0, 1.0])
        rows = run_loop(RunSpec(Mode.PLAIN, spec, comp, x_star), 1, 5, np.zeros(2))
        state, _ = step_plain(IterateState(np.zeros(2)), spec, comp, 1, RunStreams.from_seed(5))
        assert [r.k for r in rows] == [0, 1]
        assert rows[1].r_sq == squared_distance(state.x, x_star)

    def test_filas_y_bits(self):
        spec = diag_spec()
        rows = run_loop(RunSpec(Mode.VR, spec, CompressorSpec.natural(), np.array([1.0, 1.0]),
                                vr_params=VrParams(8 / 9, 1 / 3)), 10, 0, np.zeros(2))
        assert len(rows) == 11
        assert rows[0].bits_cum == 0
        assert all(b.bits_cum > a.bits_cum for a, b in zip(rows, rows[1:]))
        assert all(r.psi is not None and r.psi >= r.r_sq for r in rows)
        assert all(r.r_sq >= 0 for r in rows)

    def test_plain_sin_psi(self):
        rows = run_loop(RunSpec(Mode.PLAIN, diag_spec(), CompressorSpec.natural(), np.array([1.0, 1.0])),
                        3, 0, np.zeros(2))
        assert all(r.psi is None for r in rows)

    def test_determinismo(self):
        spec = diag_spec()
        run_spec = RunSpec(Mode.VR, spec, CompressorSpec.rand_k(1), np.array([1.0, 1.0]),
                           vr_params=VrParams(0.5, 0.25))
        a = run_loop(run_spec, 25, 11, np.zeros(2))
        b = run_loop(run_spec, 25, 11, np.zeros(2))
        strip = lambda rows: [(r.seed, r.k, r.r_sq, r.psi, r.bits_cum) for r in rows]
        assert strip(a) == strip(b)

    def test_sink_recibe_cada_fila(self):
        received = []
        rows = run_loop(RunSpec(Mode.PLAIN, diag_spec(), CompressorSpec.identity(), np.array([1.0, 1.0])),
                        4, 0, np.zeros(2), sink=received.append)
        assert received == rows

    def test_k_invalido(self):
        with pytest.raises(ValueError):
            run_loop(RunSpec(Mode.PLAIN, diag_spec(), CompressorSpec.identity(), np.array([1.0, 1.0])),
                     0, 0, np.zeros(2))

    def test_vr_requiere_parametros(self):
        with pytest.raises(ValueError):
            RunSpec(Mode.VR, diag_spec(), CompressorSpec.identity(), np.array([1.0, 1.0]))

    def test_divergencia_relativa(self):
        problem = QuadraticProblem([np.diag([1.0, 2.0])], [np.array([3.0, 10.0])])
        spec = MapSpec(MapKind.GD, 0.5, problem)
        x_star = np.array([3.0, 5.0])
        x0 = x_star + 1e-9
        with pytest.raises(DivergenceError) as info:
            run_loop(RunSpec(Mode.PLAIN, spec, CompressorSpec.natural(), x_star), 50, 0, x0)
        error = info.value
        assert error.k >= 1
        assert len(error.trajectory) == error.k + 1
        assert error.trajectory[-1].r_sq > DIVERGENCE_FACTOR * error.trajectory[0].r_sq
