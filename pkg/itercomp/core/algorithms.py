"""
Motor de iteraciones de punto fijo con iterados comprimidos.

Modo simple: cada nodo envía δ_i = C(T_i(x^k, s_i^k); ξ_i^k) y el maestro
promedia. Modo con reducción de varianza: cada nodo comprime la diferencia
contra su desplazamiento h_i, y el maestro (que mantiene una copia espejo de
cada h_i) reconstruye Δ_i = δ_i + h_i. Con n = 1 ambos modos coinciden con
las versiones de un solo nodo.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .compressors import CompressorSpec, apply_compressor, compressor_omega
from .errors import DivergenceError, NumericsError
from .numerics import (
    ROLE_COMPRESSION_NOISE,
    ROLE_INIT,
    ROLE_MAP_NOISE,
    ROLE_MONTE_CARLO,
    RngStream,
    Vector,
    squared_distance,
)
from .operators import MapSpec, apply_map, expected_map, sample_map_at
from .simnet import Transcript, broadcast, gather

logger = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 1e12


class Mode(str, Enum):
    PLAIN = "plain"
    VR = "vr"


@dataclass(frozen=True)
class IterateState:
    x: Vector
    k: int = 0


@dataclass
class WorkerState:
    """Estado de un nodo: desplazamiento h_i y los últimos δ_i, Δ_i."""
    h: Vector
    last_delta: Optional[Vector] = None
    last_Delta: Optional[Vector] = None

    @classmethod
    def starting_at(cls, h0: Vector) -> "WorkerState":
        return cls(h=np.array(h0, dtype=np.float64))


@dataclass(frozen=True)
class VrParams:
    alpha: float
    eta: float

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha debe estar en (0, 1] (alpha={self.alpha})")
        # η = 0 congela el iterado; se admite para pruebas
        if not 0 <= self.eta <= 1:
            raise ValueError(f"eta debe estar en [0, 1] (eta={self.eta})")


@dataclass(frozen=True)
class RunStreams:
    """Subflujos de una corrida: rutas (rol, nodo i, iteración k)."""
    root: RngStream

    @classmethod
    def from_seed(cls, seed: int) -> "RunStreams":
        return cls(RngStream(seed))

    def map_noise(self, i: int, k: int) -> RngStream:
        return self.root.derive([ROLE_MAP_NOISE, i, k])

    def compression_noise(self, i: int, k: int) -> RngStream:
        return self.root.derive([ROLE_COMPRESSION_NOISE, i, k])

    def init(self) -> RngStream:
        return self.root.derive([ROLE_INIT])

    def monte_carlo(self) -> RngStream:
        return self.root.derive([ROLE_MONTE_CARLO])


def _average(vectors: Sequence[Vector]) -> Vector:
    return sum(vectors) / float(len(vectors))


# ---------------------------------------------------------------------------
# Núcleos por nodo (compartidos por las versiones de uno y n nodos)
# ---------------------------------------------------------------------------

def _node_plain(map_spec: MapSpec, comp: CompressorSpec, i: int, x: Vector, streams: RunStreams, k: int) -> Vector:
    t = apply_map(map_spec, i, x, streams.map_noise(i, k))
    return apply_compressor(comp, t, streams.compression_noise(i, k))


def _node_vr(map_spec: MapSpec, comp: CompressorSpec, i: int, x: Vector, h: Vector,
             streams: RunStreams, k: int) -> Vector:
    t = apply_map(map_spec, i, x, streams.map_noise(i, k))
    return apply_compressor(comp, t - h, streams.compression_noise(i, k))


def _update_worker(worker: WorkerState, delta: Vector, alpha: float) -> WorkerState:
    return WorkerState(h=worker.h + alpha * delta, last_delta=delta, last_Delta=delta + worker.h)


def _diverged(k: int, error: Exception) -> DivergenceError:
    return DivergenceError(f"Valores no finitos en la iteración {k}: {error}", k)


# ---------------------------------------------------------------------------
# Pasos
# ---------------------------------------------------------------------------

def step_plain(state: IterateState, map_spec: MapSpec, comp: CompressorSpec, n: int, streams: RunStreams,
               transcript: Optional[Transcript] = None) -> Tuple[IterateState, List[Vector]]:
    """Un paso del método simple distribuido: x^{k+1} = (1/n)Σ C(T_i(x^k))."""
    k = state.k
    try:
        if transcript is not None:
            copies = broadcast(state.x, n, transcript, k)
        else:
            copies = [state.x] * n
        messages = [_node_plain(map_spec, comp, i, copies[i], streams, k) for i in range(n)]
        if transcript is not None:
            messages = gather(messages, comp, transcript, n, k)
        x_next = _average(messages)
    except NumericsError as e:
        raise _diverged(k, e)
    if not np.all(np.isfinite(x_next)):
        raise DivergenceError(f"Iterado no finito en la iteración {k + 1}", k + 1)
    return IterateState(x_next, k + 1), messages


def step_vr(state: IterateState, workers: Sequence[WorkerState], params: VrParams, map_spec: MapSpec,
            comp: CompressorSpec, n: int, streams: RunStreams,
            transcript: Optional[Transcript] = None) -> Tuple[IterateState, List[WorkerState], List[Vector]]:
    """
    Un paso con reducción de varianza:
    δ_i = C(T_i(x^k) − h_i), h_i ← h_i + αδ_i, x^{k+1} = (1−η)x^k + η(1/n)Σ(δ_i + h_i).
    """
    k = state.k
    if len(workers) != n:
        raise ValueError(f"Se esperaban {n} estados de nodo, hay {len(workers)}")
    try:
        if transcript is not None:
            copies = broadcast(state.x, n, transcript, k)
        else:
            copies = [state.x] * n
        messages = [_node_vr(map_spec, comp, i, copies[i], workers[i].h, streams, k) for i in range(n)]
        if transcript is not None:
            messages = gather(messages, comp, transcript, n, k)
        # el maestro reconstruye Δ_i con su copia espejo de h_i
        new_workers = [_update_worker(w, delta, params.alpha) for w, delta in zip(workers, messages)]
        x_next = (1.0 - params.eta) * state.x + params.eta * _average([w.last_Delta for w in new_workers])
    except NumericsError as e:
        raise _diverged(k, e)
    if not np.all(np.isfinite(x_next)):
        raise DivergenceError(f"Iterado no finito en la iteración {k + 1}", k + 1)
    return IterateState(x_next, k + 1), new_workers, messages


def step_single(x: Vector, map_spec: MapSpec, comp: CompressorSpec, streams: RunStreams, k: int) -> Vector:
    """Método simple de un nodo: x^{k+1} = C(T(x^k, s^k); ξ^k)."""
    try:
        return _node_plain(map_spec, comp, 0, x, streams, k)
    except NumericsError as e:
        raise _diverged(k, e)


def step_single_vr(x: Vector, h: Vector, params: VrParams, map_spec: MapSpec, comp: CompressorSpec,
                   streams: RunStreams, k: int) -> Tuple[Vector, Vector]:
    """Versión de un nodo con reducción de varianza; retorna (x^{k+1}, h^{k+1})."""
    try:
        delta = _node_vr(map_spec, comp, 0, x, h, streams, k)
    except NumericsError as e:
        raise _diverged(k, e)
    h_next = h + params.alpha * delta
    x_next = (1.0 - params.eta) * x + params.eta * (delta + h)
    return x_next, h_next


# ---------------------------------------------------------------------------
# Función de Lyapunov
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PsiEstimate:
    value: float
    std_error: float = 0.0


class FixedPointSamples:
    """
    Realizaciones de T_i(x*, s) por nodo. Para mapas deterministas se guarda
    una sola realización (la esperanza es degenerada).
    """

    def __init__(self, map_spec: MapSpec, x_star: Vector, mc_budget: int, stream: RngStream):
        self.stochastic = map_spec.is_stochastic
        if self.stochastic:
            self.samples = [sample_map_at(map_spec, i, x_star, mc_budget, stream.derive([i]))
                            for i in range(map_spec.num_nodes)]
        else:
            self.samples = [expected_map(map_spec, i, x_star)[None, :] for i in range(map_spec.num_nodes)]

    def shift_error(self, i: int, h: Vector) -> Tuple[float, np.ndarray]:
        """(E‖h − T_i(x*, s)‖², valores por muestra)."""
        values = np.sum((self.samples[i] - h) ** 2, axis=1)
        return float(values.mean()), values


def lyapunov_psi(state: IterateState, workers: Sequence[WorkerState], params: VrParams, x_star: Vector,
                 omega: float, n: int, samples: FixedPointSamples) -> PsiEstimate:
    """
    Ψ^k = ‖x^k − x*‖² + (4η²ω/(αn²)) Σ_i E‖h_i^k − T_i(x*, s_i)‖².
    """
    distance = squared_distance(state.x, x_star)
    if omega == 0 or params.eta == 0:
        return PsiEstimate(distance, 0.0)
    coefficient = 4.0 * params.eta ** 2 * omega / (params.alpha * n ** 2)
    total = 0.0
    variance = 0.0
    for i, worker in enumerate(workers):
        mean, values = samples.shift_error(i, worker.h)
        total += mean
        if values.size > 1:
            variance += values.var(ddof=1) / values.size
    return PsiEstimate(distance + coefficient * total, coefficient * math.sqrt(variance))


# ---------------------------------------------------------------------------
# Bucle de corrida
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricsRow:
    seed: int
    k: int
    r_sq: float
    psi: Optional[float]
    bits_cum: int
    wall_ns: int


@dataclass
class RunSpec:
    """Todo lo necesario para repetir una corrida con distintas semillas."""
    mode: Mode
    map_spec: MapSpec
    compressor: CompressorSpec
    x_star: Vector
    vr_params: Optional[VrParams] = None
    mc_budget: int = 2000
    omega: float = field(init=False)

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.omega = compressor_omega(self.compressor, self.map_spec.dim)
        if self.mode == Mode.VR and self.vr_params is None:
            raise ValueError("El modo vr requiere VrParams")

    @property
    def n(self) -> int:
        return self.map_spec.num_nodes


def run_loop(spec: RunSpec, iterations: int, seed: int, x0: Vector, h0: Optional[Sequence[Vector]] = None,
             sink: Optional[Callable[[MetricsRow], None]] = None,
             transcript: Optional[Transcript] = None) -> List[MetricsRow]:
    """
    Ejecuta K iteraciones y emite una fila por iterado x^0..x^K.

    Raises:
        DivergenceError: con la trayectoria parcial en `trajectory`
    """
    if iterations < 1:
        raise ValueError(f"K debe ser ≥ 1 (K={iterations})")
    n = spec.n
    streams = RunStreams.from_seed(seed)
    transcript = transcript if transcript is not None else Transcript()
    state = IterateState(np.array(x0, dtype=np.float64), 0)
    workers: List[WorkerState] = []
    samples = None
    if spec.mode == Mode.VR:
        starts = h0 if h0 is not None else [np.zeros(spec.map_spec.dim)] * n
        workers = [WorkerState.starting_at(h) for h in starts]
        samples = FixedPointSamples(spec.map_spec, spec.x_star, spec.mc_budget, streams.monte_carlo())

    rows: List[MetricsRow] = []
    started = time.perf_counter_ns()

    def emit(current: IterateState):
        r_sq = squared_distance(current.x, spec.x_star)
        psi = None
        if spec.mode == Mode.VR:
            psi = lyapunov_psi(current, workers, spec.vr_params, spec.x_star, spec.omega, n, samples).value
        row = MetricsRow(seed, current.k, r_sq, psi, transcript.cumulative_bits(current.k),
                         time.perf_counter_ns() - started)
        rows.append(row)
        if sink is not None:
            sink(row)
        return r_sq

    logger.debug(f"Corrida {spec.mode.value} semilla={seed}: K={iterations}, n={n}, {spec.map_spec}")
    r0 = emit(state)
    for _ in range(iterations):
        try:
            if spec.mode == Mode.PLAIN:
                state, _ = step_plain(state, spec.map_spec, spec.compressor, n, streams, transcript)
            else:
                state, workers, _ = step_vr(state, workers, spec.vr_params, spec.map_spec,
                                            spec.compressor, n, streams, transcript)
        except DivergenceError as e:
            e.trajectory = rows
            logger.warning(f"Semilla {seed}: divergencia en k={e.k}")
            raise
        r_sq = emit(state)
        if r0 > 0 and r_sq > DIVERGENCE_FACTOR * r0:
            logger.warning(f"Semilla {seed}: r^k = {r_sq:.3g} supera {DIVERGENCE_FACTOR:g}·r^0 en k={state.k}")
            raise DivergenceError(f"r^{state.k} = {r_sq:.3g} excede {DIVERGENCE_FACTOR:g}·r^0", state.k, rows)
    return rows
