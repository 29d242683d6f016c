"""
Verificaciones estadísticas de las hipótesis del simulador.

Cada verificación retorna un CheckResult; las de Monte-Carlo comparan la
media empírica contra la cota con una holgura de 3 (o 4) errores estándar.
Las usa el comando `verify` y la batería de pruebas.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .algorithms import IterateState, RunStreams, VrParams, WorkerState, step_vr
from .compressors import CompressorKind, CompressorSpec, compressor_omega, estimate_moments
from .numerics import RngStream, Vector, squared_distance, squared_norm
from .operators import (
    ContractionCertificate,
    MapSpec,
    apply_map,
    averaged_map,
    expected_map,
)

logger = logging.getLogger(__name__)

DETERMINISTIC_SLACK = 1e-9


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    worst_margin: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "passed": self.passed, "detail": self.detail,
                "worst_margin": self.worst_margin}


def _paired_excess(lhs: np.ndarray, rhs: np.ndarray) -> Tuple[float, float]:
    """Media y error estándar de lhs − rhs."""
    diff = np.asarray(lhs) - np.asarray(rhs)
    return float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(diff.size))


def _random_points(center: Vector, count: int, stream: RngStream) -> List[Vector]:
    rng = stream.generator()
    scale = max(1.0, math.sqrt(squared_norm(center) / center.size))
    return [center + scale * rng.standard_normal(center.size) for _ in range(count)]


def check_compressor_contract(spec: CompressorSpec, d: int, stream: RngStream,
                              vectors: int = 20, samples: int = 100_000) -> CheckResult:
    """Insesgadez (4 errores estándar por coordenada) y varianza ≤ 1.05·ω‖x‖²."""
    omega = compressor_omega(spec, d)
    points = stream.derive([0]).generator().standard_normal((vectors, d))
    failures = []
    worst = -math.inf
    for v, x in enumerate(points):
        estimate = estimate_moments(spec, x, samples, stream.derive([1, v]))
        bias = np.abs(estimate.mean - x)
        tolerance = 4.0 * estimate.mean_std_error + 1e-12 * np.abs(x)
        if np.any(bias > tolerance):
            failures.append(f"vector {v}: sesgo fuera de 4 errores estándar")
        bound = 1.05 * omega * squared_norm(x)
        if spec.kind == CompressorKind.IDENTITY:
            bound = 0.0
        margin = estimate.mean_sq_deviation - bound
        worst = max(worst, margin)
        if margin > 3.0 * estimate.std_error:
            failures.append(f"vector {v}: E‖C(x)−x‖²={estimate.mean_sq_deviation:.4g} > {bound:.4g}")
    name = f"compresor {spec.label()}"
    return CheckResult(name, not failures, "; ".join(failures) or f"ω={omega:.4g}", worst)


def check_fixed_point(map_spec: MapSpec, x_star: Vector, tolerance: float = 1e-10) -> CheckResult:
    """‖T̄(x*) − x*‖ ≤ tolerancia para el mapa determinista promedio."""
    gap = math.sqrt(squared_distance(averaged_map(map_spec, x_star), x_star))
    return CheckResult("punto fijo", gap <= tolerance, f"‖T(x*) − x*‖ = {gap:.3g}", gap)


def _sample_average_map(map_spec: MapSpec, x: Vector, stream: RngStream) -> Vector:
    n = map_spec.num_nodes
    return sum(apply_map(map_spec, i, x, stream.derive([i])) for i in range(n)) / n


def check_contraction(map_spec: MapSpec, cert: ContractionCertificate, x_star: Vector, stream: RngStream,
                      points: int = 20, samples: int = 2000) -> CheckResult:
    """E‖T(x,s) − x*‖² ≤ (1 − ρ)‖x − x*‖² + B en puntos aleatorios."""
    failures = []
    worst = -math.inf
    for p, x in enumerate(_random_points(x_star, points, stream.derive([0]))):
        bound = (1.0 - cert.rho) * squared_distance(x, x_star) + cert.B
        if not map_spec.is_stochastic:
            value = squared_distance(averaged_map(map_spec, x), x_star)
            margin = value - bound
            ok = margin <= DETERMINISTIC_SLACK * max(1.0, bound)
        else:
            base = stream.derive([1, p])
            values = np.array([squared_distance(_sample_average_map(map_spec, x, base.derive([m])), x_star)
                               for m in range(samples)])
            margin = float(values.mean()) - bound
            ok = margin <= 3.0 * values.std(ddof=1) / math.sqrt(samples)
        worst = max(worst, margin)
        if not ok:
            failures.append(f"punto {p}: exceso {margin:.3g}")
    return CheckResult("contracción", not failures, "; ".join(failures) or f"ρ={cert.rho:.4g}, B={cert.B:.3g}",
                       worst)


def check_lipschitz(map_spec: MapSpec, cert: ContractionCertificate, x_star: Vector, stream: RngStream,
                    pairs: int = 20, samples: int = 2000) -> CheckResult:
    """E‖T_i(x,s) − T_i(y,s)‖² ≤ c_i²‖x − y‖² con ruido común s."""
    failures = []
    worst = -math.inf
    xs = _random_points(x_star, pairs, stream.derive([0]))
    ys = _random_points(x_star, pairs, stream.derive([1]))
    for p, (x, y) in enumerate(zip(xs, ys)):
        for i in range(map_spec.num_nodes):
            bound = cert.node_c_sq(i) * squared_distance(x, y)
            if not map_spec.is_stochastic:
                margin = squared_distance(expected_map(map_spec, i, x), expected_map(map_spec, i, y)) - bound
                ok = margin <= DETERMINISTIC_SLACK * max(1.0, bound)
            else:
                base = stream.derive([2, p, i])
                values = np.array([
                    squared_distance(apply_map(map_spec, i, x, base.derive([m])),
                                     apply_map(map_spec, i, y, base.derive([m])))
                    for m in range(samples)])
                margin = float(values.mean()) - bound
                ok = margin <= 3.0 * values.std(ddof=1) / math.sqrt(samples)
            worst = max(worst, margin)
            if not ok:
                failures.append(f"par {p}, nodo {i}: exceso {margin:.3g}")
    return CheckResult("lipschitz", not failures, "; ".join(failures) or f"c²={cert.c_sq:.4g}", worst)


@dataclass
class OneStepDraws:
    """Muestras emparejadas de un paso con reducción de varianza desde un estado fijo."""
    h_lhs: List[np.ndarray] = field(default_factory=list)
    h_rhs: List[np.ndarray] = field(default_factory=list)
    distance_lhs: np.ndarray = None
    distance_rhs: np.ndarray = None


def one_step_draws(x: Vector, h: Sequence[Vector], params: VrParams, map_spec: MapSpec, comp: CompressorSpec,
                   cert: ContractionCertificate, x_star: Vector, stream: RngStream, draws: int) -> OneStepDraws:
    """
    Repite `draws` veces un paso desde (x, h) y evalúa ambos lados de las
    recursiones de h_i y de ‖x − x*‖², con el mismo s para T_i(x, s) y T_i(x*, s).
    """
    n = map_spec.num_nodes
    omega = compressor_omega(comp, map_spec.dim)
    state = IterateState(np.asarray(x, dtype=np.float64), 0)
    workers = [WorkerState.starting_at(v) for v in h]
    h_lhs = np.zeros((n, draws))
    h_rhs = np.zeros((n, draws))
    d_lhs = np.zeros(draws)
    d_rhs = np.zeros(draws)
    base_distance = squared_distance(state.x, x_star)
    for m in range(draws):
        streams = RunStreams(stream.derive([m]))
        next_state, next_workers, _ = step_vr(state, workers, params, map_spec, comp, n, streams)
        spread = 0.0
        for i in range(n):
            t_x = apply_map(map_spec, i, state.x, streams.map_noise(i, 0))
            t_star = apply_map(map_spec, i, x_star, streams.map_noise(i, 0))
            shift_error = squared_distance(workers[i].h, t_star)
            map_gap = squared_distance(t_x, t_star)
            h_lhs[i, m] = squared_distance(next_workers[i].h, t_star)
            h_rhs[i, m] = (1.0 - params.alpha) * shift_error + params.alpha * map_gap
            spread += map_gap + shift_error
        d_lhs[m] = squared_distance(next_state.x, x_star)
        d_rhs[m] = ((1.0 - params.eta * cert.rho) * base_distance + params.eta * cert.B
                    + 2.0 * params.eta ** 2 * omega / n ** 2 * spread)
    return OneStepDraws(list(h_lhs), list(h_rhs), d_lhs, d_rhs)


def check_one_step_recursions(states: Sequence[tuple], params: VrParams, map_spec: MapSpec, comp: CompressorSpec,
                              cert: ContractionCertificate, x_star: Vector, stream: RngStream,
                              draws: int = 10_000) -> List[CheckResult]:
    """Recursiones de un paso (h_i y distancia) en cada estado (x, [h_i])."""
    h_failures, d_failures = [], []
    h_worst, d_worst = -math.inf, -math.inf
    for s, (x, h) in enumerate(states):
        sample = one_step_draws(x, h, params, map_spec, comp, cert, x_star, stream.derive([s]), draws)
        for i, (lhs, rhs) in enumerate(zip(sample.h_lhs, sample.h_rhs)):
            excess, stderr = _paired_excess(lhs, rhs)
            h_worst = max(h_worst, excess)
            if excess > 3.0 * stderr + DETERMINISTIC_SLACK * max(1.0, float(np.mean(rhs))):
                h_failures.append(f"estado {s}, nodo {i}: exceso {excess:.3g}")
        excess, stderr = _paired_excess(sample.distance_lhs, sample.distance_rhs)
        d_worst = max(d_worst, excess)
        if excess > 3.0 * stderr + DETERMINISTIC_SLACK * max(1.0, float(np.mean(sample.distance_rhs))):
            d_failures.append(f"estado {s}: exceso {excess:.3g}")
    return [
        CheckResult("recursión de h", not h_failures, "; ".join(h_failures), h_worst),
        CheckResult("recursión de distancia", not d_failures, "; ".join(d_failures), d_worst),
    ]


def recursion_states(x_star: Vector, n: int, count: int, stream: RngStream) -> List[tuple]:
    """Estados (x, [h_i]) aleatorios alrededor de x* para las recursiones de un paso."""
    xs = _random_points(x_star, count, stream.derive([0]))
    hs = [_random_points(x_star, n, stream.derive([1, s])) for s in range(count)]
    return list(zip(xs, hs))


def run_all_checks(map_spec: MapSpec, comp: CompressorSpec, cert: ContractionCertificate, x_star: Vector,
                   params: Optional[VrParams], stream: RngStream, samples: int) -> List[CheckResult]:
    """Batería completa usada por `verify`."""
    d = map_spec.dim
    mc = max(2, samples // 10)
    results = [check_compressor_contract(comp, d, stream.derive([0]), vectors=5, samples=samples)]
    if not map_spec.is_stochastic:
        results.append(check_fixed_point(map_spec, x_star))
    results.append(check_contraction(map_spec, cert, x_star, stream.derive([1]), samples=mc))
    results.append(check_lipschitz(map_spec, cert, x_star, stream.derive([2]), samples=mc))
    if params is not None:
        states = recursion_states(x_star, map_spec.num_nodes, 5, stream.derive([3]))
        results.extend(check_one_step_recursions(states, params, map_spec, comp, cert, x_star,
                                                 stream.derive([4]), draws=mc))
    for result in results:
        level = logging.INFO if result.passed else logging.WARNING
        logger.log(level, f"Verificación '{result.name}': {'OK' if result.passed else 'FALLA'} {result.detail}")
    return results
