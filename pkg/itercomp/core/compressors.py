"""
Operadores de compresión insesgados C(x; ξ).

Todos cumplen E[C(x; ξ)] = x y E‖C(x; ξ) − x‖² ≤ ω‖x‖² con el ω publicado
de cada operador. La implementación interna trabaja por lotes (una fila por
muestra) para que las estimaciones de Monte-Carlo sean vectorizadas.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .errors import CompressionError
from .numerics import RngStream, Vector, as_vector, ensure_finite

logger = logging.getLogger(__name__)

FLOAT_BITS = 64
# la potencia de dos superior de |x| ≥ 2^1023 no es representable
NATURAL_MAX_MAGNITUDE = 2.0 ** 1023


class CompressorKind(str, Enum):
    IDENTITY = "identity"
    RAND_K = "rand_k"
    NATURAL = "natural"
    STANDARD_DITHERING = "dithering"


@dataclass(frozen=True)
class CompressorSpec:
    """Descripción etiquetada de un operador de compresión."""
    kind: CompressorKind
    k: Optional[int] = None
    levels: Optional[int] = None

    def __post_init__(self):
        if self.kind == CompressorKind.RAND_K and (self.k is None or self.k < 1):
            raise CompressionError(f"RandK requiere k ≥ 1 (k={self.k})")
        if self.kind == CompressorKind.STANDARD_DITHERING and (self.levels is None or self.levels < 1):
            raise CompressionError(f"StandardDithering requiere s ≥ 1 (s={self.levels})")

    @classmethod
    def identity(cls) -> "CompressorSpec":
        return cls(CompressorKind.IDENTITY)

    @classmethod
    def rand_k(cls, k: int) -> "CompressorSpec":
        return cls(CompressorKind.RAND_K, k=k)

    @classmethod
    def natural(cls) -> "CompressorSpec":
        return cls(CompressorKind.NATURAL)

    @classmethod
    def dithering(cls, levels: int) -> "CompressorSpec":
        return cls(CompressorKind.STANDARD_DITHERING, levels=levels)

    def validate_for(self, d: int):
        if self.kind == CompressorKind.RAND_K and self.k > d:
            raise CompressionError(f"RandK con k={self.k} mayor que la dimensión d={d}")

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": self.kind.value}
        if self.k is not None:
            data["k"] = self.k
        if self.levels is not None:
            data["levels"] = self.levels
        return data

    def label(self) -> str:
        if self.kind == CompressorKind.RAND_K:
            return f"rand_k({self.k})"
        if self.kind == CompressorKind.STANDARD_DITHERING:
            return f"dithering({self.levels})"
        return self.kind.value


# ---------------------------------------------------------------------------
# Núcleos por lotes: X tiene forma (N, d), una muestra por fila
# ---------------------------------------------------------------------------

def _rand_k_batch(k: int, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    N, d = X.shape
    # Las primeras k posiciones de una permutación uniforme forman un k-subconjunto uniforme
    keys = rng.random((N, d))
    chosen = np.argsort(keys, axis=1)[:, :k]
    out = np.zeros_like(X)
    rows = np.arange(N)[:, None]
    out[rows, chosen] = X[rows, chosen] * (d / k)
    return out


def _check_natural_range(X: np.ndarray):
    if X.size and float(np.max(np.abs(X))) >= NATURAL_MAX_MAGNITUDE:
        raise CompressionError(
            f"Compresión natural fuera de rango: requiere |x| < 2^1023 (máximo {float(np.max(np.abs(X))):.3g})")


def _natural_batch(X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Redondeo aleatorio a potencias de dos; requiere |x| < 2^1023 en cada coordenada."""
    _check_natural_range(X)
    # |x| = m·2^e con m ∈ [0.5, 1): el intervalo es [2^(e−1), 2^e]
    mantissa, exponent = np.frexp(np.abs(X))
    low = np.ldexp(np.ones_like(X), exponent - 1)
    high = 2.0 * low
    abs_x = np.abs(X)
    nonzero = abs_x > 0
    prob_low = np.where(nonzero, (high - abs_x) / np.where(nonzero, low, 1.0), 1.0)
    u = rng.random(X.shape)
    magnitude = np.where(u < prob_low, low, high)
    return np.where(nonzero, np.sign(X) * magnitude, 0.0)


def _dithering_batch(levels: int, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    scaled = levels * np.abs(X) / safe
    lower = np.floor(scaled)
    prob_up = scaled - lower
    u = rng.random(X.shape)
    level = lower + (u < prob_up)
    out = np.sign(X) * norms * level / levels
    return np.where(norms > 0, out, 0.0)


def compress_batch(spec: CompressorSpec, X: np.ndarray, rng: Optional[np.random.Generator]) -> np.ndarray:
    """Aplica el compresor a cada fila de X con el generador dado."""
    spec.validate_for(X.shape[1])
    if spec.kind == CompressorKind.IDENTITY:
        return X.copy()
    if spec.kind == CompressorKind.RAND_K:
        return _rand_k_batch(spec.k, X, rng)
    if spec.kind == CompressorKind.NATURAL:
        return _natural_batch(X, rng)
    if spec.kind == CompressorKind.STANDARD_DITHERING:
        return _dithering_batch(spec.levels, X, rng)
    raise CompressionError(f"Tipo de compresor desconocido: {spec.kind}")


def apply_compressor(spec: CompressorSpec, x: Vector, stream: RngStream) -> Vector:
    """Una realización de C(x; ξ) con ξ tomado del flujo."""
    x = as_vector(x, "entrada del compresor")
    spec.validate_for(x.size)
    if spec.kind == CompressorKind.IDENTITY:
        return x.copy()
    y = compress_batch(spec, x[None, :], stream.generator())[0]
    return ensure_finite(y, "salida del compresor")


def compressor_omega(spec: CompressorSpec, d: int) -> float:
    """ω publicado del operador (la constante que consume la teoría)."""
    spec.validate_for(d)
    if spec.kind == CompressorKind.IDENTITY:
        return 0.0
    if spec.kind == CompressorKind.RAND_K:
        return d / spec.k - 1.0
    if spec.kind == CompressorKind.NATURAL:
        return 0.125
    s = spec.levels
    return min(d / s ** 2, math.sqrt(d) / s)


def message_bits(spec: CompressorSpec, d: int) -> int:
    """Costo en bits de un mensaje comprimido según el modelo de comunicación."""
    if spec.kind == CompressorKind.IDENTITY:
        return FLOAT_BITS * d
    if spec.kind == CompressorKind.RAND_K:
        return spec.k * (FLOAT_BITS + math.ceil(math.log2(d)))
    if spec.kind == CompressorKind.NATURAL:
        # signo + exponente de 8 bits
        return 9 * d
    return FLOAT_BITS + d * (1 + math.ceil(math.log2(spec.levels + 1)))


@dataclass(frozen=True)
class MomentEstimate:
    """Momentos empíricos de C(x; ξ) sobre N muestras."""
    mean: Vector
    mean_sq_deviation: float
    std_error: float
    mean_std_error: Vector


def estimate_moments(spec: CompressorSpec, x: Vector, samples: int, stream: RngStream) -> MomentEstimate:
    """Media empírica de C(x;ξ), E‖C(x;ξ)−x‖² y su error estándar."""
    if samples < 2:
        raise ValueError("Se requieren al menos 2 muestras")
    x = as_vector(x)
    X = np.broadcast_to(x, (samples, x.size)).copy()
    Y = compress_batch(spec, X, stream.generator())
    deviations = np.sum((Y - x) ** 2, axis=1)
    return MomentEstimate(
        mean=Y.mean(axis=0),
        mean_sq_deviation=float(deviations.mean()),
        std_error=float(deviations.std(ddof=1) / math.sqrt(samples)),
        mean_std_error=Y.std(axis=0, ddof=1) / math.sqrt(samples),
    )


def _coordinate_outcomes(spec: CompressorSpec, x: Vector, j: int) -> List[Tuple[float, float]]:
    value = x[j]
    if value == 0:
        return [(1.0, 0.0)]
    if spec.kind == CompressorKind.NATURAL:
        _, exponent = math.frexp(abs(value))
        low = math.ldexp(1.0, exponent - 1)
        high = 2.0 * low
        p_low = (high - abs(value)) / low
        sign = math.copysign(1.0, value)
        return [(p, sign * m) for p, m in ((p_low, low), (1.0 - p_low, high)) if p > 0]
    # dithering estándar
    norm = float(np.linalg.norm(x))
    s = spec.levels
    scaled = s * abs(value) / norm
    lower = math.floor(scaled)
    p_up = scaled - lower
    sign = math.copysign(1.0, value)
    return [(p, sign * norm * lvl / s) for p, lvl in ((1.0 - p_up, lower), (p_up, lower + 1)) if p > 0]


def enumerate_outcomes(spec: CompressorSpec, x: Vector) -> List[Tuple[float, Vector]]:
    """
    Distribución exacta de C(x; ξ) como lista de (probabilidad, resultado).
    Solo para dimensiones pequeñas: el número de resultados crece exponencialmente.
    """
    x = as_vector(x)
    d = x.size
    spec.validate_for(d)
    if spec.kind == CompressorKind.IDENTITY:
        return [(1.0, x.copy())]
    if spec.kind == CompressorKind.RAND_K:
        subsets = list(itertools.combinations(range(d), spec.k))
        outcomes = []
        for subset in subsets:
            y = np.zeros(d)
            idx = list(subset)
            y[idx] = x[idx] * (d / spec.k)
            outcomes.append((1.0 / len(subsets), y))
        return outcomes
    if spec.kind == CompressorKind.NATURAL:
        _check_natural_range(x)
    per_coordinate = [_coordinate_outcomes(spec, x, j) for j in range(d)]
    outcomes = []
    for combo in itertools.product(*per_coordinate):
        prob = math.prod(p for p, _ in combo)
        outcomes.append((prob, np.array([v for _, v in combo])))
    return outcomes
