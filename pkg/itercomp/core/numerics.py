"""
Aritmética de vectores densos y flujos aleatorios deterministas.

Cada flujo se identifica por (semilla raíz, ruta); la ruta codifica
(rol, nodo i, iteración k) de modo que el ruido del mapa y el ruido de
compresión de cada nodo en cada iteración son independientes y reproducibles.
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import DimensionMismatchError, NumericsError

logger = logging.getLogger(__name__)

# Alias de tipo: vector real 1-D de 64 bits
Vector = np.ndarray

# Roles de aleatoriedad (primer componente de la ruta)
ROLE_INIT = 0
ROLE_MAP_NOISE = 1
ROLE_COMPRESSION_NOISE = 2
ROLE_DATA = 3
ROLE_MONTE_CARLO = 4


def as_vector(values, name: str = "vector") -> Vector:
    """Convierte a vector float64 1-D y rechaza NaN/Inf."""
    vector = np.asarray(values, dtype=np.float64)
    if vector.ndim != 1:
        vector = vector.reshape(-1)
    if not np.all(np.isfinite(vector)):
        raise NumericsError(f"{name} contiene valores no finitos")
    return vector


def ensure_finite(vector: Vector, name: str = "vector") -> Vector:
    if not np.all(np.isfinite(vector)):
        raise NumericsError(f"{name} contiene valores no finitos")
    return vector


def check_same_dim(a: Vector, b: Vector):
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"Dimensiones incompatibles: {a.shape} vs {b.shape}")


def squared_norm(a: Vector) -> float:
    return float(np.dot(a, a))


def squared_distance(a: Vector, b: Vector) -> float:
    """Retorna Σ_j (a_j − b_j)²."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_dim(a, b)
    diff = a - b
    return float(np.dot(diff, diff))


def mean_and_stderr(samples: Sequence[float]) -> Tuple[float, float]:
    """Media empírica y su error estándar (ddof=1)."""
    values = np.asarray(samples, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise ValueError("No hay muestras")
    mean = float(values.mean())
    if values.size < 2:
        return mean, float("nan")
    return mean, float(values.std(ddof=1) / np.sqrt(values.size))


@dataclass(frozen=True)
class RngStream:
    """
    Flujo aleatorio divisible basado en contador (Philox).

    El mismo (root_seed, path) produce siempre la misma secuencia; rutas
    distintas producen secuencias independientes.
    """
    root_seed: int
    path: Tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.root_seed < 2 ** 64:
            raise ValueError(f"Semilla raíz fuera de rango de 64 bits: {self.root_seed}")
        if any(label < 0 for label in self.path):
            raise ValueError(f"Ruta con etiquetas negativas: {self.path}")

    def derive(self, label: Sequence[int]) -> "RngStream":
        return derive_substream(self, label)

    def generator(self) -> np.random.Generator:
        """Generador nuevo posicionado al inicio del flujo."""
        seed_sequence = np.random.SeedSequence(entropy=self.root_seed,
                                               spawn_key=tuple(self.path))
        return np.random.Generator(np.random.Philox(seed_sequence))


def derive_substream(parent: RngStream, label: Sequence[int]) -> RngStream:
    """Extiende la ruta del flujo padre con la etiqueta."""
    return RngStream(parent.root_seed, tuple(parent.path) + tuple(int(v) for v in label))


def sample_standard_gaussian(stream: RngStream, count: int) -> Vector:
    """`count` normales estándar i.i.d. del inicio del flujo."""
    if count <= 0:
        raise ValueError("count debe ser positivo")
    return stream.generator().standard_normal(count)
