"""
Generación y carga de datos para los problemas de regresión ridge.

- Datos sintéticos con valores singulares controlados (número de condición κ).
- Archivos LIBSVM de texto (índices base 1), particionados por nodos.
- Problemas de punto de silla con acoplamientos aleatorios.
"""

import logging
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from ..core.errors import ConfigurationError, DatasetError
from ..core.numerics import ROLE_DATA, RngStream
from ..core.operators import RidgeProblem, SaddleProblem

logger = logging.getLogger(__name__)

DEFAULT_NOISE = 0.1

# Subflujos del rol de datos
_STREAM_LEFT = 0
_STREAM_RIGHT = 1
_STREAM_WEIGHTS = 2
_STREAM_NOISE = 3
_STREAM_COUPLING = 4


def _orthonormal_columns(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    # signo de la diagonal de R para que Q sea uniforme (Haar)
    return q * np.sign(np.diag(r))


def generate_synthetic(m: int, d: int, kappa: float, n: int, l2_weight: float, stream: RngStream,
                       noise: float = DEFAULT_NOISE) -> RidgeProblem:
    """
    Genera un problema ridge cuyo hessiano regularizado XᵀX/m + λI tiene
    autovalores geométricamente espaciados entre (1+λ) y (1+λ)·κ.

    Args:
        m: número total de filas (múltiplo de n)
        d: número de columnas (m ≥ d)
        kappa: número de condición objetivo (≥ 1)
        n: número de nodos; las filas se reparten en bloques contiguos iguales
        l2_weight: λ ≥ 0
        stream: flujo aleatorio del experimento

    Returns:
        RidgeProblem con n nodos de m/n filas cada uno
    """
    if kappa < 1:
        raise ConfigurationError(f"El número de condición debe ser ≥ 1 (κ={kappa})")
    if d < 1 or m < d:
        raise ConfigurationError(f"Se requiere m ≥ d ≥ 1 (m={m}, d={d})")
    if n < 1 or m % n != 0:
        raise ConfigurationError(f"m={m} debe ser divisible entre n={n}")
    if d == 1 and kappa != 1:
        raise ConfigurationError("Con d=1 el único número de condición posible es κ=1")
    if l2_weight < 0:
        raise ConfigurationError(f"λ debe ser ≥ 0 (λ={l2_weight})")

    base = stream.derive([ROLE_DATA])
    exponents = np.arange(d) / (d - 1) if d > 1 else np.zeros(1)
    eigenvalues = (1.0 + l2_weight) * kappa ** exponents
    singular_values = np.sqrt(m * (eigenvalues - l2_weight))

    U = _orthonormal_columns(base.derive([_STREAM_LEFT]).generator(), m, d)
    V = _orthonormal_columns(base.derive([_STREAM_RIGHT]).generator(), d, d)
    X = (U * singular_values) @ V.T
    w_true = base.derive([_STREAM_WEIGHTS]).generator().standard_normal(d)
    y = X @ w_true + noise * base.derive([_STREAM_NOISE]).generator().standard_normal(m)

    logger.info(f"Datos sintéticos: m={m}, d={d}, κ={kappa}, n={n}, λ={l2_weight}")
    return RidgeProblem(np.split(X, n), np.split(y, n), l2_weight)


def parse_libsvm_lines(lines, path=None) -> Tuple[np.ndarray, np.ndarray]:
    """Convierte líneas LIBSVM en (X denso, y). Las líneas vacías se ignoran."""
    rows: List[dict] = []
    labels: List[float] = []
    max_index = 0
    for line_number, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text:
            continue
        tokens = text.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise DatasetError(f"Etiqueta inválida '{tokens[0]}'", path, line_number)
        if not np.isfinite(label):
            raise DatasetError(f"Etiqueta no finita '{tokens[0]}'", path, line_number)
        entries = {}
        for token in tokens[1:]:
            index_text, sep, value_text = token.partition(":")
            if not sep:
                raise DatasetError(f"Par índice:valor mal formado '{token}'", path, line_number)
            try:
                index = int(index_text)
                value = float(value_text)
            except ValueError:
                raise DatasetError(f"Par índice:valor mal formado '{token}'", path, line_number)
            if index < 1:
                raise DatasetError(
                    f"Índice {index} inválido: el formato LIBSVM usa índices base 1", path, line_number)
            if not np.isfinite(value):
                raise DatasetError(f"Valor no finito en el índice {index}", path, line_number)
            entries[index] = value
            max_index = max(max_index, index)
        rows.append(entries)
        labels.append(label)

    if not rows:
        raise DatasetError("El archivo no contiene filas de datos", path)

    X = np.zeros((len(rows), max_index))
    for r, entries in enumerate(rows):
        for index, value in entries.items():
            X[r, index - 1] = value
    return X, np.array(labels)


def _decode_lines(raw_lines: List[bytes], path: Path) -> List[str]:
    lines = []
    for line_number, raw in enumerate(raw_lines, start=1):
        try:
            lines.append(raw.decode("utf-8"))
        except UnicodeDecodeError as e:
            raise DatasetError(f"Bytes no UTF-8 en la posición {e.start}", path, line_number)
    return lines


def load_libsvm(path: Union[str, Path], l2_weight: float, n: int) -> RidgeProblem:
    """
    Carga un archivo LIBSVM como problema ridge denso, repartiendo las filas
    en n bloques contiguos.
    """
    path = Path(path)
    if n < 1:
        raise ConfigurationError(f"n debe ser ≥ 1 (n={n})")
    try:
        with open(path, "rb") as handle:
            raw_lines = handle.read().split(b"\n")
    except OSError as e:
        raise DatasetError(f"No se pudo leer {path}: {e}", path)
    X, y = parse_libsvm_lines(_decode_lines(raw_lines, path), path)
    if X.shape[0] < n:
        raise ConfigurationError(f"{X.shape[0]} filas no alcanzan para n={n} nodos")
    logger.info(f"LIBSVM {path.name}: {X.shape[0]} filas, {X.shape[1]} columnas, n={n}")
    return RidgeProblem(np.array_split(X, n), np.array_split(y, n), l2_weight)


def generate_saddle(dim: int, mu: float, n: int, stream: RngStream, scale: float = 1.0) -> SaddleProblem:
    """Punto de silla cuadrático con M_i gaussianas de escala `scale`/√dim."""
    if dim < 1 or n < 1:
        raise ConfigurationError(f"Se requiere dim ≥ 1 y n ≥ 1 (dim={dim}, n={n})")
    rng = stream.derive([ROLE_DATA, _STREAM_COUPLING]).generator()
    couplings = [scale * rng.standard_normal((dim, dim)) / np.sqrt(dim) for _ in range(n)]
    return SaddleProblem(mu, couplings)
