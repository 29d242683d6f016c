"""
Módulo de exportación de resultados.
Trayectorias por semilla en CSV, transcripciones de red y el resumen JSON
de cada corrida, escritos dentro de un directorio protegido con lock.
"""

import csv
import json
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import pandas as pd
import portalocker

from .errors import ExportError
from .simnet import TRANSCRIPT_COLUMNS

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["seed", "k", "r_sq", "psi", "bits_cum", "wall_ns"]
LOCK_NAME = ".itercomp.lock"


def format_float(value: Optional[float]) -> str:
    """17 dígitos significativos: releer el texto devuelve el mismo float64."""
    if value is None:
        return ""
    return format(float(value), ".17g")


def _row_fields(row) -> Dict[str, Any]:
    return {
        "seed": row.seed,
        "k": row.k,
        "r_sq": format_float(row.r_sq),
        "psi": format_float(row.psi),
        "bits_cum": row.bits_cum,
        "wall_ns": row.wall_ns,
    }


def write_csv(rows: Iterable, path: Union[str, Path]) -> Path:
    """Escribe filas MetricsRow con la cabecera seed,k,r_sq,psi,bits_cum,wall_ns."""
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as csvfile:
            writer = csv.DictWriter(csvfile, fieldnames=CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow(_row_fields(row))
    except OSError as e:
        logger.error(f"Error escribiendo {path}: {e}")
        raise ExportError(f"Error escribiendo CSV {path}: {e}", path)
    logger.debug(f"CSV escrito: {path}")
    return path


def write_transcript_csv(records: List[Dict[str, Any]], path: Union[str, Path]) -> Path:
    """Exporta la transcripción de red (round, direction, node, bits)."""
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as csvfile:
            writer = csv.DictWriter(csvfile, fieldnames=TRANSCRIPT_COLUMNS, lineterminator="\n",
                                    extrasaction="ignore")
            writer.writeheader()
            writer.writerows(records)
    except OSError as e:
        raise ExportError(f"Error escribiendo transcripción {path}: {e}", path)
    return path


def _json_ready(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    return value


def write_summary(summary: Dict[str, Any], path: Union[str, Path]) -> Path:
    """Resumen JSON; NaN e infinito se escriben como null."""
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(_json_ready(summary), f, indent=2, ensure_ascii=False, allow_nan=False)
            f.write("\n")
    except (OSError, ValueError) as e:
        raise ExportError(f"Error escribiendo resumen {path}: {e}", path)
    logger.info(f"Resumen escrito: {path}")
    return path


def read_trajectories(paths: Iterable[Union[str, Path]]) -> pd.DataFrame:
    """Concatena CSVs de trayectorias en un DataFrame (psi vacío → NaN)."""
    frames = []
    for path in paths:
        try:
            frames.append(pd.read_csv(path, dtype={"seed": "uint64", "k": "int64", "bits_cum": "int64"},
                                      float_precision="round_trip"))
        except (OSError, ValueError) as e:
            raise ExportError(f"Error leyendo {path}: {e}", path)
    if not frames:
        return pd.DataFrame(columns=CSV_COLUMNS)
    return pd.concat(frames, ignore_index=True)


class RunDirectory:
    """Directorio de salida de una corrida con lock exclusivo mientras se escribe."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._lock_file = None

    def __enter__(self) -> "RunDirectory":
        self._acquire_file_lock()
        return self

    def __exit__(self, exc_type, exc, tb):
        self._release_file_lock()
        return False

    def _acquire_file_lock(self):
        """Adquiere un lock exclusivo sobre el directorio de salida."""
        try:
            self.path.mkdir(parents=True, exist_ok=True)
            lock_path = self.path / LOCK_NAME
            self._lock_file = open(lock_path, "w")
            portalocker.lock(self._lock_file, portalocker.LOCK_EX | portalocker.LOCK_NB)
            logger.debug(f"Lock adquirido: {lock_path}")
        except portalocker.LockException:
            self._close()
            raise ExportError(f"El directorio {self.path} está siendo usado por otra corrida", self.path)
        except OSError as e:
            self._close()
            raise ExportError(f"Error adquiriendo lock en {self.path}: {e}", self.path)

    def _close(self):
        if self._lock_file:
            self._lock_file.close()
            self._lock_file = None

    def _release_file_lock(self):
        """Libera el lock del directorio."""
        if self._lock_file:
            try:
                portalocker.unlock(self._lock_file)
                self._lock_file.close()
                lock_path = self.path / LOCK_NAME
                if os.path.exists(lock_path):
                    os.remove(lock_path)
                logger.debug("Lock liberado")
            except Exception as e:
                logger.warning(f"Error liberando lock: {e}")
            finally:
                self._lock_file = None

    def seed_csv(self, seed: int) -> Path:
        return self.path / f"seed_{seed}.csv"

    def transcript_csv(self, seed: int) -> Path:
        return self.path / f"transcript_{seed}.csv"

    @property
    def summary_path(self) -> Path:
        return self.path / "summary.json"
