"""
Red simulada maestro/trabajadores con contabilidad de bits.

El enlace de bajada (broadcast) no se comprime y cuesta 64·d bits por nodo;
el de subida (gather) cuesta message_bits(comp, d) por nodo. Cada ronda k
(la que produce x^{k+1}) deja n registros de broadcast y n de gather.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .compressors import FLOAT_BITS, CompressorSpec, message_bits
from .errors import GatherError
from .numerics import Vector

logger = logging.getLogger(__name__)

TRANSCRIPT_COLUMNS = ["round", "direction", "node", "bits"]


class Direction(str, Enum):
    BROADCAST = "broadcast"
    GATHER = "gather"


@dataclass(frozen=True)
class TranscriptRecord:
    round: int
    direction: Direction
    node: int
    payload: str
    bits: int


class Transcript:
    """Registro ordenado de todo lo comunicado durante una corrida."""

    def __init__(self):
        self.records: List[TranscriptRecord] = []
        self._round_bits: List[int] = []

    def __len__(self):
        return len(self.records)

    def append(self, record: TranscriptRecord):
        if record.bits <= 0:
            raise ValueError(f"Registro con bits no positivos: {record}")
        if record.round < len(self._round_bits) - 1:
            raise ValueError(f"Ronda {record.round} anterior a la ronda actual {len(self._round_bits) - 1}")
        while len(self._round_bits) <= record.round:
            self._round_bits.append(0)
        self._round_bits[record.round] += record.bits
        self.records.append(record)

    @property
    def total_bits(self) -> int:
        return sum(self._round_bits)

    @property
    def num_rounds(self) -> int:
        return len(self._round_bits)

    def round_bits(self, k: int) -> int:
        return self._round_bits[k] if k < len(self._round_bits) else 0

    def cumulative_bits(self, k: int) -> int:
        """Bits acumulados antes de la ronda k, es decir, los necesarios para obtener x^k."""
        return sum(self._round_bits[:k])

    def round_structure_ok(self, n: int) -> bool:
        """Cada ronda tiene exactamente n registros de broadcast y n de gather."""
        counts: Dict[int, Dict[Direction, int]] = {}
        for record in self.records:
            per_round = counts.setdefault(record.round, {Direction.BROADCAST: 0, Direction.GATHER: 0})
            per_round[record.direction] += 1
        return all(c[Direction.BROADCAST] == n and c[Direction.GATHER] == n for c in counts.values())

    def to_rows(self) -> List[Dict[str, Any]]:
        return [
            {"round": r.round, "direction": r.direction.value, "node": r.node, "bits": r.bits}
            for r in self.records
        ]


def broadcast(x: Vector, n: int, transcript: Transcript, round_k: int) -> List[Vector]:
    """Envía x^k a los n nodos sin comprimir."""
    bits = FLOAT_BITS * x.size
    for node in range(n):
        transcript.append(TranscriptRecord(round_k, Direction.BROADCAST, node, "iterate", bits))
    return [x.copy() for _ in range(n)]


def gather(messages: Sequence[Optional[Vector]], comp: CompressorSpec, transcript: Transcript,
           n: int, round_k: int) -> List[Vector]:
    """Recibe los n mensajes comprimidos en orden de nodo."""
    if len(messages) != n:
        raise GatherError(f"Ronda {round_k}: se esperaban {n} mensajes, llegaron {len(messages)}")
    for node, message in enumerate(messages):
        if message is None:
            raise GatherError(f"Ronda {round_k}: falta el mensaje del nodo {node}")
    bits = message_bits(comp, messages[0].size)
    for node in range(n):
        transcript.append(TranscriptRecord(round_k, Direction.GATHER, node, comp.label(), bits))
    return list(messages)


def bits_to_target(trajectory: Sequence, transcript: Transcript, target: float) -> Optional[int]:
    """Bits acumulados en el primer k con r^k ≤ target, o None si nunca se alcanza."""
    if len(trajectory) == 0:
        raise ValueError("Trayectoria vacía")
    for row in trajectory:
        if np.isfinite(row.r_sq) and row.r_sq <= target:
            return transcript.cumulative_bits(row.k)
    return None
