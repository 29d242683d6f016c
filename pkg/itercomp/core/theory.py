"""
Fórmulas cerradas de tasas, radios y pasos.

Una hipótesis que no se cumple no es un error: el reporte se marca
valid=False con radio infinito, para poder correr configuraciones fuera de
la frontera y mostrar la divergencia.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict

from .algorithms import VrParams
from .errors import TheoryError
from .operators import ContractionCertificate

logger = logging.getLogger(__name__)

RELATIVE_SLACK = 1e-12


@dataclass(frozen=True)
class BoundReport:
    rate_factor: float
    plateau_radius_sq: float
    valid: bool
    hypothesis_note: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rate_factor": self.rate_factor,
            "plateau_radius_sq": self.plateau_radius_sq if math.isfinite(self.plateau_radius_sq) else None,
            "valid": self.valid,
            "hypothesis_note": self.hypothesis_note,
        }


def plain_bound(cert: ContractionCertificate, omega: float, n: int) -> BoundReport:
    """
    Método simple: E r^k ≤ (1 − ρ + 2ωc²/n)^k r^0 + (B + 2ωσ²/n)/(ρ − 2ωc²/n),
    válido si ρ > 2ωc²/n.
    """
    penalty = 2.0 * omega * cert.c_sq / n
    margin = cert.rho - penalty
    rate = 1.0 - margin
    if margin <= 0:
        note = (f"ω={omega:.6g} fuera de la frontera: ρ={cert.rho:.6g} ≤ 2ωc²/n={penalty:.6g}; "
                f"no hay garantía de convergencia")
        return BoundReport(rate, math.inf, False, note)
    plateau = (cert.B + 2.0 * omega * cert.sigma_sq / n) / margin
    return BoundReport(rate, plateau, True, f"ρ − 2ωc²/n = {margin:.6g} > 0")


def omega_frontier(cert: ContractionCertificate, n: int = 1) -> float:
    """Mayor ω admitido por plain_bound: ρn/(2c²)."""
    return cert.rho * n / (2.0 * cert.c_sq)


def gd_frontier(kappa: float) -> float:
    """Frontera ω < 1/(2κ) de GD con γ = 1/L (ρ = 1/κ, c² = 1, n = 1)."""
    if kappa < 1:
        raise TheoryError(f"κ debe ser ≥ 1 (κ={kappa})")
    return 1.0 / (2.0 * kappa)


def _eta_cap(cert: ContractionCertificate, omega: float, n: int) -> float:
    if omega == 0:
        return 1.0
    return min(1.0, cert.rho * n / (12.0 * omega * cert.c_sq))


def vr_stepsizes(cert: ContractionCertificate, omega: float, n: int) -> VrParams:
    """α = 1/(1+ω); η = min{1, ρn/(12ωc²)}, con η = 1 si ω = 0."""
    return VrParams(alpha=1.0 / (1.0 + omega), eta=_eta_cap(cert, omega, n))


def vr_bound(cert: ContractionCertificate, params: VrParams, omega: float, n: int) -> BoundReport:
    """
    Reducción de varianza: E Ψ^k ≤ (1 − min{α, ηρ}/2)^k Ψ^0 + 2ηB/min{α, ηρ}.
    """
    contraction = min(params.alpha, params.eta * cert.rho)
    rate = 1.0 - contraction / 2.0
    notes = []
    valid = True
    if params.alpha > (1.0 + RELATIVE_SLACK) / (omega + 1.0):
        valid = False
        notes.append(f"α={params.alpha:.6g} excede 1/(ω+1)={1.0 / (omega + 1.0):.6g}")
    cap = _eta_cap(cert, omega, n)
    if params.eta <= 0 or params.eta > cap * (1.0 + RELATIVE_SLACK):
        valid = False
        notes.append(f"η={params.eta:.6g} fuera de (0, {cap:.6g}]")
    if omega == 0:
        notes.append("ω = 0: se toma η = 1 como límite de la fórmula")
    if params.alpha < params.eta * cert.rho / 10.0:
        notes.append(f"α={params.alpha:.6g} ≪ ηρ={params.eta * cert.rho:.6g}: la tasa queda limitada por α")
    if not valid or contraction <= 0:
        return BoundReport(rate, math.inf, False, "; ".join(notes))
    plateau = 2.0 * params.eta * cert.B / contraction
    return BoundReport(rate, plateau, True, "; ".join(notes))


def geometric_bound(A: float, B0: float, r0: float, k: int) -> float:
    """Cota de r_{k+1} ≤ A r_k + B0: A^k r0 + B0/(1 − A)."""
    if not 0 < A < 1:
        raise TheoryError(f"A debe estar en (0, 1) (A={A})")
    if B0 < 0 or r0 < 0 or k < 0:
        raise TheoryError("B0, r0 y k deben ser no negativos")
    return A ** k * r0 + B0 / (1.0 - A)


def plain_envelope(cert: ContractionCertificate, omega: float, n: int, r0: float, k: int) -> float:
    """Valor de la cota del método simple en la iteración k."""
    report = plain_bound(cert, omega, n)
    if not report.valid:
        return math.inf
    return report.rate_factor ** k * r0 + report.plateau_radius_sq


def vr_envelope(cert: ContractionCertificate, params: VrParams, omega: float, n: int, psi0: float, k: int) -> float:
    """Valor de la cota de Ψ^k con reducción de varianza."""
    report = vr_bound(cert, params, omega, n)
    if not report.valid:
        return math.inf
    return report.rate_factor ** k * psi0 + report.plateau_radius_sq
