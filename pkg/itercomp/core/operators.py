"""
Problemas de optimización y mapas estocásticos de punto fijo T_i(x, s_i).

Cada mapa se acompaña de un certificado de contracción (ρ, B, c², σ²), que es
lo que consumen las cotas teóricas. Los problemas son cuadráticos (o
cuadráticos más un término no suave con prox explícito) y el punto de silla
es cuadrático fuertemente convexo-cóncavo.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, DimensionMismatchError, ReferenceSolveError
from .numerics import (
    ROLE_MONTE_CARLO,
    RngStream,
    Vector,
    as_vector,
    ensure_finite,
    squared_norm,
)

logger = logging.getLogger(__name__)

REFERENCE_TOLERANCE = 1e-14
REFERENCE_MAX_ITERATIONS = 1_000_000


# ---------------------------------------------------------------------------
# Términos no suaves y operador proximal
# ---------------------------------------------------------------------------

class RegularizerKind(str, Enum):
    NONE = "none"
    L1 = "l1"
    L2 = "l2"


def prox(h_kind: Union[RegularizerKind, str], weight: float, gamma: float, v: Vector) -> Vector:
    """
    Operador proximal exacto de γH.

    ℓ1 → umbral suave con γ·weight; ℓ2 (H = weight/2·‖x‖²) → v/(1+γ·weight);
    none → identidad.
    """
    kind = RegularizerKind(h_kind)
    if gamma * weight < 0:
        raise ConfigurationError(f"prox requiere γ·weight ≥ 0 (γ={gamma}, weight={weight})")
    v = np.asarray(v, dtype=np.float64)
    if kind == RegularizerKind.L1:
        threshold = gamma * weight
        return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)
    if kind == RegularizerKind.L2:
        return v / (1.0 + gamma * weight)
    return v.copy()


@dataclass(frozen=True)
class Regularizer:
    kind: RegularizerKind = RegularizerKind.NONE
    weight: float = 0.0

    def __post_init__(self):
        if self.weight < 0:
            raise ConfigurationError(f"Peso del regularizador negativo: {self.weight}")

    def prox(self, gamma: float, v: Vector) -> Vector:
        return prox(self.kind, self.weight, gamma, v)

    def value(self, x: Vector) -> float:
        if self.kind == RegularizerKind.L1:
            return self.weight * float(np.abs(x).sum())
        if self.kind == RegularizerKind.L2:
            return 0.5 * self.weight * squared_norm(x)
        return 0.0

    @property
    def is_none(self) -> bool:
        return self.kind == RegularizerKind.NONE or self.weight == 0.0


# ---------------------------------------------------------------------------
# Problemas
# ---------------------------------------------------------------------------

class QuadraticProblem:
    """
    F(x) = (1/n) Σ_i f_i(x) con f_i(x) = ½xᵀA_i x − b_iᵀx + (λ/2)‖x‖².
    """

    data_backed = False

    def __init__(self, hessians: Sequence[np.ndarray], linear_terms: Sequence[Vector], l2_weight: float = 0.0):
        if len(hessians) == 0 or len(hessians) != len(linear_terms):
            raise ConfigurationError("Se requiere un par (A_i, b_i) por nodo")
        if l2_weight < 0:
            raise ConfigurationError(f"λ debe ser ≥ 0 (λ={l2_weight})")
        self.hessians = tuple(np.array(A, dtype=np.float64) for A in hessians)
        self.linear_terms = tuple(as_vector(b, "b_i") for b in linear_terms)
        self.l2_weight = float(l2_weight)
        d = self.linear_terms[0].size
        for i, (A, b) in enumerate(zip(self.hessians, self.linear_terms)):
            if A.shape != (d, d) or b.size != d:
                raise DimensionMismatchError(f"Nodo {i}: dimensiones incompatibles {A.shape}, {b.shape}")
            if not np.allclose(A, A.T, atol=1e-12 * max(1.0, np.abs(A).max())):
                raise ConfigurationError(f"Nodo {i}: A_i no es simétrica")
        for arr in self.hessians + self.linear_terms:
            arr.setflags(write=False)
        if self.strong_convexity() <= 0:
            raise ConfigurationError("El problema no es fuertemente convexo (μ ≤ 0)")

    @property
    def num_nodes(self) -> int:
        return len(self.hessians)

    @property
    def dim(self) -> int:
        return self.linear_terms[0].size

    def node_hessian(self, i: int) -> np.ndarray:
        return self.hessians[i] + self.l2_weight * np.eye(self.dim)

    def full_hessian(self) -> np.ndarray:
        return sum(self.hessians) / self.num_nodes + self.l2_weight * np.eye(self.dim)

    def mean_linear_term(self) -> Vector:
        return sum(self.linear_terms) / self.num_nodes

    def gradient(self, i: int, x: Vector) -> Vector:
        return self.hessians[i] @ x - self.linear_terms[i] + self.l2_weight * x

    def value(self, i: int, x: Vector) -> float:
        return float(0.5 * x @ self.hessians[i] @ x - self.linear_terms[i] @ x
                     + 0.5 * self.l2_weight * x @ x)

    def smoothness(self) -> float:
        """L = max_i L_i."""
        return max(float(np.linalg.eigvalsh(self.node_hessian(i))[-1]) for i in range(self.num_nodes))

    def node_curvature_range(self, i: int) -> Tuple[float, float]:
        eigenvalues = np.linalg.eigvalsh(self.node_hessian(i))
        return float(eigenvalues[0]), float(eigenvalues[-1])

    def strong_convexity(self) -> float:
        """μ de F (mínimo autovalor del hessiano promedio)."""
        return float(np.linalg.eigvalsh(self.full_hessian())[0])

    def condition_number(self) -> float:
        eigenvalues = np.linalg.eigvalsh(self.full_hessian())
        return float(eigenvalues[-1] / eigenvalues[0])

    def num_samples(self, i: int) -> Optional[int]:
        return None

    def sample_gradient(self, i: int, x: Vector, rng: Optional[np.random.Generator], minibatch: int) -> Vector:
        raise ConfigurationError("SGD requiere un problema respaldado por datos (filas muestreables)")


class RidgeProblem(QuadraticProblem):
    """
    Regresión lineal con regularización ℓ2:
    f_i(x) = (1/(2m_i))‖X_i x − y_i‖² + (λ/2)‖x‖².
    """

    data_backed = True

    def __init__(self, features: Sequence[np.ndarray], targets: Sequence[Vector], l2_weight: float):
        if len(features) == 0 or len(features) != len(targets):
            raise ConfigurationError("Se requiere un par (X_i, y_i) por nodo")
        self.features = tuple(np.array(X, dtype=np.float64) for X in features)
        self.targets = tuple(as_vector(y, "y_i") for y in targets)
        d = self.features[0].shape[1]
        for i, (X, y) in enumerate(zip(self.features, self.targets)):
            if X.ndim != 2 or X.shape[1] != d or X.shape[0] != y.size or X.shape[0] == 0:
                raise DimensionMismatchError(f"Nodo {i}: datos incompatibles {X.shape}, {y.shape}")
        hessians = [X.T @ X / X.shape[0] for X in self.features]
        linear_terms = [X.T @ y / X.shape[0] for X, y in zip(self.features, self.targets)]
        super().__init__(hessians, linear_terms, l2_weight)
        for arr in self.features + self.targets:
            arr.setflags(write=False)

    def value(self, i: int, x: Vector) -> float:
        residual = self.features[i] @ x - self.targets[i]
        return float(0.5 * residual @ residual / residual.size + 0.5 * self.l2_weight * x @ x)

    def num_samples(self, i: int) -> int:
        return self.features[i].shape[0]

    def sample_gradient(self, i: int, x: Vector, rng: Optional[np.random.Generator], minibatch: int) -> Vector:
        """Gradiente insesgado con minibatch muestreado con reemplazo."""
        m_i = self.num_samples(i)
        if minibatch >= m_i:
            return self.gradient(i, x)
        idx = rng.integers(0, m_i, size=minibatch)
        X = self.features[i][idx]
        residual = X @ x - self.targets[i][idx]
        return X.T @ residual / minibatch + self.l2_weight * x

    def minibatch_hessian_second_moment(self, i: int, minibatch: int) -> np.ndarray:
        """E[Ĥ²] para Ĥ = (1/m)Σ_t a_t a_tᵀ + λI con índices i.i.d. uniformes."""
        X = self.features[i]
        m_i = X.shape[0]
        H0 = self.hessians[i]
        lam = self.l2_weight
        if minibatch >= m_i:
            S2 = H0 @ H0
        else:
            row_norms = np.sum(X ** 2, axis=1)
            rank_one_square = (X.T * row_norms) @ X / m_i
            S2 = rank_one_square / minibatch + (1.0 - 1.0 / minibatch) * (H0 @ H0)
        return S2 + 2.0 * lam * H0 + lam ** 2 * np.eye(self.dim)


class CompositeProblem:
    """
    F + G + H: parte suave (cuadrática o ridge) más dos términos con prox
    explícito. ProxSGD usa solo H; Davis-Yin usa G y H.
    """

    def __init__(self, smooth: QuadraticProblem, h: Regularizer = Regularizer(), g: Regularizer = Regularizer()):
        if g.kind == RegularizerKind.L1 and not g.is_none:
            raise ConfigurationError("G debe ser ninguno o ℓ2 (prox lineal)")
        self.smooth = smooth
        self.h = h
        self.g = g

    data_backed = property(lambda self: self.smooth.data_backed)
    num_nodes = property(lambda self: self.smooth.num_nodes)
    dim = property(lambda self: self.smooth.dim)

    def gradient(self, i, x):
        return self.smooth.gradient(i, x)

    def value(self, i, x):
        return self.smooth.value(i, x)

    def smoothness(self):
        return self.smooth.smoothness()

    def strong_convexity(self):
        return self.smooth.strong_convexity()

    def node_curvature_range(self, i):
        return self.smooth.node_curvature_range(i)

    def num_samples(self, i):
        return self.smooth.num_samples(i)

    def sample_gradient(self, i, x, rng, minibatch):
        return self.smooth.sample_gradient(i, x, rng, minibatch)


class SaddleProblem:
    """
    F_i(x, y) = (μ/2)‖x‖² − (μ/2)‖y‖² + xᵀM_i y, con z = (x, y) apilado.
    El punto de silla de F = (1/n)ΣF_i es (0, 0).
    """

    data_backed = False

    def __init__(self, mu: float, couplings: Sequence[np.ndarray]):
        if mu <= 0:
            raise ConfigurationError(f"μ debe ser > 0 (μ={mu})")
        if len(couplings) == 0:
            raise ConfigurationError("Se requiere al menos una matriz de acoplamiento")
        self.mu = float(mu)
        self.couplings = tuple(np.atleast_2d(np.array(M, dtype=np.float64)) for M in couplings)
        shape = self.couplings[0].shape
        if any(M.shape != shape for M in self.couplings):
            raise DimensionMismatchError("Las matrices de acoplamiento deben tener la misma forma")
        for M in self.couplings:
            M.setflags(write=False)
        self.dim_x, self.dim_y = shape

    @property
    def num_nodes(self) -> int:
        return len(self.couplings)

    @property
    def dim(self) -> int:
        return self.dim_x + self.dim_y

    def _split(self, z: Vector) -> Tuple[Vector, Vector]:
        return z[:self.dim_x], z[self.dim_x:]

    def gradient(self, i: int, z: Vector) -> Vector:
        """(∇_x F_i, ∇_y F_i)."""
        x, y = self._split(z)
        M = self.couplings[i]
        return np.concatenate([self.mu * x + M @ y, -self.mu * y + M.T @ x])

    def field(self, i: int, z: Vector) -> Vector:
        """Campo de descenso-ascenso (∇_x F_i, −∇_y F_i)."""
        x, y = self._split(z)
        M = self.couplings[i]
        return np.concatenate([self.mu * x + M @ y, self.mu * y - M.T @ x])

    def value(self, i: int, z: Vector) -> float:
        x, y = self._split(z)
        return float(0.5 * self.mu * (x @ x) - 0.5 * self.mu * (y @ y) + x @ self.couplings[i] @ y)

    def smoothness(self) -> float:
        """Constante de Lipschitz del campo: max_i sqrt(μ² + ‖M_i‖²)."""
        return max(math.sqrt(self.mu ** 2 + float(np.linalg.norm(M, 2)) ** 2) for M in self.couplings)

    def strong_convexity(self) -> float:
        return self.mu

    def field_matrix(self) -> np.ndarray:
        M = sum(self.couplings) / self.num_nodes
        top = np.hstack([self.mu * np.eye(self.dim_x), M])
        bottom = np.hstack([-M.T, self.mu * np.eye(self.dim_y)])
        return np.vstack([top, bottom])


Problem = Union[QuadraticProblem, CompositeProblem, SaddleProblem]


def smooth_part(problem: Problem) -> Optional[QuadraticProblem]:
    if isinstance(problem, CompositeProblem):
        return problem.smooth
    if isinstance(problem, QuadraticProblem):
        return problem
    return None


def regularizers_of(problem: Problem) -> Tuple[Regularizer, Regularizer]:
    """(G, H) del problema; ninguno para problemas suaves."""
    if isinstance(problem, CompositeProblem):
        return problem.g, problem.h
    return Regularizer(), Regularizer()


# ---------------------------------------------------------------------------
# Mapas
# ---------------------------------------------------------------------------

class MapKind(str, Enum):
    GD = "gd"
    SGD = "sgd"
    PROX_SGD = "prox_sgd"
    GDA = "gda"
    DAVIS_YIN = "davis_yin"


def gda_rho(problem: SaddleProblem, gamma: float) -> float:
    L = problem.smoothness()
    return 2.0 * gamma * problem.mu - gamma ** 2 * L ** 2


def davis_yin_lipschitz(problem: Problem, gamma: float, i: int) -> float:
    """
    Cota de Lipschitz del mapa de tres operadores del nodo i:
    q_i = (1 − s) + max(|2s − 1 − γsμ_i|, |2s − 1 − γsL_i|), con s = 1/(1 + γ w_G).
    """
    g, _ = regularizers_of(problem)
    w_g = 0.0 if g.is_none else g.weight
    s = 1.0 / (1.0 + gamma * w_g)
    mu_i, L_i = problem.node_curvature_range(i)
    return (1.0 - s) + max(abs(2 * s - 1 - gamma * s * mu_i), abs(2 * s - 1 - gamma * s * L_i))


def auto_gamma(kind: MapKind, problem: Problem) -> float:
    """γ por defecto: 1/L para mapas de gradiente, μ/L² para GDA."""
    kind = MapKind(kind)
    if kind == MapKind.GDA:
        if not isinstance(problem, SaddleProblem):
            raise ConfigurationError("GDA requiere un problema de punto de silla")
        return problem.mu / problem.smoothness() ** 2
    return 1.0 / problem.smoothness()


class MapSpec:
    """Mapa estocástico T_i(·, s) sobre un problema, con paso γ."""

    def __init__(self, kind: Union[MapKind, str], gamma: float, problem: Problem, minibatch: Optional[int] = None):
        self.kind = MapKind(kind)
        self.gamma = float(gamma)
        self.problem = problem
        self.minibatch = minibatch
        self._validate()

    def __repr__(self):
        return f"MapSpec(kind={self.kind.value}, gamma={self.gamma:.6g}, minibatch={self.minibatch})"

    @property
    def num_nodes(self) -> int:
        return self.problem.num_nodes

    @property
    def dim(self) -> int:
        return self.problem.dim

    @property
    def is_stochastic(self) -> bool:
        if self.kind not in (MapKind.SGD, MapKind.PROX_SGD):
            return False
        return any(self.minibatch < self.problem.num_samples(i) for i in range(self.num_nodes))

    def _validate(self):
        if not self.gamma > 0:
            raise ConfigurationError(f"gamma debe ser > 0 (gamma={self.gamma})")
        problem = self.problem
        if self.kind == MapKind.GDA:
            if not isinstance(problem, SaddleProblem):
                raise ConfigurationError("GDA requiere un problema de punto de silla")
            rho = gda_rho(problem, self.gamma)
            if rho <= 0:
                raise ConfigurationError(
                    f"gamma={self.gamma:.6g} demasiado grande para GDA: ρ = 2γμ − γ²L² = {rho:.3g} ≤ 0")
            return
        if isinstance(problem, SaddleProblem):
            raise ConfigurationError(f"El mapa {self.kind.value} no aplica a problemas de punto de silla")
        g, h = regularizers_of(problem)
        L = problem.smoothness()
        if self.kind == MapKind.GD:
            if not (g.is_none and h.is_none):
                raise ConfigurationError("GD requiere un problema suave (sin términos no suaves)")
        if self.kind in (MapKind.SGD, MapKind.PROX_SGD):
            if not problem.data_backed:
                raise ConfigurationError(f"{self.kind.value} requiere un problema respaldado por datos")
            if self.minibatch is None or self.minibatch < 1:
                raise ConfigurationError(f"minibatch debe ser ≥ 1 (minibatch={self.minibatch})")
            if self.kind == MapKind.SGD and not (g.is_none and h.is_none):
                raise ConfigurationError("SGD no admite términos no suaves; use prox_sgd")
            if self.kind == MapKind.PROX_SGD and not g.is_none:
                raise ConfigurationError("prox_sgd usa solo H; G debe ser ninguno")
            if self.gamma * problem.strong_convexity() > 1:
                raise ConfigurationError(f"gamma={self.gamma:.6g} da ρ = γμ > 1")
        if self.kind in (MapKind.GD, MapKind.PROX_SGD) and self.gamma > (1.0 + 1e-12) / L:
            raise ConfigurationError(f"gamma={self.gamma:.6g} excede 1/L = {1.0 / L:.6g}")
        if self.kind == MapKind.DAVIS_YIN:
            q = np.mean([davis_yin_lipschitz(problem, self.gamma, i) for i in range(self.num_nodes)])
            if q >= 1:
                raise ConfigurationError(
                    f"gamma={self.gamma:.6g}: el mapa Davis-Yin no es contractivo (q = {q:.4g} ≥ 1)")

    def check_point(self, i: int, x: Vector):
        if not 0 <= i < self.num_nodes:
            raise IndexError(f"Nodo {i} fuera de rango (n={self.num_nodes})")
        if x.shape != (self.dim,):
            raise DimensionMismatchError(f"Dimensión {x.shape} distinta de ({self.dim},)")


def _davis_yin_step(problem: Problem, gamma: float, i: int, z: Vector, gradient: Vector = None) -> Vector:
    g, h = regularizers_of(problem)
    x_g = g.prox(gamma, z)
    grad = problem.gradient(i, x_g) if gradient is None else gradient
    x_h = h.prox(gamma, 2.0 * x_g - z - gamma * grad)
    return z + x_h - x_g


def apply_map(map_spec: MapSpec, i: int, x: Vector, stream: Optional[RngStream] = None) -> Vector:
    """Una aplicación de T_i(x, s_i) con s_i tomado del flujo."""
    x = np.asarray(x, dtype=np.float64)
    map_spec.check_point(i, x)
    problem = map_spec.problem
    gamma = map_spec.gamma
    kind = map_spec.kind
    if kind == MapKind.GD:
        out = x - gamma * problem.gradient(i, x)
    elif kind in (MapKind.SGD, MapKind.PROX_SGD):
        stochastic = map_spec.minibatch < problem.num_samples(i)
        rng = stream.generator() if stochastic else None
        out = x - gamma * problem.sample_gradient(i, x, rng, map_spec.minibatch)
        if kind == MapKind.PROX_SGD:
            _, h = regularizers_of(problem)
            out = h.prox(gamma, out)
    elif kind == MapKind.GDA:
        out = x - gamma * problem.field(i, x)
    else:
        out = _davis_yin_step(problem, gamma, i, x)
    return ensure_finite(out, f"T_{i}(x)")


def expected_map(map_spec: MapSpec, i: int, x: Vector) -> Vector:
    """Versión determinista de T_i (gradiente completo)."""
    x = np.asarray(x, dtype=np.float64)
    if map_spec.kind in (MapKind.SGD, MapKind.PROX_SGD):
        problem = map_spec.problem
        out = x - map_spec.gamma * problem.gradient(i, x)
        if map_spec.kind == MapKind.PROX_SGD:
            out = regularizers_of(problem)[1].prox(map_spec.gamma, out)
        return out
    return apply_map(map_spec, i, x)


def averaged_map(map_spec: MapSpec, x: Vector) -> Vector:
    return sum(expected_map(map_spec, i, x) for i in range(map_spec.num_nodes)) / map_spec.num_nodes


# ---------------------------------------------------------------------------
# Soluciones de referencia
# ---------------------------------------------------------------------------

def _converged(step: Vector, x: Vector) -> bool:
    return math.sqrt(squared_norm(step)) <= REFERENCE_TOLERANCE * max(1.0, math.sqrt(squared_norm(x)))


def solve_reference(problem: Problem) -> Vector:
    """x* del problema: minimizador de F (+G+H) o punto de silla."""
    if isinstance(problem, SaddleProblem):
        return np.linalg.solve(problem.field_matrix(), np.zeros(problem.dim))
    smooth = smooth_part(problem)
    x = np.linalg.solve(smooth.full_hessian(), smooth.mean_linear_term())
    if not isinstance(problem, CompositeProblem) or (problem.g.is_none and problem.h.is_none):
        return x
    # gradiente proximal sobre (F + G) + H; G es ℓ2 o nulo y se suma a la parte suave
    w_g = 0.0 if problem.g.is_none else problem.g.weight
    L = float(np.linalg.eigvalsh(smooth.full_hessian())[-1]) + w_g
    step = 1.0 / L
    H = smooth.full_hessian()
    b = smooth.mean_linear_term()
    for iteration in range(REFERENCE_MAX_ITERATIONS):
        x_next = problem.h.prox(step, x - step * (H @ x - b + w_g * x))
        if _converged(x_next - x, x_next):
            logger.debug(f"Referencia compuesta convergió en {iteration + 1} iteraciones")
            return x_next
        x = x_next
    raise ReferenceSolveError(
        f"El gradiente proximal no alcanzó ‖Δx‖ ≤ {REFERENCE_TOLERANCE} en {REFERENCE_MAX_ITERATIONS} iteraciones")


def solve_fixed_point(map_spec: MapSpec) -> Vector:
    """
    Punto de referencia x* del mapa. Para prox_sgd y Davis-Yin es el punto
    fijo del mapa determinista promedio (en Davis-Yin, la variable z).
    """
    start = solve_reference(map_spec.problem)
    if map_spec.kind in (MapKind.GD, MapKind.SGD, MapKind.GDA):
        return start
    x = start
    for iteration in range(REFERENCE_MAX_ITERATIONS):
        x_next = averaged_map(map_spec, x)
        if _converged(x_next - x, x_next):
            logger.debug(f"Punto fijo de {map_spec.kind.value} en {iteration + 1} iteraciones")
            return x_next
        x = x_next
    raise ReferenceSolveError(f"La iteración de punto fijo de {map_spec.kind.value} no convergió")


# ---------------------------------------------------------------------------
# Certificados
# ---------------------------------------------------------------------------

EXACT = "exact"
MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class ContractionCertificate:
    """Constantes (ρ, B, c², σ²) de las hipótesis de contracción y Lipschitz."""
    rho: float
    B: float
    c_sq: float
    sigma_sq: float
    sigma_sq_provenance: str = EXACT
    B_provenance: str = EXACT
    c_sq_per_node: Tuple[float, ...] = ()

    def __post_init__(self):
        # ρ = 1 corresponde a una resolución exacta en un paso (p. ej. κ = 1 con γ = 1/L)
        if not 0 < self.rho <= 1:
            raise ConfigurationError(f"ρ fuera de (0, 1]: {self.rho}")
        if min(self.B, self.c_sq, self.sigma_sq) < 0:
            raise ConfigurationError("Constantes del certificado negativas")

    def node_c_sq(self, i: int) -> float:
        return self.c_sq_per_node[i] if self.c_sq_per_node else self.c_sq

    def to_dict(self):
        return {
            "rho": self.rho,
            "B": self.B,
            "c_sq": self.c_sq,
            "sigma_sq": self.sigma_sq,
            "sigma_sq_provenance": self.sigma_sq_provenance,
            "B_provenance": self.B_provenance,
            "c_sq_per_node": list(self.c_sq_per_node),
        }


def _exact_sigma_sq(map_spec: MapSpec, x_star: Vector) -> float:
    n = map_spec.num_nodes
    return sum(squared_norm(expected_map(map_spec, i, x_star)) for i in range(n)) / n


def _sgd_lipschitz_matrices(map_spec: MapSpec) -> List[np.ndarray]:
    """E[(I − γĤ_i)²] = I − 2γH_i + γ²E[Ĥ_i²] por nodo (minibatch con reemplazo)."""
    smooth = smooth_part(map_spec.problem)
    gamma = map_spec.gamma
    eye = np.eye(smooth.dim)
    return [eye - 2.0 * gamma * smooth.node_hessian(i)
            + gamma ** 2 * smooth.minibatch_hessian_second_moment(i, map_spec.minibatch)
            for i in range(map_spec.num_nodes)]


def _sgd_contraction(map_spec: MapSpec) -> Tuple[float, float]:
    """
    (ρ, factor de B) del mapa SGD promedio.

    E‖T(x,s) − x*‖² = ‖(I − γH)e‖² + E‖N(e) + N(0)‖², con N lineal en e;
    ρ = min{γμ, 1 − λmax((I − γH)² + 2γ²V)} y B = 2·E‖T(x*,s) − x*‖².
    """
    smooth = smooth_part(map_spec.problem)
    gamma = map_spec.gamma
    n = map_spec.num_nodes
    variance = sum(smooth.minibatch_hessian_second_moment(i, map_spec.minibatch)
                   - smooth.node_hessian(i) @ smooth.node_hessian(i) for i in range(n)) / n ** 2
    drift = np.eye(smooth.dim) - gamma * smooth.full_hessian()
    worst = float(np.linalg.eigvalsh(drift @ drift + 2.0 * gamma ** 2 * variance)[-1])
    rho = min(gamma * smooth.strong_convexity(), 1.0 - worst)
    if rho <= 0:
        raise ConfigurationError(
            f"gamma={gamma:.6g} con minibatch={map_spec.minibatch}: el ruido de SGD impide la contracción (ρ ≤ 0)")
    return rho, 2.0


def _prox_sgd_contraction(map_spec: MapSpec) -> Tuple[float, float]:
    """
    (ρ, factor de B) de prox-SGD. Con q = λmax((1/n)Σ E[(I − γĤ_i)²]):
    si q < 1 − γμ, ρ = γμ y B = (1 − γμ)/(1 − γμ − q)·E‖T(x*,s) − x*‖²;
    si no, ρ = (1 − q)/2 y el factor es (1 + q)/(1 − q).
    """
    matrices = _sgd_lipschitz_matrices(map_spec)
    q = float(np.linalg.eigvalsh(sum(matrices) / len(matrices))[-1])
    if q >= 1:
        raise ConfigurationError(f"gamma={map_spec.gamma:.6g}: prox_sgd no es contractivo (q = {q:.4g} ≥ 1)")
    gamma_mu = map_spec.gamma * map_spec.problem.strong_convexity()
    if q < 1.0 - gamma_mu:
        return gamma_mu, (1.0 - gamma_mu) / (1.0 - gamma_mu - q)
    return (1.0 - q) / 2.0, (1.0 + q) / (1.0 - q)


def certificate_of(map_spec: MapSpec, n: int, mc_budget: int, stream: RngStream) -> ContractionCertificate:
    """Certificado de contracción del mapa sobre n nodos."""
    if n != map_spec.num_nodes:
        raise ConfigurationError(f"n={n} no coincide con los nodos del problema ({map_spec.num_nodes})")
    problem = map_spec.problem
    gamma = map_spec.gamma
    x_star = solve_fixed_point(map_spec)
    kind = map_spec.kind

    if kind == MapKind.GD:
        cert = ContractionCertificate(rho=gamma * problem.strong_convexity(), B=0.0, c_sq=1.0,
                                      sigma_sq=_exact_sigma_sq(map_spec, x_star),
                                      c_sq_per_node=(1.0,) * n)
    elif kind == MapKind.GDA:
        c_sq = (1.0 + gamma * problem.smoothness()) ** 2
        cert = ContractionCertificate(rho=gda_rho(problem, gamma), B=0.0, c_sq=c_sq,
                                      sigma_sq=_exact_sigma_sq(map_spec, x_star),
                                      c_sq_per_node=(c_sq,) * n)
    elif kind == MapKind.DAVIS_YIN:
        q = [davis_yin_lipschitz(problem, gamma, i) for i in range(n)]
        cert = ContractionCertificate(rho=1.0 - float(np.mean(q)) ** 2, B=0.0,
                                      c_sq=float(np.mean(np.square(q))),
                                      sigma_sq=_exact_sigma_sq(map_spec, x_star),
                                      c_sq_per_node=tuple(v * v for v in q))
    else:
        per_node = tuple(float(np.linalg.eigvalsh(m)[-1]) for m in _sgd_lipschitz_matrices(map_spec))
        if kind == MapKind.SGD:
            rho, factor = _sgd_contraction(map_spec)
        else:
            rho, factor = _prox_sgd_contraction(map_spec)
        if not map_spec.is_stochastic:
            cert = ContractionCertificate(rho=rho, B=0.0, c_sq=float(np.mean(per_node)),
                                          sigma_sq=_exact_sigma_sq(map_spec, x_star), c_sq_per_node=per_node)
        else:
            spread, sigma_sq = _monte_carlo_noise(map_spec, x_star, mc_budget, stream)
            cert = ContractionCertificate(rho=rho, B=factor * spread, c_sq=float(np.mean(per_node)),
                                          sigma_sq=sigma_sq, sigma_sq_provenance=MONTE_CARLO,
                                          B_provenance=MONTE_CARLO, c_sq_per_node=per_node)
    logger.info(f"Certificado {kind.value}: ρ={cert.rho:.6g}, B={cert.B:.3g}, "
                f"c²={cert.c_sq:.6g}, σ²={cert.sigma_sq:.6g}")
    return cert


def sample_map_at(map_spec: MapSpec, i: int, x: Vector, count: int, stream: RngStream) -> np.ndarray:
    """`count` realizaciones de T_i(x, s) (una por fila) con subflujos independientes."""
    return np.stack([apply_map(map_spec, i, x, stream.derive([m])) for m in range(count)])


def _monte_carlo_noise(map_spec: MapSpec, x_star: Vector, mc_budget: int, stream: RngStream) -> Tuple[float, float]:
    """E‖T(x*, s) − x*‖² y σ² = (1/n)ΣE‖T_i(x*, s_i)‖², con mc_budget muestras por nodo."""
    if mc_budget < 2:
        raise ConfigurationError(f"mc_budget debe ser ≥ 2 (mc_budget={mc_budget})")
    n = map_spec.num_nodes
    base = stream.derive([ROLE_MONTE_CARLO])
    per_node = [sample_map_at(map_spec, i, x_star, mc_budget, base.derive([i])) for i in range(n)]
    averaged = sum(per_node) / n
    spread = float(np.mean(np.sum((averaged - x_star) ** 2, axis=1)))
    sigma_sq = float(np.mean([np.mean(np.sum(samples ** 2, axis=1)) for samples in per_node]))
    return spread, sigma_sq
