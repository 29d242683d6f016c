"""
Orquestación de experimentos: arma problema, mapa, compresor y algoritmo a
partir de un RunConfig, corre cada semilla, escribe los CSV y el resumen
que compara lo medido contra la teoría.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .algorithms import Mode, MetricsRow, RunSpec, RunStreams, VrParams, run_loop
from .checks import CheckResult, run_all_checks
from .compressors import CompressorKind, CompressorSpec, compressor_omega, message_bits
from .errors import DivergenceError
from .numerics import RngStream, Vector, mean_and_stderr, sample_standard_gaussian
from .operators import (
    CompositeProblem,
    ContractionCertificate,
    MapKind,
    MapSpec,
    QuadraticProblem,
    Regularizer,
    RegularizerKind,
    auto_gamma,
    certificate_of,
    expected_map,
    solve_fixed_point,
)
from .runconfig import AUTO, AlgorithmConfig, CompressorConfig, MapConfig, ProblemConfig, RunConfig
from .settings import Settings, get_settings
from .simnet import Transcript, bits_to_target
from .theory import BoundReport, omega_frontier, plain_bound, plain_envelope, vr_bound, vr_envelope, vr_stepsizes
from .export import RunDirectory, read_trajectories, write_csv, write_summary, write_transcript_csv
from ..data.datasets import generate_saddle, generate_synthetic, load_libsvm

logger = logging.getLogger(__name__)

STDERR_MULTIPLIER = 3.0


# ---------------------------------------------------------------------------
# Construcción
# ---------------------------------------------------------------------------

def build_problem(config: RunConfig):
    """Problema descrito por la sección `problem` (con G/H si se piden)."""
    pc = config.problem
    if pc.type == "synthetic":
        problem = generate_synthetic(pc.m, pc.d, pc.kappa, config.n, pc.l2, RngStream(pc.data_seed), pc.noise)
    elif pc.type == "libsvm":
        problem = load_libsvm(config.resolve_path(pc.path), pc.l2, config.n)
    elif pc.type == "saddle":
        return generate_saddle(pc.dim, pc.mu, config.n, RngStream(pc.data_seed), pc.scale)
    else:
        problem = QuadraticProblem([np.array(A) for A in pc.hessians], [np.array(b) for b in pc.linear], pc.l2)
    h = Regularizer(RegularizerKind(pc.h.kind), pc.h.weight)
    g = Regularizer(RegularizerKind(pc.g.kind), pc.g.weight)
    if h.is_none and g.is_none:
        return problem
    return CompositeProblem(problem, h=h, g=g)


def build_compressor(cc: CompressorConfig) -> CompressorSpec:
    return CompressorSpec(CompressorKind(cc.kind), k=cc.k, levels=cc.levels)


@dataclass
class PreparedRun:
    """Corrida lista: constantes resueltas y cotas teóricas."""
    config: RunConfig
    map_spec: MapSpec
    compressor: CompressorSpec
    certificate: ContractionCertificate
    x_star: Vector
    omega: float
    mode: Mode
    vr_params: Optional[VrParams]
    bound: BoundReport
    mc_budget: int
    notes: List[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.config.n

    def run_spec(self) -> RunSpec:
        return RunSpec(self.mode, self.map_spec, self.compressor, self.x_star, self.vr_params, self.mc_budget)

    def resolved(self) -> Dict[str, Any]:
        data = {"gamma": self.map_spec.gamma, "omega": self.omega,
                "omega_frontier": omega_frontier(self.certificate, self.n),
                "message_bits": message_bits(self.compressor, self.map_spec.dim)}
        if self.vr_params is not None:
            data.update(alpha=self.vr_params.alpha, eta=self.vr_params.eta)
        return data


def _resolve_vr_params(algorithm: AlgorithmConfig, cert: ContractionCertificate, omega: float, n: int) -> VrParams:
    defaults = vr_stepsizes(cert, omega, n)
    alpha = defaults.alpha if algorithm.alpha == AUTO else algorithm.alpha
    eta = defaults.eta if algorithm.eta == AUTO else algorithm.eta
    return VrParams(alpha, eta)


def prepare(config: RunConfig, settings: Optional[Settings] = None) -> PreparedRun:
    """Construye todo y evalúa el certificado; γ, α y η "auto" se resuelven aquí."""
    settings = settings or get_settings()
    mc_budget = config.mc_budget or settings.get_mc_budget()
    problem = build_problem(config)
    kind = MapKind(config.map.kind)
    gamma = auto_gamma(kind, problem) if config.map.gamma == AUTO else config.map.gamma
    map_spec = MapSpec(kind, gamma, problem, config.map.minibatch)
    compressor = build_compressor(config.compressor)
    compressor.validate_for(map_spec.dim)

    certificate = certificate_of(map_spec, config.n, mc_budget, RngStream(config.problem.data_seed))
    x_star = solve_fixed_point(map_spec)
    omega = compressor_omega(compressor, map_spec.dim)
    mode = Mode(config.algorithm.mode)
    vr_params = None
    if mode == Mode.VR:
        vr_params = _resolve_vr_params(config.algorithm, certificate, omega, config.n)
        bound = vr_bound(certificate, vr_params, omega, config.n)
    else:
        bound = plain_bound(certificate, omega, config.n)
    notes = []
    if not bound.valid:
        notes.append(f"Hipótesis teórica no satisfecha: {bound.hypothesis_note}")
    logger.info(f"'{config.name}': γ={gamma:.6g}, ω={omega:.6g}, tasa={bound.rate_factor:.6g}, "
                f"radio={bound.plateau_radius_sq:.6g}, válida={bound.valid}")
    return PreparedRun(config, map_spec, compressor, certificate, x_star, omega, mode, vr_params, bound,
                       mc_budget, notes)


def initial_point(prepared: PreparedRun, seed: int) -> Vector:
    d = prepared.map_spec.dim
    if prepared.config.algorithm.x0 == "gaussian":
        return sample_standard_gaussian(RunStreams.from_seed(seed).init(), d)
    return np.zeros(d)


def initial_shifts(prepared: PreparedRun) -> Optional[List[Vector]]:
    if prepared.mode != Mode.VR:
        return None
    if prepared.config.algorithm.h0 == "fixed_point":
        return [expected_map(prepared.map_spec, i, prepared.x_star) for i in range(prepared.n)]
    return [np.zeros(prepared.map_spec.dim) for _ in range(prepared.n)]


# ---------------------------------------------------------------------------
# Estadísticas
# ---------------------------------------------------------------------------

def summarize_plateau(trajectories: Sequence[Sequence[float]], window_fraction: float) -> Tuple[float, float]:
    """
    Media entre semillas de la media de r^k en la ventana final, y su error
    estándar entre semillas (NaN con una sola semilla).
    """
    if len(trajectories) == 0:
        raise ValueError("No hay trayectorias")
    if not 0 < window_fraction <= 1:
        raise ValueError(f"window_fraction debe estar en (0, 1] ({window_fraction})")
    lengths = {len(t) for t in trajectories}
    if len(lengths) != 1 or 0 in lengths:
        raise ValueError("Las trayectorias deben tener la misma longitud no nula")
    length = lengths.pop()
    window = max(1, math.ceil(window_fraction * length))
    window_means = [float(np.mean(np.asarray(t, dtype=np.float64)[-window:])) for t in trajectories]
    return mean_and_stderr(window_means)


def envelope_check(frame: pd.DataFrame, column: str, envelope) -> Dict[str, Any]:
    """Media por k (entre semillas) contra la envolvente teórica + 3 errores estándar."""
    stats = frame.groupby("k")[column].agg(["mean", "sem"])
    if stats["sem"].isna().all():
        return {"checked": False, "reason": "se requieren al menos 2 semillas"}
    worst_k, worst_excess, respected = None, -math.inf, True
    for k, row in stats.iterrows():
        limit = envelope(int(k))
        excess = row["mean"] - limit
        if excess > worst_excess:
            worst_k, worst_excess = int(k), float(excess)
        if excess > STDERR_MULTIPLIER * row["sem"]:
            respected = False
    return {"checked": True, "respected": respected, "worst_k": worst_k, "worst_excess": worst_excess}


# ---------------------------------------------------------------------------
# Ejecución
# ---------------------------------------------------------------------------

@dataclass
class SeedOutcome:
    seed: int
    rows: List[MetricsRow]
    transcript: Transcript
    diverged_at: Optional[int] = None

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None


@dataclass
class ExperimentResult:
    prepared: PreparedRun
    outcomes: List[SeedOutcome]
    summary: Dict[str, Any]
    output_dir: Optional[Path] = None

    @property
    def all_diverged(self) -> bool:
        return all(o.diverged for o in self.outcomes)

    def trajectories(self) -> Dict[int, List[MetricsRow]]:
        return {o.seed: o.rows for o in self.outcomes}


def run_seed(prepared: PreparedRun, seed: int) -> SeedOutcome:
    """Corre una semilla; la divergencia queda registrada en el resultado."""
    transcript = Transcript()
    try:
        rows = run_loop(prepared.run_spec(), prepared.config.iterations, seed, initial_point(prepared, seed),
                        initial_shifts(prepared), transcript=transcript)
        return SeedOutcome(seed, rows, transcript)
    except DivergenceError as e:
        return SeedOutcome(seed, list(e.trajectory or []), transcript, diverged_at=e.k)


def _frame(outcomes: Sequence[SeedOutcome]) -> pd.DataFrame:
    records = [{"seed": r.seed, "k": r.k, "r_sq": r.r_sq, "psi": r.psi} for o in outcomes for r in o.rows]
    return pd.DataFrame.from_records(records, columns=["seed", "k", "r_sq", "psi"])


def build_summary(prepared: PreparedRun, outcomes: Sequence[SeedOutcome], window_fraction: float,
                  frame: Optional[pd.DataFrame] = None) -> Dict[str, Any]:
    """
    Resumen derivable de las filas, la configuración y el certificado. `frame`
    son las filas releídas de los CSV de las semillas completas; sin él se
    arma desde las trayectorias en memoria.
    """
    bound = prepared.bound
    completed = [o for o in outcomes if not o.diverged]
    seeds_info = []
    for o in outcomes:
        info = {"seed": o.seed, "status": "diverged" if o.diverged else "ok",
                "final_r_sq": o.rows[-1].r_sq if o.rows else None,
                "bits_total": o.rows[-1].bits_cum if o.rows else 0,
                "rounds": o.transcript.num_rounds}
        if o.diverged:
            info["diverged_at"] = o.diverged_at
        elif bound.valid:
            info["bits_to_radius"] = bits_to_target(o.rows, o.transcript, bound.plateau_radius_sq)
        seeds_info.append(info)

    plateau = {"window_fraction": window_fraction, "mean": None, "stderr": None}
    verdicts: Dict[str, Any] = {"theory_valid": bound.valid}
    if completed:
        mean, stderr = summarize_plateau([[r.r_sq for r in o.rows] for o in completed], window_fraction)
        plateau.update(mean=mean, stderr=stderr)
        if bound.valid:
            slack = 0.0 if math.isnan(stderr) else STDERR_MULTIPLIER * stderr
            verdicts["plateau_within_radius"] = mean <= bound.plateau_radius_sq + slack
            if frame is None:
                frame = _frame(completed)
            if prepared.mode == Mode.PLAIN:
                r0 = float(frame[frame["k"] == 0]["r_sq"].mean())
                verdicts["envelope"] = envelope_check(
                    frame, "r_sq",
                    lambda k: plain_envelope(prepared.certificate, prepared.omega, prepared.n, r0, k))
            else:
                psi0 = float(frame[frame["k"] == 0]["psi"].mean())
                verdicts["envelope"] = envelope_check(
                    frame, "psi",
                    lambda k: vr_envelope(prepared.certificate, prepared.vr_params, prepared.omega,
                                          prepared.n, psi0, k))
    verdicts["transcript_consistent"] = all(
        o.transcript.round_structure_ok(prepared.n) and o.transcript.num_rounds == len(o.rows) - 1
        for o in completed)
    verdicts["diverged_seeds"] = sum(1 for o in outcomes if o.diverged)

    config = prepared.config
    return {
        "name": config.name,
        "config": config.to_dict(),
        "mode": prepared.mode.value,
        "map": prepared.map_spec.kind.value,
        "compressor": prepared.compressor.to_dict(),
        "resolved": prepared.resolved(),
        "certificate": prepared.certificate.to_dict(),
        "bound": bound.to_dict(),
        "plateau": plateau,
        "verdicts": verdicts,
        "seeds": seeds_info,
        "notes": prepared.notes,
    }


def resolve_output_dir(config: RunConfig, settings: Settings) -> Path:
    """CLI o variable de entorno > output_dir de la configuración > valor por defecto."""
    if "output_dir" in settings.overridden or not config.output_dir:
        root = settings.get_output_dir()
    else:
        root = config.resolve_path(config.output_dir)
    return root / config.name


def run_experiment(config: RunConfig, settings: Optional[Settings] = None, write: bool = True) -> ExperimentResult:
    """
    Corre todas las semillas de la configuración.

    Con write=True escribe seed_<s>.csv por semilla (y transcript_<s>.csv si
    se pide) más summary.json, todo bajo lock en el directorio de salida.
    """
    settings = settings or get_settings()
    prepared = prepare(config, settings)
    window = config.plateau_window or settings.get_plateau_window()
    logger.info(f"Iniciando '{config.name}': {len(config.seeds)} semillas, modo {prepared.mode.value}")

    if not write:
        outcomes = [run_seed(prepared, seed) for seed in config.seeds]
        return ExperimentResult(prepared, outcomes, build_summary(prepared, outcomes, window))

    output_dir = resolve_output_dir(config, settings)
    with RunDirectory(output_dir) as run_dir:
        outcomes = []
        for seed in config.seeds:
            outcome = run_seed(prepared, seed)
            write_csv(outcome.rows, run_dir.seed_csv(seed))
            if config.transcript:
                write_transcript_csv(outcome.transcript.to_rows(), run_dir.transcript_csv(seed))
            outcomes.append(outcome)
        completed_csvs = [run_dir.seed_csv(o.seed) for o in outcomes if not o.diverged]
        frame = read_trajectories(completed_csvs) if completed_csvs else None
        summary = build_summary(prepared, outcomes, window, frame)
        write_summary(summary, run_dir.summary_path)
    logger.info(f"'{config.name}' terminado: {summary['verdicts']['diverged_seeds']} semillas divergentes")
    return ExperimentResult(prepared, outcomes, summary, output_dir)


def theory_report(config: RunConfig, settings: Optional[Settings] = None) -> Dict[str, Any]:
    """Certificado y cotas sin correr el algoritmo."""
    prepared = prepare(config, settings)
    report = {
        "name": config.name,
        "resolved": prepared.resolved(),
        "certificate": prepared.certificate.to_dict(),
        "plain_bound": plain_bound(prepared.certificate, prepared.omega, prepared.n).to_dict(),
    }
    params = prepared.vr_params or vr_stepsizes(prepared.certificate, prepared.omega, prepared.n)
    report["vr_stepsizes"] = {"alpha": params.alpha, "eta": params.eta}
    report["vr_bound"] = vr_bound(prepared.certificate, params, prepared.omega, prepared.n).to_dict()
    return report


def verify(config: RunConfig, settings: Optional[Settings] = None) -> List[CheckResult]:
    """Verificaciones estadísticas de las hipótesis (sin escribir trayectorias)."""
    settings = settings or get_settings()
    prepared = prepare(config, settings)
    params = prepared.vr_params or vr_stepsizes(prepared.certificate, prepared.omega, prepared.n)
    stream = RngStream(config.seeds[0]).derive([9])
    return run_all_checks(prepared.map_spec, prepared.compressor, prepared.certificate, prepared.x_star,
                          params, stream, settings.get_verify_samples())


# ---------------------------------------------------------------------------
# Comparación GD / GDCI / VR-GDCI
# ---------------------------------------------------------------------------

def comparison_bundle(kappa: float, m: int = 200, d: int = 20, iterations: int = 400,
                      seeds: Sequence[int] = tuple(range(20)), l2: float = 0.0, data_seed: int = 0,
                      output_dir: Optional[str] = None) -> Dict[str, RunConfig]:
    """
    Tres corridas alineadas sobre el mismo problema sintético con γ = 1/L:
    GD (sin compresión), GDCI (compresión natural) y VR-GDCI (compresión
    natural con reducción de varianza).
    """
    problem = ProblemConfig(type="synthetic", m=m, d=d, kappa=float(kappa), l2=l2, data_seed=data_seed)
    base = dict(problem=problem, map=MapConfig(MapKind.GD.value, AUTO), n=1, iterations=iterations,
                seeds=tuple(seeds), output_dir=output_dir)
    label = f"kappa{kappa:g}"
    return {
        "gd": RunConfig(name=f"gd_{label}", compressor=CompressorConfig(CompressorKind.IDENTITY.value),
                        algorithm=AlgorithmConfig("plain"), **base),
        "gdci": RunConfig(name=f"gdci_{label}", compressor=CompressorConfig(CompressorKind.NATURAL.value),
                          algorithm=AlgorithmConfig("plain"), **base),
        "vr_gdci": RunConfig(name=f"vr_gdci_{label}", compressor=CompressorConfig(CompressorKind.NATURAL.value),
                             algorithm=AlgorithmConfig("vr"), **base),
    }


def run_bundle(configs: Dict[str, RunConfig], settings: Optional[Settings] = None,
               write: bool = True) -> Dict[str, ExperimentResult]:
    return {key: run_experiment(cfg, settings, write=write) for key, cfg in configs.items()}
