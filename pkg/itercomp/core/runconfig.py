"""
Configuración de corrida: documento JSON validado.

Cada error de validación lanza ConfigError con la ruta punteada de la clave
y la línea donde aparece. El esquema está documentado en configs/README.md.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from .compressors import CompressorKind
from .errors import ConfigError
from .operators import MapKind, RegularizerKind

logger = logging.getLogger(__name__)

AUTO = "auto"
PROBLEM_TYPES = ("synthetic", "libsvm", "saddle", "quadratic")
MODES = ("plain", "vr")
X0_OPTIONS = ("zeros", "gaussian")
H0_OPTIONS = ("zeros", "fixed_point")


@dataclass(frozen=True)
class RegularizerConfig:
    kind: str = RegularizerKind.NONE.value
    weight: float = 0.0


@dataclass(frozen=True)
class ProblemConfig:
    type: str
    l2: float = 0.0
    # synthetic
    m: Optional[int] = None
    d: Optional[int] = None
    kappa: Optional[float] = None
    noise: float = 0.1
    data_seed: int = 0
    # libsvm
    path: Optional[str] = None
    # saddle
    dim: Optional[int] = None
    mu: Optional[float] = None
    scale: float = 1.0
    # quadratic (una matriz y un vector por nodo)
    hessians: Optional[Tuple[Tuple[Tuple[float, ...], ...], ...]] = None
    linear: Optional[Tuple[Tuple[float, ...], ...]] = None
    # términos no suaves
    h: RegularizerConfig = RegularizerConfig()
    g: RegularizerConfig = RegularizerConfig()


@dataclass(frozen=True)
class MapConfig:
    kind: str = MapKind.GD.value
    gamma: Union[float, str] = AUTO
    minibatch: Optional[int] = None


@dataclass(frozen=True)
class CompressorConfig:
    kind: str = CompressorKind.IDENTITY.value
    k: Optional[int] = None
    levels: Optional[int] = None


@dataclass(frozen=True)
class AlgorithmConfig:
    mode: str = "plain"
    alpha: Union[float, str] = AUTO
    eta: Union[float, str] = AUTO
    x0: str = "zeros"
    h0: str = "zeros"


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemConfig
    map: MapConfig = MapConfig()
    compressor: CompressorConfig = CompressorConfig()
    algorithm: AlgorithmConfig = AlgorithmConfig()
    n: int = 1
    iterations: int = 100
    seeds: Tuple[int, ...] = (0,)
    name: str = "run"
    output_dir: Optional[str] = None
    mc_budget: Optional[int] = None
    plateau_window: Optional[float] = None
    transcript: bool = False
    base_dir: str = field(default=".", compare=False)

    def resolve_path(self, value: str) -> Path:
        path = Path(value)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.pop("base_dir")
        return data


# ---------------------------------------------------------------------------
# Utilidades de validación
# ---------------------------------------------------------------------------

class _Reader:
    """Lee claves de una sección con verificación de tipo y ubicación."""

    def __init__(self, text: str):
        self.text = text

    def line_of(self, path: Sequence[str]) -> Optional[int]:
        position = 0
        index = -1
        for part in path:
            index = self.text.find(f'"{part}"', position)
            if index < 0:
                return None
            position = index + 1
        return self.text.count("\n", 0, index) + 1 if index >= 0 else None

    def fail(self, path: Sequence[str], message: str):
        raise ConfigError(".".join(path) or "<documento>", message, self.line_of(path))

    def section(self, data: Any, path: List[str], allowed: Sequence[str]) -> Dict[str, Any]:
        if not isinstance(data, dict):
            self.fail(path, "se esperaba un objeto")
        for key in data:
            if key not in allowed:
                self.fail(path + [key], f"clave desconocida (permitidas: {', '.join(allowed)})")
        return data

    def get(self, data: Dict[str, Any], path: List[str], key: str, kinds, default=None, required=False):
        if key not in data or data[key] is None:
            if required:
                self.fail(path + [key], "clave obligatoria")
            return default
        value = data[key]
        # bool es subclase de int; se rechaza donde se espera un número
        if isinstance(value, bool) and bool not in kinds:
            self.fail(path + [key], f"tipo inválido {type(value).__name__}")
        if not isinstance(value, kinds):
            names = "/".join(k.__name__ for k in kinds)
            self.fail(path + [key], f"tipo inválido {type(value).__name__}, se esperaba {names}")
        return value

    def number_or_auto(self, data, path, key, low=None, high=None, low_open=True):
        value = self.get(data, path, key, (int, float, str), AUTO)
        if isinstance(value, str):
            if value != AUTO:
                self.fail(path + [key], f"valor '{value}' inválido: use un número o \"auto\"")
            return AUTO
        self.check_range(path + [key], value, low, high, low_open)
        return float(value)

    def check_range(self, path, value, low=None, high=None, low_open=True):
        if low is not None and (value <= low if low_open else value < low):
            self.fail(path, f"debe ser {'>' if low_open else '≥'} {low} (valor {value})")
        if high is not None and value > high:
            self.fail(path, f"debe ser ≤ {high} (valor {value})")

    def choice(self, data, path, key, options, default):
        value = self.get(data, path, key, (str,), default)
        if value not in options:
            self.fail(path + [key], f"valor '{value}' inválido (opciones: {', '.join(options)})")
        return value


# ---------------------------------------------------------------------------
# Secciones
# ---------------------------------------------------------------------------

def _parse_regularizer(reader: _Reader, data: Any, path: List[str]) -> RegularizerConfig:
    if data is None:
        return RegularizerConfig()
    reader.section(data, path, ["kind", "weight"])
    kind = reader.choice(data, path, "kind", [k.value for k in RegularizerKind], RegularizerKind.NONE.value)
    weight = float(reader.get(data, path, "weight", (int, float), 0.0))
    reader.check_range(path + ["weight"], weight, low=0.0, low_open=False)
    return RegularizerConfig(kind, weight)


def _matrix_rows(reader: _Reader, value: Any, path: List[str], depth: int):
    if depth == 0:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            reader.fail(path, "se esperaban números")
        return float(value)
    if not isinstance(value, list) or not value:
        reader.fail(path, "se esperaba una lista no vacía")
    return tuple(_matrix_rows(reader, v, path, depth - 1) for v in value)


def _check_quadratic_shapes(reader: _Reader, hessians, linear, path: List[str]):
    """Cada A_i debe ser d×d y cada b_i de largo d, con el mismo d en todos los nodos."""
    d = len(linear[0])
    for i, (A, b) in enumerate(zip(hessians, linear)):
        if len(b) != d:
            reader.fail(path + ["linear"], f"nodo {i}: el vector tiene {len(b)} entradas, se esperaban {d}")
        if len(A) != d or any(len(row) != d for row in A):
            widths = sorted({len(row) for row in A})
            reader.fail(path + ["hessians"],
                        f"nodo {i}: se esperaba una matriz {d}×{d} ({len(A)} filas de largo {widths})")


def _parse_problem(reader: _Reader, data: Any, n: int, base_dir: Path) -> ProblemConfig:
    path = ["problem"]
    if data is None:
        reader.fail(path, "clave obligatoria")
    reader.section(data, path, ["type", "l2", "m", "d", "kappa", "noise", "data_seed", "path", "dim", "mu",
                                "scale", "hessians", "linear", "h", "g"])
    kind = reader.choice(data, path, "type", PROBLEM_TYPES, None)
    l2 = float(reader.get(data, path, "l2", (int, float), 0.0))
    reader.check_range(path + ["l2"], l2, low=0.0, low_open=False)
    h = _parse_regularizer(reader, data.get("h"), path + ["h"])
    g = _parse_regularizer(reader, data.get("g"), path + ["g"])
    if g.kind == RegularizerKind.L1.value:
        reader.fail(path + ["g", "kind"], "G debe ser none o l2")
    values: Dict[str, Any] = {"type": kind, "l2": l2, "h": h, "g": g}

    if kind == "synthetic":
        m = reader.get(data, path, "m", (int,), required=True)
        d = reader.get(data, path, "d", (int,), required=True)
        kappa = float(reader.get(data, path, "kappa", (int, float), required=True))
        if kappa < 1:
            reader.fail(path + ["kappa"], f"el número de condición debe ser ≥ 1 (valor {kappa})")
        reader.check_range(path + ["d"], d, low=1, low_open=False)
        if m < d:
            reader.fail(path + ["m"], f"se requiere m ≥ d (m={m}, d={d})")
        if m % n != 0:
            reader.fail(path + ["m"], f"m={m} debe ser divisible entre n={n}")
        if d == 1 and kappa != 1:
            reader.fail(path + ["kappa"], "con d=1 solo es posible κ=1")
        noise = float(reader.get(data, path, "noise", (int, float), 0.1))
        reader.check_range(path + ["noise"], noise, low=0.0, low_open=False)
        seed = reader.get(data, path, "data_seed", (int,), 0)
        reader.check_range(path + ["data_seed"], seed, low=0, high=2 ** 64 - 1, low_open=False)
        values.update(m=m, d=d, kappa=kappa, noise=noise, data_seed=seed)
    elif kind == "libsvm":
        file_path = reader.get(data, path, "path", (str,), required=True)
        resolved = Path(file_path) if Path(file_path).is_absolute() else base_dir / file_path
        if not resolved.is_file():
            reader.fail(path + ["path"], f"el archivo no existe: {resolved}")
        values.update(path=file_path)
    elif kind == "saddle":
        dim = reader.get(data, path, "dim", (int,), required=True)
        reader.check_range(path + ["dim"], dim, low=1, low_open=False)
        mu = float(reader.get(data, path, "mu", (int, float), required=True))
        reader.check_range(path + ["mu"], mu, low=0.0)
        scale = float(reader.get(data, path, "scale", (int, float), 1.0))
        reader.check_range(path + ["scale"], scale, low=0.0, low_open=False)
        seed = reader.get(data, path, "data_seed", (int,), 0)
        reader.check_range(path + ["data_seed"], seed, low=0, high=2 ** 64 - 1, low_open=False)
        values.update(dim=dim, mu=mu, scale=scale, data_seed=seed)
    else:
        hessians = _matrix_rows(reader, reader.get(data, path, "hessians", (list,), required=True),
                                path + ["hessians"], 3)
        linear = _matrix_rows(reader, reader.get(data, path, "linear", (list,), required=True),
                              path + ["linear"], 2)
        if len(hessians) != n or len(linear) != n:
            reader.fail(path + ["hessians"], f"se requiere una matriz y un vector por nodo (n={n})")
        _check_quadratic_shapes(reader, hessians, linear, path)
        values.update(hessians=hessians, linear=linear)
    return ProblemConfig(**values)


def _problem_dim(problem: ProblemConfig) -> Optional[int]:
    if problem.type == "synthetic":
        return problem.d
    if problem.type == "saddle":
        return 2 * problem.dim
    if problem.type == "quadratic":
        return len(problem.linear[0])
    return None


def _parse_map(reader: _Reader, data: Any, problem: ProblemConfig) -> MapConfig:
    path = ["map"]
    data = reader.section(data or {}, path, ["kind", "gamma", "minibatch"])
    kind = reader.choice(data, path, "kind", [k.value for k in MapKind], MapKind.GD.value)
    gamma = reader.number_or_auto(data, path, "gamma", low=0.0)
    minibatch = reader.get(data, path, "minibatch", (int,), None)
    if kind in (MapKind.SGD.value, MapKind.PROX_SGD.value):
        if minibatch is None:
            reader.fail(path + ["minibatch"], f"obligatorio para {kind}")
        reader.check_range(path + ["minibatch"], minibatch, low=1, low_open=False)
        if problem.type not in ("synthetic", "libsvm"):
            reader.fail(path + ["kind"], f"{kind} requiere un problema con datos (synthetic o libsvm)")
    if kind == MapKind.GDA.value and problem.type != "saddle":
        reader.fail(path + ["kind"], "gda requiere un problema saddle")
    if problem.type == "saddle" and kind != MapKind.GDA.value:
        reader.fail(path + ["kind"], "un problema saddle requiere el mapa gda")
    return MapConfig(kind, gamma, minibatch)


def _parse_compressor(reader: _Reader, data: Any, dim: Optional[int]) -> CompressorConfig:
    path = ["compressor"]
    data = reader.section(data or {}, path, ["kind", "k", "levels"])
    kind = reader.choice(data, path, "kind", [k.value for k in CompressorKind], CompressorKind.IDENTITY.value)
    k = reader.get(data, path, "k", (int,), None)
    levels = reader.get(data, path, "levels", (int,), None)
    if kind == CompressorKind.RAND_K.value:
        if k is None:
            reader.fail(path + ["k"], "obligatorio para rand_k")
        reader.check_range(path + ["k"], k, low=1, high=dim, low_open=False)
    elif k is not None:
        reader.fail(path + ["k"], "solo aplica a rand_k")
    if kind == CompressorKind.STANDARD_DITHERING.value:
        if levels is None:
            reader.fail(path + ["levels"], "obligatorio para dithering")
        reader.check_range(path + ["levels"], levels, low=1, low_open=False)
    elif levels is not None:
        reader.fail(path + ["levels"], "solo aplica a dithering")
    return CompressorConfig(kind, k, levels)


def _parse_algorithm(reader: _Reader, data: Any) -> AlgorithmConfig:
    path = ["algorithm"]
    data = reader.section(data or {}, path, ["mode", "alpha", "eta", "x0", "h0"])
    mode = reader.choice(data, path, "mode", MODES, "plain")
    alpha = reader.number_or_auto(data, path, "alpha", low=0.0, high=1.0)
    eta = reader.number_or_auto(data, path, "eta", low=0.0, high=1.0, low_open=False)
    x0 = reader.choice(data, path, "x0", X0_OPTIONS, "zeros")
    h0 = reader.choice(data, path, "h0", H0_OPTIONS, "zeros")
    return AlgorithmConfig(mode, alpha, eta, x0, h0)


TOP_LEVEL_KEYS = ["name", "problem", "map", "compressor", "algorithm", "n", "iterations", "seeds",
                  "output_dir", "mc_budget", "plateau_window", "transcript"]


def parse_config(text: str, base_dir: Union[str, Path] = ".") -> RunConfig:
    """
    Parsea y valida un documento de configuración.

    Los valores "auto" (gamma, alpha, eta) se resuelven al correr, contra el
    certificado del mapa.
    """
    reader = _Reader(text)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("<documento>", f"JSON mal formado: {e.msg}", e.lineno)
    reader.section(data, [], TOP_LEVEL_KEYS)
    base_dir = Path(base_dir)

    n = reader.get(data, [], "n", (int,), 1)
    reader.check_range(["n"], n, low=1, low_open=False)
    iterations = reader.get(data, [], "iterations", (int,), 100)
    reader.check_range(["iterations"], iterations, low=1, low_open=False)
    seeds = reader.get(data, [], "seeds", (list,), [0])
    if not seeds:
        reader.fail(["seeds"], "la lista de semillas no puede estar vacía")
    for seed in seeds:
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
            reader.fail(["seeds"], f"semilla inválida {seed!r}: entero en [0, 2^64)")
    name = reader.get(data, [], "name", (str,), "run")
    output_dir = reader.get(data, [], "output_dir", (str,), None)
    mc_budget = reader.get(data, [], "mc_budget", (int,), None)
    if mc_budget is not None:
        reader.check_range(["mc_budget"], mc_budget, low=2, low_open=False)
    window = reader.get(data, [], "plateau_window", (int, float), None)
    if window is not None:
        reader.check_range(["plateau_window"], window, low=0.0, high=1.0)
        window = float(window)
    transcript = reader.get(data, [], "transcript", (bool,), False)

    problem = _parse_problem(reader, data.get("problem"), n, base_dir)
    map_config = _parse_map(reader, data.get("map"), problem)
    compressor = _parse_compressor(reader, data.get("compressor"), _problem_dim(problem))
    algorithm = _parse_algorithm(reader, data.get("algorithm"))
    if algorithm.h0 == "fixed_point" and algorithm.mode != "vr":
        reader.fail(["algorithm", "h0"], "fixed_point solo aplica al modo vr")

    config = RunConfig(problem=problem, map=map_config, compressor=compressor, algorithm=algorithm,
                       n=n, iterations=iterations, seeds=tuple(seeds), name=name, output_dir=output_dir,
                       mc_budget=mc_budget, plateau_window=window, transcript=transcript,
                       base_dir=str(base_dir))
    logger.debug(f"Configuración '{name}' validada: {len(seeds)} semillas, K={iterations}, n={n}")
    return config


def load_config(path: Union[str, Path]) -> RunConfig:
    """Lee y parsea un archivo de configuración; las rutas relativas se resuelven junto al archivo."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(str(path), f"no se pudo leer: {e}")
    return parse_config(text, base_dir=path.parent)


def _drop_empty(data: Dict[str, Any]) -> Dict[str, Any]:
    cleaned = {}
    for key, value in data.items():
        if isinstance(value, dict):
            value = _drop_empty(value)
        if value is None:
            continue
        cleaned[key] = value
    return cleaned


def serialize_config(config: RunConfig) -> str:
    """Documento JSON equivalente; parse_config(serialize_config(c)) == c."""
    data = _drop_empty(config.to_dict())
    data["seeds"] = list(config.seeds)
    return json.dumps(data, indent=2, ensure_ascii=False) + "\n"
