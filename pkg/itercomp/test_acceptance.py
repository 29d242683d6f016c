"""
Pruebas de aceptación de extremo a extremo: vecindades, escalamiento con n,
convergencia lineal con reducción de varianza, contracción de Lyapunov,
mapas estocásticos, punto de silla y la comparación GD / GDCI / VR-GDCI.

Son lentas (decenas de segundos); se marcan con `slow`.
"""

import math

import numpy as np
import pytest

from itercomp.core.algorithms import run_loop
from itercomp.core.checks import check_contraction, check_lipschitz, check_one_step_recursions, recursion_states
from itercomp.core.compressors import CompressorKind
from itercomp.core.experiment import initial_point, initial_shifts, comparison_bundle, prepare, run_bundle, run_experiment
from itercomp.core.numerics import RngStream, mean_and_stderr
from itercomp.core.runconfig import AlgorithmConfig, CompressorConfig, MapConfig, ProblemConfig, RunConfig
from itercomp.core.settings import Settings
from itercomp.data.datasets import generate_synthetic

pytestmark = pytest.mark.slow

KAPPA2 = ProblemConfig(type="synthetic", m=200, d=20, kappa=2.0)


@pytest.fixture
def settings(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("ITERCOMP_MC_BUDGET", raising=False)
    return Settings({"output_dir": str(tmp_path / "runs")})


def make_config(problem=KAPPA2, compressor="natural", mode="plain", n=1, iterations=400, seeds=range(200),
                **kwargs) -> RunConfig:
    k = kwargs.pop("k", None)
    algorithm = kwargs.pop("algorithm", AlgorithmConfig(mode))
    return RunConfig(problem=problem, compressor=CompressorConfig(compressor, k=k), algorithm=algorithm,
                     n=n, iterations=iterations, seeds=tuple(seeds), **kwargs)


class TestVecindadSimple:

    def test_meseta_y_envolvente(self, settings):
        result = run_experiment(make_config(name="vecindad"), settings, write=False)
        summary = result.summary
        assert summary["certificate"]["rho"] == pytest.approx(0.5)
        assert summary["bound"]["rate_factor"] == pytest.approx(0.75)
        assert summary["verdicts"]["theory_valid"]
        assert summary["verdicts"]["plateau_within_radius"]
        assert summary["plateau"]["mean"] <= summary["bound"]["plateau_radius_sq"]
        assert summary["verdicts"]["envelope"]["checked"]
        assert summary["verdicts"]["envelope"]["respected"]
        assert summary["plateau"]["mean"] > 0

    def test_mas_nodos_meseta_menor(self, settings):
        single = run_experiment(make_config(n=1, seeds=range(50), name="n1"), settings, write=False).summary
        split = run_experiment(make_config(n=10, seeds=range(50), name="n10"), settings, write=False).summary
        for summary in (single, split):
            assert summary["verdicts"]["theory_valid"]
            assert summary["plateau"]["mean"] <= summary["bound"]["plateau_radius_sq"]
        assert split["plateau"]["mean"] <= single["plateau"]["mean"]


class TestConvergenciaLineal:

    @pytest.mark.parametrize("compressor, k", [("natural", None), ("rand_k", 1)])
    def test_alcanza_precision_de_maquina(self, settings, compressor, k):
        prepared = prepare(make_config(compressor=compressor, k=k, mode="vr", seeds=[0]), settings)
        assert prepared.certificate.B == 0.0
        assert prepared.bound.valid
        if compressor == "natural":
            assert prepared.vr_params.alpha == pytest.approx(8 / 9)
            assert prepared.vr_params.eta == pytest.approx(1 / 3)
            assert prepared.bound.rate_factor == pytest.approx(11 / 12)
        else:
            assert prepared.omega == 19.0
        x0 = initial_point(prepared, 0)
        r0 = float(np.sum((x0 - prepared.x_star) ** 2))
        K = 2 * math.ceil(math.log(r0 / 1e-16) / -math.log(prepared.bound.rate_factor))
        rows = run_loop(prepared.run_spec(), K, 0, x0, initial_shifts(prepared))
        assert rows[-1].r_sq <= 1e-16


class TestLyapunov:

    def test_contraccion_promedio(self, settings):
        prepared = prepare(make_config(mode="vr", iterations=50), settings)
        rate = prepared.bound.rate_factor
        psi = np.array([[r.psi for r in run_loop(prepared.run_spec(), 50, seed, initial_point(prepared, seed),
                                                 initial_shifts(prepared))]
                        for seed in range(200)])
        for k in range(50):
            mean, stderr = mean_and_stderr(psi[:, k + 1] - rate * psi[:, k])
            assert mean <= 3 * stderr, f"k={k}"


class TestRecursionesDeUnPaso:

    def test_cinco_estados(self, settings):
        prepared = prepare(make_config(mode="vr", seeds=[0]), settings)
        states = recursion_states(prepared.x_star, 1, 5, RngStream(11))
        results = check_one_step_recursions(states, prepared.vr_params, prepared.map_spec, prepared.compressor,
                                            prepared.certificate, prepared.x_star, RngStream(12), draws=10_000)
        assert all(r.passed for r in results), [r.to_dict() for r in results]


class TestMapasEstocasticos:

    def _config(self, mode="vr"):
        problem = ProblemConfig(type="synthetic", m=40, d=5, kappa=2.0, l2=0.1)
        L = generate_synthetic(40, 5, 2.0, 1, 0.1, RngStream(0)).smoothness()
        return make_config(problem=problem, mode=mode, iterations=3000, seeds=range(20), mc_budget=500,
                           map=MapConfig("sgd", 0.25 / L, 4), name="sgd")

    def test_hipotesis(self, settings):
        prepared = prepare(self._config(), settings)
        assert prepared.certificate.B_provenance == "monte_carlo"
        contraction = check_contraction(prepared.map_spec, prepared.certificate, prepared.x_star,
                                        RngStream(21), points=10, samples=1000)
        lipschitz = check_lipschitz(prepared.map_spec, prepared.certificate, prepared.x_star,
                                    RngStream(22), pairs=10, samples=1000)
        assert contraction.passed, contraction.detail
        assert lipschitz.passed, lipschitz.detail

    def test_meseta_vr(self, settings):
        result = run_experiment(self._config(), settings, write=False)
        summary = result.summary
        assert summary["bound"]["valid"]
        assert summary["certificate"]["B"] > 0
        assert summary["verdicts"]["plateau_within_radius"]


class TestPuntoDeSilla:

    def test_gda_converge(self, settings):
        problem = ProblemConfig(type="saddle", dim=2, mu=1.0, scale=0.5)
        config = make_config(problem=problem, mode="vr", iterations=3000, seeds=[0],
                             map=MapConfig("gda"), algorithm=AlgorithmConfig("vr", x0="gaussian"))
        prepared = prepare(config, settings)
        assert np.array_equal(prepared.x_star, np.zeros(4))
        rows = run_loop(prepared.run_spec(), config.iterations, 0, initial_point(prepared, 0),
                        initial_shifts(prepared))
        assert rows[0].r_sq > 0
        assert rows[-1].r_sq <= 1e-12


class TestComparacion:

    def test_tres_curvas(self, settings):
        results = run_bundle(comparison_bundle(2, seeds=range(5)), settings, write=False)
        gd, gdci, vr = (results[key] for key in ("gd", "gdci", "vr_gdci"))
        gd_final = max(rows[-1].r_sq for rows in gd.trajectories().values())
        assert gd_final <= 1e-20

        plateau = gdci.summary["plateau"]["mean"]
        assert 0 < plateau <= gdci.summary["bound"]["plateau_radius_sq"]

        vr_final = max(rows[-1].r_sq for rows in vr.trajectories().values())
        assert vr_final <= plateau * 1e-6
        for rows in vr.trajectories().values():
            assert any(r.r_sq < plateau for r in rows)

    def test_misma_semilla_mismos_datos(self, settings):
        configs = comparison_bundle(2, iterations=5, seeds=range(2))
        gd = prepare(configs["gd"], settings)
        vr = prepare(configs["vr_gdci"], settings)
        assert np.array_equal(gd.x_star, vr.x_star)
        assert configs["gdci"].compressor.kind == CompressorKind.NATURAL.value
