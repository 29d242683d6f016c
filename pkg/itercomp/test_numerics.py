"""
Pruebas de aritmética de vectores y flujos aleatorios.
"""

import math

import numpy as np
import pytest

from itercomp.core.compressors import CompressorSpec, apply_compressor
from itercomp.core.errors import DimensionMismatchError, NumericsError
from itercomp.core.numerics import (
    RngStream,
    as_vector,
    derive_substream,
    mean_and_stderr,
    sample_standard_gaussian,
    squared_distance,
    squared_norm,
)


class TestVectores:

    @pytest.mark.parametrize("a, b, expected", [
        ([1, 2], [1, 2], 0.0),
        ([3, 4], [0, 0], 25.0),
        ([1, 0, -1], [0, 0, 0], 2.0),
    ])
    def test_squared_distance(self, a, b, expected):
        assert squared_distance(np.array(a, float), np.array(b, float)) == expected

    def test_dimensiones_distintas(self):
        with pytest.raises(DimensionMismatchError):
            squared_distance(np.zeros(2), np.zeros(3))

    def test_as_vector_rechaza_no_finitos(self):
        with pytest.raises(NumericsError):
            as_vector([1.0, np.nan])
        with pytest.raises(NumericsError):
            as_vector([np.inf])

    def test_as_vector_aplana(self):
        v = as_vector([[1, 2], [3, 4]])
        assert v.shape == (4,)
        assert v.dtype == np.float64

    def test_squared_norm(self):
        assert squared_norm(np.array([3.0, 4.0])) == 25.0

    def test_descomposicion_de_varianza(self):
        """mean‖X−Y‖² = mean‖X−X̄‖² + ‖X̄−Y‖² para una muestra empírica."""
        rng = RngStream(3).generator()
        X = rng.standard_normal((500, 4)) * 2.0 + 1.0
        Y = np.array([0.5, -1.0, 2.0, 0.0])
        mean = X.mean(axis=0)
        lhs = np.mean(np.sum((X - Y) ** 2, axis=1))
        rhs = np.mean(np.sum((X - mean) ** 2, axis=1)) + squared_distance(mean, Y)
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestFlujos:

    def test_derivar_concatena_ruta(self):
        stream = derive_substream(RngStream(7), [1, 0])
        assert stream.path == (1, 0)
        assert stream.root_seed == 7
        assert RngStream(7).derive([1, 0]) == stream

    def test_orden_de_etiquetas_importa(self):
        a = RngStream(7).derive([1]).derive([2])
        b = RngStream(7).derive([2]).derive([1])
        assert a.path != b.path
        assert not np.array_equal(a.generator().random(5), b.generator().random(5))

    def test_determinismo(self):
        a = sample_standard_gaussian(RngStream(11, (1, 2, 3)), 100)
        b = sample_standard_gaussian(RngStream(11, (1, 2, 3)), 100)
        assert np.array_equal(a, b)

    def test_rutas_distintas_producen_secuencias_distintas(self):
        a = sample_standard_gaussian(RngStream(11, (1, 0, 0)), 10)
        b = sample_standard_gaussian(RngStream(11, (1, 0, 1)), 10)
        assert not np.array_equal(a, b)

    def test_generador_nuevo_cada_vez(self):
        stream = RngStream(5, (2,))
        assert np.array_equal(stream.generator().random(3), stream.generator().random(3))

    @pytest.mark.parametrize("seed", [-1, 2 ** 64])
    def test_semilla_fuera_de_rango(self, seed):
        with pytest.raises(ValueError):
            RngStream(seed)

    def test_semilla_maxima_valida(self):
        assert sample_standard_gaussian(RngStream(2 ** 64 - 1), 3).shape == (3,)

    def test_etiqueta_negativa(self):
        with pytest.raises(ValueError):
            RngStream(0).derive([-1])

    def test_count_invalido(self):
        with pytest.raises(ValueError):
            sample_standard_gaussian(RngStream(0), 0)

    def test_momentos_gaussianos(self):
        draws = sample_standard_gaussian(RngStream(2024), 1_000_000)
        assert abs(draws.mean()) < 0.01
        assert abs(draws.var() - 1.0) < 0.01


class TestEstadisticas:

    def test_media_y_error_estandar(self):
        mean, stderr = mean_and_stderr([2.0, 4.0])
        assert mean == 3.0
        assert stderr == pytest.approx(1.0)

    def test_una_muestra(self):
        mean, stderr = mean_and_stderr([5.0])
        assert mean == 5.0
        assert math.isnan(stderr)

    def test_vacio(self):
        with pytest.raises(ValueError):
            mean_and_stderr([])


def random_pairs(seed, count=50, d=6):
    """Pares (a, b) gaussianos y diferencias C(x) − x de compresores."""
    rng = RngStream(seed).generator()
    pairs = [(rng.standard_normal(d) * rng.exponential(), rng.standard_normal(d)) for _ in range(count)]
    x = rng.standard_normal(d)
    for j, spec in enumerate((CompressorSpec.natural(), CompressorSpec.rand_k(2), CompressorSpec.dithering(2))):
        for s in range(count):
            noise = apply_compressor(spec, x, RngStream(seed).derive([j, s])) - x
            pairs.append((noise, x))
    return pairs


class TestDesigualdades:

    @pytest.mark.parametrize("seed", range(5))
    def test_cota_de_la_suma(self, seed):
        for a, b in random_pairs(seed):
            lhs = squared_norm(a + b)
            rhs = 2 * squared_norm(a) + 2 * squared_norm(b)
            assert lhs <= rhs * (1 + 1e-12)

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("eta", [0.0, 0.1, 0.5, 0.9, 1.0])
    def test_convexidad(self, seed, eta):
        for a, b in random_pairs(seed):
            lhs = squared_norm(eta * a + (1 - eta) * b)
            rhs = eta * squared_norm(a) + (1 - eta) * squared_norm(b)
            assert lhs <= rhs * (1 + 1e-12) + 1e-300
