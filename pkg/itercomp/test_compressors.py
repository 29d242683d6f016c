"""
Pruebas de los operadores de compresión: distribución exacta para
dimensiones pequeñas y momentos de Monte-Carlo.
"""

import itertools
import math

import numpy as np
import pytest

from itercomp.core.compressors import (
    CompressorKind,
    CompressorSpec,
    apply_compressor,
    compress_batch,
    compressor_omega,
    enumerate_outcomes,
    estimate_moments,
    message_bits,
)
from itercomp.core.errors import CompressionError
from itercomp.core.numerics import RngStream, squared_distance, squared_norm

ALL_SPECS = [
    CompressorSpec.identity(),
    CompressorSpec.rand_k(1),
    CompressorSpec.rand_k(3),
    CompressorSpec.natural(),
    CompressorSpec.dithering(1),
    CompressorSpec.dithering(4),
]


def _exact_moments(spec, x):
    outcomes = enumerate_outcomes(spec, x)
    total = sum(p for p, _ in outcomes)
    mean = sum(p * y for p, y in outcomes)
    variance = sum(p * squared_distance(y, x) for p, y in outcomes)
    return total, mean, variance


class TestOmega:

    def test_valores_publicados(self):
        assert compressor_omega(CompressorSpec.identity(), 10) == 0.0
        assert compressor_omega(CompressorSpec.natural(), 3) == 0.125
        assert compressor_omega(CompressorSpec.natural(), 1000) == 0.125
        assert compressor_omega(CompressorSpec.rand_k(1), 2) == 1.0
        assert compressor_omega(CompressorSpec.rand_k(2), 8) == 3.0
        assert compressor_omega(CompressorSpec.dithering(2), 8) == pytest.approx(math.sqrt(8) / 2)
        assert compressor_omega(CompressorSpec.dithering(4), 4) == pytest.approx(0.25)

    def test_rand_k_mayor_que_d(self):
        with pytest.raises(CompressionError):
            compressor_omega(CompressorSpec.rand_k(5), 3)
        with pytest.raises(CompressionError):
            apply_compressor(CompressorSpec.rand_k(5), np.ones(3), RngStream(0))

    def test_parametros_invalidos(self):
        with pytest.raises(CompressionError):
            CompressorSpec.rand_k(0)
        with pytest.raises(CompressionError):
            CompressorSpec.dithering(0)


class TestEnumeracion:

    def test_rand_k_dos_resultados(self):
        outcomes = enumerate_outcomes(CompressorSpec.rand_k(1), np.array([3.0, 4.0]))
        values = sorted(tuple(y) for _, y in outcomes)
        assert values == [(0.0, 8.0), (6.0, 0.0)]
        total, mean, variance = _exact_moments(CompressorSpec.rand_k(1), np.array([3.0, 4.0]))
        assert total == pytest.approx(1.0)
        assert np.allclose(mean, [3.0, 4.0], atol=1e-12)
        assert variance == pytest.approx(25.0, rel=1e-12)

    def test_natural_escalar(self):
        outcomes = enumerate_outcomes(CompressorSpec.natural(), np.array([3.0]))
        assert sorted((y[0], p) for p, y in outcomes) == [(2.0, 0.5), (4.0, 0.5)]
        _, mean, variance = _exact_moments(CompressorSpec.natural(), np.array([3.0]))
        assert mean[0] == pytest.approx(3.0, abs=1e-12)
        assert variance == pytest.approx(1.0, abs=1e-12)
        assert variance <= 0.125 * 9

    def test_natural_potencia_de_dos(self):
        outcomes = enumerate_outcomes(CompressorSpec.natural(), np.array([2.0]))
        assert len(outcomes) == 1
        assert outcomes[0][1][0] == 2.0
        for m in range(20):
            assert apply_compressor(CompressorSpec.natural(), np.array([2.0, -0.25]), RngStream(m))[0] == 2.0

    @pytest.mark.parametrize("spec", [
        CompressorSpec.rand_k(1), CompressorSpec.rand_k(2), CompressorSpec.natural(),
        CompressorSpec.dithering(1), CompressorSpec.dithering(3),
    ])
    def test_insesgado_y_varianza_acotada(self, spec):
        x = np.array([0.7, -1.9, 3.3])
        total, mean, variance = _exact_moments(spec, x)
        assert total == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(mean, x, atol=1e-12)
        assert variance <= compressor_omega(spec, 3) * squared_norm(x) + 1e-12

    def test_rand_k_varianza_exacta(self):
        x = np.array([1.0, -2.0, 3.0])
        _, _, variance = _exact_moments(CompressorSpec.rand_k(2), x)
        assert variance == pytest.approx(0.5 * squared_norm(x), rel=1e-12)


class TestRealizaciones:

    @pytest.mark.parametrize("spec", ALL_SPECS)
    def test_vector_cero(self, spec):
        y = apply_compressor(spec, np.zeros(4), RngStream(1))
        assert np.array_equal(y, np.zeros(4))

    def test_identidad(self):
        x = np.array([1.5, -2.0])
        y = apply_compressor(CompressorSpec.identity(), x, RngStream(0))
        assert np.array_equal(y, x)
        assert y is not x

    def test_rand_k_soporte(self):
        x = np.arange(1.0, 9.0)
        y = apply_compressor(CompressorSpec.rand_k(3), x, RngStream(4))
        kept = np.flatnonzero(y)
        assert kept.size == 3
        assert np.allclose(y[kept], x[kept] * 8 / 3)

    def test_natural_potencias_de_dos_con_signo(self):
        x = RngStream(9).generator().standard_normal(50) * 10
        y = apply_compressor(CompressorSpec.natural(), x, RngStream(10))
        assert np.all(np.sign(y) == np.sign(x))
        mantissa, _ = np.frexp(np.abs(y))
        assert np.all(mantissa == 0.5)
        assert np.all(np.abs(y) >= np.abs(x) / 2) and np.all(np.abs(y) <= 2 * np.abs(x))

    def test_natural_cerca_del_maximo_representable(self):
        x = np.array([1.5 * 2.0 ** 1022, -1.0])
        outcomes = enumerate_outcomes(CompressorSpec.natural(), x)
        assert all(np.all(np.isfinite(y)) for _, y in outcomes)
        assert np.allclose(sum(p * y for p, y in outcomes) / x, 1.0)
        y = apply_compressor(CompressorSpec.natural(), x, RngStream(4))
        assert y[0] in (2.0 ** 1022, 2.0 ** 1023)

    @pytest.mark.parametrize("value", [2.0 ** 1023, -1.5 * 2.0 ** 1023, np.finfo(np.float64).max])
    def test_natural_fuera_de_rango(self, value):
        x = np.array([1.0, value])
        with pytest.raises(CompressionError):
            apply_compressor(CompressorSpec.natural(), x, RngStream(0))
        with pytest.raises(CompressionError):
            enumerate_outcomes(CompressorSpec.natural(), x)

    def test_determinismo(self):
        x = np.array([0.3, -1.2, 5.0, 2.2])
        for spec in ALL_SPECS:
            a = apply_compressor(spec, x, RngStream(3, (2, 0, 7)))
            b = apply_compressor(spec, x, RngStream(3, (2, 0, 7)))
            assert np.array_equal(a, b)


class TestMomentos:

    def test_identidad(self):
        x = np.array([1.0, 2.0, -3.0])
        estimate = estimate_moments(CompressorSpec.identity(), x, 100, RngStream(0))
        assert np.array_equal(estimate.mean, x)
        assert estimate.mean_sq_deviation == 0.0

    def test_rand_k_desviacion(self):
        estimate = estimate_moments(CompressorSpec.rand_k(1), np.array([3.0, 4.0]), 100_000, RngStream(1))
        assert abs(estimate.mean_sq_deviation - 25.0) <= 3 * estimate.std_error + 1e-9

    def test_natural_escalar(self):
        estimate = estimate_moments(CompressorSpec.natural(), np.array([3.0]), 100_000, RngStream(2))
        assert abs(estimate.mean[0] - 3.0) <= 4 * estimate.mean_std_error[0]
        assert abs(estimate.mean_sq_deviation - 1.0) <= 3 * estimate.std_error

    def test_muestras_insuficientes(self):
        with pytest.raises(ValueError):
            estimate_moments(CompressorSpec.natural(), np.ones(2), 1, RngStream(0))


class TestBits:

    def test_modelo_de_bits(self):
        assert message_bits(CompressorSpec.identity(), 10) == 640
        assert message_bits(CompressorSpec.rand_k(3), 8) == 201
        assert message_bits(CompressorSpec.natural(), 4) == 36
        assert message_bits(CompressorSpec.dithering(1), 8) == 64 + 8 * 2

    @pytest.mark.parametrize("spec", [CompressorSpec.rand_k(2), CompressorSpec.natural(), CompressorSpec.dithering(3)])
    def test_compresion_ahorra_bits(self, spec):
        assert message_bits(spec, 16) < 64 * 16

    def test_etiquetas(self):
        assert CompressorSpec.rand_k(3).label() == "rand_k(3)"
        assert CompressorSpec(CompressorKind.NATURAL).label() == "natural"
        assert CompressorSpec.dithering(2).to_dict() == {"kind": "dithering", "levels": 2}


NODE_VECTORS = [np.array([0.7, -1.9]), np.array([2.5, 0.3]), np.array([-1.1, 4.2])]


class TestVarianzaEntreNodos:

    @pytest.mark.parametrize("spec", [CompressorSpec.rand_k(1), CompressorSpec.natural(),
                                      CompressorSpec.dithering(2)])
    def test_aditividad_exacta(self, spec):
        """E‖(1/n)Σ(C(x_i) − x_i)‖² = (1/n²)Σ E‖C(x_i) − x_i‖² con ruido independiente."""
        n = len(NODE_VECTORS)
        per_node = [enumerate_outcomes(spec, x) for x in NODE_VECTORS]
        lhs = 0.0
        for combo in itertools.product(*per_node):
            prob = math.prod(p for p, _ in combo)
            noise = sum(y - x for (_, y), x in zip(combo, NODE_VECTORS)) / n
            lhs += prob * squared_norm(noise)
        rhs = sum(_exact_moments(spec, x)[2] for x in NODE_VECTORS) / n ** 2
        assert lhs == pytest.approx(rhs, rel=1e-10)
        assert lhs <= compressor_omega(spec, 2) * sum(squared_norm(x) for x in NODE_VECTORS) / n ** 2 + 1e-12

    def test_aditividad_con_flujos_independientes(self):
        spec = CompressorSpec.natural()
        n, samples = len(NODE_VECTORS), 20_000
        noise = np.zeros((samples, 2))
        for i, x in enumerate(NODE_VECTORS):
            X = np.broadcast_to(x, (samples, 2)).copy()
            noise += compress_batch(spec, X, RngStream(8).derive([i]).generator()) - x
        deviations = np.sum((noise / n) ** 2, axis=1)
        expected = sum(_exact_moments(spec, x)[2] for x in NODE_VECTORS) / n ** 2
        stderr = deviations.std(ddof=1) / math.sqrt(samples)
        assert abs(deviations.mean() - expected) <= 4 * stderr
