"""
Jerarquía de excepciones del simulador.
Cada módulo lanza su propia excepción; todas derivan de ItercompError.
"""


class ItercompError(Exception):
    """Excepción base del paquete."""
    pass


class NumericsError(ItercompError):
    """Valores no finitos (NaN/Inf) en un vector."""
    pass


class DimensionMismatchError(ItercompError):
    """Vectores u operadores con dimensiones incompatibles."""
    pass


class CompressionError(ItercompError):
    """Operador de compresión mal configurado para la dimensión dada."""
    pass


class ConfigurationError(ItercompError):
    """Constantes del problema o del mapa fuera de rango."""
    pass


class ReferenceSolveError(ItercompError):
    """El cálculo de la solución de referencia no convergió."""
    pass


class DivergenceError(ItercompError):
    """La iteración divergió; conserva la iteración y la trayectoria parcial."""

    def __init__(self, message: str, k: int, trajectory=None):
        super().__init__(message)
        self.k = k
        self.trajectory = trajectory


class GatherError(ItercompError):
    """Falta la carga útil de algún nodo en la ronda de recolección."""
    pass


class ConfigError(ItercompError):
    """Error en el archivo de configuración de una corrida."""

    def __init__(self, key: str, message: str, line: int = None):
        location = f" (línea {line})" if line else ""
        super().__init__(f"{key}{location}: {message}")
        self.key = key
        self.line = line


class ExportError(ItercompError):
    """Error escribiendo resultados a disco."""

    def __init__(self, message: str, path=None):
        super().__init__(message)
        self.path = path


class TheoryError(ItercompError):
    """Argumentos fuera del dominio de una fórmula teórica."""
    pass


class DatasetError(ItercompError):
    """Archivo de datos mal formado; conserva el número de línea."""

    def __init__(self, message: str, path=None, line: int = None):
        location = f" (línea {line})" if line else ""
        super().__init__(f"{message}{location}")
        self.path = path
        self.line = line
