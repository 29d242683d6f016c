"""
ITERCOMP - Simulador de iteraciones de punto fijo con iterados comprimidos

Métodos de punto fijo (simples y con reducción de varianza), en un nodo o
distribuidos en topología maestro/trabajadores, con operadores de compresión
insesgados y una calculadora de cotas teóricas para contrastar cada corrida.
"""

__version__ = "1.0.0"

# Metadatos del paquete
APP_NAME = "ITERCOMP"
APP_VERSION = __version__
APP_DESCRIPTION = "Simulador de punto fijo con iterados comprimidos"
