#!/usr/bin/env python3
"""
Punto de entrada principal para ITERCOMP
Este script asegura que los imports del paquete funcionen desde la raíz
"""

import sys
from pathlib import Path

# Añadir el directorio raíz al path para imports absolutos
root_dir = Path(__file__).parent
sys.path.insert(0, str(root_dir))

if __name__ == "__main__":
    from itercomp.app import main
    sys.exit(main())
