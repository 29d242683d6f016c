#!/usr/bin/env python3
"""
ITERCOMP - Punto de entrada de línea de comandos.

Comandos:
    run <config>       corre todas las semillas y escribe CSV + summary.json
    verify <config>    verificaciones estadísticas de las hipótesis
    theory <config>    certificado y cotas, sin correr
    bundle --kappa K   comparación GD / GDCI / VR-GDCI sobre un problema sintético
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from . import APP_DESCRIPTION, APP_NAME, APP_VERSION
from .core.errors import (
    ConfigError,
    ConfigurationError,
    DatasetError,
    ExportError,
    ItercompError,
)
from .core.experiment import comparison_bundle, run_bundle, run_experiment, theory_report, verify
from .core.runconfig import load_config
from .core.settings import get_settings, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_ALL_DIVERGED = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="itercomp", description=APP_DESCRIPTION)
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
    parser.add_argument("--debug", action="store_true", help="logging en nivel DEBUG")
    parser.add_argument("--output-dir", dest="output_dir", help="directorio raíz de resultados")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="correr un experimento")
    run.add_argument("config", help="archivo JSON de configuración")

    check = commands.add_parser("verify", help="verificar hipótesis del mapa y del compresor")
    check.add_argument("config", help="archivo JSON de configuración")

    theory = commands.add_parser("theory", help="mostrar certificado y cotas teóricas")
    theory.add_argument("config", help="archivo JSON de configuración")

    bundle = commands.add_parser("bundle", help="comparación GD / GDCI / VR-GDCI")
    bundle.add_argument("--kappa", type=float, required=True, help="número de condición (≥ 1)")
    bundle.add_argument("--m", type=int, default=200)
    bundle.add_argument("--d", type=int, default=20)
    bundle.add_argument("--iterations", type=int, default=400)
    bundle.add_argument("--seeds", type=int, default=20, help="cantidad de semillas 0..S-1")
    return parser


def _print_json(data) -> None:
    print(json.dumps(data, indent=2, ensure_ascii=False, default=str))


def cmd_run(args, settings) -> int:
    config = load_config(args.config)
    result = run_experiment(config, settings)
    verdicts = result.summary["verdicts"]
    print(f"Resultados en {result.output_dir}")
    print(f"Meseta medida: {result.summary['plateau']['mean']}  "
          f"radio teórico: {result.summary['bound']['plateau_radius_sq']}")
    print(f"Semillas divergentes: {verdicts['diverged_seeds']}/{len(config.seeds)}")
    return EXIT_ALL_DIVERGED if result.all_diverged else EXIT_OK


def cmd_verify(args, settings) -> int:
    config = load_config(args.config)
    results = verify(config, settings)
    for result in results:
        status = "OK   " if result.passed else "FALLA"
        print(f"[{status}] {result.name}: {result.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECKS_FAILED


def cmd_theory(args, settings) -> int:
    config = load_config(args.config)
    _print_json(theory_report(config, settings))
    return EXIT_OK


def cmd_bundle(args, settings) -> int:
    if args.kappa < 1:
        raise ConfigurationError(f"El número de condición debe ser ≥ 1 (κ={args.kappa})")
    configs = comparison_bundle(args.kappa, m=args.m, d=args.d, iterations=args.iterations,
                                seeds=tuple(range(args.seeds)))
    results = run_bundle(configs, settings)
    for key, result in results.items():
        plateau = result.summary["plateau"]
        print(f"{key:8s} meseta={plateau['mean']}  directorio={result.output_dir}")
    return EXIT_ALL_DIVERGED if all(r.all_diverged for r in results.values()) else EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "verify": cmd_verify,
    "theory": cmd_theory,
    "bundle": cmd_bundle,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Función principal de entrada."""
    args = build_parser().parse_args(argv)
    settings = get_settings({"output_dir": args.output_dir, "debug": args.debug})
    setup_logging(settings)
    logger.info(f"Iniciando {APP_NAME} v{APP_VERSION}: {args.command}")

    try:
        return COMMANDS[args.command](args, settings)

    except (ConfigError, ConfigurationError, DatasetError) as e:
        print(f"Error de configuración: {e}", file=sys.stderr)
        logger.error(f"Error de configuración: {e}")
        return EXIT_CONFIG_ERROR

    except ExportError as e:
        print(f"Error escribiendo resultados: {e}", file=sys.stderr)
        logger.error(f"Error de exportación: {e}")
        return EXIT_FAILURE

    except ItercompError as e:
        print(f"Error: {e}", file=sys.stderr)
        logger.error(f"Error: {e}")
        return EXIT_FAILURE

    except KeyboardInterrupt:
        print("\nEjecución interrumpida por el usuario")
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
