"""
Sistema de configuración del simulador.
Maneja la configuración desde múltiples fuentes: valores por defecto,
config.json, variables de entorno y argumentos CLI.
"""

import os
import json
import logging
from pathlib import Path
from typing import Optional, Dict, Any

logger = logging.getLogger(__name__)

DEFAULTS: Dict[str, Any] = {
    "output_dir": "runs",
    "log_level": "INFO",
    "log_file": "itercomp.log",
    "mc_budget": 2000,
    "plateau_window": 0.2,
    "verify_samples": 20000,
    "debug": False,
}

ENV_MAPPINGS = {
    "ITERCOMP_OUTPUT_DIR": ("output_dir", str),
    "ITERCOMP_LOG_LEVEL": ("log_level", str),
    "ITERCOMP_LOG_FILE": ("log_file", str),
    "ITERCOMP_MC_BUDGET": ("mc_budget", int),
}


class Settings:
    """Clase para manejar toda la configuración de la aplicación."""

    def __init__(self, cli_overrides: Optional[Dict[str, Any]] = None, config_path: str = "config.json"):
        self.config: Dict[str, Any] = {}
        # claves fijadas por variables de entorno o CLI
        self.overridden: set = set()
        self.config_path = Path(config_path)
        self._load_config(cli_overrides or {})

    def _load_config(self, cli_overrides: Dict[str, Any]):
        """Carga la configuración desde múltiples fuentes en orden de prioridad."""
        # 1. Configuración por defecto
        self.config = dict(DEFAULTS)

        # 2. Cargar desde config.json
        self._load_from_config_file()

        # 3. Variables de entorno
        self._load_from_environment()

        # 4. Argumentos CLI
        self._load_from_cli(cli_overrides)

    def _load_from_config_file(self):
        """Carga configuración desde config.json."""
        if self.config_path.exists():
            try:
                with open(self.config_path, 'r', encoding='utf-8') as f:
                    file_config = json.load(f)
                unknown = set(file_config) - set(DEFAULTS)
                if unknown:
                    logger.warning(f"Claves desconocidas en {self.config_path}: {sorted(unknown)}")
                self.config.update({k: v for k, v in file_config.items() if k in DEFAULTS})
                logger.info(f"Configuración cargada desde {self.config_path}")
            except Exception as e:
                logger.warning(f"Error leyendo {self.config_path}: {e}")

    def _load_from_environment(self):
        """Carga configuración desde variables de entorno."""
        for env_var, (config_key, cast) in ENV_MAPPINGS.items():
            value = os.getenv(env_var)
            if value:
                try:
                    value = cast(value)
                except ValueError:
                    logger.warning(f"Valor inválido para {env_var}: {value}")
                    continue

                self.config[config_key] = value
                self.overridden.add(config_key)
                logger.info(f"Configuración desde ENV: {config_key} = {value}")

    def _load_from_cli(self, cli_overrides: Dict[str, Any]):
        """Aplica los argumentos CLI ya parseados (solo los presentes)."""
        if cli_overrides.get("output_dir"):
            self.config["output_dir"] = cli_overrides["output_dir"]
            self.overridden.add("output_dir")
            logger.info(f"Directorio de salida desde CLI: {cli_overrides['output_dir']}")

        if cli_overrides.get("debug"):
            self.config["debug"] = True
            self.config["log_level"] = "DEBUG"

    def get_output_dir(self) -> Path:
        """Retorna el directorio raíz de resultados."""
        return Path(self.config["output_dir"])

    def get_mc_budget(self) -> int:
        return int(self.config["mc_budget"])

    def get_plateau_window(self) -> float:
        return float(self.config["plateau_window"])

    def get_verify_samples(self) -> int:
        return int(self.config["verify_samples"])

    def is_debug_enabled(self) -> bool:
        """Retorna si el modo debug está habilitado."""
        return bool(self.config.get("debug", False))

    def get_config(self) -> Dict[str, Any]:
        """Retorna toda la configuración."""
        return self.config.copy()


# Instancia global de configuración (se crea al primer uso)
_settings: Optional[Settings] = None


def get_settings(cli_overrides: Optional[Dict[str, Any]] = None) -> Settings:
    """Retorna la instancia global de configuración; con overrides la recrea."""
    global _settings
    if _settings is None or cli_overrides is not None:
        _settings = Settings(cli_overrides)
    return _settings


def setup_logging(settings: Optional[Settings] = None):
    """Configura el logging de la aplicación."""
    settings = settings or get_settings()
    level_name = "DEBUG" if settings.is_debug_enabled() else str(settings.config["log_level"]).upper()
    level = getattr(logging, level_name, logging.INFO)

    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(),
            logging.FileHandler(settings.config["log_file"], encoding='utf-8')
        ],
        force=True,
    )

    logger.info("Sistema de logging configurado")
