import os
import inspect
from pathlib import Path
from tomlkit import parse
from tomlkit.exceptions import ParseError
from loguru import logger

from graspdec.core import paths
from graspdec.core.errors import ConfigError

LOG_LEVELS = ("TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL")
EVAL_SCHEMES = ("holdout", "kfold")


class GraspdecConfig:
    def __init__(self):
        self._raw_config = None
        self._config_dir = None

    def _get_config_dir(self) -> Path:
        if self._config_dir:
            return self._config_dir

        self._config_dir = paths.get_default_config_dir()
        return self._config_dir

    def _load_toml_file(self, path: Path) -> dict:
        if not path.exists():
            logger.debug(f"No config file at {path}; using built-in defaults.")
            return {}
        try:
            return parse(path.read_text()).unwrap()
        except ParseError as e:
            raise ConfigError(f"Failed to parse config TOML {path}: {e}") from e

    def _validate_log_level(self, value: str) -> str:
        value = str(value).upper()
        if value not in LOG_LEVELS:
            raise ConfigError(f"Invalid log_level '{value}'. Must be one of: {', '.join(LOG_LEVELS)}.")
        return value

    def _ensure_loaded(self):
        if self._raw_config is None:
            raise RuntimeError("GraspdecConfig has not been loaded. Call `config.load()` first.")

    def _section(self, name: str) -> dict:
        self._ensure_loaded()
        return self._raw_config.get(name, {}) or {}

    def load(self):
        if self._raw_config is not None:
            return

        config_dir = self._get_config_dir()
        self._raw_config = self._load_toml_file(config_dir / "config.toml")

    def reload(self):
        """Forget the cached file and config dir, then load again."""
        self._raw_config = None
        self._config_dir = None
        self.load()

    def validate(self):
        self._ensure_loaded()
        # properties raise ConfigError on bad values
        self.log_level
        self.threads
        scheme = self.eval_scheme
        if scheme not in EVAL_SCHEMES:
            raise ConfigError(f"Invalid evaluation scheme '{scheme}'. Must be one of: {', '.join(EVAL_SCHEMES)}.")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"evaluation.test_fraction must lie in (0, 1), got {self.test_fraction}")
        if self.k_folds < 2:
            raise ConfigError(f"evaluation.k_folds must be >= 2, got {self.k_folds}")
        if self.c_parameter <= 0:
            raise ConfigError(f"evaluation.c_parameter must be positive, got {self.c_parameter}")
        logger.trace(f"Config validated from {self.config_dir}")

    def list_properties(self) -> dict:
        self._ensure_loaded()
        props = inspect.getmembers(type(self), lambda o: isinstance(o, property))
        result = {}
        for name, _ in props:
            if name.startswith("_") or name == "config":
                continue
            try:
                result[name] = getattr(self, name)
            except Exception as e:
                result[name] = f"<error: {e}>"
        return result

    def __getitem__(self, key):
        self._ensure_loaded()
        return self._raw_config.get(key)

    def __contains__(self, key):
        self._ensure_loaded()
        return key in self._raw_config

    def __iter__(self):
        self._ensure_loaded()
        return iter(self._raw_config)

    @property
    def config(self):
        self._ensure_loaded()
        return self._raw_config

    @property
    def config_dir(self) -> Path:
        return self._get_config_dir()

    @property
    def is_loaded(self):
        return self._raw_config is not None

    @property
    def log_level(self) -> str:
        self._ensure_loaded()
        return self._validate_log_level(self._raw_config.get("log_level", "INFO"))

    @property
    def seed(self) -> int:
        self._ensure_loaded()
        return int(self._raw_config.get("seed", 0))

    @property
    def notch_hz(self) -> float:
        return float(self._section("preprocess").get("notch_hz", 60.0))

    @property
    def notch_quality(self) -> float:
        return float(self._section("preprocess").get("notch_quality", 30.0))

    @property
    def broadband_low_hz(self) -> float:
        return float(self._section("preprocess").get("broadband_low_hz", 0.5))

    @property
    def broadband_high_hz(self) -> float:
        return float(self._section("preprocess").get("broadband_high_hz", 40.0))

    @property
    def filter_order(self) -> int:
        return int(self._section("preprocess").get("filter_order", 4))

    @property
    def c_parameter(self) -> float:
        return float(self._section("evaluation").get("c_parameter", 1.0))

    @property
    def eval_scheme(self) -> str:
        return str(self._section("evaluation").get("scheme", "holdout")).lower()

    @property
    def test_fraction(self) -> float:
        return float(self._section("evaluation").get("test_fraction", 0.2))

    @property
    def k_folds(self) -> int:
        return int(self._section("evaluation").get("k_folds", 5))

    @property
    def stratified(self) -> bool:
        return bool(self._section("evaluation").get("stratified", True))

    @property
    def topomap_resolution(self) -> int:
        return int(self._section("topomap").get("resolution", 64))

    @property
    def threads(self) -> int:
        raw = os.getenv("GRASPDEC_THREADS") or self._section("runtime").get("threads", 1)
        try:
            threads = int(raw)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"threads must be a positive integer, got {raw!r}") from e
        if threads < 1:
            raise ConfigError(f"threads must be a positive integer, got {threads}")
        return threads


# Global singleton instance
config = GraspdecConfig()
