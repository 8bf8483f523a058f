"""Experiment configuration file loader."""

import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import yaml

from mflab.config import settings
from mflab.schemas.experiment import ExperimentConfig
from mflab.services.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


class ConfigLoader:
    """Load experiment configuration from files and command-line overrides."""

    YAML_SUFFIXES = {".yaml", ".yml"}
    LIST_KEYS = {"seeds", "lam_grid", "stage_lambdas", "alpha_grid", "beta_grid"}
    NULL_VALUES = {"", "none", "null"}

    @classmethod
    def load_config(cls, config_path: Optional[str] = None) -> Dict[str, Any]:
        """
        Load raw key/value pairs from a config file.

        Args:
            config_path: Path to a `key = value` file or a YAML file (optional)

        Returns:
            Mapping of config keys to values; empty when no path is given

        Raises:
            FileNotFoundError: If the path does not exist
            ConfigurationError: If the file cannot be parsed
        """
        if not config_path:
            return {}

        config_file = Path(config_path)
        if not config_file.exists():
            raise FileNotFoundError(f"Configuration file not found: {config_path}")

        values = cls._parse_config_file(config_file)
        logger.info(f"Loaded {len(values)} settings from {config_file}")
        return values

    @classmethod
    def _parse_config_file(cls, config_file: Path) -> Dict[str, Any]:
        """Parse a YAML or flat `key = value` file into a dictionary."""
        if config_file.suffix.lower() in cls.YAML_SUFFIXES:
            try:
                with open(config_file, "r", encoding="utf-8") as f:
                    config_data = yaml.safe_load(f)
            except yaml.YAMLError as e:
                raise ConfigurationError(f"Invalid YAML in configuration file: {e}") from e

            if not config_data:
                return {}
            if not isinstance(config_data, dict):
                raise ConfigurationError("YAML configuration must be a mapping of keys to values")
            return {str(key).replace("-", "_"): value for key, value in config_data.items()}

        return cls.parse_key_values(config_file.read_text(encoding="utf-8").splitlines())

    @classmethod
    def parse_key_values(cls, lines: Iterable[str]) -> Dict[str, Any]:
        """
        Parse `key = value` lines; `#` starts a comment, blank lines are skipped.

        Raises:
            ConfigurationError: If a line has no `=`
        """
        values: Dict[str, Any] = {}
        for number, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"Line {number}: expected 'key = value', got '{raw.strip()}'")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
        return values

    @classmethod
    def parse_overrides(cls, tokens: List[str]) -> Dict[str, Any]:
        """
        Turn `--key value` / `--key=value` tokens into a dictionary.

        A flag followed by another flag (or nothing) is read as `true`.

        Raises:
            ConfigurationError: If a token is not a flag where one is expected
        """
        overrides: Dict[str, Any] = {}
        index = 0
        while index < len(tokens):
            token = tokens[index]
            if not token.startswith("--"):
                raise ConfigurationError(f"Unexpected argument '{token}'; use --key value")
            key = token[2:]
            if "=" in key:
                key, value = key.split("=", 1)
                index += 1
            elif index + 1 < len(tokens) and not tokens[index + 1].startswith("--"):
                value = tokens[index + 1]
                index += 2
            else:
                value = "true"
                index += 1
            overrides[key.replace("-", "_")] = value
        return overrides

    @classmethod
    def _normalize(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        """Split comma lists and map empty or `none` strings to None."""
        normalized = {}
        for key, value in values.items():
            if isinstance(value, str):
                text = value.strip()
                if key in cls.LIST_KEYS:
                    value = [item.strip() for item in text.split(",") if item.strip()]
                    if not value and key == "stage_lambdas":
                        value = None
                elif text.lower() in cls.NULL_VALUES:
                    value = None
                elif key == "sep":
                    value = text.encode("utf-8").decode("unicode_escape") if "\\" in text else text
            normalized[key] = value
        return normalized

    @classmethod
    def merge_configs(
        cls,
        file_values: Dict[str, Any],
        cli_overrides: Dict[str, Any],
        seed_override: Optional[int] = None,
        defaults: Optional[Dict[str, Any]] = None,
        partial: bool = False,
    ) -> ExperimentConfig:
        """
        Merge file values with CLI overrides and validate.

        CLI overrides take precedence over file values; `seed_override`
        (MF_SEED) replaces the seed list with a single seed. `defaults` fill keys
        neither source sets; `partial` skips the method input-path checks.

        Raises:
            ConfigurationError: If a key is not a known setting
            pydantic.ValidationError: If a value is invalid
        """
        merged = {**(defaults or {}), **cls._normalize(file_values), **cls._normalize(cli_overrides)}

        unknown = sorted(set(merged) - set(ExperimentConfig.model_fields))
        if unknown:
            raise ConfigurationError(f"Unknown configuration keys: {', '.join(unknown)}")

        if seed_override is not None:
            merged["seeds"] = [seed_override]

        return ExperimentConfig.model_validate(merged, context={"partial": partial})

    @classmethod
    def resolve(
        cls,
        config_path: Optional[str],
        override_tokens: List[str],
        defaults: Optional[Dict[str, Any]] = None,
        partial: bool = False,
    ) -> ExperimentConfig:
        """File config first, then command-line overrides, then MF_SEED."""
        return cls.merge_configs(
            cls.load_config(config_path),
            cls.parse_overrides(override_tokens),
            seed_override=settings.seed,
            defaults=defaults,
            partial=partial,
        )
