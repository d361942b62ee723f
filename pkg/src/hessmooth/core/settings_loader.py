"""
Settings loader for overriding solver tolerances from external files.
"""

import json
from copy import deepcopy
from pathlib import Path
from typing import Any, Dict, Optional

import jsonschema

# Try to import yaml, but don't fail if not available
try:
    import yaml
    YAML_AVAILABLE = True
except ImportError:
    yaml = None
    YAML_AVAILABLE = False

from ..settings import DEFAULT_SETTINGS


def _positive(maximum: Optional[float] = None) -> Dict[str, Any]:
    schema = {"type": "number", "exclusiveMinimum": 0}
    if maximum is not None:
        schema["maximum"] = maximum
    return schema


def _count(minimum: int = 1) -> Dict[str, Any]:
    return {"type": "integer", "minimum": minimum}


class Settings(dict):
    """Merged settings with dotted-key access, e.g. ``settings.value("admm.rel_tol")``."""

    def value(self, dotted_key: str) -> Any:
        node: Any = self
        for part in dotted_key.split("."):
            if not isinstance(node, dict) or part not in node:
                raise KeyError(f"Unknown setting: {dotted_key}")
            node = node[part]
        return node

    def section(self, name: str) -> Dict[str, Any]:
        return dict(self[name])


class SettingsLoader:
    """Loads and validates solver settings from JSON or YAML files."""

    SETTINGS_SCHEMA = {
        "$schema": "http://json-schema.org/draft-07/schema#",
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "tolerances": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "psd": _positive(1e-2),
                    "solve": _positive(1e-2),
                    "eig": _positive(1e-2),
                    "rank": _positive(1e-2),
                    "degenerate_area": _positive(1e-2),
                },
            },
            "solve": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "max_refinement": _count(0),
                    "shift": _positive(1.0),
                },
            },
            "eigen": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "dense_limit": _count(0),
                    "max_iterations": _count(),
                    "seed": _count(0),
                },
            },
            "admm": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "rel_tol": _positive(1e-1),
                    "abs_tol": {"type": "number", "minimum": 0},
                    "max_iterations": _count(),
                    "auto_rho": {"type": "boolean"},
                    "rho_period": _count(),
                    "rho_mu": {"type": "number", "exclusiveMinimum": 1},
                    "rho_tau": {"type": "number", "exclusiveMinimum": 1},
                },
            },
            "output": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "heatmap_range": {
                        "oneOf": [
                            {"type": "null"},
                            {
                                "type": "array",
                                "items": {"type": "number"},
                                "minItems": 2,
                                "maxItems": 2,
                            },
                        ]
                    },
                },
            },
        },
    }

    def detect_format(self, filepath: str) -> str:
        """Detect file format from extension."""
        ext = Path(filepath).suffix.lower()
        if ext == '.json':
            return 'json'
        elif ext in ['.yaml', '.yml']:
            return 'yaml'
        else:
            raise ValueError(f"Unsupported settings file format: {ext}")

    def load_settings(self, filepath: Optional[str] = None) -> Settings:
        """
        Load settings from file or return defaults.

        Args:
            filepath: Path to settings file (JSON or YAML)

        Returns:
            Merged settings
        """
        if filepath is None:
            return Settings(deepcopy(DEFAULT_SETTINGS))

        if not Path(filepath).exists():
            raise FileNotFoundError(f"Settings file not found: {filepath}")

        format_type = self.detect_format(filepath)

        try:
            with open(filepath, 'r', encoding='utf-8') as f:
                if format_type == 'json':
                    custom = json.load(f)
                else:  # yaml
                    if not YAML_AVAILABLE:
                        raise ImportError("PyYAML is required for YAML settings. Install with: pip install PyYAML")
                    custom = yaml.safe_load(f)
        except Exception as e:
            raise ValueError(f"Error loading settings file: {e}")

        # An empty YAML document means "no overrides"
        if custom is None:
            custom = {}

        self.validate_settings(custom)
        return self.merge_with_defaults(custom)

    def validate_settings(self, settings: Dict[str, Any]) -> None:
        """
        Validate settings against schema.

        Raises:
            ValueError: If validation fails, naming the offending key
        """
        try:
            jsonschema.validate(instance=settings, schema=self.SETTINGS_SCHEMA)
        except jsonschema.ValidationError as e:
            where = ".".join(str(p) for p in e.absolute_path) or "<root>"
            raise ValueError(f"Invalid settings at {where}: {e.message}")

    def merge_with_defaults(self, custom: Dict[str, Any]) -> Settings:
        """Merge custom settings over the defaults; missing keys keep their default."""
        merged = deepcopy(DEFAULT_SETTINGS)
        self._deep_update(merged, custom)
        return Settings(merged)

    def _deep_update(self, base: Dict[str, Any], update: Dict[str, Any]) -> None:
        """Recursively update base dictionary with update dictionary."""
        for key, value in update.items():
            if isinstance(value, dict) and key in base and isinstance(base[key], dict):
                self._deep_update(base[key], value)
            else:
                base[key] = value
