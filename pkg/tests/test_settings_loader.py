"""
Tests for settings_loader module.
"""

import pytest
import json
import yaml
import tempfile
import os
import sys

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from hessmooth.core.settings_loader import SettingsLoader
from hessmooth.settings import DEFAULT_SETTINGS


@pytest.fixture
def custom_settings():
    """Custom solver settings for testing."""
    return {
        "tolerances": {"solve": 1e-12},
        "admm": {
            "rel_tol": 1e-8,
            "auto_rho": False,
        },
    }


def test_load_default_settings():
    """Test loading default settings when no file provided."""
    loader = SettingsLoader()
    settings = loader.load_settings()

    assert settings == DEFAULT_SETTINGS
    assert settings.value("tolerances.psd") == 1e-10
    assert settings.value("admm.max_iterations") == 5000


def test_defaults_are_not_shared():
    """Mutating loaded settings must not touch the module defaults."""
    settings = SettingsLoader().load_settings()
    settings["eigen"]["seed"] = 42
    assert DEFAULT_SETTINGS["eigen"]["seed"] == 0


def test_load_json_settings(custom_settings):
    """Test loading settings from JSON file."""
    loader = SettingsLoader()

    with tempfile.NamedTemporaryFile(mode='w', suffix='.json', delete=False) as f:
        json.dump(custom_settings, f)
        settings_file = f.name

    try:
        settings = loader.load_settings(settings_file)

        # Custom values override defaults
        assert settings.value("tolerances.solve") == 1e-12
        assert settings.value("admm.rel_tol") == 1e-8
        assert settings.value("admm.auto_rho") is False

        # Default values still present
        assert settings.value("tolerances.eig") == 1e-8
        assert settings.value("admm.rho_period") == 10

    finally:
        os.unlink(settings_file)


def test_load_yaml_settings(custom_settings):
    """Test loading settings from YAML file."""
    loader = SettingsLoader()

    with tempfile.NamedTemporaryFile(mode='w', suffix='.yaml', delete=False) as f:
        yaml.dump(custom_settings, f)
        settings_file = f.name

    try:
        settings = loader.load_settings(settings_file)
        assert settings.value("tolerances.solve") == 1e-12
        assert settings.section("eigen") == DEFAULT_SETTINGS["eigen"]
    finally:
        os.unlink(settings_file)


def test_empty_yaml_means_defaults(tmp_path):
    settings_file = tmp_path / "empty.yml"
    settings_file.write_text("")
    assert SettingsLoader().load_settings(str(settings_file)) == DEFAULT_SETTINGS


def test_settings_validation():
    """Test settings validation."""
    loader = SettingsLoader()

    loader.validate_settings({"eigen": {"dense_limit": 10}})  # Should not raise

    with pytest.raises(ValueError, match="tolerances.solve"):
        loader.validate_settings({"tolerances": {"solve": -1.0}})

    with pytest.raises(ValueError):
        loader.validate_settings({"admm": {"max_iterations": "many"}})

    with pytest.raises(ValueError):
        loader.validate_settings({"unknown": {}})


def test_heatmap_range_validation():
    loader = SettingsLoader()
    loader.validate_settings({"output": {"heatmap_range": [0.0, 1.0]}})
    with pytest.raises(ValueError):
        loader.validate_settings({"output": {"heatmap_range": [0.0]}})


def test_merge_with_defaults():
    """Test merging partial settings with defaults."""
    loader = SettingsLoader()

    merged = loader.merge_with_defaults({"admm": {"rho_tau": 3.0}})

    assert merged.value("admm.rho_tau") == 3.0
    assert merged.value("admm.rho_mu") == DEFAULT_SETTINGS["admm"]["rho_mu"]
    assert merged.value("solve.max_refinement") == 10


def test_unknown_dotted_key():
    with pytest.raises(KeyError):
        SettingsLoader().load_settings().value("admm.nope")


def test_unsupported_extension(tmp_path):
    settings_file = tmp_path / "settings.ini"
    settings_file.write_text("[admm]")
    with pytest.raises(ValueError):
        SettingsLoader().load_settings(str(settings_file))


def test_file_not_found():
    """Test handling of non-existent settings file."""
    with pytest.raises(FileNotFoundError):
        SettingsLoader().load_settings("non_existent_settings.json")


def test_invalid_json_settings():
    """Test handling of invalid JSON in settings file."""
    loader = SettingsLoader()

    with tempfile.NamedTemporaryFile(mode='w', suffix='.json', delete=False) as f:
        f.write("{ invalid json }")
        settings_file = f.name

    try:
        with pytest.raises(ValueError):
            loader.load_settings(settings_file)
    finally:
        os.unlink(settings_file)


def test_sample_settings_file():
    sample = os.path.join(os.path.dirname(__file__), '..', 'samples', 'strict_admm.yaml')
    settings = SettingsLoader().load_settings(sample)
    assert settings.value("admm.max_iterations") == 20000
    assert settings.value("admm.rho_mu") == DEFAULT_SETTINGS["admm"]["rho_mu"]
