import pytest

from app.core.config import Settings, apply_settings, load_settings, settings
from app.core.errors import ConfigError


def test_defaults():
    loaded = load_settings()
    assert loaded.potential.rho0 == 2.5
    assert loaded.potential.L0 == 0.2
    assert loaded.pendulum.delta == 0.18
    assert loaded.bumps.alpha == 2.0
    assert loaded.assembly.p0 == 2
    assert loaded.lab.boundary_samples == 256
    assert loaded.lab.disjoint_factor == 10.0
    assert loaded.assembly.island_shrink_factor == 0.8
    assert loaded.database_url.startswith("sqlite:///")


def test_toml_file_is_read(tmp_path):
    path = tmp_path / "lab.toml"
    path.write_text("[pendulum]\ndelta = 0.1\n\n[lab]\nseed = 7\n")
    loaded = load_settings(path)
    assert loaded.pendulum.delta == 0.1
    assert loaded.lab.seed == 7
    assert loaded.bumps.alpha == 2.0


def test_invalid_value_names_the_key(tmp_path):
    path = tmp_path / "lab.toml"
    path.write_text("[pendulum]\ndelta = -1\n")
    with pytest.raises(ConfigError) as excinfo:
        load_settings(path)
    assert excinfo.value.key == "pendulum.delta"
    assert excinfo.value.exit_code == 2


def test_shallow_plateau_is_rejected(tmp_path):
    path = tmp_path / "lab.toml"
    path.write_text("[potential]\nrho0 = 0.45\n")
    with pytest.raises(ConfigError) as excinfo:
        load_settings(path)
    assert excinfo.value.key == "potential.rho0"


def test_unknown_keys_are_rejected(tmp_path):
    path = tmp_path / "lab.toml"
    path.write_text("[pendullum]\ndelta = 0.1\n")
    with pytest.raises(ConfigError) as excinfo:
        load_settings(path)
    assert excinfo.value.key == "pendullum"

    path.write_text("[bumps]\nbeta = 3\n")
    with pytest.raises(ConfigError) as excinfo:
        load_settings(path)
    assert excinfo.value.key == "bumps.beta"


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_settings(tmp_path / "absent.toml")
    broken = tmp_path / "broken.toml"
    broken.write_text("[lab\nseed = 1\n")
    with pytest.raises(ConfigError):
        load_settings(broken)


def test_overrides_and_apply(restore_settings):
    loaded = load_settings(lab={"seed": 99})
    assert loaded.lab.seed == 99
    shared = apply_settings(loaded)
    assert shared is settings
    assert settings.lab.seed == 99
    apply_settings(Settings())
    assert settings.lab.seed == 20240601
