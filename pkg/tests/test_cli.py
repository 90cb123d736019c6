import json

from app.core.config import settings
from app.lab.cli import COMMANDS, build_parser, main


def test_every_command_is_registered():
    from app.lab.bootstrap import get_registry

    registry = get_registry()
    for command, (name, _, _) in COMMANDS.items():
        assert registry.get(name).metadata.name == name


def test_verify_coupling_passes(tmp_path, capsys, restore_settings):
    code = main(["--out", str(tmp_path), "--json", "verify-coupling", "--q", "5", "--samples", "32"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["status"] == "ok"
    assert payload["data"]["period"] == 15
    run_dir = payload["metadata"]["run_dir"]
    assert run_dir.startswith(str(tmp_path))
    assert (tmp_path / run_dir.split("/")[-1] / "report.json").exists()


def test_pendulum_sweep_writes_csv(tmp_path, restore_settings):
    code = main(["--out", str(tmp_path), "pendulum", "--q", "64", "--N", "2", "--sweep", "--points", "3"])
    assert code == 0
    sweeps = list(tmp_path.glob("pendulum-sweep-*/sweep.csv"))
    assert len(sweeps) == 1
    assert 2 <= len(sweeps[0].read_text().strip().splitlines()) <= 4
    assert list(tmp_path.glob("pendulum-sweep-*/constants.json"))


def test_bad_config_exits_with_usage_code(tmp_path, capsys, restore_settings):
    path = tmp_path / "bad.toml"
    path.write_text("[pendulum]\ndelta = -1\n")
    assert main(["--config", str(path), "verify-wandering"]) == 2
    assert "pendulum.delta" in capsys.readouterr().out


def test_parse_errors_return_their_code():
    assert main(["no-such-command"]) == 2
    assert main(["pendulum", "--q", "many"]) == 2


def test_seed_override(tmp_path, restore_settings):
    assert main(["--out", str(tmp_path), "--seed", "5", "verify-periodic", "--p", "5", "--samples", "16"]) == 0
    assert settings.lab.seed == 5


def test_parser_keeps_unset_options_out():
    args = build_parser().parse_args(["suspend", "--eps", "0.001"])
    assert args.eps == 0.001
    assert args.dump is None
