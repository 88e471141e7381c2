import json
import math

import pytest

from cubicspin import cli


def run(argv, tmp_path):
    return cli.main(list(argv) + ["--out", str(tmp_path)])


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# manifest ")
    return lines[1].split(","), [l.split(",") for l in lines[2:]]


def test_sweep_outputs(tmp_path, capsys):
    assert run(["sweep", "--n", "200", "--t-max", "0.26", "--points", "50"], tmp_path) == 0
    header, rows = read_csv(tmp_path / "sweep.csv")
    assert header == ["t", "alpha", "qfi", "qfi_analytic"]
    assert len(rows) == 50 and float(rows[0][2]) == 200
    man = json.loads((tmp_path / "sweep.manifest.json").read_text())
    for key in ("command", "params", "seed", "version", "outputs", "wall_time_s"):
        assert key in man
    assert man["params"]["n"] == 200
    assert (tmp_path / "sweep.csv").read_text().splitlines()[0] == f"# manifest {man['manifest_hash']}"
    json.loads(capsys.readouterr().out)


def test_csv_uses_17_digits(tmp_path):
    run(["sweep", "--n", "10", "--points", "3", "--t-max", "0.1"], tmp_path)
    _, rows = read_csv(tmp_path / "sweep.csv")
    assert rows[1][0] == "%.17g" % 0.05


def test_deterministic_bytes(tmp_path, monkeypatch):
    a, b = tmp_path / "a", tmp_path / "b"
    argv = ["sweep", "--n", "60", "--points", "700"]
    run(argv, a)
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    run(argv, b)
    assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()


def test_parity_command(tmp_path, capsys):
    assert run(["parity", "--n", "201"], tmp_path) == 0
    assert json.loads(capsys.readouterr().out)["verdict"] == "odd"
    header, rows = read_csv(tmp_path / "parity.csv")
    assert header == ["m_x", "p", "count"]
    assert sum(int(r[2]) for r in rows) == 1000


def test_hybrid_command(tmp_path, capsys):
    assert run(["hybrid", "--n", "20"], tmp_path) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["epsilon_opt"] - 0.29) < 0.02 and abs(out["t_f"] - 0.65) < 0.02
    header, _ = read_csv(tmp_path / "hybrid.csv")
    assert header == ["N", "epsilon_opt", "t_f", "qfi_over_N2", "fidelity", "speedup"]


def test_damped_columns(tmp_path):
    assert run(["damped", "--n", "6", "--points", "5", "--t-max", "0.5"], tmp_path) == 0
    header, rows = read_csv(tmp_path / "damped.csv")
    assert header == ["t", "trace", "qfi", "n_x", "n_y", "n_z", "mean_sz"]
    assert len(rows) == 5


@pytest.mark.parametrize("argv, files", [
    (["peaks", "--n", "24", "--k-max", "2"], ["peaks.csv"]),
    (["cat", "--n", "40", "--cat-n", "4"], ["cat.csv", "cat_ghz.csv", "cat_husimi.csv"]),
    (["gates", "--deltas", "0.1", "0.05"], ["gates.csv"]),
    (["cavity"], ["cavity.csv"]),
])
def test_other_commands(tmp_path, argv, files):
    assert run(argv, tmp_path) == 0
    for f in files:
        read_csv(tmp_path / f)


def test_husimi_csv_columns(tmp_path):
    run(["cat", "--n", "20", "--cat-n", "3"], tmp_path)
    header, rows = read_csv(tmp_path / "cat_husimi.csv")
    assert header == ["theta", "phi", "q"]
    assert len(rows) == 65 * 128


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 30, "points": 7}))
    assert run(["sweep", "--config", str(cfg), "--points", "9"], tmp_path) == 0
    man = json.loads((tmp_path / "sweep.manifest.json").read_text())
    assert man["params"]["n"] == 30 and man["params"]["points"] == 9


def test_exit_codes(tmp_path, capsys):
    assert run(["damped", "--gamma", "-0.1"], tmp_path) == 2
    assert "rate must be >= 0" in capsys.readouterr().err
    assert cli.main(["bogus"]) == 64
    assert cli.main([]) == 64
    assert cli.main(["sweep", "--nope"]) == 64
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["sweep", "--config", str(bad)], tmp_path) == 65
    bad.write_text(json.dumps({"unknown_key": 1}))
    assert run(["sweep", "--config", str(bad)], tmp_path) == 65
    bad.write_text("[1, 2]")
    assert run(["sweep", "--config", str(bad)], tmp_path) == 65


def test_numeric_failure_exit(tmp_path, monkeypatch):
    from cubicspin.dicke import NumericalError

    def boom(cfg):
        raise NumericalError("trace drift")

    monkeypatch.setitem(cli.RUNNERS, "sweep", boom)
    assert run(["sweep", "--n", "4"], tmp_path) == 3


def test_validate_diagnostics():
    d = cli.validate("damped", {"gamma": -1.0})
    assert any(x.level == "error" and x.message == "rate must be >= 0" for x in d)
    d = cli.validate("parity", {"n": 20, "t": 0.5})
    assert [x.message for x in d if x.level == "warning"] == ["parity probe defined at t=pi/(3 chi)"]
    assert cli.validate("parity", {"n": 20, "t": math.pi / 3}) == []
    assert any(x.level == "error" for x in cli.validate("sweep", {"t_max": -1.0}))
    assert any(x.level == "error" for x in cli.validate("sweep", {"n": 0}))
    assert any(x.level == "error" for x in cli.validate("gates", {"n": 13}))


def test_validate_cavity_regime():
    # kappa0 * N = 0.5 with kappa0 = g^2 / (Delta kappa)
    cfg = {"n": 500, "g": 1.0, "kappa": 1.0 / (150.0 * 0.001), "delta": 150.0, "gamma_atom": 1.0}
    d = cli.validate("cavity", cfg)
    assert any(x.level == "warning" and "kappa0*N = 0.5" in x.message for x in d)
    cfg["n"] = 50
    assert not any("kappa0*N" in x.message for x in cli.validate("cavity", cfg))


def test_validate_does_not_mutate():
    cfg = {"gamma": -1.0}
    cli.validate("damped", cfg)
    assert cfg == {"gamma": -1.0}


def test_help_mentions_units(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    assert "chi = 1" in capsys.readouterr().out
    with pytest.raises(SystemExit):
        cli.main(["sweep", "--help"])
    assert "chi = 1" in capsys.readouterr().out
