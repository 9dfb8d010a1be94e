import json

import pytest

from rcdynamics import cli


def write_cfg(path, **kw):
    path.write_text(json.dumps(kw))
    return path


def read_outputs(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if not p.name.startswith("manifest-")}


def test_exact_single_edge(tmp_path, monkeypatch):
    monkeypatch.delenv(cli.OUT_ENV, raising=False)
    cfg = write_cfg(tmp_path / "c.json", p=0.5, q=2.0)
    out = tmp_path / "out"
    assert cli.main(["exact", "--config", str(cfg), "--out", str(out)]) == cli.EXIT_OK
    res = json.loads(next(out.glob("exact-*[0-9a-f].json")).read_text())
    assert res["mu_open"] == pytest.approx(1 / 3)
    assert res["gap"] == pytest.approx(1.0)
    assert next(out.glob("manifest-*.json"))


@pytest.mark.parametrize("bad", [{"p": 1.5}, {"q": 0.5}, {"bogus": 1}, {"n": 2}, {"replicas": 0}])
def test_invalid_config_exits_one(tmp_path, bad):
    cfg = write_cfg(tmp_path / "c.json", **bad)
    sub = "simulate"
    assert cli.main([sub, "--config", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG


def test_unreadable_config_exits_one(tmp_path):
    (tmp_path / "c.json").write_text("[1, 2]")
    assert cli.main(["exact", "--config", str(tmp_path / "c.json")]) == cli.EXIT_CONFIG
    assert cli.main(["exact", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG


def test_cap_exceeded_exits_three(tmp_path, monkeypatch):
    monkeypatch.delenv(cli.OUT_ENV, raising=False)
    cfg = write_cfg(tmp_path / "c.json", graph="grid", size=[4, 4])
    assert cli.main(["exact", "--config", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_CAP


def test_reruns_are_identical(tmp_path, monkeypatch):
    monkeypatch.delenv(cli.OUT_ENV, raising=False)
    cfg = write_cfg(tmp_path / "c.json", n=4, horizon=5.0, replicas=5)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(a)]) == 0
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(b)]) == 0
    assert read_outputs(a) == read_outputs(b)
    cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "c"), "--seed", "9"])
    assert read_outputs(a) != read_outputs(tmp_path / "c")


def test_env_overrides_out(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["exact", "--out", str(tmp_path / "flag")]) == 0
    assert any((tmp_path / "env").iterdir()) and not (tmp_path / "flag").exists()


def test_print_defaults(capsys):
    assert cli.main(["mixing", "--print-defaults", "--seed", "4"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["seed"] == 4 and cfg["epsilons"] == [0.25, 0.5, 0.75]


def test_help_lists_columns(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for col in ("open_edges", "t_mix", "lambda_hat", "z_score", "red,blue,green"):
        assert col in text


def test_selftest_passes(tmp_path, monkeypatch):
    monkeypatch.delenv(cli.OUT_ENV, raising=False)
    out = tmp_path / "o"
    assert cli.main(["selftest", "--out", str(out)]) == cli.EXIT_OK
    res = json.loads(next(out.glob("selftest-*.json")).read_text())
    assert res


def test_violation_exit_code(tmp_path, monkeypatch):
    monkeypatch.setitem(cli.RUNNERS, "selftest", lambda cfg, out, tag, threads: ([], {"fake": 1}))
    code, manifest = cli.run("selftest", cli.resolve_config("selftest", {}), tmp_path)
    assert code == cli.EXIT_VIOLATION and manifest["exit_code"] == 2


@pytest.mark.parametrize("sub", ["percolations", "infoperc", "mixing", "gap"])
def test_subcommands_run(tmp_path, monkeypatch, sub):
    monkeypatch.delenv(cli.OUT_ENV, raising=False)
    small = {"percolations": {"n": 4, "windows": 2, "replicas": 5},
             "infoperc": {"n": 4, "m": 4, "m_list": [2, 3], "replicas": 5, "particles": 50},
             "mixing": {"n_list": [4, 6], "replicas": 30},
             "gap": {"r_list": [4, 5], "replicas": 2, "t_obs": 40.0}}[sub]
    cfg = write_cfg(tmp_path / "c.json", **small)
    assert cli.main([sub, "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    files = [p.name for p in (tmp_path / "o").iterdir()]
    assert any(f.startswith(sub + "-") for f in files)
