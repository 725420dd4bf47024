import json

import pytest

from itoconc.cli import main

SMALL = ["--paths", "400", "--steps", "64", "--n-points", "6"]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_bound_examples(capsys):
    code, out, _ = run(capsys, "bound", "alpha0", "--sigma", "1", "--c", "1", "--x", "0", "--json")
    vals = json.loads(out)["values"][0]
    assert code == 0 and vals["raw"] == 2.0 and vals["clamped"] == 1.0
    code, out, _ = run(capsys, "bound", "classical", "--m", "1", "--x", "1.4142135", "--json")
    assert json.loads(out)["values"][0]["raw"] == pytest.approx(0.36787944, rel=1e-6)
    code, out, _ = run(capsys, "bound", "cir", "--a", "2", "--b", "1", "--sigma", "1", "--x0", "1",
                       "--T", "1", "--x", "5", "--json")
    assert json.loads(out)["values"][0]["raw"] == pytest.approx(0.5589253996876953, rel=1e-12)


@pytest.mark.parametrize("argv", [
    ["explicit-lt1", "--sigma", "1", "--c", "1", "--alpha", "0.5"],
    ["explicit-eq1", "--sigma", "1", "--c", "1"],
    ["explicit-neg", "--sigma", "1", "--c", "0.5", "--alpha", "-1"],
    ["gaussian-functional", "--sigma", "1", "--c", "1"],
    ["double-integral", "--g-norm", "1"],
])
def test_bound_families_table(capsys, argv):
    code, out, _ = run(capsys, "bound", *argv, "--x", "0,1,2")
    assert code == 0 and len(out.strip().splitlines()) == 4


def test_bound_errors(capsys):
    assert run(capsys, "bound", "alpha0", "--sigma", "-1", "--c", "1")[0] == 2
    assert run(capsys, "bound", "alpha0", "--sigma", "1")[0] == 2
    assert run(capsys, "bound", "cir", "--a", "0.1", "--b", "1", "--sigma", "1", "--x0", "1")[0] == 2
    assert run(capsys, "bound", "explicit-lt1", "--sigma", "1", "--c", "1", "--alpha", "1")[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["bound", "nope"])
    assert exc.value.code == 2


def test_vsolve(capsys):
    code, out, _ = run(capsys, "vsolve", "--sigma", "1", "--c", "1", "--x", "0,2", "--json")
    rows = json.loads(out)
    assert code == 0 and rows[0]["v"] == 1.0 and rows[1]["v"] == pytest.approx(4.0)
    for alpha in ("0", "0.5", "1"):
        code, out, _ = run(capsys, "vsolve", "--sigma", "1.3", "--c", "0.7", "--alpha", alpha,
                           "--x", "0,0.1,5,1e4", "--json", "--bisect")
        assert all(r["residual"] < 1e-10 * max(1.0, r["x"]) for r in json.loads(out))


def test_verify_writes_reports(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "classical-constant", *SMALL, "--out", str(tmp_path))
    assert code == 0 and "PASS" in out
    rep = json.loads((tmp_path / "classical-constant.json").read_text())
    assert rep["passed"] and rep["provenance"]["sigma_source"] == "closed-form"
    assert (tmp_path / "classical-constant.csv").read_text().startswith("scenario,x,n,k")


def test_verify_fail_exit_code(capsys, tmp_path, monkeypatch):
    # certify size-1 samples against the classical bound for size 0.3, which they violate
    from itoconc import bounds, scenarios

    original = scenarios.ClassicalConstant.setup

    def too_tight(self, cfg, params, sim):
        setup = original(self, cfg, params, sim)
        setup.evaluate = lambda x: bounds.eval_gaussian_tail(x, 0.3)
        return setup
    monkeypatch.setattr(scenarios.ClassicalConstant, "setup", too_tight)
    code, out, _ = run(capsys, "verify", "classical-constant", *SMALL, "--out", str(tmp_path))
    rep = json.loads((tmp_path / "classical-constant.json").read_text())
    assert code == 1 and not rep["passed"] and "FAIL" in out


def test_verify_structured_and_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("ITOCONC_OUT_DIR", str(tmp_path / "env"))
    code, out, _ = run(capsys, "verify", "gaussian-quadratic", "--paths", "2000", "--format", "structured")
    assert code == 0 and json.loads(out)["scenario"] == "gaussian-quadratic"
    assert (tmp_path / "env" / "gaussian-quadratic.json").exists()


def test_verify_config_file_and_flag_precedence(capsys, tmp_path):
    ini = tmp_path / "cir.ini"
    code, _, _ = run(capsys, "verify", "cir", *SMALL, "--a", "3", "--out", str(tmp_path / "a"),
                     "--write-config", str(ini))
    assert code == 0 and "a = 3.0" in ini.read_text()
    code, _, _ = run(capsys, "verify", "--config", str(ini), "--out", str(tmp_path / "b"))
    a = json.loads((tmp_path / "a" / "cir.json").read_text())
    b = json.loads((tmp_path / "b" / "cir.json").read_text())
    a.pop("timing"), b.pop("timing")
    assert a == b
    run(capsys, "verify", "--config", str(ini), "--paths", "300", "--out", str(tmp_path / "c"))
    c = json.loads((tmp_path / "c" / "cir.json").read_text())
    assert c["rows"][0]["n"] == 300 and c["params"]["a"] == 3.0


@pytest.mark.parametrize("argv", [
    ["verify"], ["verify", "nope"], ["verify", "cir", "--M", "2"], ["verify", "cir", "--a", "0.1"],
    ["verify", "classical-constant", "--confidence", "2"], ["verify", "cir", "--config", "/nonexistent.ini"],
    ["verify", "classical-constant", "--x-grid", "1,abc"],
    ["verify", "gaussian-quadratic", "--matrix", "1 2; 3 4"],
])
def test_verify_usage_errors(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_runtime_error_exit_code(capsys, tmp_path, monkeypatch):
    from itoconc import scenarios
    from itoconc.errors import SimulationFailure

    def boom(*a, **k):
        raise SimulationFailure("non-finite value on path 3", 3)
    monkeypatch.setattr(scenarios.ClassicalConstant, "simulate", boom)
    code, _, err = run(capsys, "verify", "classical-constant", *SMALL, "--out", str(tmp_path))
    assert code == 3 and "[simulate]" in err and "path 3" in err


def test_simulate_and_scenarios(capsys, tmp_path):
    code, out, _ = run(capsys, "simulate", "running-max-square", *SMALL, "--out", str(tmp_path))
    lines = (tmp_path / "running-max-square-samples.csv").read_text().splitlines()
    assert code == 0 and lines[0] == "path,sup" and len(lines) == 401
    code, out, _ = run(capsys, "scenarios")
    assert code == 0 and len(out.strip().splitlines()) == 7


def test_workers_do_not_change_reports(capsys, tmp_path):
    outs = []
    for w in ("1", "3"):
        run(capsys, "verify", "double-wiener", *SMALL, "--workers", w, "--out", str(tmp_path / w))
        d = json.loads((tmp_path / w / "double-wiener.json").read_text())
        d.pop("timing")
        outs.append(d)
    assert outs[0] == outs[1]
