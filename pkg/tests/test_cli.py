import json

import pytest

from conftest import scarce_instance
from paw.cli import main


def write(path, data):
    path.write_text(json.dumps(data))
    return path


@pytest.fixture
def scarce_file(tmp_path):
    return write(tmp_path / "scarce.json", scarce_instance().to_dict())


@pytest.fixture
def linear_curve(tmp_path):
    return write(tmp_path / "curve.json", {"breakpoints": [[0, 0], [1, 1]]})


def test_solve_exact(tmp_path, scarce_file, capsys):
    out = tmp_path / "sol.json"
    assert main(["solve", str(scarce_file), "-o", str(out)]) == 0
    assert json.loads(out.read_text())["waiting_times"] == ["0", "7"]
    report = json.loads((tmp_path / "sol.report.json").read_text())
    assert report["social_welfare"] == "3" and report["verified"]
    manifest = json.loads((tmp_path / "sol.manifest.json").read_text())
    assert manifest["command"] == "solve" and "wall_clock_seconds" in manifest
    assert "SW = 3" in capsys.readouterr().out


def test_solve_approx_csv(tmp_path, scarce_file):
    out = tmp_path / "sol.json"
    assert main(["solve", str(scarce_file), "--mode", "approx", "--epsilon", "1/2", "--format", "csv", "-o", str(out)]) == 0
    text = (tmp_path / "sol.report.csv").read_text()
    assert text.startswith("field,value\n")
    assert "budget_factor,3/2" in text


def test_strict_budget(tmp_path, scarce_file):
    out = tmp_path / "sol.json"
    assert main(["solve", str(scarce_file), "--mode", "approx", "--epsilon", "0.5", "--strict-budget", "-o", str(out)]) == 0
    assert json.loads((tmp_path / "sol.report.json").read_text())["total_cost"] <= 6000


def test_exit_codes(tmp_path, scarce_file, monkeypatch):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", str(bad), "-o", str(tmp_path / "x.json")]) == 2
    assert main(["solve", str(tmp_path / "missing.json"), "-o", str(tmp_path / "x.json")]) == 2
    assert main(["solve", str(scarce_file), "--mode", "approx", "-o", str(tmp_path / "x.json")]) == 2
    monkeypatch.setenv("PAW_EXACT_CAP", "1")
    assert main(["solve", str(scarce_file), "-o", str(tmp_path / "x.json")]) == 3
    assert main(["solve", str(scarce_file), "--cap", "100", "-o", str(tmp_path / "x.json")]) == 0


def test_simulate(tmp_path, scarce_file, capsys):
    out = tmp_path / "trace.csv"
    assert main(["simulate", str(scarce_file), "--quotas", "2,1", "-o", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "t,w_1,w_2,d_1,d_2,potential"
    summary = json.loads((tmp_path / "trace.summary.json").read_text())
    assert summary["w_bar"] == ["0", "7"]
    assert summary["within_bound"]
    assert all(c["passed"] for c in summary["checks"].values())
    assert summary["independent"] is False and "warning" in summary


def test_simulate_no_convergence(tmp_path, scarce_file):
    out = tmp_path / "trace.csv"
    assert main(["simulate", str(scarce_file), "--quotas", "2,1", "--t-max", "1", "-o", str(out)]) == 4


def test_simulate_bad_quotas(tmp_path, scarce_file):
    assert main(["simulate", str(scarce_file), "--quotas", "1,1", "-o", str(tmp_path / "t.csv")]) == 2


def test_lottery_equilibrium(tmp_path, linear_curve, capsys):
    out = tmp_path / "lot.json"
    assert main(["lottery", "--curve", str(linear_curve), "--equilibrium", "0.5", "-o", str(out)]) == 0
    data = json.loads(out.read_text())
    assert (data["sw_r"], data["sw_l"], data["realized_budget"]) == ("1/4", "1/8", "1/2")
    assert data["dominance"] == "holds"


def test_lottery_menu_and_randomized(tmp_path, linear_curve):
    menu = write(tmp_path / "menu.json", {"contracts": [{"p": "1/2", "w": 0}]})
    out = tmp_path / "lot.json"
    assert main(["lottery", "--curve", str(linear_curve), "--menu", str(menu), "-o", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["sw_r"] == data["sw_l"] == "1/4"
    assert main(["lottery", "--curve", str(linear_curve), "--randomized", "2", "-o", str(out)]) == 2


def test_gen_knapsack_from_file(tmp_path):
    kp = write(tmp_path / "kp.json", {"items": [{"value": 6, "cost": 4}, {"value": 5, "cost": 3}, {"value": 5, "cost": 3}], "budget": 6})
    inst = tmp_path / "inst.json"
    assert main(["gen", "knapsack", "--from", str(kp), "-o", str(inst)]) == 0
    sol = tmp_path / "sol.json"
    assert main(["solve", str(inst), "-o", str(sol)]) == 0
    assert json.loads((tmp_path / "sol.report.json").read_text())["social_welfare"] == "10"


@pytest.mark.parametrize("kind", ["lottery", "oracle", "approx"])
def test_sweep(tmp_path, kind):
    out = tmp_path / "sweep.json"
    assert main(["sweep", kind, "--count", "15", "-o", str(out)]) == 0
    assert json.loads(out.read_text())["failures"] == 0


def run_twice(tmp_path, argv_for):
    """Run a command in two directories; return both sets of output bytes."""
    results = []
    for name in ("a", "b"):
        d = tmp_path / name
        d.mkdir()
        argv = argv_for(d)
        assert main(argv) == 0
        files = {}
        for p in sorted(d.iterdir()):
            if p.name.endswith(".manifest.json"):
                data = json.loads(p.read_text())
                data.pop("wall_clock_seconds")
                data["inputs"] = [i["sha256"] for i in data["inputs"]]
                data["outputs"] = [o.rsplit("/", 1)[-1] for o in data["outputs"]]
                files[p.name] = json.dumps(data, sort_keys=True).encode()
            else:
                files[p.name] = p.read_bytes()
        results.append(files)
    return results


COMMANDS = {
    "gen-random": lambda d: ["gen", "random", "--k", "3", "--m", "5", "--seed", "7", "-o", str(d / "i.json")],
    "gen-independent": lambda d: ["gen", "independent", "--k", "2", "--m", "3", "--seed", "7", "-o", str(d / "i.json")],
    "gen-knapsack": lambda d: ["gen", "knapsack", "--items", "6", "--seed", "7", "-o", str(d / "i.json")],
    "sweep-lottery": lambda d: ["sweep", "lottery", "--count", "10", "--seed", "3", "-o", str(d / "s.json")],
    "sweep-approx-csv": lambda d: ["sweep", "approx", "--count", "10", "--format", "csv", "-o", str(d / "s.csv")],
}


@pytest.mark.parametrize("name", sorted(COMMANDS))
def test_determinism_generated(tmp_path, name):
    first, second = run_twice(tmp_path, COMMANDS[name])
    assert first == second


@pytest.mark.parametrize(
    "extra",
    [
        ["solve", "{inst}"],
        ["solve", "{inst}", "--mode", "approx", "--epsilon", "1"],
        ["simulate", "{inst}", "--quotas", "2,1", "--split", "random", "--seed", "4"],
        ["lottery", "--curve", "{curve}", "--equilibrium", "1/3", "--format", "csv"],
    ],
)
def test_determinism_on_inputs(tmp_path, scarce_file, linear_curve, extra):
    def argv(d):
        filled = [x.format(inst=scarce_file, curve=linear_curve) for x in extra]
        return filled + ["-o", str(d / ("out.csv" if extra[0] == "simulate" else "out.json"))]

    first, second = run_twice(tmp_path, argv)
    assert first == second


def test_gen_knapsack_two_items(tmp_path):
    kp = write(tmp_path / "kp.json", {"items": [{"value": 6, "cost": 3}, {"value": 5, "cost": 3}], "budget": 3})
    inst = tmp_path / "inst.json"
    assert main(["gen", "knapsack", "--from", str(kp), "-o", str(inst)]) == 0
    assert main(["solve", str(inst), "-o", str(tmp_path / "sol.json")]) == 0
    assert json.loads((tmp_path / "sol.report.json").read_text())["social_welfare"] == "6"


def test_no_scarcity_converges_at_zero(tmp_path):
    inst = write(tmp_path / "i.json", {
        "hospitals": [{"cost": 1}, {"cost": 2}],
        "patients": [{"values": [3, 5]}, {"values": [4, 1]}],
        "budget": 3,
    })
    out = tmp_path / "t.csv"
    assert main(["simulate", str(inst), "--quotas", "2,2", "-o", str(out)]) == 0
    assert json.loads((tmp_path / "t.summary.json").read_text())["converged_at"] == 0
