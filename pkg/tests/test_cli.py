import copy
import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from thermostrobe.cli import main

QUBIT_BASE = {
    "name": "mini",
    "model": {"kind": "qubit", "omega0": 1.0, "gamma": 0.5, "beta0": 1.0, "Omega": 0.2},
    "ansatz": {"kind": "gibbs-canonical"},
    "protocols": ["discrete", "ode2"],
    "strob": {"dt": 0.1, "horizon": 0.5},
    "initial": {"E": [0.5]},
    "output": {"emit_beta": True},
}

MULTILEVEL_BASE = {
    "name": "ml",
    "model": {
        "kind": "multilevel",
        "omegas": [0.0, 1.0, 2.0],
        "base_rates": [[0.0, 1.0, 1.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]],
        "beta0": 1.0,
    },
    "ansatz": {"kind": "gibbs-canonical"},
    "protocols": ["ode-temperature"],
    "strob": {"dt": 0.1, "horizon": 0.5},
    "initial": {"beta_probe": 0.5},
    "output": {"emit_beta": True},
}


def scenario_file(tmp_path, scenario, fname="scenario.yaml"):
    path = tmp_path / fname
    path.write_text(yaml.safe_dump(scenario), encoding="utf-8")
    return str(path)


def variant(base, **sections):
    out = copy.deepcopy(base)
    out.update(sections)
    return out


# ---------------------------------------------------------------------------
# simulate


def test_simulate_writes_outputs(tmp_path):
    path = scenario_file(tmp_path, QUBIT_BASE)
    out = tmp_path / "out"
    assert main(["simulate", path, "--out-dir", str(out)]) == 0
    summary = json.loads((out / "mini_summary.json").read_text())
    assert summary["name"] == "mini"
    assert summary["model"] == "qubit"
    assert summary["ansatz"] == "gibbs-canonical"
    assert summary["protocols"] == ["discrete", "ode2"]
    assert summary["initial_E"] == [0.5]
    assert summary["files_discrete"] == "mini_discrete.csv"
    assert len(summary["stationary_ode2"]) == 1
    assert summary["diagnostics"]["deviation_discrete_vs_ode2"] < 1e-3
    lines = (out / "mini_discrete.csv").read_text().splitlines()
    assert lines[0] == "t,E_1,beta_1"
    assert len(lines) == 7  # header + 6 grid points
    assert float(lines[1].split(",")[1]) == 0.5


def test_simulate_is_byte_deterministic(tmp_path):
    path = scenario_file(tmp_path, QUBIT_BASE)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", path, "--out-dir", str(out1)]) == 0
    assert main(["simulate", path, "--out-dir", str(out2)]) == 0
    for f in sorted(p.name for p in out1.iterdir()):
        assert (out1 / f).read_bytes() == (out2 / f).read_bytes()


def test_simulate_closed_form_protocol(tmp_path):
    sc = variant(QUBIT_BASE, protocols=["closed-form"])
    sc["model"]["Omega"] = 0.0
    path = scenario_file(tmp_path, sc)
    out = tmp_path / "out"
    assert main(["simulate", path, "--out-dir", str(out)]) == 0
    summary = json.loads((out / "mini_summary.json").read_text())
    assert "stationary_beta_closed-form" in summary
    lines = (out / "mini_closed-form.csv").read_text().splitlines()
    assert lines[0] == "t,E_1,beta_1"


def test_simulate_initial_rho(tmp_path):
    sc = variant(QUBIT_BASE, initial={"rho": [[0.4, 0.0], [0.0, 0.6]]})
    path = scenario_file(tmp_path, sc)
    out = tmp_path / "out"
    assert main(["simulate", path, "--out-dir", str(out)]) == 0
    summary = json.loads((out / "mini_summary.json").read_text())
    assert summary["initial_E"] == pytest.approx([0.4])


def test_simulate_checks_section(tmp_path):
    sc = variant(QUBIT_BASE, checks={"generic_vs_analytic": True, "fd_mode": True})
    path = scenario_file(tmp_path, sc)
    out = tmp_path / "out"
    assert main(["simulate", path, "--out-dir", str(out)]) == 0
    diag = json.loads((out / "mini_summary.json").read_text())["diagnostics"]
    assert diag["generic_vs_analytic_A"] <= 1e-10
    assert diag["generic_vs_analytic_B"] <= 1e-10
    assert diag["fd_gradient_deviation_ode2"] <= 1e-6


def test_simulate_multilevel_temperature(tmp_path):
    path = scenario_file(tmp_path, MULTILEVEL_BASE)
    out = tmp_path / "out"
    assert main(["simulate", path, "--out-dir", str(out)]) == 0
    rows = (out / "ml_ode-temperature.csv").read_text().splitlines()[1:]
    betas = [float(r.split(",")[2]) for r in rows]
    assert betas[0] == pytest.approx(0.5, abs=1e-12)
    assert all(b2 > b1 for b1, b2 in zip(betas, betas[1:]))  # warms toward the bath


def test_simulate_accepts_string_numbers(tmp_path):
    sc = copy.deepcopy(QUBIT_BASE)
    sc["strob"] = {"dt": "0.1", "horizon": "0.3", "ode_step": "1e-2"}
    path = scenario_file(tmp_path, sc)
    out = tmp_path / "out"
    assert main(["simulate", path, "--out-dir", str(out)]) == 0
    assert json.loads((out / "mini_summary.json").read_text())["ode_step"] == 0.01


def test_simulate_custom_gksl_static_state(tmp_path):
    sc = {
        "name": "static",
        "model": {
            "kind": "custom-gksl",
            "hamiltonian": [[0.0, 0.0], [0.0, 0.0]],
            "jumps": [],
            "observable": [[1.0, 0.0], [0.0, -1.0]],
        },
        "ansatz": {"kind": "pinching"},
        "protocols": ["discrete", "ode2"],
        "strob": {"dt": 0.1, "horizon": 0.5},
        "initial": {"E": [0.8]},
    }
    path = scenario_file(tmp_path, sc)
    out = tmp_path / "out"
    assert main(["simulate", path, "--out-dir", str(out)]) == 0
    for proto in ("discrete", "ode2"):
        rows = (out / f"static_{proto}.csv").read_text().splitlines()[1:]
        values = {r.split(",")[1] for r in rows}
        assert len(values) == 1  # nothing moves under the zero generator


def test_simulate_complex_matrix_entries(tmp_path):
    sc = {
        "name": "cplx",
        "model": {
            "kind": "custom-gksl",
            "hamiltonian": [[0.0, [0.0, -0.2]], [[0.0, 0.2], 1.0]],
            "jumps": [{"operator": [[0.0, 0.0], [1.0, 0.0]], "rate": 0.3}],
            "observable": [[1.0, 0.0], [0.0, 0.0]],
        },
        "ansatz": {"kind": "gibbs-canonical"},
        "protocols": ["discrete"],
        "strob": {"dt": 0.1, "horizon": 0.3},
        "initial": {"E": [0.5]},
    }
    path = scenario_file(tmp_path, sc)
    out = tmp_path / "out"
    assert main(["simulate", path, "--out-dir", str(out)]) == 0


# ---------------------------------------------------------------------------
# configuration errors (exit 2) and domain errors (exit 3)


def test_unknown_scenario_key_rejected(tmp_path, capsys):
    sc = variant(QUBIT_BASE, modle={"kind": "qubit"})
    path = scenario_file(tmp_path, sc)
    assert main(["simulate", path, "--out-dir", str(tmp_path / "o")]) == 2
    assert "config error:" in capsys.readouterr().err


def test_missing_scenario_file(tmp_path, capsys):
    assert main(["simulate", str(tmp_path / "nope.yaml")]) == 2
    assert "cannot read scenario" in capsys.readouterr().err


def test_bad_scenario_name(tmp_path):
    sc = variant(QUBIT_BASE, name="a/b")
    path = scenario_file(tmp_path, sc)
    assert main(["simulate", path, "--out-dir", str(tmp_path / "o")]) == 2


def test_duplicate_protocol_rejected(tmp_path):
    sc = variant(QUBIT_BASE, protocols=["discrete", "discrete"])
    path = scenario_file(tmp_path, sc)
    assert main(["simulate", path, "--out-dir", str(tmp_path / "o")]) == 2


def test_closed_form_needs_qubit(tmp_path):
    sc = variant(MULTILEVEL_BASE, protocols=["closed-form"])
    path = scenario_file(tmp_path, sc)
    assert main(["simulate", path, "--out-dir", str(tmp_path / "o")]) == 2


def test_ode_temperature_needs_canonical_gibbs(tmp_path):
    sc = variant(QUBIT_BASE, ansatz={"kind": "pinching"}, protocols=["ode-temperature"])
    path = scenario_file(tmp_path, sc)
    assert main(["simulate", path, "--out-dir", str(tmp_path / "o")]) == 2


def test_initial_needs_exactly_one_entry(tmp_path):
    sc = variant(QUBIT_BASE, initial={"E": [0.5], "beta_probe": 1.0})
    path = scenario_file(tmp_path, sc)
    assert main(["simulate", path, "--out-dir", str(tmp_path / "o")]) == 2


def test_initial_length_mismatch(tmp_path):
    sc = variant(QUBIT_BASE, initial={"E": [0.5, 0.4]})
    path = scenario_file(tmp_path, sc)
    assert main(["simulate", path, "--out-dir", str(tmp_path / "o")]) == 2


def test_beta_probe_needs_gibbs(tmp_path):
    sc = variant(QUBIT_BASE, ansatz={"kind": "pinching"}, initial={"beta_probe": 1.0})
    path = scenario_file(tmp_path, sc)
    assert main(["simulate", path, "--out-dir", str(tmp_path / "o")]) == 2


def test_exclusive_rate_specifications(tmp_path):
    sc = copy.deepcopy(QUBIT_BASE)
    sc["model"]["bosonic_gamma0"] = 1.0  # together with gamma
    path = scenario_file(tmp_path, sc)
    assert main(["simulate", path, "--out-dir", str(tmp_path / "o")]) == 2


def test_unknown_model_kind(tmp_path):
    sc = variant(QUBIT_BASE, model={"kind": "oscillator"})
    path = scenario_file(tmp_path, sc)
    assert main(["simulate", path, "--out-dir", str(tmp_path / "o")]) == 2


def test_boundary_initial_energy_is_domain_error(tmp_path, capsys):
    sc = variant(QUBIT_BASE, initial={"E": [0.0]})
    path = scenario_file(tmp_path, sc)
    assert main(["simulate", path, "--out-dir", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert "error:" in err and "feasible-domain boundary" in err


# ---------------------------------------------------------------------------
# compare


def compare_scenario():
    sc = variant(QUBIT_BASE, name="ladder", compare={"dts": [0.2, 0.1]})
    sc["strob"] = {"dt": 0.2, "horizon": 0.8}
    del sc["protocols"]
    return sc


def test_compare_report(tmp_path):
    path = scenario_file(tmp_path, compare_scenario())
    out = tmp_path / "out"
    assert main(["compare", path, "--out-dir", str(out)]) == 0
    report = json.loads((out / "ladder_compare.json").read_text())
    assert report["dts"] == [0.2, 0.1]
    assert len(report["deviation_ode2"]) == 2
    assert report["ode2_closer"] is True
    assert report["ratio_ode2"][0] > 1.0
    assert report["diagnostics"]["min_ratio_ode2"] == report["ratio_ode2"][0]
    for i in (1, 2):
        for proto in ("discrete", "ode1", "ode2"):
            assert (out / f"ladder_dt{i}_{proto}.csv").exists()


def test_compare_threaded_matches_serial(tmp_path, monkeypatch):
    path = scenario_file(tmp_path, compare_scenario())
    out1, out2 = tmp_path / "serial", tmp_path / "threaded"
    assert main(["compare", path, "--out-dir", str(out1)]) == 0
    monkeypatch.setenv("THERMOSTROBE_THREADS", "2")
    assert main(["compare", path, "--out-dir", str(out2)]) == 0
    assert (out1 / "ladder_compare.json").read_bytes() == (out2 / "ladder_compare.json").read_bytes()


def test_compare_rejects_single_dt(tmp_path):
    sc = compare_scenario()
    sc["compare"] = {"dts": [0.1]}
    path = scenario_file(tmp_path, sc)
    assert main(["compare", path, "--out-dir", str(tmp_path / "o")]) == 2


def test_compare_rejects_bad_thread_env(tmp_path, monkeypatch):
    path = scenario_file(tmp_path, compare_scenario())
    monkeypatch.setenv("THERMOSTROBE_THREADS", "many")
    assert main(["compare", path, "--out-dir", str(tmp_path / "o")]) == 2


# ---------------------------------------------------------------------------
# fit


def test_fit_target_energy(tmp_path):
    sc = variant(QUBIT_BASE, name="fit", fit={"target_E": [0.2689414213699951], "tol": 1e-12})
    path = scenario_file(tmp_path, sc)
    out = tmp_path / "out"
    assert main(["fit", path, "--out-dir", str(out)]) == 0
    report = json.loads((out / "fit_fit.json").read_text())
    assert report["target_source"] == "target_E"
    assert report["beta"][0] == pytest.approx(1.0, abs=1e-9)
    assert report["residual"] <= 1e-12
    assert report["iterations"] >= 1
    assert report["diagnostics"]["closed_form_beta"] == pytest.approx(1.0, abs=1e-12)


def test_fit_tail_of_protocol(tmp_path):
    sc = variant(QUBIT_BASE, name="fit", fit={"tail_of": "discrete"})
    path = scenario_file(tmp_path, sc)
    out = tmp_path / "out"
    assert main(["fit", path, "--out-dir", str(out)]) == 0
    report = json.loads((out / "fit_fit.json").read_text())
    assert report["target_source"] == "tail_of discrete"
    assert 0.0 < report["target"][0] < 1.0


def test_fit_out_of_range_target(tmp_path, capsys):
    sc = variant(QUBIT_BASE, name="fit", fit={"target_E": [1.5]})
    path = scenario_file(tmp_path, sc)
    assert main(["fit", path, "--out-dir", str(tmp_path / "o")]) == 3
    assert "feasible-domain boundary" in capsys.readouterr().err


def test_fit_needs_gibbs_ansatz(tmp_path):
    sc = variant(QUBIT_BASE, name="fit", ansatz={"kind": "pinching"}, fit={"target_E": [0.3]})
    path = scenario_file(tmp_path, sc)
    assert main(["fit", path, "--out-dir", str(tmp_path / "o")]) == 2


def test_fit_needs_a_target(tmp_path):
    sc = variant(QUBIT_BASE, name="fit", fit={})
    path = scenario_file(tmp_path, sc)
    assert main(["fit", path, "--out-dir", str(tmp_path / "o")]) == 2


# ---------------------------------------------------------------------------
# analyze-invariance


def test_invariance_undriven_qubit(tmp_path):
    sc = variant(QUBIT_BASE, name="inv")
    sc["model"]["Omega"] = 0.0
    path = scenario_file(tmp_path, sc)
    out = tmp_path / "out"
    assert main(["analyze-invariance", path, "--out-dir", str(out)]) == 0
    report = json.loads((out / "inv_invariance.json").read_text())
    assert report["invariant"] is True
    assert report["residual"] <= 1e-12
    assert report["bracket_norm"] <= 1e-10
    assert report["diagnostics"]["closure_velocity_deviation"] <= 1e-10
    assert report["diagnostics"]["rhs_drop_ode1_vs_ode2"] <= 1e-10
    L = np.array(report["L"])
    assert L.shape == (2, 2)
    assert L[1, 0] == pytest.approx(0.18393972058572117, abs=1e-12)


def test_invariance_driven_qubit_fails(tmp_path):
    # probe away from E = omega0/2, where the correction bracket has a zero
    path = scenario_file(tmp_path, variant(QUBIT_BASE, name="inv", initial={"E": [0.3]}))
    out = tmp_path / "out"
    assert main(["analyze-invariance", path, "--out-dir", str(out)]) == 0
    report = json.loads((out / "inv_invariance.json").read_text())
    assert report["invariant"] is False
    assert report["residual"] > 0.1
    assert report["bracket_norm"] > 1e-3


# ---------------------------------------------------------------------------
# module entry point


def test_module_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "thermostrobe", "simulate", str(tmp_path / "nope.yaml")],
        capture_output=True,
        text=True,
    )
    assert out.returncode == 2
    assert "config error:" in out.stderr
