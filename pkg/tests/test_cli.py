import copy

import numpy as np
import pytest
import yaml

from refshape import scenario
from refshape.cli import main
from refshape.pipeline import load_trace, run_scenario


def bundled_doc(name="paper_step"):
    return yaml.safe_load(scenario.resolve_path(name).read_text())


def write_doc(tmp_path, doc, name="scen.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(doc))
    return str(p)


def short_step(**qp):
    doc = bundled_doc()
    doc["reference"]["step"]["horizon"] = 0.6
    doc["reference"]["step"]["time"] = 0.1
    doc["qp"].update(qp)
    return doc


@pytest.fixture(scope="module")
def step_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("step")
    assert main(["run", "paper_step", "--out", str(out)]) == 0
    return out


def test_run_writes_artifacts(step_run):
    names = sorted(p.name for p in step_run.iterdir())
    assert names == sorted([
        "metrics.csv", "metrics.txt",
        "trace_baseline.csv", "trace_nh1.csv", "trace_nh2.csv", "trace_nh5.csv",
        "program_baseline.gcode", "program_nh1.gcode", "program_nh2.gcode",
        "program_nh5.gcode"])
    header = (step_run / "metrics.txt").read_text().splitlines()[0].split()
    assert header == ["Metric", "r_F", "N_h=1", "N_h=2", "N_h=5"]


def test_trace_columns_and_output_equation(step_run, extruder_sys):
    text = (step_run / "trace_nh1.csv").read_text()
    assert text.splitlines()[0] == "k,t,r_F,r_F_mod,F,u,x_1,x_2,x_3"
    cols = load_trace(step_run / "trace_nh1.csv", sys=extruder_sys, tol=1e-9)
    assert len(cols["k"]) == 401
    assert np.isnan(cols["u"][-1]) and np.isnan(cols["r_F_mod"][-1])


def test_trace_recheck_rejects_tampering(step_run, extruder_sys, tmp_path):
    lines = (step_run / "trace_baseline.csv").read_text().splitlines()
    fields = lines[3].split(",")
    fields[4] = repr(float(fields[4]) + 1e-6)
    lines[3] = ",".join(fields)
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match="deviates"):
        load_trace(bad, sys=extruder_sys)


def test_run_is_deterministic(step_run, tmp_path):
    assert main(["run", "paper_step", "--out", str(tmp_path)]) == 0
    for p in step_run.iterdir():
        assert (tmp_path / p.name).read_bytes() == p.read_bytes(), p.name


def test_constant_scenario_tracks_exactly(tmp_path, capsys):
    assert main(["run", "constant", "--out", str(tmp_path)]) == 0
    result = run_scenario(scenario.load("constant"))
    for run in result.runs:
        assert run.metrics.rmse < 1e-6


def test_pinned_reference_matches_baseline(tmp_path):
    doc = bundled_doc("constant")
    doc["x0"] = [0.0, 0.0, 0.0]
    doc["qp"]["bounds"] = {"r": [-3.0, -3.0]}
    scen = scenario.from_dict(doc)
    result = run_scenario(scen, tmp_path)
    base = result.by_label("r_F")
    for run in result.runs[1:]:
        assert run.status.value == "optimal"
        np.testing.assert_allclose(run.modified.values, base.reference.values, atol=1e-9)
        assert run.metrics.rmse == pytest.approx(base.metrics.rmse, rel=1e-9)
        assert run.metrics.settling_time == base.metrics.settling_time
    assert base.metrics.rmse > 0.01


def test_flags_override_scenario(tmp_path, capsys):
    path = write_doc(tmp_path, short_step())
    assert main(["run", path, "--out", str(tmp_path / "o"), "--nh", "3", "--qv", "0.01"]) == 0
    out = capsys.readouterr().out
    assert "N_h=3" in out and "N_h=1" not in out
    assert (tmp_path / "o" / "trace_nh3.csv").exists()


def test_gcode_verb_writes_programs_only(tmp_path):
    assert main(["gcode", "step_line", "--out", str(tmp_path)]) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["program_baseline.gcode", "program_nh1.gcode", "program_nh2.gcode",
                     "program_nh5.gcode"]
    text = (tmp_path / "program_baseline.gcode").read_text()
    assert "M700 S-3\nG1 X5 Y0 F1200\nM700 S-5\n" in text


def test_metrics_verb(step_run, capsys):
    trace = step_run / "trace_baseline.csv"
    assert main(["metrics", str(trace), str(trace)]) == 0
    out = capsys.readouterr().out
    assert "RMSE (N)" in out and "t_5% (s)" in out
    rows = [ln for ln in out.splitlines() if ln.startswith("trace_baseline,")]
    assert len(rows) == 1
    assert float(rows[0].split(",")[1]) == pytest.approx(0.2138, abs=1e-3)


def test_metrics_verb_length_mismatch(step_run, tmp_path, capsys):
    ref = tmp_path / "ref.csv"
    ref.write_text("k,r_F\n0,-3.0\n1,-3.0\n")
    assert main(["metrics", str(step_run / "trace_baseline.csv"), str(ref)]) == 1
    assert "length mismatch" in capsys.readouterr().err


@pytest.mark.parametrize("mutate, where", [
    (lambda d: d["system"].pop("A"), "system.A"),
    (lambda d: d["system"].update(dt=-1), "system.dt"),
    (lambda d: d["weights"].update(R=[[-1.0]]), "weights"),
    (lambda d: d["reference"].update(values=[-3.0]), "reference"),
    (lambda d: d["qp"].update(hold_lengths=[0]), "qp.hold_lengths[0]"),
    (lambda d: d["qp"].update(hold_lengths=[]), "qp.hold_lengths"),
    (lambda d: d["qp"]["bounds"].update(u=[5.0, 1.0]), "qp.bounds.u"),
    (lambda d: d["qp"]["bounds"].update(w=[0, 1]), "qp.bounds.w"),
    (lambda d: d.update(x0=[0.0, 0.0]), "x0"),
])
def test_invalid_scenario_exit_code(tmp_path, capsys, mutate, where):
    doc = copy.deepcopy(bundled_doc())
    mutate(doc)
    assert main(["run", write_doc(tmp_path, doc)]) == 3
    assert f"invalid scenario: {where}" in capsys.readouterr().err


def test_missing_and_malformed_files(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.yaml")]) == 3
    bad = tmp_path / "bad.yaml"
    bad.write_text("system: [unclosed\n")
    assert main(["run", str(bad)]) == 3
    assert "not valid YAML" in capsys.readouterr().err


def test_usage_errors():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["run", "paper_step", "--nh", "0"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 1


def test_solver_failure_exit_code(tmp_path, capsys):
    doc = short_step()
    doc["system"]["A"] = [[2.0, 0, 0], [0, 2.0, 0], [0, 0, 2.0]]
    assert main(["run", write_doc(tmp_path, doc), "--out", str(tmp_path / "o")]) == 2
    assert "solver failure" in capsys.readouterr().err


def test_infeasible_qp_exit_code(tmp_path, capsys):
    doc = short_step(bounds={"u": [0.0, 0.1], "r": [-5.0, -3.0]})
    assert main(["run", write_doc(tmp_path, doc), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "infeasible" in err


def test_verify_fixture_reports_each_check(capsys):
    assert main(["verify-fixture"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [ln.split("]")[0] + "]" for ln in lines] == ["[PASS]", "[FAIL]", "[PASS]"]
    assert "riccati solution" in lines[0] and "gain matches reference" in lines[1]
    assert "closed-loop stability" in lines[2]


def test_verify_fixture_doubled_r_flags_gain(tmp_path, capsys):
    doc = bundled_doc()
    doc["weights"]["R"] = [[2 * 0.00995]]
    assert main(["verify-fixture", write_doc(tmp_path, doc)]) == 0
    out = capsys.readouterr().out
    assert "[FAIL] gain matches reference" in out
    assert "[PASS] closed-loop stability" in out


def test_verify_fixture_unstable_a_states_what_ran(tmp_path, capsys):
    doc = bundled_doc()
    doc["system"]["A"] = [[2.0, 0, 0], [0, 2.0, 0], [0, 0, 2.0]]
    assert main(["verify-fixture", write_doc(tmp_path, doc)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("[FAIL] riccati solution")
    assert lines[1].startswith("[SKIP] gain matches reference")
    assert lines[2].startswith("[SKIP] closed-loop stability")
