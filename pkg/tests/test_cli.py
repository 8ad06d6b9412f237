import json

import numpy as np
import pytest

from pinn_forge import cli
from pinn_forge.analytic import AnalyticField
from pinn_forge.cases import BfsConfig, synthetic_bfs_observations, write_observations
from pinn_forge.eval import read_metrics
from pinn_forge.network import forward, load_checkpoint
from pinn_forge.cases.common import FieldGrid, input_map_for

TINY_CAVITY = """case = parametric_cavity
seed = 2
schedule = {schedule}

[case]
n_interior = 30
n_wall = {n_wall}
n_values = 2

[network]
hidden = 6,6
"""

TINY_SLABS = """case = manufactured:conduction_slabs
schedule = adam:3,bfgs:2

[case]
n_fluid = 40
n_solid = 30
n_top = 8
n_interface = 8
n_hot = 8
n_side = 5
fluid_hidden = 5
solid_hidden = 5
"""


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _cavity(tmp_path, schedule="adam:0", n_wall=6):
    return _write(tmp_path, TINY_CAVITY.format(schedule=schedule, n_wall=n_wall))


def test_zero_epoch_train_writes_initial_history(tmp_path):
    assert cli.main(["train", _cavity(tmp_path), "--out", str(tmp_path / "r")]) == 0
    hist = cli.read_history(tmp_path / "r" / "history.csv")
    assert len(hist) == 1 and hist[0].iter == 0 and hist[0].phase == "init"
    header = (tmp_path / "r" / "history.csv").read_text().splitlines()[0]
    assert header == "iter,phase,alpha,L_total,L_NS,L_W,L_T,L_A_bottom,L_A_top"
    man = json.loads((tmp_path / "r" / "manifest.json").read_text())
    assert man["status"] == "completed" and man["iterations"] == 0
    assert set(man["files"]) == {"checkpoint.net", "history", "metrics"}


def test_training_is_bit_reproducible(tmp_path):
    cfg = _cavity(tmp_path, "adam:5,lbfgs:3")
    for out in ("a", "b"):
        assert cli.main(["train", cfg, "--out", str(tmp_path / out)]) == 0
    for f in ("checkpoint_net.txt", "history.csv", "metrics.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    hist = cli.read_history(tmp_path / "a" / "history.csv")
    assert [h.iter for h in hist] == list(range(9))


def test_seed_flag_changes_run(tmp_path):
    cfg = _cavity(tmp_path, "adam:2")
    cli.main(["train", cfg, "--out", str(tmp_path / "a")])
    cli.main(["train", cfg, "--out", str(tmp_path / "b"), "--seed", "9"])
    assert (tmp_path / "a" / "checkpoint_net.txt").read_bytes() != (tmp_path / "b" / "checkpoint_net.txt").read_bytes()


def test_checkpoint_round_trip_through_loader(tmp_path):
    cfg = _write(tmp_path, TINY_SLABS)
    assert cli.main(["train", cfg, "--out", str(tmp_path / "r")]) == 0
    rc = cli.load_config(cfg)
    pb = cli.build_problem(rc)
    theta = cli.load_theta(pb, tmp_path / "r")
    assert {p.name for p in (tmp_path / "r").glob("checkpoint_*")} == {"checkpoint_fluid.txt",
                                                                       "checkpoint_solid.txt"}
    loss = pb.evaluate(theta)[0]
    assert loss == pytest.approx(read_metrics(tmp_path / "r" / "metrics.txt")["loss.total"], rel=1e-15)


def test_history_round_trip(tmp_path):
    cfg = _cavity(tmp_path, "adam:3")
    cli.main(["train", cfg, "--out", str(tmp_path / "r")])
    path = tmp_path / "r" / "history.csv"
    hist = cli.read_history(path)
    cli.write_history(tmp_path / "again.csv", type("R", (), {"initial": hist[0], "history": hist[1:]})(),
                      list(hist[0].terms))
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()


@pytest.mark.parametrize("text,key", [
    ("case = conjugate_heat\n[case]\nmuu = 1\n", "muu"),
    ("case = conjugate_heat\n[case]\nmu = abc\n", "mu"),
    ("case = conjugate_heat\ncolour = red\n", "colour"),
    ("case = nowhere\n", "case"),
    ("seed = 1\n", "case"),
    ("case = conjugate_heat\nseed = x\n", "seed"),
    ("case = conjugate_heat\n[case]\nmu_range = 1\n", "mu_range"),
    ("case = parametric_cavity\n[case]\nmu_range = 0.1,0.01\n", "mu_range"),
    ("case = conjugate_heat\n[optics]\nlens = 1\n", "optics"),
    ("case = conjugate_heat\n[network]\nwidth = 3\n", "network.width"),
    ("case = conjugate_heat\nschedule = adam\n", "schedule"),
])
def test_malformed_config_exit_2_names_key(tmp_path, capsys, text, key):
    assert cli.main(["train", _write(tmp_path, text), "--out", str(tmp_path / "r")]) == 2
    assert repr(key) in capsys.readouterr().err


def test_missing_observations_exit_3(tmp_path):
    assert cli.main(["train", _write(tmp_path, "case = bfs_assimilation\n"), "--out", str(tmp_path / "r")]) == 3
    cfg = _write(tmp_path, "case = bfs_assimilation\nobservations = absent.csv\n")
    assert cli.main(["train", cfg, "--out", str(tmp_path / "r")]) == 3


def test_bfs_train_with_observation_file(tmp_path):
    c = BfsConfig()
    write_observations(tmp_path / "obs.csv", synthetic_bfs_observations(c, AnalyticField({"U": "y*(6-y)/9"})))
    cfg = _write(tmp_path, "case = bfs_assimilation\nobservations = obs.csv\nschedule = adam:2\n"
                           "[case]\nn_interior = 60\nn_wall = 40\n")
    assert cli.main(["train", cfg, "--out", str(tmp_path / "r")]) == 0
    m = read_metrics(tmp_path / "r" / "metrics.txt")
    assert m["data_rmse"] == pytest.approx(np.sqrt(m["loss.L_data"]), rel=1e-12)
    man = json.loads((tmp_path / "r" / "manifest.json").read_text())
    assert "observations_sha256" in man["config"]


def test_digest_ignores_key_order(tmp_path):
    a = cli.parse_config("case = conjugate_heat\nseed = 4\n[case]\nmu = 0.02\nkf = 0.03\n")
    b = cli.parse_config("seed = 4\ncase = conjugate_heat\n[case]\nkf = 0.03\nmu = 0.020\n")
    c = cli.parse_config("seed = 4\ncase = conjugate_heat\n[case]\nkf = 0.03\nmu = 0.021\n")
    assert a.digest() == b.digest() != c.digest()


def test_evaluate_single_point_matches_forward(tmp_path):
    cfg = _cavity(tmp_path, "adam:2")
    cli.main(["train", cfg, "--out", str(tmp_path / "r")])
    assert cli.main(["evaluate", str(tmp_path / "r"), cfg, "--grid", "1x1", "--out", str(tmp_path / "e")]) == 0
    grid = FieldGrid.read_csv(tmp_path / "e" / "field_net_1x1.csv")
    spec, params = load_checkpoint(tmp_path / "r" / "checkpoint_net.txt")
    rc = cli.load_config(cfg)
    cfgobj = rc.case_config()
    x = [1.0, 1.0, cfgobj.mu_values[0], cfgobj.kf_values[0]]
    want = forward(spec, params, x, input_map_for(cfgobj.bounds))
    assert [grid.channels[c][0] for c in ("u", "v", "T", "p")] == want


def test_evaluate_without_reference_marks_fields_absent(tmp_path):
    cfg = _write(tmp_path, TINY_SLABS)
    cli.main(["train", cfg, "--out", str(tmp_path / "r")])
    assert cli.main(["evaluate", str(tmp_path / "r"), cfg, "--grid", "12x7"]) == 0
    m = read_metrics(tmp_path / "r" / "report_12x7.txt")
    assert m["grid"] == "12x7"
    assert m["fluid.field.Temperature"] is None and m["solid.field.Temperature"] is None
    assert m["solid.residual.Heat eq."] >= 0
    assert len(FieldGrid.read_csv(tmp_path / "r" / "field_solid_12x7.csv").points) == 84


def test_evaluate_with_reference(tmp_path):
    cfg = _write(tmp_path, TINY_SLABS)
    cli.main(["train", cfg, "--out", str(tmp_path / "r")])
    cli.main(["evaluate", str(tmp_path / "r"), cfg, "--grid", "6x6", "--out", str(tmp_path / "e")])
    ref = tmp_path / "e" / "field_solid_6x6.csv"
    assert cli.main(["evaluate", str(tmp_path / "r"), cfg, "--grid", "6x6", "--out", str(tmp_path / "f"),
                     "--reference", f"solid={ref}"]) == 0
    m = read_metrics(tmp_path / "f" / "report_6x6.txt")
    assert m["solid.field.Temperature"] == 0.0 and m["fluid.field.Temperature"] is None


def test_sweep_single_trial_equals_train(tmp_path):
    cfg = _cavity(tmp_path, "adam:3")
    cli.main(["train", cfg, "--out", str(tmp_path / "t")])
    assert cli.main(["sweep", cfg, "--axis", "activation=tanh", "--trials", "1", "--out", str(tmp_path / "s")]) == 0
    run = tmp_path / "s" / "activation-tanh" / "seed_2"
    for f in ("checkpoint_net.txt", "history.csv"):
        assert (run / f).read_bytes() == (tmp_path / "t" / f).read_bytes()


def test_sweep_optimizer_layout(tmp_path, monkeypatch):
    monkeypatch.setenv("PINN_FORGE_THREADS", "1")
    cfg = _cavity(tmp_path, "adam:2,lbfgs:2:on_stall=stop")
    assert cli.main(["sweep", cfg, "--axis", "optimizer=adam,bfgs_armijo,bfgs_wolfe", "--trials", "2",
                     "--jobs", "4", "--out", str(tmp_path / "s")]) == 0
    summary = (tmp_path / "s" / "summary.csv").read_text().splitlines()
    configs = {ln.split(",")[0] for ln in summary[1:]}
    assert configs == {"optimizer=adam", "optimizer=bfgs_armijo", "optimizer=bfgs_wolfe"}
    hist = cli.read_history(tmp_path / "s" / "optimizer-bfgs_wolfe" / "seed_3" / "history.csv")
    assert [h.phase for h in hist[1:]][:2] == ["adam", "adam"]
    assert hist[-1].phase.startswith("bfgs")
    adam_only = cli.read_history(tmp_path / "s" / "optimizer-adam" / "seed_2" / "history.csv")
    assert len(adam_only) == 5 and all(h.phase == "adam" for h in adam_only[1:])


def test_sweep_rejects_bad_axis(tmp_path, capsys):
    cfg = _cavity(tmp_path)
    assert cli.main(["sweep", cfg, "--axis", "optimizer=sgd", "--out", str(tmp_path / "s")]) == 2
    assert cli.main(["sweep", cfg, "--axis", "hidden", "--out", str(tmp_path / "s")]) == 2


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("PINN_FORGE_THREADS", "2")
    assert cli.worker_cap(8) == 2 and cli.worker_cap(1) == 1
    monkeypatch.delenv("PINN_FORGE_THREADS")
    assert cli.worker_cap(3) == 3


def test_sample_writes_every_set(tmp_path):
    cfg = _write(tmp_path, "case = parametric_cavity\n")
    assert cli.main(["sample", cfg, "--out", str(tmp_path / "s")]) == 0
    rows = len((tmp_path / "s" / "interior_spatial.csv").read_text().splitlines()) - 1
    assert rows == 2500


def test_sample_empty_boundary_skipped(tmp_path, caplog):
    cfg = _cavity(tmp_path, n_wall=0)
    with caplog.at_level("WARNING"):
        assert cli.main(["sample", cfg, "--out", str(tmp_path / "s")]) == 0
    assert not (tmp_path / "s" / "walls.csv").exists()
    assert (tmp_path / "s" / "interior.csv").exists()
    assert "empty" in caplog.text


def test_bfs_sample_sizes(tmp_path):
    write_observations(tmp_path / "obs.csv",
                       synthetic_bfs_observations(BfsConfig(), AnalyticField({"U": "1"})))
    cfg = _write(tmp_path, "case = bfs_assimilation\nobservations = obs.csv\n")
    assert cli.main(["sample", cfg, "--out", str(tmp_path / "s")]) == 0
    count = lambda n: len((tmp_path / "s" / f"{n}.csv").read_text().splitlines()) - 1
    assert (count("interior"), count("walls"), count("data")) == (8000, 2750, 88)
