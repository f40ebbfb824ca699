import json

import numpy as np
import pytest

from datauio import microgrid as mg
from datauio.cli import EXIT_BAD_INPUT, EXIT_NO_UIO, EXIT_OK, load_config, main
from datauio.lti import LtiSystem
from datauio.trajectory import Trajectory, read_trajectory, sidecar_path, write_trajectory


def run(capsys, *argv):
    code = main(list(argv) + ["-q"])
    out = capsys.readouterr().out
    return code, out


def last_json(out):
    """Parse the trailing JSON document printed by a command."""
    start = out.index("{")
    return json.loads(out[start:])


def test_collect_microgrid(tmp_path, capsys):
    path = tmp_path / "hist.csv"
    code, out = run(capsys, "collect", "--microgrid", "--seed", "7", "--out", str(path))
    assert code == EXIT_OK
    info = last_json(out)
    assert info["T"] == 18 and info["assumption1"] is True
    side = json.loads(sidecar_path(path).read_text())
    assert side["meta"]["requested_seed"] == 7
    tr = read_trajectory(path)
    assert tr.d.shape == (18, 2) and tr.x.shape == (18, 3)


def test_collect_too_short_warns(tmp_path, capsys, caplog):
    code, out = run(capsys, "collect", "--microgrid", "--T", "10", "--out", str(tmp_path / "h.csv"))
    assert code == EXIT_BAD_INPUT
    assert last_json(out)["assumption1"] is False
    assert any("below the minimum" in r.message for r in caplog.records)


def test_collect_random_system(tmp_path, capsys):
    path = tmp_path / "r.csv"
    code, out = run(capsys, "collect", "--n", "4", "--m", "1", "--md", "1", "--seed", "3",
                    "--out", str(path))
    assert code == EXIT_OK and last_json(out)["assumption1"] is True
    sys_ = LtiSystem.load(tmp_path / "r.system.json")
    assert (sys_.n, sys_.m, sys_.m_d, sys_.p) == (4, 1, 1, 4)


def test_collect_online_has_no_d(tmp_path, capsys):
    path = tmp_path / "on.csv"
    code, _ = run(capsys, "collect", "--microgrid", "--online", "12", "--out", str(path))
    assert code == EXIT_OK
    tr = read_trajectory(path)
    assert tr.d is None and tr.T == 12 and tr.x is not None


def test_collect_requires_out(capsys):
    code, _ = run(capsys, "collect", "--microgrid")
    assert code == EXIT_BAD_INPUT


def _unit_circle_hist(tmp_path, capsys):
    sys_ = LtiSystem(A=np.array([[0.5, 1.0], [0.0, 1.0]]), B=np.array([[0.0], [1.0]]),
                     E=np.array([[1.0], [0.0]]), C=np.array([[1.0, 0.0]]))
    sys_.save(tmp_path / "uc.json")
    path = tmp_path / "uc.csv"
    code, _ = run(capsys, "collect", "--system", str(tmp_path / "uc.json"), "--T", "20",
                  "--out", str(path))
    assert code == EXIT_OK
    return path


def test_check_and_synthesize_exit_codes(tmp_path, capsys):
    hist = tmp_path / "h.csv"
    run(capsys, "collect", "--microgrid", "--out", str(hist))
    code, out = run(capsys, "check", str(hist))
    assert code == EXIT_OK and last_json(out)["exists"] is True

    bad = _unit_circle_hist(tmp_path, capsys)
    code, out = run(capsys, "check", str(bad))
    rep = last_json(out)
    assert code == EXIT_NO_UIO
    assert rep["kernel_inclusion_holds"] is True and rep["schur"] is False

    real = tmp_path / "uc_real.json"
    code, _ = run(capsys, "synthesize", str(bad), "--out", str(real))
    assert code == EXIT_NO_UIO and not real.exists()
    code, _ = run(capsys, "synthesize", str(bad), "--out", str(real), "--force")
    assert code == EXIT_NO_UIO and real.exists()


def test_check_rejects_non_exciting_data(tmp_path, capsys):
    short = tmp_path / "short.csv"
    run(capsys, "collect", "--microgrid", "--T", "10", "--out", str(short))
    code, out = run(capsys, "check", str(short))
    assert code == EXIT_BAD_INPUT and last_json(out)["pe_checked"] is False
    code, _ = run(capsys, "synthesize", str(short), "--out", str(tmp_path / "r.json"))
    assert code == EXIT_BAD_INPUT and not (tmp_path / "r.json").exists()


def test_check_without_d_is_not_checkable(tmp_path, capsys):
    hist = tmp_path / "h.csv"
    run(capsys, "collect", "--microgrid", "--out", str(hist))
    tr = read_trajectory(hist)
    bare = tmp_path / "nod.csv"
    write_trajectory(Trajectory(u=tr.u, y=tr.y, x=tr.x), bare)
    code, out = run(capsys, "check", str(bare))
    rep = last_json(out)
    assert code == EXIT_OK and rep["pe_checked"] is None and rep["exists"] is True


def test_check_missing_file(tmp_path, capsys):
    code, _ = run(capsys, "check", str(tmp_path / "nope.csv"))
    assert code == EXIT_BAD_INPUT


def test_estimate_with_and_without_state(tmp_path, capsys):
    hist, real, on = tmp_path / "h.csv", tmp_path / "real.json", tmp_path / "on.csv"
    run(capsys, "collect", "--microgrid", "--seed", "1", "--out", str(hist))
    assert run(capsys, "synthesize", str(hist), "--out", str(real))[0] == EXIT_OK
    run(capsys, "collect", "--microgrid", "--online", "10", "--seed", "2", "--out", str(on))
    code, out = run(capsys, "estimate", str(real), str(on), "--out", str(tmp_path / "est.csv"))
    assert code == EXIT_OK
    norms = last_json(out)["error_norms"]
    assert len(norms) == 10 and norms[-1] < 1e-6 * norms[0]
    header = (tmp_path / "est.csv").read_text().splitlines()[0]
    assert header == "t,xhat_0,xhat_1,xhat_2,x_0,x_1,x_2,e_0,e_1,e_2"

    # strip the state columns: only the estimate is written
    tr = read_trajectory(on)
    bare = tmp_path / "bare.csv"
    write_trajectory(Trajectory(u=tr.u, y=tr.y), bare)
    code, out = run(capsys, "estimate", str(real), str(bare), "--out", str(tmp_path / "e2.csv"),
                    "--xhat0", "48,5,1")
    assert code == EXIT_OK and "error_norms" not in last_json(out)
    assert (tmp_path / "e2.csv").read_text().splitlines()[0] == "t,xhat_0,xhat_1,xhat_2"


def test_estimate_rejects_channel_mismatch(tmp_path, capsys):
    hist, real = tmp_path / "h.csv", tmp_path / "real.json"
    run(capsys, "collect", "--microgrid", "--out", str(hist))
    run(capsys, "synthesize", str(hist), "--out", str(real))
    other = tmp_path / "o.csv"
    run(capsys, "collect", "--n", "2", "--m", "1", "--md", "1", "--p", "1", "--online", "5",
        "--out", str(other))
    code, _ = run(capsys, "estimate", str(real), str(other), "--out", str(tmp_path / "x.csv"))
    assert code == EXIT_BAD_INPUT


def test_demo_safe_and_attack(tmp_path, capsys):
    code, out = run(capsys, "demo", "safe", "--out", str(tmp_path / "s"))
    s = last_json(out)
    assert code == EXIT_OK and s["error_ratio_last_first"] < 1e-10
    assert (tmp_path / "s" / "historical.csv").exists() and (tmp_path / "s" / "safe.csv").exists()

    code, out = run(capsys, "demo", "attack", "--out", str(tmp_path / "a"))
    a = last_json(out)
    assert code == EXIT_OK and a["detected"] is True
    assert a["post_attack_max_residual"] > 10 * a["pre_attack_max_residual"]


def test_demo_deterministic(tmp_path, capsys):
    run(capsys, "demo", "attack", "--seed", "5", "--out", str(tmp_path / "a"))
    run(capsys, "demo", "attack", "--seed", "5", "--out", str(tmp_path / "b"))
    assert (tmp_path / "a" / "attack.csv").read_bytes() == (tmp_path / "b" / "attack.csv").read_bytes()


def test_demo_custom_attack(tmp_path, capsys):
    code, out = run(capsys, "demo", "attack", "--N", "40", "--T-a", "20", "--phi", "0,0,0.5",
                    "--out", str(tmp_path))
    assert code == EXIT_OK and last_json(out)["T_a"] == 20
    code, _ = run(capsys, "demo", "attack", "--phi", "1,2", "--out", str(tmp_path))
    assert code == EXIT_BAD_INPUT


def test_demo_matches_library(tmp_path, capsys):
    run(capsys, "demo", "safe", "--seed", "2", "--out", str(tmp_path))
    params = mg.DguParams()
    res = mg.run_safe_scenario(params, mg.collect_historical(params, seed=2), seed=3)
    summary = json.loads((tmp_path / "safe.json").read_text())
    assert summary["error_norms"] == [float(v) for v in np.linalg.norm(res.errors, axis=1)]


# --- config ---------------------------------------------------------------------

def test_load_config_formats(tmp_path):
    (tmp_path / "c.json").write_text('{"seed": 4, "tol-rank": 1e-9}')
    assert load_config(tmp_path / "c.json") == {"seed": 4, "tol_rank": 1e-9}
    (tmp_path / "c.txt").write_text("# comment\nseed = 4\nphi = 0.2,0.2,0.2  # inline\n")
    assert load_config(tmp_path / "c.txt") == {"seed": 4, "phi": "0.2,0.2,0.2"}
    (tmp_path / "bad.txt").write_text("seed 4\n")
    with pytest.raises(Exception):
        load_config(tmp_path / "bad.txt")


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("seed = 9\nT = 25\n")
    code, out = run(capsys, "collect", "--microgrid", "--config", str(cfg),
                    "--out", str(tmp_path / "h.csv"))
    info = last_json(out)
    assert code == EXIT_OK and info["seed"] == 9 and info["T"] == 25
    code, out = run(capsys, "collect", "--microgrid", "--config", str(cfg), "--seed", "1",
                    "--out", str(tmp_path / "h.csv"))
    info = last_json(out)
    assert info["seed"] == 1 and info["T"] == 25
