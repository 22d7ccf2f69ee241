import json
import os

import pytest

from rcdroplet.cli import main
from rcdroplet.lattice import read_snapshot


def outputs(d):
    return {f: open(os.path.join(d, f), "rb").read() for f in sorted(os.listdir(d))
            if f != "timings.json" and os.path.isfile(os.path.join(d, f))}


def run(tmp_path, name, *args):
    out = str(tmp_path / name)
    code = main([*args, "--out", out])
    return code, out


def make_snapshot(tmp_path, L=6, p=0.6, seed=3):
    code, out = run(tmp_path, f"snap{L}_{seed}", "sample", "--L", str(L), "--p", str(p),
                    "--seed", str(seed))
    assert code == 0
    return os.path.join(out, "sample.rcgrid")


def scan_dir(tmp_path):
    code, out = run(tmp_path, "scan", "scan", "--n-list", "3,4,5", "--p", "0.35",
                    "--samples", "50", "--thin", "1", "--chains", "2", "--burn-in", "5",
                    "--wulff", "disc", "--seed", "2")
    assert code == 0
    return out


SUBCOMMANDS = {
    "sample": ["sample", "--L", "4", "--p", "0.5", "--q", "2", "--sweeps", "20"],
    "exact-enum": ["exact-enum", "--L", "1", "--p", "0.4", "--q", "2", "--full"],
    "condition": ["condition", "--n", "3", "--p", "0.35", "--sweeps", "6", "--thin", "2",
                  "--chains", "2", "--burn-in", "5"],
    "wulff-estimate": ["wulff-estimate", "--p", "0.3", "--dirs", "32", "--kmax", "8",
                       "--samples", "200"],
    "scan": ["scan", "--n-list", "3,4", "--p", "0.35", "--samples", "4", "--thin", "2",
             "--chains", "2", "--burn-in", "5", "--wulff", "disc"],
}


@pytest.mark.parametrize("name", sorted(SUBCOMMANDS))
def test_rerun_is_byte_identical(tmp_path, name):
    args = SUBCOMMANDS[name] + ["--seed", "7"]
    ca, a = run(tmp_path, "a", *args)
    cb, b = run(tmp_path, "b", *args)
    assert ca == cb == 0
    assert outputs(a) and outputs(a) == outputs(b)


def test_file_based_subcommands_rerun_identically(tmp_path):
    snap = make_snapshot(tmp_path)
    sd = scan_dir(tmp_path)
    cases = {
        "measure": ["measure", "--snapshot", snap, "--n", "3"],
        "surgery-sector": ["surgery", "--snapshot", snap, "--op", "sector", "--x", "3,0",
                           "--y", "0,3", "--seed", "4"],
        "surgery-shift": ["surgery", "--snapshot", snap, "--op", "shift", "--F=-1,-1,1,1",
                          "--G=2,2,3,3", "--shift=-5,-5"],
        "fit": ["fit", "--scan", sd, "--statistic", "mfl"],
        "report": ["report", "--scan", sd, "--n", "4"],
    }
    for name, args in cases.items():
        ca, a = run(tmp_path, name + "_a", *args)
        cb, b = run(tmp_path, name + "_b", *args)
        assert ca == cb == 0, name
        assert outputs(a) and outputs(a) == outputs(b), name


def test_sample_snapshot_and_metadata(tmp_path):
    snap = make_snapshot(tmp_path, L=5, p=0.45, seed=9)
    s = read_snapshot(open(snap).read())
    assert s.cfg.geom.half_width == 5 and s.p == 0.45 and s.seed == 9
    meta = json.load(open(os.path.join(os.path.dirname(snap), "sample.json")))
    assert meta["params"]["p_c"] == pytest.approx(0.5)
    assert meta["open_edges"] == int(s.cfg.states.sum())


def test_beta_is_resolved(tmp_path):
    code, out = run(tmp_path, "b", "sample", "--L", "2", "--beta", "0.5")
    assert code == 0
    meta = json.load(open(os.path.join(out, "sample.json")))
    assert meta["params"]["beta"] == pytest.approx(0.5)


def test_p_and_beta_are_exclusive(tmp_path):
    code, _ = run(tmp_path, "x", "sample", "--p", "0.3", "--beta", "0.2")
    assert code == 2


def test_exact_enum_marginals(tmp_path):
    code, out = run(tmp_path, "e", "exact-enum", "--L", "1", "--p", "0.3")
    assert code == 0
    meta = json.load(open(os.path.join(out, "exact.json")))
    assert meta["configurations"] == 4096
    assert meta["edge_marginals"] == pytest.approx([0.3] * 12)


def test_condition_outputs(tmp_path):
    code, out = run(tmp_path, "c", *SUBCOMMANDS["condition"])
    assert code == 0
    man = json.load(open(os.path.join(out, "manifest.json")))
    assert [c["rows"] for c in man["chains"]] == [3, 3]
    assert sorted(os.listdir(out)) == ["chain0.csv", "chain1.csv", "manifest.json", "timings.json"]
    assert "irreducible" in man["assumptions"][0]


def test_fixed_area_conditioning_is_rejected(tmp_path, capsys):
    code, _ = run(tmp_path, "c", "condition", "--n", "3", "--constraint", "area_eq")
    assert code == 2
    assert "README" in capsys.readouterr().err


def test_config_file_and_flag_override(tmp_path):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"L": 3, "p": 0.2, "sweeps": 5, "seed": 5}))
    code, out = run(tmp_path, "a", "sample", "--config", str(conf))
    assert code == 0
    meta = json.load(open(os.path.join(out, "sample.json")))
    assert (meta["L"], meta["params"]["p"], meta["seed"]) == (3, 0.2, 5)
    code, out = run(tmp_path, "b", "sample", "--config", str(conf), "--L", "2", "--beta", "0.1")
    meta = json.load(open(os.path.join(out, "sample.json")))
    assert code == 0 and meta["L"] == 2 and meta["params"]["beta"] == pytest.approx(0.1)


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    assert run(tmp_path, "a", "sample", "--config", str(bad))[0] == 2
    assert run(tmp_path, "b", "sample", "--config", str(tmp_path / "missing.json"))[0] == 2


def test_input_errors_exit_2(tmp_path):
    assert run(tmp_path, "a", "condition", "--n", "30", "--L", "5", "--p", "0.3")[0] == 2
    assert run(tmp_path, "b", "scan", "--n-list", "5,4", "--p", "0.3")[0] == 2
    assert run(tmp_path, "c", "fit", "--statistic", "mlr")[0] == 2
    assert run(tmp_path, "d", "surgery", "--op", "sector")[0] == 2
    assert run(tmp_path, "e", "sample", "--p", "1.5")[0] == 2
    assert main(["no-such-command"]) == 2


def test_measure_without_enclosure_is_infeasible(tmp_path):
    snap = make_snapshot(tmp_path, L=3, p=0.0)
    assert run(tmp_path, "m", "measure", "--snapshot", snap, "--n", "2")[0] == 3


def test_surgery_verdicts(tmp_path):
    snap = make_snapshot(tmp_path)
    code, out = run(tmp_path, "s", "surgery", "--snapshot", snap, "--op", "shift",
                    "--F=-1,-1,1,1", "--G=2,2,3,3", "--shift=-5,-5", "--x", "3,0", "--y", "0,3")
    assert code == 0
    v = json.load(open(os.path.join(out, "verdict.json")))
    assert v["F_preserved"] and v["G_copied"]
    assert set(v["before"]) >= {"gac", "sector_path", "captured_area"}
    assert read_snapshot(open(os.path.join(out, "surgery.rcgrid")).read()).cfg.geom.half_width == 6
    # overlapping F and G is an input error
    code, _ = run(tmp_path, "t", "surgery", "--snapshot", snap, "--op", "shift",
                  "--F=-1,-1,1,1", "--G=0,0,2,2", "--shift=3,3")
    assert code == 2


def test_report_writes_plots(tmp_path):
    sd = scan_dir(tmp_path)
    code, out = run(tmp_path, "r", "report", "--scan", sd)
    assert code == 0
    rep = json.load(open(os.path.join(out, "report.json")))
    assert "fit_mlr.svg" in rep["plots"]
    assert "tail" in rep["errors"]  # 50 rows per n is below the tail minimum
