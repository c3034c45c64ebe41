import csv
import math

import numpy as np
import pytest

from tubalcs.algebra import t_product
from tubalcs.errors import DimensionMismatch, InvalidSpec, NonFinite, ParseError, ValidationError
from tubalcs.harness import experiment
from tubalcs.harness.cli import main, parse_gen_spec
from tubalcs.harness.config import parse_config
from tubalcs.harness.experiment import (
    iterations_to_threshold,
    psnr,
    run_experiment,
    summary_from_trace,
)
from tubalcs.harness.tensor_io import read_tensor, write_tensor
from tubalcs.recovery import RecoveryTrace

MINIMAL = """\
# minimal synthetic run
n1 = 20
n2 = 400
n3 = 20
r = 4
seed = 0
m0 = 200
mc = 100
"""

SMALL = """\
n1 = 6
n2 = 30
n3 = 3
r = 2
kappa = 1, 2
seed = 0, 1
m0 = 30
mc = 30
variant = pgd, scaled_pgd
T = 15
timing = false
"""


# config

def test_minimal_config_parses():
    cfg = parse_config(MINIMAL)
    assert (cfg.n1, cfg.n2, cfg.n3, cfg.r) == (20, 400, 20, 4)
    assert cfg.seeds == [0]
    assert len(cfg.runs()) == 1


def test_kappa_list_expands_runs():
    cfg = parse_config(MINIMAL + "kappa = 1,2,4\n")
    assert [run.kappa for run in cfg.runs()] == [1.0, 2.0, 4.0]


def test_missing_r_is_named():
    with pytest.raises(ValidationError) as info:
        parse_config(MINIMAL.replace("r = 4\n", ""))
    assert any("'r'" in err for err in info.value.errors)


def test_all_validation_errors_reported():
    text = MINIMAL.replace("r = 4\n", "") + "c_eta = 2\nvariant = pgd, sgd\ninit = warm\n"
    with pytest.raises(ValidationError) as info:
        parse_config(text)
    assert len(info.value.errors) == 4


def test_syntax_errors_carry_line_numbers():
    with pytest.raises(ParseError) as info:
        parse_config("n1 = 3\nthis is not valid\nbogus = 1\nn1 = 4\n")
    errors = info.value.errors
    assert [e.split(":")[0] for e in errors] == ["line 2", "line 3", "line 4"]


def test_type_errors():
    with pytest.raises(ValidationError) as info:
        parse_config(MINIMAL.replace("m0 = 200", "m0 = many") + "split = maybe\n")
    assert len(info.value.errors) == 2


def test_file_ground_truth_needs_no_dims(tmp_path):
    cfg = parse_config(f"ground_truth = file:{tmp_path / 'x.tns'}\nr = 2\nm0 = 5\nmc = 5\nseed = 3\n")
    assert cfg.truth_path == tmp_path / "x.tns"
    assert [run.kappa for run in cfg.runs()] == [None]


# metrics

def test_psnr_examples():
    x = np.random.default_rng(0).uniform(size=(4, 5, 3))
    assert np.all(np.isinf(psnr(x, x)))
    e = 0.01
    np.testing.assert_allclose(psnr(x, x + e), 10 * np.log10(1 / e**2))
    delta = np.random.default_rng(1).standard_normal(x.shape) * 1e-3
    np.testing.assert_allclose(psnr(x, x + delta) - psnr(x, x + 2 * delta), 20 * np.log10(2))
    with pytest.raises(DimensionMismatch):
        psnr(x, x[:, :4])
    with pytest.raises(ValueError):
        psnr(x, x, peak=0)


def test_iterations_to_threshold():
    errs = [1.0, 0.5, 0.05, 0.005, 0.03, 0.004, 0.001, 1e-5]
    # 0.005 dips below 1e-2 but climbs to 0.03 > 2e-2 afterwards
    assert iterations_to_threshold(errs, 1e-2) == 5
    assert iterations_to_threshold(errs, 1e-1) == 2
    assert iterations_to_threshold(errs, 1e-6) is None
    counts = [iterations_to_threshold(errs, t) for t in (1e-1, 1e-2, 1e-4)]
    assert counts == sorted(counts)


# tensor files

def test_tensor_round_trip(tmp_path):
    x = np.random.default_rng(2).standard_normal((3, 4, 5))
    write_tensor(tmp_path / "x.tns", x)
    raw = (tmp_path / "x.tns").read_bytes()
    assert raw[:4] == b"TNS3" and len(raw) == 16 + 8 * x.size
    # column-major inside each frontal slice, slices in order
    assert np.frombuffer(raw[16:24], "<f8")[0] == x[0, 0, 0]
    assert np.frombuffer(raw[24:32], "<f8")[0] == x[1, 0, 0]
    assert np.frombuffer(raw[16 + 8 * 12:16 + 8 * 13], "<f8")[0] == x[0, 0, 1]
    assert np.array_equal(read_tensor(tmp_path / "x.tns"), x)


def test_tensor_file_errors(tmp_path):
    (tmp_path / "bad.tns").write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(ValueError):
        read_tensor(tmp_path / "bad.tns")
    write_tensor(tmp_path / "x.tns", np.zeros((2, 2, 2)))
    (tmp_path / "short.tns").write_bytes((tmp_path / "x.tns").read_bytes()[:-8])
    with pytest.raises(ValueError):
        read_tensor(tmp_path / "short.tns")


# experiments

def test_experiment_outputs_are_consistent_and_deterministic(tmp_path):
    cfg = parse_config(SMALL)
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b", threads=3)
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(files) == 9
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    with open(tmp_path / "a" / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8
    for row in rows:
        trace_file = tmp_path / "a" / f"trace_{row['variant']}_kappa{float(row['kappa']):g}_seed{row['seed']}.csv"
        trace = RecoveryTrace.from_csv(trace_file)
        assert len(trace) == int(row["iterations"]) + 1
        again = summary_from_trace(trace_file)
        assert again["final_rel_err"] == float(row["final_rel_err"])
        assert again["iters_to_0.01"] == (int(row["iters_to_1e-2"]) if row["iters_to_1e-2"] else None)


def test_file_ground_truth_run(tmp_path):
    # nonnegative factors give a nonnegative product, scaled into [0, 1]
    rng = np.random.default_rng(4)
    x = t_product(rng.uniform(size=(5, 2, 3)), rng.uniform(size=(2, 20, 3)))
    write_tensor(tmp_path / "x.tns", x / x.max())
    cfg = parse_config(f"ground_truth = file:{tmp_path / 'x.tns'}\nr = 2\nm0 = 30\nmc = 30\nseed = 0\nT = 30\n")
    rows = run_experiment(cfg, tmp_path / "out")
    assert rows[0].psnr_mean is not None
    assert (tmp_path / "out" / "trace_scaled_pgd_kappafile_seed0.csv").exists()


def test_partial_results_survive_failure(tmp_path, monkeypatch):
    cfg = parse_config(SMALL)
    calls = {"n": 0}
    real_run = experiment.run

    def flaky(ensemble, y, scfg, x_star=None):
        calls["n"] += 1
        if calls["n"] == 3:
            trace = RecoveryTrace()
            trace.append(0, 0.5, 0.5, 0.5, None)
            raise NonFinite("iterate 1 is not finite", trace)
        return real_run(ensemble, y, scfg, x_star=x_star)

    monkeypatch.setattr(experiment, "run", flaky)
    with pytest.raises(NonFinite):
        run_experiment(cfg, tmp_path)
    with open(tmp_path / "summary.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 2
    assert len(list(tmp_path.glob("trace_*.csv"))) == 3


# CLI

def test_cli_gen_and_run(tmp_path, capsys):
    out = tmp_path / "x.tns"
    assert main(["gen", "--spec", "n1=5,n2=12,n3=3,r=2,kappa=2,seed=4", "--out", str(out)]) == 0
    assert read_tensor(out).shape == (5, 12, 3)
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"ground_truth = file:{out}\nr = 2\nm0 = 20\nmc = 20\nseed = 0\nT = 5\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "res")]) == 0
    assert (tmp_path / "res" / "summary.csv").exists()


def test_cli_reports_config_errors(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("r = 2\n")
    assert main(["run", "--config", str(cfg)]) == 2
    assert "missing required field" in capsys.readouterr().err


def test_cli_selftest(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 6 and "FAIL" not in out


def test_gen_spec_parsing():
    spec = parse_gen_spec("n1=20, n2=400, n3=20, r=4, kappa=2")
    assert (spec.n1, spec.kappa, spec.seed) == (20, 2.0, 0)
    for bad in ("n1=2,n2=3", "n1=2,n2=3,n3=2,r=1,depth=3", "n1=x,n2=3,n3=2,r=1"):
        with pytest.raises(InvalidSpec):
            parse_gen_spec(bad)
    assert math.isclose(parse_gen_spec("n1=3,n2=3,n3=1,r=1,kappa=1.5").kappa, 1.5)
