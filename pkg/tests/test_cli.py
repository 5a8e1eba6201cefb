import csv
import hashlib
import json
import math

import pytest
import yaml

from fieldprobe import cli
from fieldprobe.field import SmearingProfile
from fieldprobe.von_neumann import delta_F_massless_closed


def write_cfg(tmp_path, cfg, name="run.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return p


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# -- validation --------------------------------------------------------------------------

@pytest.mark.parametrize("model", ["von_neumann", "udw"])
def test_default_configs_are_clean(model):
    assert cli.validate({"model": model}) == []


def test_valid_qbm_config_has_no_diagnostics():
    cfg = {"model": "qbm", "params": {"gamma_ratio": 0.5, "pulse": {"distance": 20.0}}}
    assert cli.validate(cfg) == []


def test_overcritical_qbm_names_constraint():
    diags = cli.validate({"model": "qbm", "params": {"omega0": 1.0, "lambda": 5.0}})
    assert [d.level for d in diags] == ["error"]
    assert "omega_bar^2" in diags[0].message


def test_switching_noise_warning():
    diags = cli.validate({"model": "udw", "params": {"s_T": 0.5, "levels": [[1.0, 1.0]]}})
    assert any(d.level == "warning" and "switching noise regime" in d.message for d in diags)


def test_perturbative_validity_warning():
    diags = cli.validate({"model": "udw", "params": {"lambda": 400.0, "s_X": 0.5, "s_T": 1.0,
                                                     "levels": [[1.0, 1.0]]}})
    assert any("perturbative validity" in d.message for d in diags)


def test_markovian_and_transient_warnings():
    diags = cli.validate({"model": "qbm", "params": {"gamma_ratio": 0.01, "cutoff_ratio": 50.0}})
    msgs = " | ".join(d.message for d in diags)
    assert "Markovian validity" in msgs and "transient threshold" in msgs
    assert all(d.level == "warning" for d in diags)


def test_all_violations_reported():
    diags = cli.validate({"model": "von_neumann", "bogus": 1,
                          "params": {"s_x": 1.0, "lambda": 1.0},
                          "numerics": {"rtol": -1.0}, "output": {"format": "xml"}})
    msgs = [d.message for d in diags]
    assert any("'bogus'" in m for m in msgs)
    assert any("params.s_x" in m for m in msgs)
    assert any("rtol" in m for m in msgs)
    assert any("output.format" in m for m in msgs)


def test_sweep_parameter_must_be_scalar_field():
    diags = cli.validate({"model": "udw", "sweep": {"parameter": "packet", "min": 1, "max": 2, "count": 2}})
    assert any("sweep.parameter" in d.message for d in diags)
    diags = cli.validate({"model": "udw", "sweep": {"parameter": "s_T", "min": 1, "max": 2, "count": 0}})
    assert any("sweep.count" in d.message for d in diags)


def test_sweep_points():
    cfg, diags = cli.parse_config({"model": "von_neumann",
                                   "sweep": {"parameter": "s_T", "min": 0.1, "max": 10, "count": 3,
                                             "spacing": "log"}})
    assert diags == []
    assert [v for v, _ in cfg.points()] == pytest.approx([0.1, 1.0, 10.0])


def test_model_mismatch():
    _, diags = cli.parse_config({"model": "udw"}, "qbm")
    assert diags and "does not match" in diags[0].message


# -- runs ------------------------------------------------------------------------------------

def test_von_neumann_single_point(tmp_path):
    cfg = write_cfg(tmp_path, {"model": "von_neumann", "params": {"lambda": 2.0, "s_X": 1.0, "s_T": 3.0}})
    out = tmp_path / "out"
    assert cli.main(["von-neumann", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_csv(out / "von_neumann.csv")
    assert len(rows) == 1 and rows[0]["status"] == "ok"
    closed = delta_F_massless_closed(SmearingProfile(2.0, 1.0, 3.0))
    assert float(rows[0]["delta_F_closed"]) == closed
    assert float(rows[0]["delta_F"]) == pytest.approx(closed, rel=1e-6)
    assert float(rows[0]["noise_bound"]) == pytest.approx(math.sqrt(closed), rel=1e-6)
    assert float(rows[0]["noise_N"]) >= float(rows[0]["noise_bound"])


def test_count_one_sweep(tmp_path):
    cfg = write_cfg(tmp_path, {"model": "von_neumann", "sweep": {"parameter": "s_T", "min": 2.0, "count": 1}})
    out = tmp_path / "out"
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert [p["status"] for p in man["points"]] == ["ok"]
    assert len(read_csv(out / "von_neumann.csv")) == 1


def test_manifest_complete_and_digests_match(tmp_path):
    cfg = write_cfg(tmp_path, {"model": "udw",
                               "sweep": {"parameter": "s_T", "min": 2.0, "max": 6.0, "count": 3}})
    out = tmp_path / "out"
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(out), "--workers", "1"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert len(man["points"]) == 3
    for name, digest in man["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert man["config"]["params"]["packet"]["k0"] == 1.0
    assert man["version"]


def test_csv_round_trips_seventeen_digits(tmp_path):
    cfg = write_cfg(tmp_path, {"model": "von_neumann"})
    out = tmp_path / "out"
    cli.main(["von-neumann", "--config", str(cfg), "--out", str(out)])
    text = (out / "von_neumann.csv").read_text().splitlines()
    assert text[0] == "index,delta_F,delta_F_closed,noise_N,noise_bound,mean_X,var_X,snr,status"
    closed = delta_F_massless_closed(SmearingProfile(1.0, 1.0, 1.0))
    assert float(text[1].split(",")[2]) == closed


def test_json_output(tmp_path):
    cfg = write_cfg(tmp_path, {"model": "von_neumann"})
    out = tmp_path / "out"
    assert cli.main(["von-neumann", "--config", str(cfg), "--out", str(out), "--format", "json"]) == 0
    doc = json.loads((out / "von_neumann.json").read_text())
    assert doc["columns"][-1] == "status" and len(doc["rows"]) == 1


def test_crash_isolation(tmp_path, monkeypatch):
    real = cli._eval_point

    def flaky(model, p, numerics):
        if p["s_T"] == 2.0:
            raise ArithmeticError("injected failure")
        return real(model, p, numerics)

    monkeypatch.setattr(cli, "_eval_point", flaky)
    cfg = write_cfg(tmp_path, {"model": "von_neumann",
                               "sweep": {"parameter": "s_T", "min": 1.0, "max": 3.0, "count": 3}})
    out = tmp_path / "out"
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(out), "--workers", "1"]) == 2
    rows = read_csv(out / "von_neumann.csv")
    assert [r["status"] for r in rows] == ["ok", "error", "ok"]
    assert rows[1]["delta_F"] == "nan"
    man = json.loads((out / "manifest.json").read_text())
    assert "injected failure" in man["points"][1]["message"]


def test_exit_codes(tmp_path):
    missing = tmp_path / "nope.yaml"
    assert cli.main(["validate", "--config", str(missing)]) == 3
    bad = write_cfg(tmp_path, {"model": "von_neumann", "params": {"s_X": -1.0}}, "bad.yaml")
    assert cli.main(["von-neumann", "--config", str(bad)]) == 1
    assert cli.main(["validate", "--config", str(bad)]) == 1
    ok = write_cfg(tmp_path, {"model": "von_neumann"}, "ok.yaml")
    assert cli.main(["validate", "--config", str(ok)]) == 0
    assert cli.main(["sweep", "--config", str(ok)]) == 1  # no sweep block
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["von-neumann", "--config", str(ok), "--out", str(blocker / "sub")]) == 3


def test_invalid_config_writes_nothing(tmp_path):
    bad = write_cfg(tmp_path, {"model": "udw", "params": {"levels": [[-1.0, 1.0]]}})
    out = tmp_path / "out"
    assert cli.main(["udw", "--config", str(bad), "--out", str(out)]) == 1
    assert not out.exists()


def test_determinism_across_worker_counts(tmp_path):
    cfg = write_cfg(tmp_path, {"model": "qbm", "params": {"cutoff_ratio": 100.0},
                               "sweep": {"parameter": "gamma_ratio", "min": 0.5, "max": 5.0,
                                         "count": 3, "spacing": "log"}})
    blobs = []
    for w in ("1", "2"):
        out = tmp_path / f"w{w}"
        assert cli.main(["sweep", "--config", str(cfg), "--out", str(out), "--workers", w]) == 0
        blobs.append((out / "qbm.csv").read_bytes())
    assert blobs[0] == blobs[1]
