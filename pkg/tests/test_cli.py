import csv
import json
import math

import pytest
import yaml

from maxid.cli import EXIT_FLAGGED, EXIT_INVALID, EXIT_OK, dumps_json, main
from maxid.config import CONFIG_SCHEMA, bundled_configs, load_config, validate_config

SMALL_BR = {
    "seed": 3,
    "br": {"variogram": {"type": "power", "theta": 1.0, "alpha": 1.0},
           "grid": [0, 1, 2], "replicates": 4000, "levels": [1.0]},
}
SMALL_GAS = {"seed": 2, "gas": {"d": 2, "a": 0.5, "times": [0, 1], "replicates": 5000,
                                "oracle_log2_draws": 10}}


def write(tmp_path, name, doc):
    path = tmp_path / f"{name}.yaml"
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_bundled_configs_validate():
    names = bundled_configs()
    assert {"diagonal_exact", "finite_support_exact", "spikes_diag", "spectral_diag",
            "br_fbm", "br_dyadic", "gas_d1"} <= set(names)
    for name, path in names.items():
        doc = yaml.safe_load(path.read_text())
        (command,) = [c for c in ("exact", "diag", "br", "gas") if c in doc]
        assert validate_config(doc, command) == [], name


def test_empty_config_lists_errors(tmp_path, capsys):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    assert main(["exact", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    err = capsys.readouterr().err
    assert "'exact' is a required property" in err
    assert not (tmp_path / "o" / "summary.json").exists()


def test_all_schema_errors_reported():
    errors = validate_config({"gas": {"d": 5, "a": 0, "times": []}}, "gas")
    text = "\n".join(errors)
    assert "replicates" in text and "gas/d" in text and "gas/a" in text and "gas/times" in text


def test_malformed_yaml(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("gas: [unclosed\n")
    assert main(["gas", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert "malformed" in capsys.readouterr().err


def test_semantic_error_is_validation_error(tmp_path):
    doc = {"br": {"variogram": {"type": "power", "theta": 1, "alpha": 1},
                  "grid": [1, 2], "replicates": 10}}
    assert main(["br", "--config", write(tmp_path, "c", doc), "--out",
                 str(tmp_path / "o"), "--quiet"]) == EXIT_INVALID


def test_unknown_command_exits_2():
    with pytest.raises(SystemExit) as info:
        main(["plot"])
    assert info.value.code == 2


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["exact", "--config", "diagonal_exact", "--out", str(blocker / "sub"),
                 "--quiet"]) == EXIT_INVALID


def test_exact_diagonal_model(tmp_path):
    out = tmp_path / "o"
    assert main(["exact", "--config", "diagonal_exact", "--out", str(out), "--quiet"]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    (level,) = summary["levels"]
    assert level["classification"]["ergodic_verdict"] == "fail"
    assert abs(level["classification"]["cesaro_tail"] - 0.4) <= 1e-10
    assert level["cesaro_limit_exact"] == 0.4
    rows = read_csv(out / "tau.csv")
    assert len(rows) == 200 and all(float(r["abs_diff"]) <= 1e-10 for r in rows)
    assert {r["seed"] for r in rows} == {"0"}


def test_manifest_contents(tmp_path):
    out = tmp_path / "o"
    main(["diag", "--config", "spikes_diag", "--out", str(out), "--seed", "11", "--quiet"])
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 11 and manifest["command"] == "diag"
    assert manifest["wall_time_s"] >= 0 and "numpy" in manifest["versions"]
    assert manifest["config"]["diag"]["tol"] == 1e-3  # defaults are recorded
    assert set(manifest["outputs"]) == {"summary.json", "sequence.csv", "cesaro.csv"}
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seed"] == 11 and "wall_time_s" not in json.dumps(summary)


def test_spectral_diag_exact_columns(tmp_path):
    out = tmp_path / "o"
    assert main(["diag", "--config", "spectral_diag", "--out", str(out), "--quiet"]) == EXIT_OK
    s = json.loads((out / "summary.json").read_text())
    assert s["classification"]["ergodic_verdict"] == "fail"
    assert s["cesaro_abs_diff"] == pytest.approx(abs(s["cesaro"] - 0.3))
    assert s["cesaro_abs_diff"] <= s["cesaro_error_bound"]


def test_br_small_run_and_determinism(tmp_path):
    cfg = write(tmp_path, "br", SMALL_BR)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["br", "--config", cfg, "--out", str(a), "--quiet"]) == EXIT_OK
    assert main(["br", "--config", cfg, "--out", str(b), "--quiet"]) == EXIT_OK
    for name in ("summary.json", "r.csv", "tau.csv", "marginals.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rows = read_csv(a / "r.csv")
    assert [float(r["t"]) for r in rows] == [1.0, 2.0]
    for r in rows:
        assert float(r["abs_diff"]) == pytest.approx(abs(float(r["r_hat"]) - float(r["exact"])))


def test_seed_and_replicates_override(tmp_path):
    cfg = write(tmp_path, "br", SMALL_BR)
    a, b = tmp_path / "a", tmp_path / "b"
    main(["br", "--config", cfg, "--out", str(a), "--quiet"])
    main(["br", "--config", cfg, "--out", str(b), "--quiet", "--seed", "4", "--replicates", "2000"])
    sa = json.loads((a / "summary.json").read_text())
    sb = json.loads((b / "summary.json").read_text())
    assert sb["seed"] == 4 and sb["replicates"] == 2000 and sa["r"] != sb["r"]
    assert main(["exact", "--config", "diagonal_exact", "--replicates", "5",
                 "--out", str(tmp_path / "c"), "--quiet"]) == EXIT_INVALID


def test_json_format(tmp_path):
    out = tmp_path / "o"
    assert main(["gas", "--config", write(tmp_path, "g", SMALL_GAS), "--out", str(out),
                 "--format", "json", "--quiet"]) == EXIT_OK
    doc = json.loads((out / "tau.json").read_text())
    assert doc["seed"] == 2 and len(doc["rows"]) == 2
    for row in doc["rows"]:
        assert {"tau_hat", "se", "exact", "abs_diff", "bound"} <= set(row)
        assert row["bound_ok"]


def test_flagged_run_exits_3(tmp_path, capsys):
    doc = {"seed": 1, "gas": {"d": 1, "a": 5.0, "times": [0, 1], "replicates": 200,
                              "oracle_log2_draws": 8}}
    out = tmp_path / "o"
    assert main(["gas", "--config", write(tmp_path, "g", doc), "--out", str(out)]) == EXIT_FLAGGED
    assert "FLAG" in capsys.readouterr().out
    summary = json.loads((out / "summary.json").read_text())
    assert summary["flags"] and summary["tau"][0]["tau_hat"] is None  # NaN becomes null
    assert json.loads((out / "manifest.json").read_text())["exit_status"] == EXIT_FLAGGED


def test_threshold_truncation_flagged(tmp_path):
    doc = {"br": {"variogram": {"type": "power", "theta": 1.0, "alpha": 1.0}, "grid": [0, 1],
                  "replicates": 1000, "method": "threshold", "max_count": 5}}
    assert main(["br", "--config", write(tmp_path, "b", doc), "--out", str(tmp_path / "o"),
                 "--quiet"]) == EXIT_FLAGGED


def test_exceptional_requires_dyadic(tmp_path):
    doc = {"br": {**SMALL_BR["br"], "exceptional": {"eps": [0.1], "n_max": 3}}}
    assert main(["br", "--config", write(tmp_path, "b", doc), "--out", str(tmp_path / "o"),
                 "--quiet"]) == EXIT_INVALID


def test_small_dyadic_exceptional_csv(tmp_path):
    doc = {"br": {"variogram": {"type": "dyadic"}, "grid": [0, 1, 2, 4], "replicates": 2000,
                  "sigma2_powers": 6, "exceptional": {"eps": [0.1], "n_max": 6}}}
    out = tmp_path / "o"
    assert main(["br", "--config", write(tmp_path, "b", doc), "--out", str(out), "--quiet"]) == EXIT_OK
    rows = read_csv(out / "exceptional.csv")
    assert [int(r["n"]) for r in rows] == list(range(1, 7))
    for r in rows:
        assert float(r["measured"]) <= float(r["bound"]) + float(r["resolution"])
        assert float(r["bound"]) == pytest.approx(6 * 0.1 * 2 ** int(r["n"]))
    powers = read_csv(out / "sigma2_powers.csv")
    assert all(float(r["sigma2"]) <= 2 * math.pi**2 / 3 + 1e-6 for r in powers)


def test_report_runs_listed_configs(tmp_path):
    doc = {"report": {"configs": ["diagonal_exact", write(tmp_path, "g", SMALL_GAS)]}}
    out = tmp_path / "o"
    assert main(["report", "--config", write(tmp_path, "r", doc), "--out", str(out),
                 "--quiet"]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["runs"]) == {"diagonal_exact", "g"}
    assert (out / "diagonal_exact" / "manifest.json").exists()
    assert read_csv(out / "runs.csv")[0]["exit_status"] == "0"


def test_report_rejects_missing_entry(tmp_path):
    doc = {"report": {"configs": ["no_such_config"]}}
    assert main(["report", "--config", write(tmp_path, "r", doc), "--out", str(tmp_path / "o"),
                 "--quiet"]) == EXIT_INVALID


def test_default_output_root_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv("MAXID_OUT_ROOT", str(tmp_path))
    assert main(["exact", "--config", "diagonal_exact", "--quiet"]) == EXIT_OK
    assert (tmp_path / "exact-diagonal_exact" / "summary.json").exists()


def test_load_config_fills_defaults(tmp_path):
    doc = load_config(write(tmp_path, "g", SMALL_GAS), "gas")
    assert doc["gas"]["block_size"] == 8192 and doc["seed"] == 2
    assert CONFIG_SCHEMA["properties"]["gas"]["additionalProperties"] is False


def test_dumps_json_is_rfc_compliant():
    text = dumps_json({"b": float("nan"), "a": [1, float("inf")]})
    assert json.loads(text) == {"a": [1, None], "b": None}
    assert text.index('"a"') < text.index('"b"')
