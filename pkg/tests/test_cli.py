import csv
import subprocess
import sys

import pytest

from tfac.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_IO, EXIT_OK, main
from tfac.config import ConfigError, RunConfig, build_config, dump_config, parse_config, read_config_file


def _rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def test_study_defaults():
    cfg = parse_config(["study", "--example", "6.1", "--alpha", "0.8", "--N", "8,16,32,64"])
    assert cfg.gamma == pytest.approx(2.6)
    assert cfg.nu == pytest.approx(0.4)
    assert cfg.N == (8, 16, 32, 64)
    assert (cfg.k, cfg.coupling, cfg.delta, cfg.kappa, cfg.T) == (1, "h=1/(2N)", 2.0, 1.0, 1.0)


def test_case_parameters_fill_in():
    cfg = parse_config(["study", "--example", "6.2", "--alpha", "0.6", "--N", "4,8"])
    assert (cfg.kappa, cfg.T, cfg.domain) == (0.5, 0.5, (-1.0, 1.0, -1.0, 1.0))


def test_kernels_config():
    cfg = parse_config(["kernels", "--alpha", "0.5", "--gamma", "1", "--N", "32"])
    assert (cfg.command, cfg.gamma, cfg.N) == ("kernels", 1.0, (32,))


@pytest.mark.parametrize(
    "argv,key",
    [
        (["study", "--example", "6.1", "--alpha", "0.8", "--nu", "0.6"], "nu"),
        (["study", "--example", "6.1", "--alpha", "1.2"], "alpha"),
        (["study", "--example", "9.9", "--alpha", "0.5"], "example"),
        (["study", "--alpha", "0.5"], "example"),
        (["study", "--example", "6.1", "--alpha", "0.5", "--N", "16,8"], "N"),
        (["solve", "--example", "6.1", "--alpha", "0.5", "--N", "8,16"], "N"),
        (["kernels", "--alpha", "0.5", "--gamma", "0.5"], "gamma"),
        (["kernels", "--N", "8"], "alpha"),
        (["mesh-info"], "nx"),
        (["mesh-info", "--nx", "2", "--k", "3"], "k"),
        (["gronwall", "--alpha", "0.5", "--delta", "1"], "delta"),
    ],
)
def test_rejected_values_name_the_key(argv, key):
    with pytest.raises(ConfigError) as err:
        parse_config(argv)
    assert err.value.key == key


def test_missing_example_lists_cases():
    with pytest.raises(ConfigError, match="6.1, 6.2, 6.3, 6.4"):
        parse_config(["solve", "--alpha", "0.5"])


def test_unknown_file_key_rejected(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("command = kernels\nalpha = 0.5\nsigma = 2\n", encoding="utf-8")
    with pytest.raises(ConfigError) as err:
        parse_config(["kernels", "--config", str(p)])
    assert err.value.key == "sigma"


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as err:
        main(["kernels", "--alpha", "0.5", "--bogus", "1"])
    assert err.value.code == 2


def test_flags_override_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# study\ncommand = study\nexample = 6.1\nalpha = 0.4\nN = 4, 8\n", encoding="utf-8")
    cfg = parse_config(["study", "--config", str(p), "--alpha", "0.8"])
    assert cfg.alpha == 0.8 and cfg.N == (4, 8)
    assert cfg.gamma == pytest.approx(2.6)


def test_file_command_must_match(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("command = study\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        parse_config(["kernels", "--config", str(p), "--alpha", "0.5"])


def test_duplicate_and_malformed_lines(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text("alpha = 0.5\nalpha = 0.6\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="duplicate"):
        read_config_file(p)
    p.write_text("alpha 0.5\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="key = value"):
        read_config_file(p)
    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "missing.cfg")


@pytest.mark.parametrize(
    "argv",
    [
        ["study", "--example", "6.3", "--alpha", "0.3", "--N", "4,8,16", "--kappa-in-flux-term", "false"],
        ["solve", "--example", "6.1", "--alpha", "0.71", "--N", "8", "--snapshots", "1,8", "-o", "out dir"],
        ["kernels", "--alpha", "0.5", "--gamma", "1", "--N", "8,32", "--dump-tables"],
        ["gronwall", "--alpha", "0.123456789", "--seeds", "7", "--seed", "3"],
        ["mesh-info", "--nx", "3", "--ny", "5", "--domain=-1,1,0,2.5"],
    ],
)
def test_config_round_trip(tmp_path, argv):
    cfg = parse_config(argv)
    p = tmp_path / "echo.cfg"
    p.write_text(dump_config(cfg), encoding="utf-8")
    again = build_config(read_config_file(p))
    assert again == cfg
    assert dump_config(again) == dump_config(cfg)


def test_build_config_accepts_typed_values():
    cfg = build_config({"command": "gronwall", "alpha": 0.5, "N": (16,)})
    assert isinstance(cfg, RunConfig) and cfg.seeds == 100


def test_gronwall_hundred_seeds(tmp_path, capsys):
    out = tmp_path / "g"
    assert main(["gronwall", "--seeds", "100", "--alpha", "0.5", "-o", str(out)]) == EXIT_OK
    rows = _rows(f"{out}.csv")
    assert len(rows) == 100
    assert all(r["holds"] == "true" for r in rows)
    assert [int(r["seed"]) for r in rows] == list(range(100))
    assert "100/100" in capsys.readouterr().out


def test_mesh_info_counts(tmp_path, capsys):
    out = tmp_path / "m.txt"
    assert main(["mesh-info", "--nx", "4", "--ny", "4", "-o", str(out)]) == EXIT_OK
    text = capsys.readouterr().out
    counts = {}
    for line in text.splitlines()[2:]:
        name, value = [c.strip() for c in line.strip("|").split("|")]
        counts[name] = value
    # 25 vertices, 32 triangles, V - E + F = 1 gives 56 edges, 16 on the boundary
    assert counts["vertices"] == "25" and counts["triangles"] == "32"
    assert counts["edges"] == "56" and counts["boundary edges"] == "16"
    assert counts["flux dofs"] == str(2 * 56 + 2 * 32) and counts["scalar dofs"] == str(3 * 32)
    assert counts["cell width x"] == "0.25" and counts["diameter"] == "0.3536"
    assert out.exists()


def test_mesh_info_lowest_order(capsys):
    assert main(["mesh-info", "--nx", "2", "--k", "0"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "| flux dofs      | 16" in text and "| scalar dofs    | 8 " in text


def test_kernels_with_dump(tmp_path, capsys):
    out = tmp_path / "k"
    assert main(["kernels", "--alpha", "0.5", "--gamma", "1", "--N", "4,32", "--dump-tables", "-o", str(out)]) == EXIT_OK
    rows = _rows(f"{out}.csv")
    assert {r["item"] for r in rows} == set("abcdefg") and len(rows) == 14
    assert all(r["status"] in ("pass", "vacuous") for r in rows)
    K = _rows(f"{out}_N4_K.csv")
    assert len(K) == 10 and (K[0]["row"], K[0]["col"]) == ("1", "1")
    raw = open(f"{out}_N4_P.csv", "rb").read()
    assert b"\r" not in raw and raw.startswith(b"row,col,value\n")
    assert "| N " in capsys.readouterr().out


def test_study_writes_csv_and_markdown(tmp_path, capsys):
    out = tmp_path / "sub" / "s"
    assert main(["study", "--example", "6.1", "--alpha", "0.99", "--N", "2,4", "-o", str(out)]) == EXIT_OK
    rows = _rows(f"{out}.csv")
    assert [r["N"] for r in rows] == ["2", "4"] and rows[1]["R_u_h"] != ""
    md = (tmp_path / "sub" / "s.md").read_text(encoding="utf-8")
    assert md == capsys.readouterr().out
    table = [ln for ln in md.splitlines() if ln.startswith("|")]
    assert [ln.split("|")[1].strip() for ln in table][0] == "N"
    assert len(table) == 10 and len({len(ln) for ln in table}) == 1


def test_solve_writes_summary(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["solve", "--example", "6.1", "--alpha", "0.5", "--N", "4", "--coupling", "fixed", "--nx", "4", "-o", str(out)])
    assert code == EXIT_OK
    summary = {r["quantity"]: r["value"] for r in _rows(out / "summary.csv")}
    assert float(summary["E_u"]) > 0 and summary["step condition met"] == "False"
    assert "not certified" in capsys.readouterr().err


def test_config_error_exit_code(capsys):
    assert main(["study", "--example", "6.1", "--alpha", "0.8", "--nu", "0.6"]) == EXIT_CONFIG
    assert "nu" in capsys.readouterr().err


def test_failed_check_exit_code(tmp_path, capsys):
    # an offset this far above alpha/2 breaks kernel monotonicity
    out = tmp_path / "k"
    assert main(["kernels", "--alpha", "0.1", "--nu", "0.3", "--N", "2,8", "-o", str(out)]) == EXIT_FAIL
    err = capsys.readouterr().err
    assert err.count("FAILED") == 2 and "N=8 kernel tables" in err
    assert [r["status"] for r in _rows(f"{out}.csv")] == ["fail", "fail"]


def test_io_error_exit_code(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = main(["gronwall", "--alpha", "0.5", "--seeds", "1", "-o", str(blocker / "g")])
    assert code == EXIT_IO
    assert str(blocker) in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "tfac.cli", "mesh-info", "--nx", "1"], capture_output=True, text=True)
    assert proc.returncode == 0 and "triangles" in proc.stdout
