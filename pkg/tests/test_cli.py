import json

import pytest

from reidgallery import runner
from reidgallery.cli import main


@pytest.fixture
def small_sim(tmp_path):
    cfg = tmp_path / "drift.json"
    cfg.write_text(json.dumps({"num_entities": 8, "num_days": 5, "dim": 16, "seed": 11}))
    out = tmp_path / "data"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    return out


def test_simulate_outputs(small_sim):
    for name in ("manifest.csv", "embeddings_A.pbeb", "embeddings_R.pbeb", "t00.json",
                 "t01.json", "t02.json", "simulation.txt"):
        assert (small_sim / name).exists()


def test_run_creates_reports(small_sim, capsys):
    assert main(["run", "--config", str(small_sim / "t01.json")]) == 0
    for variant in ("A", "R"):
        assert (small_sim / "reports" / f"t01_{variant}.csv").exists()
        assert (small_sim / "reports" / f"t01_{variant}.json").exists()
    assert "t01_A.csv" in capsys.readouterr().out


def test_run_single_variant(small_sim):
    assert main(["run", "--config", str(small_sim / "t02.json"), "--variant", "R"]) == 0
    assert (small_sim / "reports" / "t02_R.csv").exists()
    assert not (small_sim / "reports" / "t02_A.csv").exists()


def test_run_unknown_variant_is_data_error(small_sim):
    assert main(["run", "--config", str(small_sim / "t02.json"), "--variant", "Q"]) == 2


def test_run_missing_config(tmp_path, capsys):
    assert main(["run"]) == 1
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_flag():
    assert main(["run", "--bogus"]) == 1
    assert main([]) == 1


def test_compare(small_sim):
    for preset in ("t00", "t01"):
        assert main(["run", "--config", str(small_sim / f"{preset}.json"), "--variant", "A"]) == 0
    rep = small_sim / "reports"
    out = small_sim / "cmp.csv"
    assert main(["compare", str(rep / "t00_A.csv"), str(rep / "t01_A.csv"), "--out", str(out)]) == 0
    cmp = runner.parse_comparison(out.read_text())
    t00 = runner.load_report(rep / "t00_A.csv")
    t01 = runner.load_report(rep / "t01_A.csv")
    expected = t01.summary["rank1"].mean - t00.summary["rank1"].mean
    assert cmp.delta("T01/A", "T00/A", "rank1") == expected
    assert any(line.startswith("delta,T01/A,T00/A,") for line in out.read_text().splitlines())


def test_compare_needs_two(small_sim):
    main(["run", "--config", str(small_sim / "t00.json"), "--variant", "A"])
    assert main(["compare", str(small_sim / "reports" / "t00_A.csv")]) == 2


def test_validate(small_sim, capsys):
    code = main(["validate", "--manifest", str(small_sim / "manifest.csv"), "--entities", "8",
                 "--expected-total", str(8 * 3 * 5)])
    assert code == 0
    out = capsys.readouterr().out
    assert "deviation=+0" in out and "day 5 (04a)" in out


def test_validate_bad_manifest(tmp_path):
    bad = tmp_path / "m.csv"
    bad.write_text("nope\n")
    assert main(["validate", "--manifest", str(bad)]) == 2


def test_corrupt_embeddings_is_data_error(small_sim):
    (small_sim / "embeddings_A.pbeb").write_bytes(b"PBEB\x01")
    assert main(["run", "--config", str(small_sim / "t01.json"), "--variant", "A"]) == 2
