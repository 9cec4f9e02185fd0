import pytest

from hideseek.bench import parse_report
from hideseek.cli import USAGE_EXIT, build_parser, main


BENCH_FAST = [
    "bench", "--envs", "4", "--agents", "1", "--steps", "8",
    "--workers", "1", "--repeats", "1", "--warmup-s", "0",
]


def test_bench_writes_csv(tmp_path):
    out = tmp_path / "report.csv"
    rc = main(BENCH_FAST + ["--mode", "Void", "--out", str(out)])
    assert rc == 0
    report = parse_report(out.read_text())
    assert len(report.rows) == 1
    assert report.rows[0].envs == 4 and report.rows[0].workers == 1


def test_bench_markdown_stdout(capsys):
    rc = main(BENCH_FAST + ["--mode", "Void", "--format", "markdown"])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.startswith("| variant |")


def test_bench_grid_and_variant(tmp_path):
    out = tmp_path / "r.csv"
    rc = main(
        ["bench", "--envs", "2,4", "--agents", "1", "--steps", "8", "--workers", "1",
         "--repeats", "1", "--warmup-s", "0", "--variant", "tuple_pack",
         "--mode", "Void", "--out", str(out)]
    )
    assert rc == 0
    rows = parse_report(out.read_text()).rows
    assert [r.envs for r in rows] == [2, 4]
    assert all(r.variant == "tuple_pack" for r in rows)


def test_bench_usage_errors(capsys):
    assert main(BENCH_FAST + ["--mode", "NoSuchMode"]) == USAGE_EXIT
    assert "hideseek bench" in capsys.readouterr().err
    assert main(["bench", "--envs", "100", "--steps", "8", "--workers", "1",
                 "--repeats", "1", "--warmup-s", "0"]) == USAGE_EXIT


def test_bench_bad_int_list():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["bench", "--envs", "four"])


def test_env_overrides(tmp_path, monkeypatch):
    out = tmp_path / "r.csv"
    monkeypatch.setenv("HIDESEEK_WORKERS", "2")
    monkeypatch.setenv("HIDESEEK_WAIT_POLICY", "spin")
    monkeypatch.setenv("HIDESEEK_UNPADDED", "1")
    rc = main(["bench", "--envs", "4", "--steps", "8", "--repeats", "1",
               "--warmup-s", "0", "--mode", "Void", "--out", str(out)])
    assert rc == 0
    row = parse_report(out.read_text()).rows[0]
    assert row.workers == 2
    assert row.variant == "unpadded_stride"


def test_flag_beats_env(tmp_path, monkeypatch):
    out = tmp_path / "r.csv"
    monkeypatch.setenv("HIDESEEK_WORKERS", "7")
    rc = main(BENCH_FAST + ["--mode", "Void", "--out", str(out)])
    assert rc == 0
    assert parse_report(out.read_text()).rows[0].workers == 1


def test_smoke_train_csv(tmp_path):
    out = tmp_path / "curve.csv"
    rc = main(["smoke-train", "--steps", "2000", "--seed", "1", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "step,mean_return,sem"
    assert len(lines) >= 2


def test_smoke_train_usage_error(capsys):
    assert main(["smoke-train", "--steps", "0"]) == USAGE_EXIT
    assert "smoke-train" in capsys.readouterr().err


def test_missing_subcommand():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
