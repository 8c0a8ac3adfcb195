"""End-to-end command line runs, exercised in process through main()."""

import numpy as np
import pytest

from fireflynet.cli import RUN_KEY_HELP, SWEEPABLE, main
from fireflynet.patterns import Pattern, gaussian_2d, save_pattern_csv
from fireflynet.trainer import CONFIG_KEY_HELP


SMALL = ["--set", "n=9", "--set", "rows=3", "--set", "cols=3", "--set", "epochs=1"]


def write_patterns(dirpath, count=2):
    dirpath.mkdir(parents=True, exist_ok=True)
    centers = [(1.0, 1.0), (1.5, 1.5), (0.5, 1.5)]
    for k in range(count):
        cx, cy = centers[k % len(centers)]
        save_pattern_csv(gaussian_2d(3, 3, cx, cy, 1.0, 1.0), dirpath / f"p{k}.csv")


def train_small_model(tmp_path):
    pats = tmp_path / "pats"
    write_patterns(pats)
    model_dir = tmp_path / "model"
    code = main(["train", "--patterns", str(pats), "--out", str(model_dir), *SMALL])
    assert code == 0
    return model_dir


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def test_train_writes_a_complete_model(tmp_path, capsys):
    model_dir = train_small_model(tmp_path)
    for name in ("w_matrix.csv", "config.cfg", "training_summary.csv", "trace_final.csv"):
        assert (model_dir / name).exists()
    assert sorted(p.name for p in (model_dir / "templates").iterdir()) == [
        "t0_p0.csv",
        "t1_p1.csv",
    ]
    out = capsys.readouterr().out
    assert "trained on 2 patterns" in out
    summary = (model_dir / "training_summary.csv").read_text().splitlines()
    assert summary[0] == "presentation,steps,converged,final_max_rhs"
    assert len(summary) == 3


def test_train_requires_an_output_directory(tmp_path, capsys):
    pats = tmp_path / "pats"
    write_patterns(pats)
    assert main(["train", "--patterns", str(pats), *SMALL]) == 2
    assert "output directory" in capsys.readouterr().err


def test_train_rejects_missing_or_empty_pattern_dirs(tmp_path, capsys):
    out = tmp_path / "model"
    assert main(["train", "--patterns", str(tmp_path / "nowhere"), "--out", str(out), *SMALL]) == 3
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["train", "--patterns", str(empty), "--out", str(out), *SMALL]) == 3
    err = capsys.readouterr().err
    assert "data error" in err


def test_train_rejects_patterns_of_the_wrong_size(tmp_path):
    pats = tmp_path / "pats"
    pats.mkdir()
    save_pattern_csv(Pattern(np.ones(4), grid=(2, 2)), pats / "tiny.csv")
    code = main(["train", "--patterns", str(pats), "--out", str(tmp_path / "m"), *SMALL])
    assert code == 3


# ---------------------------------------------------------------------------
# recall
# ---------------------------------------------------------------------------

def test_recall_round_trip(tmp_path, capsys):
    model_dir = train_small_model(tmp_path)
    cue = tmp_path / "cue.csv"
    save_pattern_csv(gaussian_2d(3, 3, 1.0, 1.0, 1.0, 1.0), cue)
    out = tmp_path / "recall"
    code = main(["recall", "--model", str(model_dir), "--cue", str(cue), "--out", str(out)])
    assert code == 0
    assert (out / "pattern_output.csv").exists()
    assert (out / "pattern_output.pgm").exists()
    report = (out / "report.txt").read_text()
    assert "cosine = " in report and "best_match_label = " in report
    assert "cosine = " in capsys.readouterr().out


def test_recall_accepts_config_overrides(tmp_path):
    model_dir = train_small_model(tmp_path)
    cue = tmp_path / "cue.csv"
    save_pattern_csv(gaussian_2d(3, 3, 1.0, 1.0, 1.0, 1.0), cue)
    out = tmp_path / "recall2"
    code = main(
        [
            "recall",
            "--model",
            str(model_dir),
            "--cue",
            str(cue),
            "--out",
            str(out),
            "--set",
            "recall_iterations=2",
        ]
    )
    assert code == 0


def test_recall_reports_broken_cue_files(tmp_path, capsys):
    model_dir = train_small_model(tmp_path)
    cue = tmp_path / "cue.csv"
    cue.write_text("")
    code = main(["recall", "--model", str(model_dir), "--cue", str(cue), "--out", str(tmp_path / "r")])
    assert code == 3
    err = capsys.readouterr().err
    assert "data error" in err and "cue.csv" in err


def test_recall_requires_model_and_cue(tmp_path, capsys):
    assert main(["recall", "--out", str(tmp_path / "r")]) == 2
    assert "recall requires" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------

def test_experiment_writes_artifacts_and_echo(tmp_path, capsys):
    out = tmp_path / "exp"
    code = main(["experiment", "evolve1d", "--set", "n=25", "--out", str(out), "--seed", "0"])
    assert code == 0
    for name in (
        "w_matrix_initial.csv",
        "w_matrix_final.csv",
        "weight_row_12.csv",
        "config_echo.cfg",
        "report.txt",
        "metrics.csv",
    ):
        assert (out / name).exists()
    assert "experiment = evolve1d" in capsys.readouterr().out
    assert "n = 25" in (out / "config_echo.cfg").read_text()


def test_experiment_runs_are_byte_identical(tmp_path):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        code = main(["experiment", "evolve1d", "--set", "n=25", "--out", str(out), "--seed", "3"])
        assert code == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    assert names == sorted(p.name for p in outs[1].iterdir())
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_experiment_rejects_unknown_names_and_keys(tmp_path, capsys):
    assert main(["experiment", "teleport", "--set", "n=25", "--out", str(tmp_path / "x")]) == 2
    assert main(["experiment", "evolve1d", "--set", "warp=9", "--out", str(tmp_path / "y")]) == 2
    err = capsys.readouterr().err
    assert "unknown experiment" in err and "unknown config key" in err


def test_experiment_requires_a_name(tmp_path, capsys):
    assert main(["experiment", "--out", str(tmp_path / "x")]) == 2
    assert "requires a name" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def sweep_args(out, jobs=None):
    args = [
        "sweep",
        "--set",
        "experiment=evolve1d",
        "--set",
        "n=25",
        "--set",
        "sweep.alpha=0.005,0.01,0.02",
        "--set",
        "seeds=0,1,2",
        "--out",
        str(out),
    ]
    if jobs is not None:
        args += ["--jobs", str(jobs)]
    return args


def test_sweep_crosses_parameters_with_seeds(tmp_path, capsys):
    out = tmp_path / "sweep"
    assert main(sweep_args(out)) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("run,alpha,seed,")
    assert len(lines) == 10
    assert lines[1].startswith("0,0.005,0,")
    assert lines[9].startswith("8,0.02,2,")
    for k in range(9):
        assert (out / f"run_{k:03d}" / "report.txt").exists()
    assert "9 runs" in capsys.readouterr().out


def test_sweep_parallel_matches_serial(tmp_path):
    serial = tmp_path / "serial"
    parallel = tmp_path / "parallel"
    assert main(sweep_args(serial)) == 0
    assert main(sweep_args(parallel, jobs=2)) == 0
    assert (serial / "sweep.csv").read_bytes() == (parallel / "sweep.csv").read_bytes()


def test_sweep_rejects_structural_keys(tmp_path, capsys):
    code = main(
        [
            "sweep",
            "--set",
            "experiment=evolve1d",
            "--set",
            "sweep.boundary=open,periodic",
            "--out",
            str(tmp_path / "s"),
        ]
    )
    assert code == 2
    assert "cannot sweep" in capsys.readouterr().err
    assert "boundary" not in SWEEPABLE


def test_sweep_requires_an_experiment(tmp_path, capsys):
    assert main(["sweep", "--set", "n=25", "--out", str(tmp_path / "s")]) == 2
    assert "requires the experiment key" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# usage plumbing
# ---------------------------------------------------------------------------

def test_bad_flags_are_usage_errors(capsys):
    assert main(["experiment", "evolve1d", "--bogus"]) == 1
    assert main([]) == 1
    assert main(["train", "--set", "novalue"]) == 1
    err = capsys.readouterr().err
    assert "usage error" in err


def test_help_lists_every_config_key(capsys):
    for command in ("train", "recall", "experiment", "sweep"):
        assert main([command, "--help"]) == 0
        text = capsys.readouterr().out
        for key in CONFIG_KEY_HELP:
            assert key in text
        for key in RUN_KEY_HELP:
            assert key in text
        assert "sweep.<key>" in text
