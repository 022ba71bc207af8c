"""End-to-end command-line checks: validation, artifacts, reproducibility."""

import json

import pytest

from gengap.cli import main
from gengap.codebook import load_codebook

_GD_TINY = [
    "--family", "gd", "--n", "2", "--directions", "4", "--steps", "8",
    "--dprime", "8",
]


def test_run_requires_an_explicit_policy(tmp_path, capsys):
    code = main(["run", *_GD_TINY, "--out", str(tmp_path)])
    assert code == 2
    assert "policy" in capsys.readouterr().err


def test_theorem_mode_rejects_an_oversized_step(tmp_path, capsys):
    base = ["risk", *_GD_TINY, "--policy", "reject-until-E", "--seeds", "1",
            "--mc-samples", "2", "--suffix", "1", "--mode", "reference"]
    assert main([*base, "--eta", "0.9"]) == 2
    assert "theorem" in capsys.readouterr().err
    # the override flag lets an oversized step through validation
    with pytest.warns(UserWarning):
        assert main([*base, "--eta", "0.9", "--no-theorem-mode"]) == 0


def test_generated_codebook_roundtrips(tmp_path, capsys):
    out = tmp_path / "cb.json"
    code = main(["gen-codebook", "--directions", "4", "--dim", "16",
                 "--seed", "3", "--out", str(out)])
    assert code == 0
    assert "wrote" in capsys.readouterr().out
    cb = load_codebook(out)
    assert cb.n_vectors == 4 and cb.dim == 16


def test_smallstep_run_writes_reproducible_artifacts(tmp_path, capsys):
    argv = ["run", "--family", "smallstep", "--eta", "0.1", "--steps", "10",
            "--seeds", "0", "--suffix", "1,2"]
    first, second = tmp_path / "a", tmp_path / "b"
    assert main([*argv, "--out", str(first)]) == 0
    assert main([*argv, "--out", str(second)]) == 0
    assert "overall: pass" in capsys.readouterr().out

    assert (first / "smallstep-s0-trajectory.bin").exists()
    assert (first / "smallstep-s0-trajectory.json").exists()
    assert not (first / "smallstep-s0-dataset.json").exists()  # no dataset here
    summary = json.loads((first / "smallstep-run-summary.json").read_text())
    assert summary["passed"] is True
    assert summary["config"]["eta"] == 0.1
    assert summary["results"][0]["risk"][0]["population_stderr"] == 0.0

    # identical config and seed, identical table, byte for byte
    csv_a = (first / "smallstep-risk.csv").read_bytes()
    csv_b = (second / "smallstep-risk.csv").read_bytes()
    assert csv_a == csv_b


def test_gd_run_artifacts_record_the_event_policy(tmp_path):
    code = main(["run", *_GD_TINY, "--policy", "reject-until-E",
                 "--seeds", "1", "--mc-samples", "200", "--suffix", "1,4",
                 "--out", str(tmp_path)])
    assert code == 0
    report = json.loads((tmp_path / "gd-s1-verify.json").read_text())
    assert report["policy"] == "reject-until-E"
    assert report["passed"] is True
    # on-event runs carry the full closed-form comparison, not a skip note
    assert isinstance(report["trajectory"], dict)
    assert isinstance(report["margins"], dict)
    assert (tmp_path / "gd-s1-dataset.json").exists()
    assert (tmp_path / "codebook.json").exists()
    table = (tmp_path / "gd-risk.csv").read_text().splitlines()
    assert table[0].startswith("seed,family,suffix_length,")
    assert len(table) == 3  # header + one row per requested suffix length


def test_verify_subcommand_reads_back_a_checkpoint(tmp_path, capsys):
    rundir = tmp_path / "run"
    argv = ["--family", "smallstep", "--eta", "0.1", "--steps", "10",
            "--seeds", "0"]
    assert main(["run", *argv, "--out", str(rundir)]) == 0
    checkpoint = rundir / "smallstep-s0-trajectory"

    report_path = tmp_path / "verify.json"
    code = main(["verify", *argv, "--trajectory", str(checkpoint),
                 "--out", str(report_path)])
    assert code == 0
    assert json.loads(report_path.read_text())["passed"] is True

    # a checkpoint for a different horizon has the wrong dimension
    bad = main(["verify", "--family", "smallstep", "--eta", "0.1",
                "--steps", "12", "--trajectory", str(checkpoint)])
    assert bad == 2
    assert "does not match" in capsys.readouterr().err


def test_risk_table_prints_csv(capsys):
    code = main(["risk", "--family", "smallstep", "--eta", "0.1",
                 "--steps", "8", "--suffix", "1,2,4"])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("seed,family,suffix_length,")
    assert len(lines) == 4
    assert all(line.startswith("0,smallstep,") for line in lines[1:])


def test_yaml_config_drives_a_run(tmp_path):
    cfg = tmp_path / "smallstep.yaml"
    cfg.write_text(
        "family: smallstep\neta: 0.1\nsteps: 10\nseeds: [0]\nsuffix: [1, 2]\n"
    )
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "smallstep-run-summary.json").read_text())
    assert summary["passed"] is True
    # a flag on the command line beats the file
    assert main(["run", "--config", str(cfg), "--steps", "12",
                 "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "smallstep-run-summary.json").read_text())
    assert summary["config"]["steps"] == 12


def test_yaml_config_rejects_unknown_keys(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("family: smallstep\neta: 0.1\nsteps: 10\nflavor: spicy\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "flavor" in capsys.readouterr().err


def test_acceptance_command_reports_a_suite(tmp_path, capsys):
    out = tmp_path / "acceptance.json"
    code = main(["acceptance", "gd-event", "--json", str(out)])
    assert code == 0
    assert "gd-event" in capsys.readouterr().out
    payload = json.loads(out.read_text())
    assert payload[0]["suite"] == "gd-event"
    assert payload[0]["passed"] is True
    assert payload[0]["elapsed_seconds"] <= payload[0]["budget_seconds"]


if __name__ == "__main__":
    raise SystemExit(main(["risk", "--family", "smallstep", "--eta", "0.1",
                           "--steps", "8", "--suffix", "1,2,4"]))
