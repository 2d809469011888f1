import csv
import os

import pytest

from otfssim import cli, harness

TINY_ARGS = ["--L", "2", "--K", "2", "--ncp", "0", "--paths", "2", "--lmax", "1",
             "--kmax", "1", "--frames", "8", "--batch", "8"]


class TestLoadConfig:
    def test_parses_values_comments_and_blanks(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# experiment grid\n"
            "\n"
            "L = 12\n"
            "K=7\n"
            "snrs = 8,12,16   # dB\n"
            "detectors = bpic-dsc,mmse\n")
        got = cli.load_config(str(path))
        assert got == {"L": "12", "K": "7", "snrs": "8,12,16",
                       "detectors": "bpic-dsc,mmse"}

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("modulation = qam\n")
        with pytest.raises(cli.UsageError):
            cli.load_config(str(path))

    def test_missing_equals_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("frames 100\n")
        with pytest.raises(cli.UsageError):
            cli.load_config(str(path))

    def test_missing_file_rejected(self):
        with pytest.raises(cli.UsageError):
            cli.load_config("/no/such/file.cfg")


class TestExitCodes:
    def test_no_subcommand_is_usage_error(self):
        assert cli.main([]) == 2

    def test_unknown_flag_is_usage_error(self, capsys):
        assert cli.main(["sweep", "--seed", "1", "--warp", "9"]) == 2
        capsys.readouterr()

    def test_sweep_without_seed(self, capsys):
        assert cli.main(["sweep"] + TINY_ARGS) == 2
        assert "--seed" in capsys.readouterr().err

    def test_sweep_config_seed_does_not_replace_flag(self, tmp_path, capsys):
        # the flag is the reproducibility guard; a file value is not enough
        path = tmp_path / "run.cfg"
        path.write_text("seed = 3\n")
        assert cli.main(["sweep", "--config", str(path)] + TINY_ARGS) == 2
        capsys.readouterr()

    def test_unknown_detector_is_usage_error(self, capsys):
        args = ["sweep", "--seed", "1", "--detectors", "genie"] + TINY_ARGS
        assert cli.main(args) == 2
        capsys.readouterr()

    def test_bad_config_value_is_usage_error(self, tmp_path, capsys):
        path = tmp_path / "run.cfg"
        path.write_text("frames = many\n")
        assert cli.main(["sweep", "--seed", "1", "--config", str(path)]) == 2
        capsys.readouterr()

    def test_unwritable_output_is_usage_error(self, capsys):
        args = ["sweep", "--seed", "1", "--out", "/no-such-dir/x.csv"] + TINY_ARGS
        assert cli.main(args) == 2
        assert "not writable" in capsys.readouterr().err

    def test_cell_failure_maps_to_one(self, monkeypatch, capsys):
        def boom(cfg, workers=None, progress=None):
            raise harness.CellFailure("mmse", 8.0, 5, 8, (0, 1, 2))
        monkeypatch.setattr(harness, "run_sweep", boom)
        args = ["sweep", "--seed", "1", "--snrs", "8"] + TINY_ARGS
        assert cli.main(args) == 1
        assert "numerical failure" in capsys.readouterr().err


class TestSweepCommand:
    def test_writes_csv_with_header(self, tmp_path, capsys):
        out = tmp_path / "grid.csv"
        args = (["sweep", "--seed", "9", "--detectors", "mmse", "--snrs", "6,10",
                 "--out", str(out)] + TINY_ARGS)
        assert cli.main(args) == 0
        rows = list(csv.reader(out.open()))
        assert rows[0] == list(harness.CSV_FIELDS)
        assert len(rows) == 3
        assert f"wrote {out}" in capsys.readouterr().out

    def test_flags_override_config_file(self, tmp_path, capsys):
        path = tmp_path / "run.cfg"
        path.write_text("frames = 4\nbatch = 4\ndetectors = mmse\nsnrs = 10\n"
                        "L = 2\nK = 2\nncp = 0\npaths = 2\nlmax = 1\nkmax = 1\n")
        out = tmp_path / "grid.csv"
        args = ["sweep", "--seed", "9", "--config", str(path), "--frames", "8",
                "--batch", "8", "--out", str(out)]
        assert cli.main(args) == 0
        capsys.readouterr()
        rows = list(csv.reader(out.open()))
        assert int(rows[1][2]) == 8  # flag wins over the file's frames = 4


class TestSimulateCommand:
    def test_prints_csv_row(self, capsys):
        args = ["simulate", "--snr", "10", "--detector", "mmse", "--seed", "0"] + TINY_ARGS
        assert cli.main(args) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == ",".join(harness.CSV_FIELDS)
        fields = lines[1].split(",")
        assert fields[0] == "mmse" and int(fields[2]) == 8

    def test_requires_snr(self, capsys):
        assert cli.main(["simulate"] + TINY_ARGS) == 2
        capsys.readouterr()

    def test_trace_prints_iteration_table(self, capsys):
        args = ["simulate", "--snr", "8", "--trace", "2", "--seed", "1"] + TINY_ARGS
        assert cli.main(args) == 0
        out = capsys.readouterr().out
        assert "iter" in out and "stopped after" in out

    def test_trace_rejects_noniterative_detector(self, capsys):
        args = ["simulate", "--snr", "8", "--detector", "mmse", "--trace", "0"] + TINY_ARGS
        assert cli.main(args) == 2
        capsys.readouterr()


def test_shipped_reference_config_works(tmp_path, capsys):
    cfg = os.path.join(os.path.dirname(__file__), "..", "configs", "reference.cfg")
    out = tmp_path / "ref.csv"
    # override the expensive knobs; every file key still gets parsed and typed
    args = ["sweep", "--seed", "1", "--config", cfg, "--detectors", "mmse",
            "--snrs", "10", "--frames", "4", "--batch", "4", "--out", str(out)]
    assert cli.main(args) == 0
    capsys.readouterr()
    assert out.exists()


def test_verify_passes_on_this_build(capsys):
    assert cli.main(["verify"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 7 and "FAIL" not in out
