#!/usr/bin/env python3
"""
Integration tests for the command-line interface.

This module tests:
- The run subcommand end to end, including exit codes per abort reason
- Config files, flag precedence and invalid input handling
- The trials subcommand and byte-identical summaries for a fixed seed
- The tables and selftest subcommands
- Application startup as a separate process
"""

import json
import subprocess
import sys
import os

import pytest

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app import EXIT_IO_ERROR, main

APP_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "app.py")
SMALL = ["--n", "8", "--c", "4", "--k", "4", "--d", "300"]


def run_cli(tmp_path, *args, name="report.json"):
    """Run the CLI with --out and return (exit code, parsed or raw output)."""
    out = tmp_path / name
    code = main(list(args) + ["--out", str(out)])
    text = out.read_text(encoding='utf-8') if out.exists() else None
    return code, text


class TestRunCommand:
    """Test suite for the run subcommand."""

    def test_honest_run_delivers(self, tmp_path):
        """Test that an honest noiseless run exits 0 with the message in the report."""
        code, text = run_cli(tmp_path, "run", *SMALL, "--seed", "1", "--message", "a5")
        report = json.loads(text)
        assert code == 0
        assert report['abort'] is None
        assert report['delivered_message'] == "a5"
        assert report['inputs']['message_hex'] == "a5"
        assert report['schema_version'] == 1

    def test_dialogue_run(self, tmp_path):
        """Test a dialogue run with both messages given."""
        code, text = run_cli(tmp_path, "run", *SMALL, "--mode", "qd", "--message", "3c", "--message-b", "c3")
        report = json.loads(text)
        assert code == 0
        assert (report['delivered_message'], report['delivered_message_b']) == ("3c", "c3")

    def test_intercept_resend_exit_code(self, tmp_path):
        """Test exit code 2 when the first CHSH check fails."""
        for seed in range(3):
            code, text = run_cli(tmp_path, "run", *SMALL, "--seed", str(seed), "--adversary", "intercept-resend")
            assert code == 2
            assert json.loads(text)['abort'] == "ChshFirstFailed"

    def test_impersonation_exit_codes(self, tmp_path):
        """Test exit codes 3 and 5 for receiver and sender impersonation."""
        flags = ["--n", "8", "--c", "4", "--k", "16", "--d", "300", "--seed", "2"]
        code, _ = run_cli(tmp_path, "run", *flags, "--adversary", "impersonate-bob")
        assert code == 3

        code, _ = run_cli(tmp_path, "run", *flags, "--adversary", "impersonate-alice")
        assert code == 5

        code, _ = run_cli(tmp_path, "run", *flags, "--adversary", "impersonate-bob", "--knows-id-b")
        assert code == 0

    def test_csv_report(self, tmp_path):
        """Test the one-row CSV rendering of a run."""
        code, text = run_cli(tmp_path, "run", *SMALL, "--format", "csv", name="report.csv")
        lines = text.strip().split("\n")
        assert code == 0
        assert len(lines) == 2
        assert lines[0].split(",")[0] == "seed"

    def test_report_to_stdout(self, capsys):
        """Test that the report goes to standard output without --out."""
        code = main(["run", *SMALL, "--seed", "4"])
        report = json.loads(capsys.readouterr().out)
        assert code == 0
        assert report['seed'] == 4


class TestConfiguration:
    """Test suite for config files and invalid input."""

    def test_odd_length_exit_code(self, tmp_path, capsys):
        """Test that n + c odd exits 1 with a diagnostic on standard error."""
        code, text = run_cli(tmp_path, "run", "--n", "3", "--c", "2")
        assert code == 1
        assert text is None
        assert "odd_length" in capsys.readouterr().err

    def test_unknown_flag_exit_code(self, capsys):
        """Test that argparse usage errors exit 1."""
        with pytest.raises(SystemExit) as info:
            main(["run", "--bogus"])
        assert info.value.code == 1

        with pytest.raises(SystemExit) as info:
            main(["run", "--adversary", "photon-number-splitting"])
        assert info.value.code == 1

    def test_invalid_inputs_exit_code(self, tmp_path):
        """Test malformed messages and identities."""
        code, _ = run_cli(tmp_path, "run", *SMALL, "--message", "1ff")  # More than n = 8 bits
        assert code == 1

        code, _ = run_cli(tmp_path, "run", *SMALL, "--id-a", "0101")
        assert code == 1

        code, _ = run_cli(tmp_path, "run", *SMALL, "--noise-p", "1.5")
        assert code == 1

    def test_short_message_is_padded(self, tmp_path):
        """Test that a hex message shorter than n bits gets leading zeros."""
        flags = ["--n", "16", "--c", "4", "--k", "4", "--d", "300", "--seed", "2"]
        code, text = run_cli(tmp_path, "run", *flags, "--message", "ff")
        report = json.loads(text)
        assert code == 0
        assert report['inputs']['message_hex'] == "00ff"
        assert report['delivered_message'] == "00ff"

    def test_seed_out_of_range_exit_code(self, tmp_path, capsys):
        """Test that seeds outside [0, 2^64) exit 1 instead of being truncated."""
        for seed in ("-1", str(2 ** 64)):
            code, text = run_cli(tmp_path, "run", *SMALL, "--seed", seed)
            assert code == 1
            assert text is None
        assert "seed" in capsys.readouterr().err

        code, text = run_cli(tmp_path, "run", *SMALL, "--seed", str(2 ** 64 - 1))
        assert code == 0
        assert json.loads(text)['seed'] == 2 ** 64 - 1

    def test_config_file_and_flag_precedence(self, tmp_path):
        """Test that flags override config file values."""
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({"n": 8, "c": 4, "k": 4, "d": 300, "seed": 5, "message": "0f"}))

        code, text = run_cli(tmp_path, "run", "--config", str(config_path), "--seed", "6")
        report = json.loads(text)
        assert code == 0
        assert report['seed'] == 6
        assert report['config']['d'] == 300
        assert report['delivered_message'] == "0f"

    def test_config_file_errors(self, tmp_path):
        """Test unknown keys and unreadable config files."""
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({"n": 8, "colour": "blue"}))
        code, _ = run_cli(tmp_path, "run", "--config", str(config_path))
        assert code == 1

        code, _ = run_cli(tmp_path, "run", "--config", str(tmp_path / "missing.json"))
        assert code == 1

    def test_unwritable_output(self, tmp_path):
        """Test the I/O exit code."""
        code = main(["run", *SMALL, "--out", str(tmp_path)])
        assert code == EXIT_IO_ERROR


class TestTrialsCommand:
    """Test suite for the trials subcommand."""

    def test_summary_json(self, tmp_path):
        """Test the summary of a small honest batch."""
        code, text = run_cli(tmp_path, "trials", *SMALL, "--trials", "3", "--seed", "9")
        summary = json.loads(text)
        assert code == 0
        assert summary['trial_count'] == 3
        assert summary['aggregates']['abort_none'] == 3
        assert summary['aggregates']['s_first_mean'] > 2.0

    def test_aborted_trials_still_exit_zero(self, tmp_path):
        """Test that protocol aborts are data, not tool failures."""
        code, text = run_cli(tmp_path, "trials", *SMALL, "--trials", "2", "--adversary", "intercept-resend")
        assert code == 0
        assert json.loads(text)['aggregates']['abort_chsh_first_failed'] == 2

    def test_same_seed_gives_identical_files(self, tmp_path):
        """Test byte-identical JSON and CSV summaries for a fixed seed."""
        args = ["trials", *SMALL, "--trials", "2", "--seed", "13", "--noise-p", "0.05"]
        _, first = run_cli(tmp_path, *args, name="first.json")
        _, second = run_cli(tmp_path, *args, name="second.json")
        assert first == second

        _, first_csv = run_cli(tmp_path, *args, "--format", "csv", name="first.csv")
        _, second_csv = run_cli(tmp_path, *args, "--format", "csv", name="second.csv")
        assert first_csv == second_csv
        assert len(first_csv.strip().split("\n")) == 2

    def test_parallel_workers_match_sequential(self, tmp_path):
        """Test that --workers does not change the summary."""
        args = ["trials", *SMALL, "--trials", "3", "--seed", "17"]
        _, sequential = run_cli(tmp_path, *args, "--workers", "1", name="sequential.json")
        _, parallel = run_cli(tmp_path, *args, "--workers", "2", name="parallel.json")
        assert sequential == parallel

    def test_invalid_trial_count(self, tmp_path):
        """Test that at least one trial is required."""
        code, _ = run_cli(tmp_path, "trials", *SMALL, "--trials", "0")
        assert code == 1


class TestTablesAndSelftest:
    """Test suite for the tables and selftest subcommands."""

    def test_tables_text(self, capsys):
        """Test the text rendering of both tables."""
        assert main(["tables"]) == 0
        out = capsys.readouterr().out
        assert "Direct-communication encoding" in out and "Dialogue encoding" in out
        assert "iσy" in out

    def test_tables_json(self, tmp_path):
        """Test the JSON rendering of both tables."""
        code, text = run_cli(tmp_path, "tables", "--format", "json")
        tables = json.loads(text)
        assert code == 0
        assert len(tables['qsdc_rules']) == 16
        assert len(tables['qd_rules']) == 16

    def test_selftest_passes(self, capsys):
        """Test that every invariant suite passes on a fresh build."""
        assert main(["selftest"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 12
        assert all(line.startswith("PASS") for line in lines)


class TestApplicationStartup:
    """Test suite for running the application as a process."""

    def test_help(self):
        """Test that the entry point starts and prints usage."""
        result = subprocess.run([sys.executable, APP_PATH, "--help"], capture_output=True, text=True, timeout=60)
        assert result.returncode == 0
        assert "selftest" in result.stdout

    def test_tables_process(self):
        """Test the tables subcommand in a separate process."""
        result = subprocess.run([sys.executable, APP_PATH, "tables", "--format", "json"],
                                capture_output=True, text=True, timeout=60)
        assert result.returncode == 0
        assert len(json.loads(result.stdout)['qsdc_rules']) == 16


def test_integration():
    """Run the command-line integration tests that need no fixtures."""
    print("Testing command-line interface...")

    test_tables = TestTablesAndSelftest()
    test_startup = TestApplicationStartup()

    try:
        assert main(["tables"]) == 0
        assert main(["selftest"]) == 0
        print("✓ Tables and selftest working correctly")

        test_startup.test_help()
        test_startup.test_tables_process()
        print("✓ Application startup working correctly")

        print("✅ All integration tests passed!")
        return True

    except Exception as e:
        print(f"❌ Integration tests failed: {e}")
        return False


if __name__ == "__main__":
    success = test_integration()
    exit(0 if success else 1)
