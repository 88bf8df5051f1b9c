import csv
import json
import tempfile
import unittest
from pathlib import Path
from unittest.mock import MagicMock, patch

import numpy as np
from click.testing import CliRunner

from pyocp.cli import cli
from pyocp.command import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_SOLVER,
    ConfigCommand,
    MalmBenchCommand,
    SolveCommand,
    StudyCommand,
)
from pyocp.config import RunConfig
from pyocp.exceptions import ConfigError, LineSearchError, NotApplicable, NotInteriorError


def _outcome(N, converged=True):
    outcome = MagicMock()
    outcome.converged = converged
    outcome.cfg.N = N
    outcome.trajectory.mesh.h = 3.0 / N
    outcome.measures.delta = (3.0 / N) ** 4
    outcome.measures.rho = (3.0 / N) ** 2
    outcome.measures.gamma = 0.0
    outcome.measures.iterations = 7
    outcome.measures.wall_time_s = 0.5
    return outcome


class TestSolveCommand(unittest.TestCase):

    def setUp(self):
        self.tmp_dir = tempfile.TemporaryDirectory()
        self.out_dir = Path(self.tmp_dir.name)

    def tearDown(self):
        self.tmp_dir.cleanup()

    @patch("pyocp.command._echo_success")
    @patch("pyocp.command.ReportRenderer")
    def test_run_success(self, mock_renderer_cls, mock_echo_success):
        mock_renderer = MagicMock()
        mock_renderer_cls.return_value = mock_renderer

        run_config = RunConfig(
            problem="car", method="qpm", p=3, q=4, m=3, N=16, omega=1e-8, out_dir=self.out_dir, trace=True
        )
        cmd = SolveCommand(run_config, raw=True)
        status = cmd.run()

        self.assertEqual(status, EXIT_OK)
        for name in ("solution.csv", "measures.json", "trace.csv", "sparsity.csv"):
            self.assertTrue((self.out_dir / name).exists(), name)
        measures = json.loads((self.out_dir / "measures.json").read_text())
        self.assertIsNotNone(measures["delta"])
        self.assertGreaterEqual(measures["gamma"], 0.0)

        result = mock_renderer.render.call_args[0][0]
        self.assertTrue(result["solver"]["converged"])
        self.assertEqual(mock_renderer.render.call_args[0][1], True)
        mock_echo_success.assert_called_once()

    @patch("pyocp.command.run_once")
    @patch("pyocp.command._echo_error")
    def test_config_error(self, mock_echo_error, mock_run_once):
        mock_run_once.side_effect = ConfigError("--init", "car has no reference solution")

        cmd = SolveCommand(RunConfig(problem="car", method="dcm", out_dir=self.out_dir))
        status = cmd.run()

        self.assertEqual(status, EXIT_CONFIG)
        mock_echo_error.assert_called_once_with("ОШИБКА: --init: car has no reference solution")

    @patch("pyocp.command.run_once")
    @patch("pyocp.command._echo_error")
    def test_invalid_run_config(self, mock_echo_error, mock_run_once):
        cmd = SolveCommand(RunConfig(problem="car", method="qpm", out_dir=self.out_dir))
        status = cmd.run()

        self.assertEqual(status, EXIT_CONFIG)
        mock_run_once.assert_not_called()
        self.assertIn("--omega", mock_echo_error.call_args[0][0])

    @patch("pyocp.command.run_once")
    @patch("pyocp.command._echo_error")
    def test_solver_error_without_report(self, mock_echo_error, mock_run_once):
        mock_run_once.side_effect = NotInteriorError("initial point could not be moved strictly inside the bounds")

        cmd = SolveCommand(RunConfig(problem="car", method="dcm", out_dir=self.out_dir))
        status = cmd.run()

        self.assertEqual(status, EXIT_SOLVER)
        mock_echo_error.assert_called_once_with(
            "ОШИБКА решателя: initial point could not be moved strictly inside the bounds"
        )
        measures = json.loads((self.out_dir / "measures.json").read_text())
        self.assertIsNone(measures["report"])
        self.assertIsNone(measures["rho"])
        self.assertIn("strictly inside", measures["failure"])

    @patch("pyocp.command.ipm.solve")
    @patch("pyocp.command._echo_error")
    @patch("pyocp.command.ReportRenderer")
    def test_partial_report_is_written(self, mock_renderer_cls, mock_echo_error, mock_solve):
        def failing_solve(nlp, x0, config):
            err = LineSearchError("no decrease")
            err.report = MagicMock(
                state=MagicMock(x=x0), converged=False, inner_iters=3, wall_time_s=0.1, message="no decrease"
            )
            raise err

        mock_solve.side_effect = failing_solve
        run_config = RunConfig(problem="car", method="qpm", p=2, q=3, m=2, N=2, omega=1e-6, out_dir=self.out_dir)
        status = SolveCommand(run_config).run()

        self.assertEqual(status, EXIT_SOLVER)
        self.assertTrue((self.out_dir / "solution.csv").exists())
        self.assertIn("no decrease", mock_echo_error.call_args[0][0])


class TestStudyCommand(unittest.TestCase):

    def setUp(self):
        self.tmp_dir = tempfile.TemporaryDirectory()
        self.out_dir = Path(self.tmp_dir.name)

    def tearDown(self):
        self.tmp_dir.cleanup()

    @patch("pyocp.command._echo_error")
    def test_needs_three_levels(self, mock_echo_error):
        cmd = StudyCommand(RunConfig(problem="car", method="dcm", out_dir=self.out_dir), [4, 8])
        self.assertEqual(cmd.run(), EXIT_CONFIG)
        mock_echo_error.assert_called_once()

    @patch("pyocp.command.run_once")
    @patch("pyocp.command.ReportRenderer")
    def test_orders(self, mock_renderer_cls, mock_run_once):
        mock_run_once.side_effect = lambda cfg: _outcome(cfg.N)

        cmd = StudyCommand(RunConfig(problem="car", method="dcm", out_dir=self.out_dir), [16, 4, 8])
        status = cmd.run()

        self.assertEqual(status, EXIT_OK)
        self.assertEqual([row["N"] for row in cmd.rows], [4, 8, 16])
        self.assertAlmostEqual(cmd.orders["delta"], 4.0)
        self.assertAlmostEqual(cmd.orders["rho"], 2.0)
        self.assertIsNone(cmd.orders["gamma"])

        with open(self.out_dir / "study.csv", newline="") as f:
            rows = list(csv.reader(f))
        self.assertEqual(len(rows), 4)
        study = json.loads((self.out_dir / "study.json").read_text())
        self.assertEqual(len(study["levels"]), 3)
        mock_renderer_cls.return_value.render_study.assert_called_once()

    @patch("pyocp.command.run_once")
    @patch("pyocp.command._echo_warning")
    @patch("pyocp.command.ReportRenderer")
    def test_parallel_with_failed_level(self, mock_renderer_cls, mock_echo_warning, mock_run_once):
        mock_run_once.side_effect = lambda cfg: _outcome(cfg.N, converged=cfg.N != 8)

        cmd = StudyCommand(RunConfig(problem="car", method="dcm", out_dir=self.out_dir), [4, 8, 16], parallel=True)
        status = cmd.run()

        self.assertEqual(status, EXIT_SOLVER)
        self.assertEqual(len(cmd.rows), 3)
        mock_echo_warning.assert_called_once()


class TestMalmBenchCommand(unittest.TestCase):

    def setUp(self):
        self.tmp_dir = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp_dir.name) / "bench.csv"

    def tearDown(self):
        self.tmp_dir.cleanup()

    @patch("pyocp.malm.pm_solve")
    @patch("pyocp.malm.malm_solve")
    @patch("pyocp.malm.alm_solve")
    @patch("pyocp.command.ReportRenderer")
    @patch("pyocp.command._echo_success")
    def test_circle_table(
        self, mock_echo_success, mock_renderer_cls, mock_alm_solve, mock_malm_solve, mock_pm_solve
    ):
        mock_alm_solve.return_value = (np.array([0.0, np.sqrt(2.0)]), np.zeros(1), MagicMock(inner_iters=12))
        mock_malm_solve.return_value = (np.array([1.0, 1.0]), np.zeros(1), MagicMock(inner_iters=40))
        mock_pm_solve.side_effect = [
            NotApplicable("circle: penalty method needs pval > 0"),
            (np.array([1.0, 1.0]), MagicMock(inner_iters=5000)),
        ]

        cmd = MalmBenchCommand("circle", [0.0, 1e-2], [0.1], [], 1000, str(self.out))
        status = cmd.run()

        self.assertEqual(status, EXIT_OK)
        self.assertEqual([row["method"] for row in cmd.rows], ["alm", "pm", "malm", "pm"])
        alm, pm_zero, malm_row, pm_row = cmd.rows
        self.assertEqual(alm["e_A"], 0.0)
        self.assertAlmostEqual(alm["e_B"], np.sqrt(1.0 + (np.sqrt(2.0) - 1.0) ** 2))
        self.assertEqual(alm["iters"], 12)
        self.assertEqual(pm_zero["e_A"], "n.a.")
        self.assertEqual(malm_row["e_B"], 0.0)
        self.assertEqual(pm_row["iters"], "n.c.")

        with open(self.out, newline="") as f:
            rows = list(csv.reader(f))
        self.assertEqual(rows[0], ["pval", "eps", "method", "e_A", "e_B", "iters"])
        self.assertEqual(rows[2], ["0.0", "0.1", "pm", "n.a.", "n.a.", "n.a."])

    @patch("pyocp.command._echo_error")
    def test_rejects_bad_input(self, mock_echo_error):
        self.assertEqual(MalmBenchCommand("circle", [0.0], [], [], 100, str(self.out)).run(), EXIT_CONFIG)
        self.assertEqual(MalmBenchCommand("circle", [-1.0], [0.1], [], 100, str(self.out)).run(), EXIT_CONFIG)
        self.assertEqual(MalmBenchCommand("sphere", [0.0], [0.1], [], 100, str(self.out)).run(), EXIT_CONFIG)
        self.assertEqual(mock_echo_error.call_count, 3)
        self.assertFalse(self.out.exists())


class TestConfigCommand(unittest.TestCase):

    @patch("pyocp.command.Config")
    @patch("pyocp.command.click.confirm")
    @patch("pyocp.command.click.prompt")
    @patch("pyocp.command._echo_success")
    def test_config_keep_existing(
        self,
        mock_echo_success,
        mock_prompt,
        mock_confirm,
        mock_config_cls,
    ):
        mock_config = MagicMock()
        mock_config.config_exist.return_value = True
        mock_config_cls.return_value = mock_config

        mock_confirm.return_value = False

        cmd = ConfigCommand()
        status = cmd.run()

        self.assertEqual(status, EXIT_OK)
        mock_prompt.assert_not_called()
        mock_config.save.assert_not_called()

    @patch("pyocp.command.Config")
    @patch("pyocp.command.click.prompt")
    @patch("pyocp.command._echo_usual")
    @patch("pyocp.command._echo_success")
    def test_config_create_new(
        self,
        mock_echo_success,
        mock_echo_usual,
        mock_prompt,
        mock_config_cls,
    ):
        mock_config = MagicMock()
        mock_config.config_exist.return_value = False
        mock_config_cls.return_value = mock_config

        mock_prompt.side_effect = [1e-6, 0.1, 0.1, 0.2, 10, 100, "INFO"]

        cmd = ConfigCommand()
        cmd.run()

        mock_config.save.assert_called_once_with(
            {"tol": 1e-6, "omega0": 0.1, "mu0": 0.1, "shrink": 0.2, "max_outer": 10, "max_inner": 100},
            "INFO",
        )
        mock_echo_success.assert_called_once()


class TestCli(unittest.TestCase):

    def setUp(self):
        for target, value in (("pyocp.cli.solver_settings", {}), ("pyocp.cli._log_level", "WARNING")):
            patcher = patch(target, return_value=value)
            self.addCleanup(patcher.stop)
            patcher.start()

    def test_solve_reports_missing_flag(self):
        with tempfile.TemporaryDirectory() as out_dir:
            result = CliRunner().invoke(cli, ["solve", "-P", "car", "-M", "qpm", "-o", out_dir])
        self.assertEqual(result.exit_code, EXIT_CONFIG)
        self.assertIn("--omega", result.output)

    def test_unknown_problem_is_rejected_by_click(self):
        result = CliRunner().invoke(cli, ["solve", "-P", "rocket", "-M", "dcm"])
        self.assertEqual(result.exit_code, 2)

    @patch("pyocp.cli.StudyCommand")
    def test_study_collects_levels(self, mock_study_cls):
        mock_study_cls.return_value.run.return_value = EXIT_OK

        result = CliRunner().invoke(
            cli, ["study", "-P", "car", "-M", "dcm", "--N", "4", "--N", "8", "--N", "16", "--parallel"]
        )

        self.assertEqual(result.exit_code, EXIT_OK)
        run_config, levels, parallel, raw = mock_study_cls.call_args[0]
        self.assertEqual(levels, [4, 8, 16])
        self.assertTrue(parallel)
        self.assertFalse(raw)
        self.assertEqual(run_config.N, 4)

    @patch("pyocp.cli.MalmBenchCommand")
    def test_malm_bench_arguments(self, mock_bench_cls):
        mock_bench_cls.return_value.run.return_value = EXIT_OK

        result = CliRunner().invoke(
            cli, ["malm-bench", "--instance", "ocp_disc", "--pval", "0", "--pval", "1e-3", "--N", "10"]
        )

        self.assertEqual(result.exit_code, EXIT_OK)
        mock_bench_cls.assert_called_once_with("ocp_disc", [0.0, 1e-3], [], [10], 1000, "malm_bench.csv", False)


if __name__ == "__main__":
    unittest.main()
