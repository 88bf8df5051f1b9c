import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from pyocp.config import Config, RunConfig
from pyocp.exceptions import ConfigError, ConfigNotFound


class TestConfig(unittest.TestCase):

    def setUp(self):
        self.tmp_dir = tempfile.TemporaryDirectory()
        self.config_path = Path(self.tmp_dir.name)

        patcher = patch("pyocp.config.Path")
        self.addCleanup(patcher.stop)
        self.mock_path = patcher.start()

        self.mock_path.return_value.expanduser.return_value = self.config_path
        self.mock_path.return_value.__truediv__.side_effect = (
            lambda x: self.config_path / x
        )

    def tearDown(self):
        self.tmp_dir.cleanup()

    def test_config_file_path(self):
        config = Config()
        self.assertEqual(config.file.name, "config.ini")

    def test_save_and_get_solver_settings(self):
        config = Config()
        config.save({"tol": 1e-6, "max_inner": 50}, "info")

        settings = Config().get_solver_settings()
        self.assertEqual(settings, {"tol": 1e-6, "max_inner": 50})
        self.assertIsInstance(settings["max_inner"], int)

    def test_get_log_level(self):
        config = Config()
        config.save({}, "debug")
        self.assertEqual(Config().get_log_level(), "DEBUG")

    def test_get_settings_without_config_raises(self):
        config = Config()
        with self.assertRaises(ConfigNotFound):
            config.get_solver_settings()
        with self.assertRaises(ConfigNotFound):
            config.get_log_level()

    def test_invalid_value_names_key(self):
        (self.config_path / "config.ini").write_text("[solver]\nmax_inner = many\n")
        with self.assertRaises(ConfigError) as ctx:
            Config().get_solver_settings()
        self.assertEqual(ctx.exception.flag, "max_inner")

    def test_unknown_keys_are_ignored(self):
        (self.config_path / "config.ini").write_text("[solver]\nshrink = 0.2\ncolor = red\n")
        self.assertEqual(Config().get_solver_settings(), {"shrink": 0.2})

    def test_config_exist_returns_false_when_empty(self):
        config = Config()
        result = config.config_exist()
        self.assertFalse(result)


class TestRunConfig(unittest.TestCase):

    def assertFlag(self, run_config, flag):
        with self.assertRaises(ConfigError) as ctx:
            run_config.validate()
        self.assertEqual(ctx.exception.flag, flag)

    def test_dcm_defaults(self):
        run_config = RunConfig(problem="car", method="dcm")
        self.assertIs(run_config.validate(), run_config)
        self.assertEqual(run_config.scheme, "lgr")
        self.assertEqual(run_config.N, 16)

    def test_penalty_methods_need_omega(self):
        self.assertFlag(RunConfig(problem="car", method="qpm", q=4, m=3), "--omega")
        self.assertFlag(RunConfig(problem="car", method="pbf", tau=1e-4), "--omega")

    def test_qpm_needs_quadrature_and_sampling(self):
        self.assertFlag(RunConfig(problem="car", method="qpm", omega=1e-3, m=3), "--q")
        self.assertFlag(RunConfig(problem="car", method="qpm", omega=1e-3, q=4), "--m")
        self.assertFlag(RunConfig(problem="car", method="qpm", omega=-1.0, q=4, m=3), "--omega")

    def test_pbf_parameter_order(self):
        self.assertFlag(RunConfig(problem="car", method="pbf", omega=1e-3), "--tau")
        self.assertFlag(RunConfig(problem="car", method="pbf", omega=1e-3, tau=1e-2), "--tau")
        self.assertFlag(RunConfig(problem="car", method="pbf", omega=2.0, tau=1e-2), "--tau")
        RunConfig(problem="car", method="pbf", omega=1e-2, tau=1e-3).validate()

    def test_other_flags(self):
        self.assertFlag(RunConfig(problem="car", method="newton"), "--method")
        self.assertFlag(RunConfig(problem="car", method="dcm", init="random"), "--init")
        self.assertFlag(RunConfig(problem="car", method="dcm", p=0), "--p")
        self.assertFlag(RunConfig(problem="car", method="dcm", N=0), "--N")
        self.assertFlag(RunConfig(problem="car", method="dcm", scheme="rk4"), "--scheme")

    def test_tolerance_precedence(self):
        self.assertEqual(RunConfig(problem="car", method="dcm").tolerance, 1e-7)
        self.assertEqual(RunConfig(problem="car", method="dcm", solver={"tol": 1e-6}).tolerance, 1e-6)
        self.assertEqual(
            RunConfig(problem="car", method="dcm", tol=1e-9, solver={"tol": 1e-6}).tolerance, 1e-9
        )


if __name__ == "__main__":
    unittest.main()
