import os
import tempfile
import unittest

from ..common.errors import ConfigError
from ..instruct_dataset.templates import TemplateId
from ..lora.layer import AdaptationTarget
from . import config as cfg

CONFIG_TOML = """
log_level = "warning"

[build]
seed = 3
out_dir = "built"

[infer]
runs_dir = "my_runs"
template = "type5"
max_concurrency = 2

[[endpoint]]
name = "Chat_Lora_32_1"
base_url = "http://127.0.0.1:8000"
adaptation = "QKVO"
rank = 32
template = "4"
max_concurrency = 6

[[endpoint]]
name = "Full_tune_0.315"
base_url = "http://127.0.0.1:8001"
"""


class ConfigTest(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = self._write("config.toml", CONFIG_TOML)

    def tearDown(self):
        self.tmp.cleanup()

    def _write(self, name, content):
        path = os.path.join(self.tmp.name, name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(content)
        return path

    def test_no_file(self):
        self.assertEqual(cfg.load_config(None), {})
        self.assertEqual(cfg.build_settings({}), cfg.BuildSettings())
        self.assertEqual(cfg.inference_settings({}).template_id(), TemplateId.T4_MULTI)

    def test_file_then_flags(self):
        config = cfg.load_config(self.path)
        build = cfg.build_settings(config, seed=None, train_fraction=None, out_dir=None)
        self.assertEqual(build, cfg.BuildSettings(seed=3, train_fraction=0.8, out_dir="built"))
        self.assertEqual(cfg.build_settings(config, seed=5).seed, 5)

        settings = cfg.inference_settings(config, runs_dir=None, template=None)
        self.assertEqual(settings.runs_dir, "my_runs")
        self.assertEqual(settings.template_id(), TemplateId.T5_MULTI_INST)
        self.assertEqual(cfg.inference_settings(config, template="T4_MULTI").template_id(),
                         TemplateId.T4_MULTI)

    def test_log_level(self):
        config = cfg.load_config(self.path)
        self.assertEqual(cfg.log_level(config), "WARNING")
        self.assertEqual(cfg.log_level(config, "debug"), "DEBUG")
        self.assertEqual(cfg.log_level({}), "INFO")
        with self.assertRaises(ConfigError):
            cfg.log_level({}, "LOUD")

    def test_endpoints(self):
        config = cfg.load_config(self.path)
        endpoints = cfg.load_endpoints(config, cfg.inference_settings(config))
        self.assertEqual([e.name for e in endpoints], ["Chat_Lora_32_1", "Full_tune_0.315"])
        first = endpoints[0]
        self.assertEqual(first.trained_template, "T4_MULTI")
        self.assertEqual(first.rank, 32)
        self.assertIs(first.adaptation, AdaptationTarget.QKVO)
        self.assertEqual(first.max_concurrency, 2)
        self.assertIsNone(endpoints[1].trained_template)
        self.assertEqual(cfg.load_endpoints(config)[0].max_concurrency, 6)

    def test_endpoint_errors(self):
        with self.assertRaises(ConfigError):
            cfg.load_endpoints({})
        with self.assertRaises(ConfigError):
            cfg.endpoint_from_table({"name": "a"})
        with self.assertRaises(ConfigError):
            cfg.endpoint_from_table({"name": "a", "base_url": "u", "colour": "red"})
        with self.assertRaises(ConfigError):
            cfg.endpoint_from_table({"name": "a", "base_url": "u", "adaptation": "MLP"})
        with self.assertRaises(ConfigError):
            cfg.endpoint_from_table({"name": "a", "base_url": "u", "template": "T9"})
        table = {"name": "a", "base_url": "u"}
        with self.assertRaises(ConfigError):
            cfg.load_endpoints({"endpoint": [table, dict(table)]})

    def test_bad_files(self):
        with self.assertRaises(ConfigError):
            cfg.load_config(self._write("bad.toml", "[build\nseed = 1\n"))
        with self.assertRaises(ConfigError):
            cfg.build_settings(cfg.load_config(self._write("extra.toml",
                                                           "[build]\nsed = 1\n")))
        with self.assertRaises(ConfigError):
            cfg.inference_settings({"infer": {"template": "T9"}})
        with self.assertRaises(OSError) as ctx:
            cfg.load_config(os.path.join(self.tmp.name, "missing.toml"))
        self.assertIn("missing.toml", str(ctx.exception))


if __name__ == "__main__":
    unittest.main()
