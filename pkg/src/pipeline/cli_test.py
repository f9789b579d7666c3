import json
import os
import tempfile
import unittest

import pandas as pd

from ..common.manifest import read_manifest, sha256_file
from ..common.tweet_utils import load_records_file
from ..instruct_dataset.build import import_instances
from ..instruct_dataset.templates import TemplateId, render_target, template_digest
from ..llm_inference.mock_server import MockCompletionServer, ScriptedResponder
from ..llm_inference.orchestrate import load_runs
from .cli import EXIT_DATA, EXIT_IO, EXIT_OK, EXIT_USAGE, main

ENDPOINTS_TOML = """
[[endpoint]]
name = "Chat_Lora_32_1"
base_url = "{url}"
adaptation = "QKVO"
rank = 32
template = "T4_MULTI"
retry_delay = 0.0

[[endpoint]]
name = "Full_tune_0.315"
base_url = "{url}"
retry_delay = 0.0
"""


class CliTest(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.corpus = os.path.join(os.path.dirname(os.path.realpath(__file__)),
                                   "../common/test_data/corpus10.jsonl")
        self.data_dir = os.path.join(self.tmp.name, "data")
        self.runs_dir = os.path.join(self.tmp.name, "runs")

    def tearDown(self):
        self.tmp.cleanup()

    def path(self, *parts):
        return os.path.join(self.tmp.name, *parts)

    def build(self, *extra):
        return main(["--log-level", "WARNING", "build", "-c", self.corpus,
                     "-o", self.data_dir] + list(extra))

    def test_build(self):
        self.assertEqual(self.build(), EXIT_OK)
        manifest = read_manifest(os.path.join(self.data_dir, "manifest.json"))
        self.assertEqual(manifest.record_count, 10)
        self.assertEqual((manifest.train_count, manifest.test_count), (8, 2))
        self.assertEqual(manifest.instance_count, 4 * manifest.record_count)
        with open(os.path.join(self.data_dir, "instances.jsonl"), "r", encoding="utf-8") as f:
            instances = import_instances(f)
        self.assertEqual(len(instances), 40)
        self.assertEqual({i.record_id for i in instances},
                         {r.id for r in load_records_file(self.corpus)})
        test = load_records_file(os.path.join(self.data_dir, "test.jsonl"))
        train = load_records_file(os.path.join(self.data_dir, "train.jsonl"))
        self.assertFalse({r.id for r in test} & {r.id for r in train})
        self.assertEqual(sorted(manifest.file_digests),
                         ["instances.jsonl", "test.jsonl", "train.jsonl"])
        for name, digest in manifest.file_digests.items():
            self.assertEqual(sha256_file(os.path.join(self.data_dir, name)), digest)

    def test_build_is_idempotent(self):
        self.assertEqual(self.build(), EXIT_OK)
        snapshot = self._read_data_dir()
        self.assertEqual(self.build(), EXIT_OK)
        self.assertEqual(self._read_data_dir(), snapshot)

    def test_rebuild_writes_new_manifest_version(self):
        self.assertEqual(self.build(), EXIT_OK)
        snapshot = self._read_data_dir()
        self.assertEqual(self.build("--seed", "1"), EXIT_DATA)
        self.assertEqual(self._read_data_dir(), snapshot)

        self.assertEqual(self.build("--seed", "1", "--force"), EXIT_OK)
        rebuilt = self._read_data_dir()
        self.assertEqual(rebuilt["manifest.json"], snapshot["manifest.json"])
        self.assertEqual(read_manifest(os.path.join(self.data_dir, "manifest.json")).seed, 0)
        second = read_manifest(os.path.join(self.data_dir, "manifest.v2.json"))
        self.assertEqual(second.seed, 1)
        self.assertEqual(second.file_digests["test.jsonl"],
                         sha256_file(os.path.join(self.data_dir, "test.jsonl")))
        self.assertEqual(self.build("--seed", "1", "--force"), EXIT_OK)
        self.assertEqual(sorted(n for n in os.listdir(self.data_dir) if n.startswith("manifest")),
                         ["manifest.json", "manifest.v2.json"])

    def test_infer_rejects_test_split_not_in_manifest(self):
        self.assertEqual(self.build(), EXIT_OK)
        test_path = os.path.join(self.data_dir, "test.jsonl")
        with open(test_path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines(keepends=True)
        with open(test_path, "w", encoding="utf-8") as f:
            f.write("".join(reversed(lines)))
        endpoints = self.path("endpoints.toml")
        with open(endpoints, "w", encoding="utf-8") as f:
            f.write(ENDPOINTS_TOML.format(url="http://127.0.0.1:9"))
        self.assertEqual(main(["infer", "-m", os.path.join(self.data_dir, "manifest.json"),
                               "-e", endpoints, "--runs-dir", self.runs_dir]), EXIT_DATA)
        self.assertFalse(os.path.exists(self.runs_dir))

    def _read_data_dir(self):
        contents = {}
        for name in sorted(os.listdir(self.data_dir)):
            with open(os.path.join(self.data_dir, name), "rb") as f:
                contents[name] = f.read()
        return contents

    def test_error_exit_codes(self):
        empty = self.path("empty.jsonl")
        open(empty, "w").close()
        self.assertEqual(main(["build", "-c", empty, "-o", self.data_dir]), EXIT_DATA)
        self.assertEqual(main(["build", "-c", self.path("missing.jsonl"),
                               "-o", self.data_dir]), EXIT_IO)
        self.assertEqual(main([]), EXIT_USAGE)
        self.assertEqual(main(["build"]), EXIT_USAGE)
        self.assertEqual(main(["--log-level", "LOUD", "lora"]), EXIT_USAGE)
        self.assertEqual(main(["--config", self.path("missing.toml"), "lora"]), EXIT_IO)

    def test_report_on_empty_runs_dir(self):
        os.makedirs(self.runs_dir)
        out = self.path("report")
        self.assertEqual(main(["report", "-r", self.runs_dir, "--test",
                               self.path("missing.jsonl"), "-o", out]), EXIT_OK)
        self.assertTrue(os.path.exists(os.path.join(out, "report.md")))
        self.assertEqual(main(["ensemble", "-r", self.runs_dir, "--test",
                               self.path("missing.jsonl")]), EXIT_DATA)

    def test_infer_report_ensemble(self):
        self.assertEqual(self.build(), EXIT_OK)
        records = load_records_file(self.corpus)
        test_ids = [r.id for r in load_records_file(os.path.join(self.data_dir, "test.jsonl"))]
        # correct answers everywhere, except the first test sample under the chat template
        script = {r.id: [render_target(TemplateId.T4_MULTI, r.truth)] for r in records}
        script["T5_MULTI_INST:" + test_ids[0]] = ["I don't know the answer."]
        responder = ScriptedResponder(script)
        manifest = os.path.join(self.data_dir, "manifest.json")
        with MockCompletionServer(responder) as server:
            endpoints = self.path("endpoints.toml")
            with open(endpoints, "w", encoding="utf-8") as f:
                f.write(ENDPOINTS_TOML.format(url=server.base_url))
            for template in ("T4_MULTI", "T5_MULTI_INST"):
                self.assertEqual(main(["infer", "-m", manifest, "-e", endpoints,
                                       "--runs-dir", self.runs_dir, "-t", template,
                                       "--max-concurrency", "2"]), EXIT_OK)
        # T4: 2 endpoints x 2 samples; T5 adds 4 regenerations per endpoint
        self.assertEqual(responder.request_count, 4 + 2 * (2 + 4))
        self.assertEqual(sorted(os.listdir(os.path.join(self.runs_dir, "metrics"))),
                         ["Chat_Lora_32_1__T4_MULTI.json", "Chat_Lora_32_1__T5_MULTI_INST.json",
                          "Full_tune_0.315__T4_MULTI.json",
                          "Full_tune_0.315__T5_MULTI_INST.json"])
        with open(os.path.join(self.runs_dir, "metrics", "Chat_Lora_32_1__T4_MULTI.json"),
                  "r", encoding="utf-8") as f:
            summary = json.load(f)
        self.assertEqual(summary["overall_acc"], 1.0)
        self.assertFalse(summary["excluded_from_regeneration"])
        with open(os.path.join(self.runs_dir, "metrics",
                               "Chat_Lora_32_1__T5_MULTI_INST.json"), "r", encoding="utf-8") as f:
            summary = json.load(f)
        self.assertEqual(summary["overall_acc"], 0.5)
        self.assertEqual(summary["invalid_fraction"], 0.5)

        manifests = os.path.join(self.runs_dir, "manifests")
        self.assertEqual(len(os.listdir(manifests)), 4)
        run_manifest = read_manifest(os.path.join(manifests, "Chat_Lora_32_1__T5_MULTI_INST.json"))
        self.assertEqual(run_manifest.parent_digest, read_manifest(manifest).digest)
        self.assertEqual(run_manifest.template, "T5_MULTI_INST")
        self.assertEqual(run_manifest.template_digest, template_digest())
        self.assertEqual([e["name"] for e in run_manifest.endpoints], ["Chat_Lora_32_1"])
        self.assertEqual(run_manifest.endpoints[0]["adaptation"], "QKVO")
        self.assertEqual(run_manifest.endpoints[0]["trained_template"], "T4_MULTI")
        runs = {(r.name, r.template.name): r for r in load_runs(self.runs_dir)}
        self.assertEqual(runs["Chat_Lora_32_1", "T5_MULTI_INST"].manifest_digest,
                         run_manifest.digest)

        test = os.path.join(self.data_dir, "test.jsonl")
        self.assertEqual(main(["report", "-r", self.runs_dir, "--test", test,
                               "--n-max", "2"]), EXIT_OK)
        report_dir = os.path.join(self.runs_dir, "report")
        board = pd.read_csv(os.path.join(report_dir, "leaderboard.csv"))
        self.assertEqual(board["name"].tolist(), ["Chat_Lora_32_1", "Full_tune_0.315"])
        decrease = pd.read_csv(os.path.join(report_dir, "decrease_ratio.csv"))
        self.assertEqual(decrease["name"].tolist(), ["Chat_Lora_32_1"])
        self.assertEqual(decrease["decrease_ratio"].tolist(), [0.5])
        self.assertEqual(len(pd.read_csv(os.path.join(report_dir, "metrics.csv"))), 4)

        out = self.path("ensemble")
        self.assertEqual(main(["ensemble", "-r", self.runs_dir, "--test", test,
                               "-o", out, "-t", "T5_MULTI_INST", "--n-max", "2"]), EXIT_OK)
        sweep = pd.read_csv(os.path.join(out, "sweep.csv"))
        self.assertEqual(sweep["overall_acc"].tolist(), [0.5] * 4)

    def test_infer_without_endpoints(self):
        self.assertEqual(self.build(), EXIT_OK)
        self.assertEqual(main(["infer", "-m", os.path.join(self.data_dir, "manifest.json"),
                               "--runs-dir", self.runs_dir]), EXIT_USAGE)

    def test_lora(self):
        out = self.path("lora")
        self.assertEqual(main(["lora", "-o", out, "--steps", "20", "--grad-check-seeds", "3",
                               "--d-in", "64", "--d-out", "64"]), EXIT_OK)
        loss = pd.read_csv(os.path.join(out, "loss.csv"))
        self.assertEqual(len(loss), 21)
        self.assertLess(loss["loss"].iloc[-1], loss["loss"].iloc[0])
        checks = pd.read_csv(os.path.join(out, "grad_check.csv"))
        self.assertEqual(checks["seed"].tolist(), [0, 1, 2])
        self.assertTrue((checks["max_rel_error"] < 1e-5).all())
        report = pd.read_csv(os.path.join(out, "param_report.csv"))
        self.assertEqual(report["trainable"].tolist(), [1024, 2048, 4096, 8192])
        self.assertEqual(main(["lora", "-o", out, "--rank", "8"]), EXIT_DATA)


if __name__ == "__main__":
    unittest.main()
