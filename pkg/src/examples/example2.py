"""
Example 2: End-to-end run against scripted local endpoints.

Builds the splits from the bundled 10-tweet corpus, serves two fake
checkpoints from an in-process server, runs inference with regeneration and
writes the report, including the drop from the training template to the
chat template.
"""

import os
import argparse
import tempfile

from ..common.tweet_utils import load_records_file
from ..instruct_dataset.templates import TemplateId, render_target
from ..llm_inference.mock_server import MockCompletionServer, ScriptedResponder
from ..pipeline.cli import main

current_dir = os.path.dirname(os.path.realpath(__file__))
data_dir = os.path.join(current_dir, '../common/test_data')

ENDPOINTS = """
[[endpoint]]
name = "first_ckpt"
base_url = "{url}"
rank = 32
template = "T4_MULTI"

[[endpoint]]
name = "second_ckpt"
base_url = "{url}"
rank = 8
template = "T4_MULTI"
"""

if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument('-c', '--corpus', type=str, default=os.path.join(data_dir, 'corpus10.jsonl'))
    parser.add_argument('-o', '--output_dir', type=str, default=None)
    args = parser.parse_args()

    out = args.output_dir or tempfile.mkdtemp(prefix="crisis_example2_")
    data = os.path.join(out, "data")
    runs = os.path.join(out, "runs")
    assert main(["build", "-c", args.corpus, "-o", data]) == 0

    # A sample's first request gets chatter, later ones the correct labels, so
    # first_ckpt is excluded from regeneration and second_ckpt scores 100% on
    # T4. Under the chat template every other sample only ever gets chatter.
    records = load_records_file(args.corpus)
    script = {r.id: ["Sure, happy to help with that.",
                     render_target(TemplateId.T4_MULTI, r.truth)] for r in records}
    for r in records[::2]:
        script["T5_MULTI_INST:" + r.id] = ["Sure, happy to help with that."]
    with MockCompletionServer(ScriptedResponder(script)) as server:
        endpoints = os.path.join(out, "endpoints.toml")
        with open(endpoints, "w", encoding="utf-8") as f:
            f.write(ENDPOINTS.format(url=server.base_url))
        for template in ("T4_MULTI", "T5_MULTI_INST"):
            assert main(["infer", "-m", os.path.join(data, "manifest.json"), "-e", endpoints,
                         "--runs-dir", runs, "-t", template]) == 0

    assert main(["report", "-r", runs, "--test", os.path.join(data, "test.jsonl")]) == 0
    print("report written to {}".format(os.path.join(runs, "report", "report.md")))
