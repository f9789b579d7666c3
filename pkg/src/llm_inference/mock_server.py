"""
In-process scripted completion server for deterministic pipeline tests.

A script maps a sample id to the list of completions returned on that
sample's 1st, 2nd, ... request (the last entry repeats once the list runs
out). Keys are looked up in this order:

    "#<n>"             the n-th request overall (1-based)
    "<TEMPLATE>:<id>"  sample <id> prompted with template <TEMPLATE>
    "<id>"             sample <id> under any template
    "<TEMPLATE>:*"     any sample prompted with <TEMPLATE>
    "*"                anything else

The template is recognized from the prompt text (e.g. "T5_MULTI_INST"), and
request counts are kept per template and sample. An entry of null makes the
server answer HTTP 500 for that request.

Script file format (JSON):
    {"0": ["{\"useful\": true}", "..."], "#3": [null], "T5_MULTI_INST:*": ["..."]}
"""

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from ..instruct_dataset.templates import detect_template
from .client import COMPLETIONS_PATH, SAMPLE_ID_HEADER

logger = logging.getLogger(__name__)


class ScriptedResponder:
    """Callable (sample_id, prompt) -> completion text or None (HTTP 500)."""

    def __init__(self, script):
        self.script = {str(k): list(v) for k, v in script.items()}
        for key, responses in self.script.items():
            if not responses:
                raise ValueError("Script entry {!r} has no responses.".format(key))
        self._lock = threading.Lock()
        self._per_sample = {}
        self.request_count = 0

    @classmethod
    def from_file(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            return cls(json.load(f))

    def _responses(self, template_name, key):
        for candidate in ("{}:{}".format(template_name, key), key,
                          "{}:*".format(template_name), "*"):
            if candidate in self.script:
                return self.script[candidate]
        return None

    def __call__(self, sample_id, prompt):
        template = detect_template(prompt or "")
        template_name = template.name if template is not None else ""
        key = str(sample_id)
        with self._lock:
            self.request_count += 1
            ordinal_key = "#{}".format(self.request_count)
            attempt = self._per_sample.get((template_name, key), 0)
            self._per_sample[(template_name, key)] = attempt + 1
        if ordinal_key in self.script:
            return self.script[ordinal_key][0]
        responses = self._responses(template_name, key)
        if responses is None:
            return ""
        return responses[min(attempt, len(responses) - 1)]


def _make_handler(responder, server_state):

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            if self.path.rstrip("/") != COMPLETIONS_PATH:
                self._reply(404, {"error": "unknown path {}".format(self.path)})
                return
            length = int(self.headers.get("Content-Length", 0))
            try:
                data = json.loads(self.rfile.read(length))
                prompt = data["prompt"]
            except (ValueError, KeyError) as e:
                self._reply(400, {"error": "bad request: {}".format(e)})
                return
            with server_state["lock"]:
                server_state["requests"].append(data)
            text = responder(self.headers.get(SAMPLE_ID_HEADER), prompt)
            if text is None:
                self._reply(500, {"error": "scripted failure"})
                return
            self._reply(200, {"object": "text_completion",
                              "model": data.get("model"),
                              "choices": [{"index": 0, "text": text,
                                           "finish_reason": "stop"}]})

        def _reply(self, status, payload):
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, format, *args):
            logger.debug("mock: " + format, *args)

    return Handler


class MockCompletionServer:
    """Completion server on 127.0.0.1 running in a background thread.

    Usage:
        with MockCompletionServer(ScriptedResponder({...})) as server:
            endpoint = EndpointConfig("ckpt", server.base_url)
    """

    def __init__(self, responder, host="127.0.0.1", port=0):
        self.responder = responder
        self._state = {"lock": threading.Lock(), "requests": []}
        self._httpd = ThreadingHTTPServer((host, port), _make_handler(responder, self._state))
        self._httpd.daemon_threads = True
        self._thread = None

    @property
    def base_url(self):
        host, port = self._httpd.server_address[:2]
        return "http://{}:{}".format(host, port)

    @property
    def requests(self):
        """Request bodies received so far, in arrival order."""
        with self._state["lock"]:
            return list(self._state["requests"])

    def start(self):
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
