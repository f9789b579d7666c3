"""
HTTP client for completion endpoints.

Protocol: POST {base_url}/v1/completions with JSON
{"model", "prompt", "temperature", "max_tokens"}; the reply is JSON whose
`choices[0].text` holds the completion (prompt not echoed). Replies shaped as
`{"text": ...}` or `{"choices": [{"message": {"content": ...}}]}` are also
accepted.
"""

import logging
import os
import time
from dataclasses import asdict, dataclass
from typing import Optional

import requests

from ..common.errors import TransportError
from ..lora.layer import AdaptationTarget

logger = logging.getLogger(__name__)

TOKEN_ENV_VAR = "CRISIS_LLM_API_TOKEN"
COMPLETIONS_PATH = "/v1/completions"
SAMPLE_ID_HEADER = "X-Sample-Id"


@dataclass(frozen=True)
class EndpointConfig:
    """One checkpoint served behind a completion endpoint.

    `name` identifies the checkpoint (e.g. "Chat_Lora_32_1"). `adaptation`
    (an AdaptationTarget; a name is converted), `rank` and `trained_template`
    are metadata recorded in manifests and used for report pairing; they do
    not change requests.
    """
    name: str
    base_url: str
    model: Optional[str] = None
    temperature: float = 0.7
    max_new_tokens: int = 256
    request_timeout: float = 60.0
    max_concurrency: int = 4
    transport_retries: int = 2
    retry_delay: float = 0.5
    adaptation: Optional[AdaptationTarget] = None
    rank: Optional[int] = None
    trained_template: Optional[str] = None

    def __post_init__(self):
        if not self.name:
            raise ValueError("Endpoint name must be non-empty.")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0 ({}).".format(self.name))
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1 ({}).".format(self.name))
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1 ({}).".format(self.name))
        if self.transport_retries < 0:
            raise ValueError("transport_retries must be >= 0 ({}).".format(self.name))
        if self.adaptation is not None:
            try:
                adaptation = AdaptationTarget.parse(self.adaptation)
            except ValueError as e:
                raise ValueError("{} ({}).".format(e, self.name)) from None
            object.__setattr__(self, "adaptation", adaptation)

    def to_dict(self):
        d = asdict(self)
        if self.adaptation is not None:
            d["adaptation"] = self.adaptation.name
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _completion_text(payload):
    if "choices" in payload:
        choice = payload["choices"][0]
        if "text" in choice:
            return choice["text"]
        return choice["message"]["content"]
    return payload["text"]


class CompletionClient:
    """Thin wrapper around a requests.Session for one endpoint.

    Sessions are not shared across threads; the orchestrator creates one
    client per worker thread.
    """

    def __init__(self, endpoint, session=None):
        self.endpoint = endpoint
        self.session = session or requests.Session()
        token = os.environ.get(TOKEN_ENV_VAR)
        if token:
            self.session.headers["Authorization"] = "Bearer {}".format(token)

    def complete(self, prompt_body, sample_id=None):
        """Single request, no retries.

        The sample id, when given, travels in the `X-Sample-Id` header so
        scripted test servers can answer per sample; real servers ignore it.

        Raises:
            TransportError: connection failure, timeout, non-2xx status or an
                unreadable reply body.
        """
        endpoint = self.endpoint
        data = {
            "model": endpoint.model or endpoint.name,
            "prompt": prompt_body,
            "temperature": endpoint.temperature,
            "max_tokens": endpoint.max_new_tokens,
        }
        url = endpoint.base_url.rstrip("/") + COMPLETIONS_PATH
        try:
            headers = {SAMPLE_ID_HEADER: str(sample_id)} if sample_id is not None else None
            response = self.session.post(url, json=data, headers=headers,
                                         timeout=endpoint.request_timeout)
            response.raise_for_status()
            text = _completion_text(response.json())
        except requests.HTTPError as e:
            raise TransportError(str(e), endpoint.name, e.response.status_code) from e
        except requests.RequestException as e:
            raise TransportError(str(e), endpoint.name) from e
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise TransportError("malformed reply: {!r}".format(e), endpoint.name) from e
        if not isinstance(text, str):
            raise TransportError("completion is not a string", endpoint.name)
        return text

    def close(self):
        self.session.close()


def generate_once(client, prompt, sample_id=None):
    """Request one completion, retrying transport failures.

    After `transport_retries` extra attempts the failure is absorbed and an
    empty string returned, which parses to an all-None prediction.

    Args:
        client: CompletionClient.
        prompt: RenderedPrompt.
        sample_id: forwarded to the endpoint and used in log messages.

    Returns:
        A tuple (raw_text, transport_failed).
    """
    endpoint = client.endpoint
    budget = endpoint.transport_retries + 1
    for attempt in range(1, budget + 1):
        try:
            return client.complete(prompt.body, sample_id), False
        except TransportError as e:
            logger.warning("%s: transport error on sample %s (try %d of %d): %s",
                           endpoint.name, sample_id, attempt, budget, e)
            if attempt < budget and endpoint.retry_delay > 0:
                time.sleep(endpoint.retry_delay * attempt)
    return "", True
