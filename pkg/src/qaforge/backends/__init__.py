"""Model backend abstraction: one call surface for every agent role.

``invoke`` sends a :class:`RoleRequest` to a backend, validates the reply
against its registered schema (with a single repair round-trip), and
retries transient failures within the request budget. ``fan_out`` runs a
batch slot-stable: reply *i* always corresponds to request *i*, and a
failing slot never collapses the batch.
"""

from __future__ import annotations

import base64
import json
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from ..errors import (
    AuthError,
    BackendError,
    BackendTimeoutError,
    RateLimitedError,
    SchemaError,
)
from ..sidecar import EnrichedPage, PageImage
from .schemas import validate_reply

ROLE_PROMPTS = {
    "q_gen": {"QGP", "QRP"},
    "answerer": {"AGP"},
    "judge": {"AP"},
    "validator": {"EVP"},
    "screener": {"suitability"},
}

_CONTEXT_BLOCK = re.compile(r"```json\s*(\{.*?\})\s*```", re.DOTALL)

REPAIR_NOTICE = (
    "\n\nREPAIR: your previous reply failed schema validation ({error}). "
    "Re-emit the full reply as valid JSON matching the requested schema."
)


@dataclass(frozen=True)
class RoleRequest:
    """One prompt-plus-images call for a specific agent role."""

    role: str
    prompt_id: str
    images: tuple[PageImage | EnrichedPage, ...]
    text_context: str
    expected_schema: str

    def __post_init__(self):
        allowed = ROLE_PROMPTS.get(self.role)
        if allowed is None:
            raise ValueError(f"unknown role {self.role!r}")
        if self.prompt_id not in allowed:
            raise ValueError(f"prompt {self.prompt_id!r} is not valid for role {self.role!r}")

    def with_repair(self, error: str) -> "RoleRequest":
        return replace(self, text_context=self.text_context + REPAIR_NOTICE.format(error=error))

    @property
    def is_repair(self) -> bool:
        return "\nREPAIR:" in self.text_context


def extract_context(text: str) -> dict:
    """Pull the machine-readable context block out of a rendered prompt.

    Every prompt template embeds its inputs as a fenced JSON block; the
    last block in the text wins (repair notices are appended after it).
    """
    matches = _CONTEXT_BLOCK.findall(text)
    if not matches:
        raise ValueError("prompt carries no fenced JSON context block")
    return json.loads(matches[-1])


@dataclass(frozen=True)
class RequestBudget:
    retries: int = 2
    timeout: float = 60.0
    max_in_flight: int = 8


@dataclass
class Telemetry:
    attempts: int = 0
    repair_count: int = 0


@dataclass
class SlotResult:
    """Per-slot outcome of a fan-out batch."""

    index: int
    reply: dict | None = None
    telemetry: Telemetry | None = None
    error: Exception | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


class BaseBackend:
    """Common machinery: request log and budget. Subclasses implement complete()."""

    backend_kind = "base"

    def __init__(self, budget: RequestBudget | None = None):
        self.budget = budget or RequestBudget()
        self.request_log: list[tuple[str, str]] = []
        self._log_lock = threading.Lock()

    def record(self, req: RoleRequest):
        with self._log_lock:
            self.request_log.append((req.role, req.prompt_id))

    def complete(self, req: RoleRequest) -> str:
        raise NotImplementedError


def invoke(backend: BaseBackend, req: RoleRequest) -> tuple[dict, Telemetry]:
    """Send one request; return (validated reply, telemetry).

    Transient failures (timeout, rate limit) are retried with exponential
    backoff up to the budget; schema failures get exactly one repair
    round-trip before surfacing as SchemaError. Auth failures are fatal.
    """
    telemetry = Telemetry()
    raw = _attempt_with_retries(backend, req, telemetry)
    reply, error = _parse_and_validate(raw, req.expected_schema)
    if error is not None:
        telemetry.repair_count = 1
        raw = _attempt_with_retries(backend, req.with_repair(error), telemetry)
        reply, error = _parse_and_validate(raw, req.expected_schema)
        if error is not None:
            raise SchemaError(f"reply failed {req.expected_schema!r} validation after repair: {error}")
    assert reply is not None
    return reply, telemetry


def _attempt_with_retries(backend: BaseBackend, req: RoleRequest, telemetry: Telemetry) -> str:
    backoff = 0.25
    last: Exception | None = None
    for attempt in range(1 + backend.budget.retries):
        telemetry.attempts += 1
        backend.record(req)
        try:
            return backend.complete(req)
        except AuthError:
            raise
        except (BackendTimeoutError, RateLimitedError) as exc:
            last = exc
            if attempt < backend.budget.retries:
                time.sleep(backoff)
                backoff *= 2
    assert last is not None
    raise last


def _parse_and_validate(raw: str, schema_id: str) -> tuple[dict | None, str | None]:
    try:
        reply = json.loads(raw)
    except json.JSONDecodeError as exc:
        return None, f"not valid JSON: {exc}"
    error = validate_reply(reply, schema_id)
    if error is not None:
        return None, error
    return reply, None


def fan_out(backend: BaseBackend, reqs: list[RoleRequest], parallelism: int) -> list[SlotResult]:
    """Invoke a batch concurrently; results keep request order, errors stay per-slot."""
    if not reqs:
        raise ValueError("fan_out requires a non-empty request list")
    if parallelism < 1:
        raise ValueError("parallelism must be positive")
    workers = min(parallelism, backend.budget.max_in_flight, len(reqs))

    def run_slot(indexed: tuple[int, RoleRequest]) -> SlotResult:
        index, req = indexed
        try:
            reply, telemetry = invoke(backend, req)
            return SlotResult(index=index, reply=reply, telemetry=telemetry)
        except BackendError as exc:
            return SlotResult(index=index, error=exc)

    if workers == 1:
        return [run_slot(item) for item in enumerate(reqs)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_slot, enumerate(reqs)))


def encode_image_part(payload_ref: str) -> dict:
    with open(payload_ref, "rb") as fh:
        data = base64.b64encode(fh.read()).decode("ascii")
    return {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{data}"}}


def load_backend(config: dict, base_dir=None) -> BaseBackend:
    """Build a backend from the backend-file's ``backend`` section."""
    from .remote import RemoteBackend
    from .simulator import SimScript, SimulatorBackend

    kind = config.get("kind")
    budget_cfg = config.get("budget", {})
    budget = RequestBudget(
        retries=int(budget_cfg.get("retries", 2)),
        timeout=float(budget_cfg.get("timeout", 60.0)),
        max_in_flight=int(budget_cfg.get("max_in_flight", 8)),
    )
    if kind == "simulator":
        script_cfg = config.get("script")
        if script_cfg is None:
            raise ValueError("simulator backend requires a 'script' pack (path or inline object)")
        if isinstance(script_cfg, str):
            from pathlib import Path

            path = Path(script_cfg)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            script = SimScript.from_dict(json.loads(path.read_text()))
        else:
            script = SimScript.from_dict(script_cfg)
        if "seed" in config:
            script = script.with_seed(int(config["seed"]))
        return SimulatorBackend(script, budget=budget)
    if kind == "remote":
        endpoint = config.get("endpoint")
        model = config.get("model")
        if not endpoint or not model:
            raise ValueError("remote backend requires 'endpoint' and 'model'")
        return RemoteBackend(
            endpoint=endpoint,
            model_name=model,
            credential_env=config.get("credential_env", "QAFORGE_API_KEY"),
            budget=budget,
        )
    raise ValueError(f"unknown backend kind: {kind!r}")
