"""Chat-completion-style HTTP backend.

Text and base64 page images go out interleaved in one user message; the
reply body's first choice is returned raw for the gateway to parse. The
credential is read from an environment variable at call time and never
appears in config files or argv.
"""

from __future__ import annotations

import os

import requests

from ..errors import AuthError, BackendError, BackendTimeoutError, RateLimitedError
from . import BaseBackend, RequestBudget, RoleRequest, encode_image_part


class RemoteBackend(BaseBackend):
    backend_kind = "remote"

    def __init__(
        self,
        endpoint: str,
        model_name: str,
        credential_env: str = "QAFORGE_API_KEY",
        budget: RequestBudget | None = None,
        post=None,
    ):
        super().__init__(budget=budget)
        self.endpoint = endpoint
        self.model_name = model_name
        self.credential_env = credential_env
        self._post = post or requests.post  # injectable for offline tests

    def _credential(self) -> str:
        value = os.environ.get(self.credential_env, "")
        if not value:
            raise AuthError(f"credential env var {self.credential_env} is not set")
        return value

    def _payload(self, req: RoleRequest) -> dict:
        content: list[dict] = [{"type": "text", "text": req.text_context}]
        for image in req.images:
            ref = getattr(image, "composite_ref", None) or image.payload_ref
            content.append(encode_image_part(ref))
        return {
            "model": self.model_name,
            "messages": [{"role": "user", "content": content}],
            "temperature": 0,
            "response_format": {"type": "json_object"},
        }

    def complete(self, req: RoleRequest) -> str:
        headers = {"Authorization": f"Bearer {self._credential()}"}
        try:
            resp = self._post(
                self.endpoint,
                json=self._payload(req),
                headers=headers,
                timeout=self.budget.timeout,
            )
        except requests.Timeout as exc:
            raise BackendTimeoutError(str(exc)) from exc
        except requests.RequestException as exc:
            raise BackendError(f"transport failure: {exc}") from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"endpoint rejected credential (HTTP {resp.status_code})")
        if resp.status_code == 429:
            raise RateLimitedError("rate limited (HTTP 429)")
        if resp.status_code >= 500:
            # transient server trouble; same retry treatment as a rate limit
            raise RateLimitedError(f"server error (HTTP {resp.status_code})")
        if resp.status_code != 200:
            raise BackendError(f"unexpected HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed completion body: {exc}") from exc
