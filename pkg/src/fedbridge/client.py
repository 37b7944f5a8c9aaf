"""Passive-client simulator: a browser that only relays.

The client fetches a URL, follows every 302 by requesting its Location,
and auto-submits any HTML form it is handed; it never fabricates a
protocol parameter. Every hop is recorded as a trace step, and every
parameter the client sends is checked against the set of values it
previously received from some server, so a scenario can prove the client
stayed a pure relay.
"""

from __future__ import annotations

import http.client
import json
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path
from typing import Callable
from urllib.parse import parse_qsl, urlencode, urljoin, urlparse

from .errors import ScenarioSetupError

MAX_STEPS = 12


@dataclass
class TraceStep:
    actor: str
    method: str
    url: str
    params: dict[str, str]
    outcome: str


@dataclass
class ScenarioTrace:
    steps: list[TraceStep] = field(default_factory=list)
    verdict: str = "Fail"
    reason: str | None = None

    @property
    def passed(self) -> bool:
        return self.verdict == "Pass"

    def to_dict(self) -> dict:
        return {
            "steps": [vars(step) for step in self.steps],
            "verdict": self.verdict,
            "reason": self.reason,
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def param_sequence(self) -> list[list[str]]:
        """Parameter names per step, for asserting the relay pattern."""
        return [sorted(step.params) for step in self.steps if step.params]


def http_exchange(
    method: str,
    url: str,
    fields: list[tuple[str, str]] | None = None,
    timeout: float = 10.0,
) -> tuple[int, dict[str, str], str]:
    """One plain-HTTP request with no redirect following; returns
    (status, headers, body)."""
    parsed = urlparse(url)
    if parsed.scheme != "http":
        raise ScenarioSetupError(f"passive client only speaks plain http: {url}")
    connection = http.client.HTTPConnection(parsed.netloc, timeout=timeout)
    try:
        path = parsed.path or "/"
        if parsed.query:
            path = f"{path}?{parsed.query}"
        if method == "POST":
            connection.request(
                "POST",
                path,
                body=urlencode(fields or []),
                headers={"Content-Type": "application/x-www-form-urlencoded"},
            )
        else:
            connection.request("GET", path)
        response = connection.getresponse()
        payload = response.read().decode("utf-8", errors="replace")
        return response.status, dict(response.getheaders()), payload
    finally:
        connection.close()


class _FormExtractor(HTMLParser):
    def __init__(self) -> None:
        super().__init__()
        self.action: str | None = None
        self.fields: list[tuple[str, str]] = []
        self._in_form = False

    def handle_starttag(self, tag: str, attrs: list[tuple[str, str | None]]) -> None:
        attrs_dict = {k: v or "" for k, v in attrs}
        if tag == "form" and self.action is None:
            self.action = attrs_dict.get("action", "")
            self._in_form = True
        elif tag == "input" and self._in_form and attrs_dict.get("type") == "hidden":
            if "name" in attrs_dict:
                self.fields.append((attrs_dict["name"], attrs_dict.get("value", "")))

    def handle_endtag(self, tag: str) -> None:
        if tag == "form":
            self._in_form = False


def extract_form(body: str) -> tuple[str, list[tuple[str, str]]] | None:
    parser = _FormExtractor()
    parser.feed(body)
    return (parser.action or "", parser.fields) if parser.action is not None else None


@dataclass
class ClientResult:
    steps: list[TraceStep]
    final_status: int
    final_outcome: str
    final_correlation: str
    relay_violations: list[str]


class PassiveClient:
    """Drives one sign-on flow; ``actor_for`` labels servers in the trace."""

    def __init__(self, actor_for: Callable[[str], str] | None = None, timeout: float = 10.0):
        self.actor_for = actor_for or (lambda netloc: netloc)
        self.timeout = timeout

    def run(self, start_url: str) -> ClientResult:
        steps: list[TraceStep] = []
        received: set[str] = set()
        violations: list[str] = []

        method = "GET"
        url = start_url
        fields: list[tuple[str, str]] = []

        for _ in range(MAX_STEPS):
            parsed = urlparse(url)
            params = dict(parse_qsl(parsed.query, keep_blank_values=True)) if method == "GET" else dict(fields)
            for name, value in params.items():
                if value and steps and value not in received:
                    violations.append(f"{name} sent without having been received")

            status, headers, body = self._request(method, url, fields)
            outcome = str(status)
            if "X-Error" in headers:
                outcome = f"{status} {headers['X-Error']}"
            elif "X-Outcome" in headers:
                outcome = f"{status} {headers['X-Outcome']}"
            steps.append(
                TraceStep(
                    actor=self.actor_for(parsed.netloc),
                    method=method,
                    url=url,
                    params=params,
                    outcome=outcome,
                )
            )

            if status in (301, 302, 303):
                location = urljoin(url, headers.get("Location", ""))
                for _, value in parse_qsl(urlparse(location).query, keep_blank_values=True):
                    received.add(value)
                method, url, fields = "GET", location, []
                continue

            if status == 200:
                form = extract_form(body)
                if form is not None and form[0]:
                    action, form_fields = form
                    for _, value in form_fields:
                        received.add(value)
                    method, url, fields = "POST", urljoin(url, action), form_fields
                    continue

            return ClientResult(
                steps=steps,
                final_status=status,
                final_outcome=headers.get("X-Outcome", headers.get("X-Error", "")),
                final_correlation=headers.get("X-Correlation", ""),
                relay_violations=violations,
            )

        return ClientResult(
            steps=steps,
            final_status=-1,
            final_outcome="too-many-steps",
            final_correlation="",
            relay_violations=violations,
        )

    def _request(
        self, method: str, url: str, fields: list[tuple[str, str]]
    ) -> tuple[int, dict[str, str], str]:
        return http_exchange(method, url, fields, timeout=self.timeout)
