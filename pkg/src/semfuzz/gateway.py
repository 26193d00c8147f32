"""Provider-agnostic chat-completion access.

All LLM traffic in the framework goes through this module.  Three
bindings exist: ``remote`` (OpenAI-compatible chat endpoint), ``replay``
(fixture store keyed by the sha256 of the rendered prompt; bit-exact and
offline), and ``record`` (remote + persist, for refreshing fixtures).
"""
from __future__ import annotations

import hashlib
import json
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema

DEFAULT_TEMPERATURE = 0.5
DEFAULT_TOP_P = 0.1

TEMPLATE_IDS = ("spec_identify", "rule_complete", "strategy_gen", "action_gen")


class GatewayError(Exception):
    pass


class MissingVariable(GatewayError):
    pass


class TransportError(GatewayError):
    pass


class FixtureMiss(GatewayError):
    pass


class SchemaViolation(GatewayError):
    pass


@dataclass(frozen=True)
class ChatRequest:
    template_id: str
    variables: dict
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P


_PLACEHOLDER_RE = re.compile(r"\$\{([a-zA-Z0-9_]+)\}\$")


def _template_text(template_id: str) -> str:
    if template_id not in TEMPLATE_IDS:
        raise MissingVariable(f"unknown template {template_id!r}")
    return resources.files("semfuzz.templates").joinpath(f"{template_id}.txt").read_text()


def render(template_id: str, variables: dict) -> str:
    body = _template_text(template_id)
    names = set(_PLACEHOLDER_RE.findall(body))
    missing = names - set(variables)
    if missing:
        raise MissingVariable(f"{template_id}: unbound placeholders {sorted(missing)}")

    def sub(m):
        v = variables[m.group(1)]
        return v if isinstance(v, str) else json.dumps(v, indent=1)

    return _PLACEHOLDER_RE.sub(sub, body)


def prompt_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Bindings


@dataclass
class ReplayBinding:
    store: Path

    kind = "replay"

    def complete(self, prompt: str, req: ChatRequest) -> str:
        path = Path(self.store) / f"{prompt_key(prompt)}.json"
        if not path.exists():
            raise FixtureMiss(f"no recorded response for {req.template_id} "
                              f"prompt {prompt_key(prompt)[:12]}…")
        return json.loads(path.read_text())["response"]


@dataclass
class RemoteBinding:
    base_url: str
    model: str
    api_key: Optional[str] = None
    max_retries: int = 3
    backoff_s: float = 0.5

    kind = "remote"

    def complete(self, prompt: str, req: ChatRequest) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": req.temperature,
            "top_p": req.top_p,
        }
        url = self.base_url.rstrip("/") + "/chat/completions"
        last = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = requests.post(url, json=payload, headers=headers, timeout=120)
            except requests.RequestException as e:
                last = str(e)
            else:
                if resp.status_code == 200:
                    data = resp.json()
                    return data["choices"][0]["message"]["content"]
                last = f"HTTP {resp.status_code}"
                if resp.status_code not in (429, 500, 502, 503, 504):
                    break
            if attempt < self.max_retries:
                time.sleep(self.backoff_s * (2 ** attempt))
        raise TransportError(f"{url}: {last}")


@dataclass
class RecordBinding:
    store: Path
    inner: RemoteBinding
    model_label: str = ""

    kind = "record"

    def complete(self, prompt: str, req: ChatRequest) -> str:
        response = self.inner.complete(prompt, req)
        save_fixture(self.store, prompt, response,
                     model=self.model_label or self.inner.model,
                     temperature=req.temperature, top_p=req.top_p)
        return response


def save_fixture(store, prompt: str, response: str, model: str = "recorded",
                 temperature: float = DEFAULT_TEMPERATURE,
                 top_p: float = DEFAULT_TOP_P) -> Path:
    store = Path(store)
    store.mkdir(parents=True, exist_ok=True)
    path = store / f"{prompt_key(prompt)}.json"
    path.write_text(json.dumps({
        "prompt": prompt,
        "response": response,
        "model": model,
        "sampling": {"temperature": temperature, "top_p": top_p},
    }, indent=1) + "\n")
    return path


def complete(req: ChatRequest, binding) -> str:
    return binding.complete(render(req.template_id, req.variables), req)


# ---------------------------------------------------------------------------
# Structured-output parsing

_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)

_schema_cache: dict = {}


def _schema(schema_id: str) -> dict:
    if schema_id not in _schema_cache:
        try:
            text = resources.files("semfuzz.schemas").joinpath(f"{schema_id}.json").read_text()
        except FileNotFoundError:
            raise SchemaViolation(f"unknown schema {schema_id!r}") from None
        _schema_cache[schema_id] = json.loads(text)
    return _schema_cache[schema_id]


def parse_structured(raw: str, schema_id: str):
    """Extract the first JSON value from model text and validate it."""
    candidates = [m.group(1) for m in _FENCE_RE.finditer(raw)] + [raw]
    decoder = json.JSONDecoder()
    value = None
    found = False
    for cand in candidates:
        for i, ch in enumerate(cand):
            if ch in "[{":
                try:
                    value, _ = decoder.raw_decode(cand[i:])
                    found = True
                except json.JSONDecodeError:
                    continue
                break
        if found:
            break
    if not found:
        raise SchemaViolation("no JSON value found in model output")
    try:
        jsonschema.validate(value, _schema(schema_id))
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise SchemaViolation(f"{schema_id} at {where}: {e.message}") from None
    return value


def complete_structured(req: ChatRequest, binding, schema_id: str):
    """complete + parse, with one corrective re-prompt on SchemaViolation."""
    raw = complete(req, binding)
    try:
        return parse_structured(raw, schema_id)
    except SchemaViolation as first:
        prompt = render(req.template_id, req.variables) + (
            f"\n\nYour previous output was rejected: {first}. "
            "Reply again with only the corrected JSON."
        )
        raw = binding.complete(prompt, req)
        return parse_structured(raw, schema_id)


def bounded_map(fn, items, max_workers: int = 4):
    """Order-preserving parallel map with bounded in-flight requests."""
    if max_workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))
