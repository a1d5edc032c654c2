"""Black-box text -> probability oracles with caching and token budgets.

A :class:`BlackBoxModel` renders a prompt from a (possibly perturbed) document
and a question, charges the prompt's whitespace-token count to a
:class:`Budget` on cache misses, and returns the probability that the model
answers with the requested label.

Two backends exist. ``http_chat`` talks to an OpenAI-compatible
``/v1/chat/completions`` endpoint and reads the first answer token's
log-probabilities. ``synthetic`` evaluates a deterministic function of which
trigger words occur in the document.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import string
import threading
import time
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import httpx

from .errors import (BatchQueryError, BudgetExhausted, ConfigError, ContractViolation,
                     NetworkError, UnparseableResponse)

logger = logging.getLogger(__name__)

DEFAULT_TEMPLATE = "Document:\n{document}\n\nQuestion: {question}\nAnswer with yes or no."
DEFAULT_UNLIMITED_SAMPLES = 1000
MAX_RETRIES = 3


class Role(str, Enum):
    TARGET = "target"
    PROXY = "proxy"


class Backend(str, Enum):
    HTTP_CHAT = "http_chat"
    SYNTHETIC = "synthetic"


class SyntheticKind(str, Enum):
    KEYWORD_AND = "keyword_and"
    WEIGHTED_LINEAR = "weighted_linear"
    CLAUSE = "clause"


_STRIP = string.punctuation + "“”‘’«»"


def normalize_word(word: str) -> str:
    return word.strip(_STRIP).casefold()


@dataclass(frozen=True)
class SyntheticModel:
    """Deterministic model of P(yes) that only looks at trigger-word presence.

    * ``keyword_and``: ``p_on`` when every keyword occurs, else ``p_off``.
    * ``weighted_linear``: ``sigmoid(bias + sum of weights of present words)``.
    * ``clause``: ``p_on`` when all words of at least one clause occur, else ``p_off``.

    Words are compared after stripping surrounding punctuation and case folding.
    """

    kind: SyntheticKind
    keywords: tuple[str, ...] = ()
    weights: tuple[tuple[str, float], ...] = ()
    clauses: tuple[tuple[str, ...], ...] = ()
    p_on: float = 0.95
    p_off: float = 0.05
    bias: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SyntheticKind(self.kind))
        if not (0.0 <= self.p_on <= 1.0 and 0.0 <= self.p_off <= 1.0):
            raise ConfigError("p_on and p_off must lie in [0, 1]")
        if self.kind is SyntheticKind.KEYWORD_AND and not self.keywords:
            raise ConfigError("keyword_and model needs at least one keyword")
        if self.kind is SyntheticKind.WEIGHTED_LINEAR and not self.weights:
            raise ConfigError("weighted_linear model needs weights")
        if self.kind is SyntheticKind.CLAUSE and not self.clauses:
            raise ConfigError("clause model needs at least one clause")

    @property
    def triggers(self) -> frozenset[str]:
        if self.kind is SyntheticKind.KEYWORD_AND:
            words = self.keywords
        elif self.kind is SyntheticKind.WEIGHTED_LINEAR:
            words = [w for w, _ in self.weights]
        else:
            words = [w for clause in self.clauses for w in clause]
        return frozenset(normalize_word(w) for w in words)

    def _pattern(self) -> re.Pattern:
        pat = self.__dict__.get("_compiled")
        if pat is None:
            alts = "|".join(sorted((re.escape(t) for t in self.triggers), key=len, reverse=True))
            punct = re.escape(_STRIP)
            pat = re.compile(rf"(?<!\S)[{punct}]*({alts})[{punct}]*(?!\S)", re.IGNORECASE)
            object.__setattr__(self, "_compiled", pat)
        return pat

    def present(self, text: str) -> frozenset[str]:
        found = {m.casefold() for m in self._pattern().findall(text)}
        return frozenset(found & self.triggers)

    def p_yes(self, text: str) -> float:
        present = self.present(text)
        if self.kind is SyntheticKind.KEYWORD_AND:
            hit = all(normalize_word(k) in present for k in self.keywords)
            return self.p_on if hit else self.p_off
        if self.kind is SyntheticKind.CLAUSE:
            hit = any(all(normalize_word(w) in present for w in clause) for clause in self.clauses)
            return self.p_on if hit else self.p_off
        z = self.bias + sum(wt for word, wt in self.weights if normalize_word(word) in present)
        return 1.0 / (1.0 + math.exp(-z))

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind.value}
        if self.kind is SyntheticKind.KEYWORD_AND:
            d.update(keywords=list(self.keywords), p_on=self.p_on, p_off=self.p_off)
        elif self.kind is SyntheticKind.CLAUSE:
            d.update(clauses=[list(c) for c in self.clauses], p_on=self.p_on, p_off=self.p_off)
        else:
            d.update(weights={w: v for w, v in self.weights}, bias=self.bias)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticModel":
        allowed = {"kind", "keywords", "weights", "clauses", "p_on", "p_off", "bias"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown synthetic model keys: {sorted(unknown)}")
        if "kind" not in d:
            raise ConfigError("synthetic model needs a 'kind'")
        try:
            kind = SyntheticKind(d["kind"])
        except ValueError:
            raise ConfigError(f"unknown synthetic model kind {d['kind']!r}") from None
        weights = d.get("weights", {})
        if isinstance(weights, dict):
            weights = weights.items()
        return cls(
            kind=kind,
            keywords=tuple(d.get("keywords", ())),
            weights=tuple((str(w), float(v)) for w, v in weights),
            clauses=tuple(tuple(c) for c in d.get("clauses", ())),
            p_on=float(d.get("p_on", 0.95)),
            p_off=float(d.get("p_off", 0.05)),
            bias=float(d.get("bias", 0.0)),
        )


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    max_parallel: int = 4


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    backend: Backend
    role: Role = Role.TARGET
    endpoint: EndpointConfig | None = None
    synthetic: SyntheticModel | None = None
    label_yes: str = "yes"
    label_no: str = "no"
    prompt_template: str = DEFAULT_TEMPLATE

    def __post_init__(self):
        object.__setattr__(self, "backend", Backend(self.backend))
        object.__setattr__(self, "role", Role(self.role))
        if self.backend is Backend.HTTP_CHAT and (self.endpoint is None or self.synthetic is not None):
            raise ConfigError(f"{self.model_id}: http_chat backend needs an endpoint and no synthetic definition")
        if self.backend is Backend.SYNTHETIC and (self.synthetic is None or self.endpoint is not None):
            raise ConfigError(f"{self.model_id}: synthetic backend needs a synthetic definition and no endpoint")


@dataclass(frozen=True)
class Prediction:
    probability: float
    audit: str = ""

    def __post_init__(self):
        if not (0.0 <= self.probability <= 1.0) or math.isnan(self.probability):
            raise ContractViolation(f"probability {self.probability} outside [0, 1]")


def cost(text: str) -> int:
    """Whitespace-token count of a rendered prompt."""
    return len(text.split())


class Budget:
    """Token budget shared by every query charged against it.

    ``limit == 0`` means unlimited. Charges are serialized by a lock and are
    refused (nothing recorded) when they would take ``consumed`` past the limit.
    """

    def __init__(self, limit: int = 0):
        if limit < 0:
            raise ContractViolation("budget limit must be non-negative")
        self.limit = int(limit)
        self.consumed = 0
        self.ledgers: dict[str, int] = {}
        self._lock = threading.Lock()

    @property
    def unlimited(self) -> bool:
        return self.limit == 0

    @property
    def remaining(self) -> int | None:
        return None if self.unlimited else self.limit - self.consumed

    def charge(self, model_id: str, tokens: int) -> None:
        with self._lock:
            if not self.unlimited and self.consumed + tokens > self.limit:
                raise BudgetExhausted(
                    f"query of {tokens} tokens exceeds remaining budget {self.limit - self.consumed}")
            self.consumed += tokens
            self.ledgers[model_id] = self.ledgers.get(model_id, 0) + tokens

    def spent(self, model_id: str) -> int:
        return self.ledgers.get(model_id, 0)

    def __repr__(self):
        return f"Budget(limit={self.limit}, consumed={self.consumed})"


def k_max(budget: Budget, prompt_cost: int, model: ModelSpec | None = None,
          ceiling: int = DEFAULT_UNLIMITED_SAMPLES) -> int:
    """How many more queries of ``prompt_cost`` tokens the budget allows."""
    if prompt_cost <= 0:
        raise ContractViolation("prompt cost must be positive")
    if budget.unlimited:
        return ceiling
    return budget.remaining // prompt_cost


class QueryCache:
    """In-memory prediction cache, optionally persisted as append-only JSON lines.

    Each line is ``{"key": <sha256 hex>, "p": <float>, "ts": <unix seconds>}``
    plus an ``audit`` string. Later lines win on duplicate keys.
    """

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else None
        self._data: dict[str, Prediction] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    self._data[rec["key"]] = Prediction(float(rec["p"]), rec.get("audit", ""))

    @staticmethod
    def make_key(model_id: str, prompt: str, label: str) -> str:
        canonical = unicodedata.normalize("NFC", prompt).strip()
        payload = json.dumps([model_id, label, canonical], ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def get(self, key: str) -> Prediction | None:
        return self._data.get(key)

    def put(self, key: str, pred: Prediction) -> None:
        with self._lock:
            self._data[key] = pred
            if self.path is not None:
                rec = {"key": key, "p": pred.probability, "ts": int(time.time()), "audit": pred.audit}
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec) + "\n")

    def __len__(self):
        return len(self._data)

    def __contains__(self, key):
        return key in self._data


def _payload_hash(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def extract_probability(body: dict, label: str) -> tuple[float, bool]:
    """Probability of ``label`` from a chat-completions response.

    Returns ``(p, used_fallback)``. With log-probabilities present, ``p`` is the
    summed probability of first-token candidates equal to ``label`` after
    stripping whitespace and case folding. Without them the sampled answer
    string is mapped to 1.0 or 0.0.
    """
    try:
        choice = body["choices"][0]
    except (KeyError, IndexError, TypeError):
        raise UnparseableResponse("response has no choices") from None
    target = label.strip().casefold()
    content = ((choice.get("logprobs") or {}).get("content")) or []
    if content:
        first = content[0]
        cands = {}
        for c in first.get("top_logprobs") or []:
            cands[c["token"]] = c["logprob"]
        cands.setdefault(first.get("token", ""), first.get("logprob", -math.inf))
        yes_no = {"yes", "no", target}
        mass, seen = 0.0, False
        for tok, lp in cands.items():
            norm = tok.strip().casefold()
            if norm in yes_no:
                seen = True
            if norm == target:
                mass += math.exp(lp)
        if not seen:
            raise UnparseableResponse(f"no answer token among {sorted(cands)!r}")
        return min(mass, 1.0), False
    text = ((choice.get("message") or {}).get("content") or "").strip().casefold()
    word = normalize_word(text.split()[0]) if text.split() else ""
    if word == target:
        return 1.0, True
    if word in {"yes", "no"}:
        return 0.0, True
    raise UnparseableResponse(f"unrecognised answer {text[:40]!r}")


class BlackBoxModel:
    """A model behind the uniform ``document -> probability`` interface."""

    def __init__(self, spec: ModelSpec, cache: QueryCache | None = None,
                 transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.spec = spec
        self.cache = cache if cache is not None else QueryCache()
        self._sleep = sleep
        self._client = None
        if spec.backend is Backend.HTTP_CHAT:
            ep = spec.endpoint
            headers = {}
            token = os.environ.get(ep.api_key_env) if ep.api_key_env else None
            if token:
                headers["Authorization"] = f"Bearer {token}"
            self._client = httpx.Client(base_url=ep.base_url, headers=headers,
                                        timeout=ep.timeout, transport=transport)

    @property
    def model_id(self) -> str:
        return self.spec.model_id

    def prompt(self, document: str, question: str = "") -> str:
        return self.spec.prompt_template.format(document=document, question=question)

    def prompt_cost(self, document: str, question: str = "") -> int:
        return cost(self.prompt(document, question))

    def _resolve_label(self, label: str | None) -> str:
        return self.spec.label_yes if label is None else label

    def _call(self, document: str, prompt: str, label: str) -> Prediction:
        if self.spec.backend is Backend.SYNTHETIC:
            p_yes = self.spec.synthetic.p_yes(document)
            if label.casefold() == self.spec.label_no.casefold():
                return Prediction(1.0 - p_yes, "synthetic")
            return Prediction(p_yes, "synthetic")
        return self._http(prompt, label)

    def _http(self, prompt: str, label: str) -> Prediction:
        body = {
            "model": self.spec.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "logprobs": True,
            "top_logprobs": 20,
            "max_tokens": 1,
            "temperature": 0,
        }
        last: Exception | None = None
        for attempt in range(MAX_RETRIES + 1):
            try:
                resp = self._client.post("/v1/chat/completions", json=body)
                if resp.status_code == 429 or resp.status_code >= 500:
                    raise NetworkError(f"HTTP {resp.status_code}")
                if resp.status_code >= 400:
                    raise NetworkError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                payload = resp.json()
                p, fallback = extract_probability(payload, label)
                audit = ("fallback:" if fallback else "logprobs:") + _payload_hash(payload)
                return Prediction(p, audit)
            except (httpx.TransportError, NetworkError) as exc:
                if isinstance(exc, NetworkError) and not str(exc).startswith(("HTTP 429", "HTTP 5")):
                    raise
                last = exc
                if attempt < MAX_RETRIES:
                    delay = 0.5 * 2 ** attempt
                    logger.warning("query to %s failed (%s); retrying in %.1fs", self.model_id, exc, delay)
                    self._sleep(delay)
        raise NetworkError(f"{self.model_id}: giving up after {MAX_RETRIES} retries") from last

    def query(self, document: str, budget: Budget, question: str = "", label: str | None = None) -> Prediction:
        label = self._resolve_label(label)
        prompt = self.prompt(document, question)
        if not prompt.strip():
            raise ContractViolation("empty prompt")
        key = QueryCache.make_key(self.model_id, prompt, label)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        budget.charge(self.model_id, cost(prompt))
        pred = self._call(document, prompt, label)
        self.cache.put(key, pred)
        return pred

    def batch_query(self, documents: Sequence[str], budget: Budget, question: str = "",
                    label: str | None = None, parallelism: int = 1) -> list[Prediction]:
        """Query every document, returning predictions in input order.

        Budget is reserved in input order before any request is sent, so the
        point where the budget runs out does not depend on ``parallelism``.
        On exhaustion the already-reserved prefix still runs and
        :class:`BudgetExhausted` is raised with that prefix as ``partial`` and
        the first unissued position as ``index``.
        """
        label = self._resolve_label(label)
        results: list[Prediction | None] = [None] * len(documents)
        todo: dict[str, list[int]] = {}
        calls: list[tuple[str, str, str]] = []
        exhausted: BudgetExhausted | None = None
        stop = len(documents)
        for i, doc in enumerate(documents):
            prompt = self.prompt(doc, question)
            if not prompt.strip():
                raise ContractViolation(f"empty prompt at index {i}")
            key = QueryCache.make_key(self.model_id, prompt, label)
            hit = self.cache.get(key)
            if hit is not None:
                results[i] = hit
                continue
            if key in todo:
                todo[key].append(i)
                continue
            try:
                budget.charge(self.model_id, cost(prompt))
            except BudgetExhausted as exc:
                exhausted, stop = exc, i
                break
            todo[key] = [i]
            calls.append((key, doc, prompt))

        def run(item):
            key, doc, prompt = item
            return self._call(doc, prompt, label)

        errors: dict[int, Exception] = {}
        workers = max(1, min(parallelism, len(calls)))
        if workers == 1:
            outcomes = []
            for item in calls:
                try:
                    outcomes.append(run(item))
                except Exception as exc:  # noqa: BLE001 - reported per index below
                    outcomes.append(exc)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(run, item) for item in calls]
                outcomes = []
                for fut in futures:
                    try:
                        outcomes.append(fut.result())
                    except Exception as exc:  # noqa: BLE001
                        outcomes.append(exc)
        for (key, _, _), out in zip(calls, outcomes):
            if isinstance(out, Exception):
                for i in todo[key]:
                    errors[i] = out
                continue
            self.cache.put(key, out)
            for i in todo[key]:
                results[i] = out
        if errors:
            first = min(errors)
            raise BatchQueryError(errors, [r for r in results[:first]])
        if exhausted is not None:
            raise BudgetExhausted(str(exhausted), partial=list(results[:stop]), index=stop)
        return results

    def close(self):
        if self._client is not None:
            self._client.close()
