"""Run configuration: one JSON file, strict keys, secrets only through env vars."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, ContractViolation
from .focus import ExplainConfig, ScoutConfig
from .models import DEFAULT_TEMPLATE, EndpointConfig, ModelSpec, SyntheticModel
from .segmenter import Level
from .surrogate import DEFAULT_RIDGE, KernelConfig


def _take(d: dict, allowed: set[str], where: str) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return d


def _num(d: dict, key: str, default, kind=float, where: str = ""):
    value = d.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}{key}: expected a number, got {value!r}")
    if kind is int and int(value) != value:
        raise ConfigError(f"{where}{key}: expected an integer, got {value!r}")
    return kind(value)


@dataclass(frozen=True)
class ModelConfig:
    model_id: str
    backend: str
    synthetic: dict | None = None
    synthetic_file: str | None = None
    endpoint: dict | None = None
    label_yes: str = "yes"
    label_no: str = "no"
    prompt_template: str = DEFAULT_TEMPLATE

    KEYS = {"model_id", "backend", "synthetic", "synthetic_file", "endpoint", "label_yes", "label_no",
            "prompt_template"}
    ENDPOINT_KEYS = {"base_url", "api_key_env", "timeout", "max_parallel"}

    @classmethod
    def from_dict(cls, d: dict, where: str) -> "ModelConfig":
        _take(d, cls.KEYS, where)
        for key in ("model_id", "backend"):
            if not isinstance(d.get(key), str) or not d[key]:
                raise ConfigError(f"{where}.{key}: required string")
        if d["backend"] not in ("http_chat", "synthetic"):
            raise ConfigError(f"{where}.backend: must be 'http_chat' or 'synthetic'")
        if d.get("endpoint") is not None:
            _take(d["endpoint"], cls.ENDPOINT_KEYS, f"{where}.endpoint")
            if not isinstance(d["endpoint"].get("base_url"), str):
                raise ConfigError(f"{where}.endpoint.base_url: required string")
        if d.get("synthetic") is not None:
            SyntheticModel.from_dict(d["synthetic"])
        if d["backend"] == "synthetic" and (d.get("synthetic") is None) == (d.get("synthetic_file") is None):
            raise ConfigError(f"{where}: synthetic backend needs exactly one of 'synthetic' or 'synthetic_file'")
        if d["backend"] == "http_chat" and d.get("endpoint") is None:
            raise ConfigError(f"{where}: http_chat backend needs an 'endpoint'")
        template = d.get("prompt_template", DEFAULT_TEMPLATE)
        if "{document}" not in template:
            raise ConfigError(f"{where}.prompt_template: must contain {{document}}")
        return cls(d["model_id"], d["backend"], d.get("synthetic"), d.get("synthetic_file"), d.get("endpoint"),
                   d.get("label_yes", "yes"), d.get("label_no", "no"), template)

    def to_dict(self) -> dict:
        out = {"model_id": self.model_id, "backend": self.backend}
        for key in ("synthetic", "synthetic_file", "endpoint"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        out.update(label_yes=self.label_yes, label_no=self.label_no, prompt_template=self.prompt_template)
        return out

    def to_spec(self, role: str, base_dir: Path | None = None) -> ModelSpec:
        synthetic = endpoint = None
        if self.backend == "synthetic":
            if self.synthetic is not None:
                synthetic = SyntheticModel.from_dict(self.synthetic)
            else:
                path = Path(self.synthetic_file)
                if not path.is_absolute() and base_dir is not None:
                    path = base_dir / path
                try:
                    synthetic = SyntheticModel.from_dict(json.loads(path.read_text(encoding="utf-8")))
                except OSError as exc:
                    raise ConfigError(f"cannot read synthetic model {path}: {exc}") from exc
        else:
            endpoint = EndpointConfig(**self.endpoint)
        return ModelSpec(self.model_id, self.backend, role, endpoint, synthetic, self.label_yes,
                         self.label_no, self.prompt_template)


@dataclass(frozen=True)
class RunConfig:
    target: ModelConfig
    proxy: ModelConfig | None = None
    target_budget: int = 0
    proxy_budget: int = 0
    eval_budget: int = 0
    scout: ScoutConfig = field(default_factory=ScoutConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    ridge: float = DEFAULT_RIDGE
    seed: int = 0
    parallelism: int = 1
    record_parallelism: int = 1
    cache_path: str | None = None
    output_dir: str | None = None
    unlimited_samples: int = 1000
    proxy_explanation_samples: int = 10000
    max_features: int | None = None
    replacement: str | None = None
    narrow_steps: int = 10
    narrow_samples: int = 200
    aopc_depth: int = 100
    recall_ratios: tuple[float, ...] = (1.0, 1.5, 2.0)
    base_dir: Path | None = field(default=None, compare=False)

    TOP_KEYS = {"target", "proxy", "budget", "scout", "kernel", "ridge", "seed", "parallelism",
                "record_parallelism", "cache_path", "output_dir", "unlimited_samples",
                "proxy_explanation_samples", "max_features", "replacement", "narrow", "aopc_depth",
                "recall_ratios"}

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "RunConfig":
        _take(d, cls.TOP_KEYS, "config")
        if "target" not in d:
            raise ConfigError("config: 'target' model is required")
        target = ModelConfig.from_dict(d["target"], "target")
        proxy = ModelConfig.from_dict(d["proxy"], "proxy") if d.get("proxy") is not None else None
        budget = _take(d.get("budget", {}), {"target_tokens", "proxy_tokens", "eval_tokens"}, "budget")
        sc = _take(d.get("scout", {}), {"k_schedule", "samples_per_unit", "samples_cap", "density_floor",
                                        "max_iter", "deepest_level"}, "scout")
        narrow = _take(d.get("narrow", {}), {"steps", "samples_per_step"}, "narrow")
        kern = _take(d.get("kernel", {}), {"width"}, "kernel")
        try:
            scout = ScoutConfig(
                k_schedule=sc.get("k_schedule", {"paragraph": 3, "sentence": 5, "word": 20}),
                samples_per_unit=_num(sc, "samples_per_unit", 10, int, "scout."),
                samples_cap=_num(sc, "samples_cap", 500, int, "scout."),
                density_floor=_num(sc, "density_floor", 5.0, float, "scout."),
                max_iter=_num(sc, "max_iter", 3, int, "scout."),
                deepest_level=sc.get("deepest_level", "sentence"),
            )
            kernel = KernelConfig(_num(kern, "width", 0.25, float, "kernel."))
        except ContractViolation as exc:
            raise ConfigError(str(exc)) from exc
        ratios = d.get("recall_ratios", [1.0, 1.5, 2.0])
        if not isinstance(ratios, list) or not ratios or any(
                isinstance(r, bool) or not isinstance(r, (int, float)) or r <= 0 for r in ratios):
            raise ConfigError("recall_ratios: expected a non-empty list of positive numbers")
        for key in ("cache_path", "output_dir", "replacement"):
            if d.get(key) is not None and not isinstance(d[key], str):
                raise ConfigError(f"{key}: expected a string")
        cfg = cls(
            target=target,
            proxy=proxy,
            target_budget=_num(budget, "target_tokens", 0, int, "budget."),
            proxy_budget=_num(budget, "proxy_tokens", 0, int, "budget."),
            eval_budget=_num(budget, "eval_tokens", 0, int, "budget."),
            scout=scout,
            kernel=kernel,
            ridge=_num(d, "ridge", DEFAULT_RIDGE),
            seed=_num(d, "seed", 0, int),
            parallelism=_num(d, "parallelism", 1, int),
            record_parallelism=_num(d, "record_parallelism", 1, int),
            cache_path=d.get("cache_path"),
            output_dir=d.get("output_dir"),
            unlimited_samples=_num(d, "unlimited_samples", 1000, int),
            proxy_explanation_samples=_num(d, "proxy_explanation_samples", 10000, int),
            max_features=_num(d, "max_features", None, int),
            replacement=d.get("replacement"),
            narrow_steps=_num(narrow, "steps", 10, int, "narrow."),
            narrow_samples=_num(narrow, "samples_per_step", 200, int, "narrow."),
            aopc_depth=_num(d, "aopc_depth", 100, int),
            recall_ratios=tuple(float(r) for r in ratios),
            base_dir=base_dir,
        )
        if min(cfg.target_budget, cfg.proxy_budget, cfg.eval_budget) < 0:
            raise ConfigError("budgets must be non-negative")
        if cfg.ridge < 0:
            raise ConfigError("ridge must be non-negative")
        if min(cfg.parallelism, cfg.record_parallelism, cfg.unlimited_samples, cfg.proxy_explanation_samples,
               cfg.narrow_steps, cfg.narrow_samples, cfg.aopc_depth) < 1:
            raise ConfigError("counts must be >= 1")
        if cfg.proxy is not None and cfg.proxy.model_id == cfg.target.model_id:
            raise ConfigError("proxy and target need distinct model_id values (they share the cache)")
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data, path.parent)

    def to_dict(self) -> dict:
        return {
            "target": self.target.to_dict(),
            "proxy": self.proxy.to_dict() if self.proxy is not None else None,
            "budget": {"target_tokens": self.target_budget, "proxy_tokens": self.proxy_budget,
                       "eval_tokens": self.eval_budget},
            "scout": {
                "k_schedule": {Level(k).name.lower(): v for k, v in sorted(self.scout.k_schedule.items())},
                "samples_per_unit": self.scout.samples_per_unit,
                "samples_cap": self.scout.samples_cap,
                "density_floor": self.scout.density_floor,
                "max_iter": self.scout.max_iter,
                "deepest_level": self.scout.deepest_level.name.lower(),
            },
            "kernel": {"width": self.kernel.width},
            "ridge": self.ridge,
            "seed": self.seed,
            "parallelism": self.parallelism,
            "record_parallelism": self.record_parallelism,
            "cache_path": self.cache_path,
            "output_dir": self.output_dir,
            "unlimited_samples": self.unlimited_samples,
            "proxy_explanation_samples": self.proxy_explanation_samples,
            "max_features": self.max_features,
            "replacement": self.replacement,
            "narrow": {"steps": self.narrow_steps, "samples_per_step": self.narrow_samples},
            "aopc_depth": self.aopc_depth,
            "recall_ratios": list(self.recall_ratios),
        }

    def explain_config(self) -> ExplainConfig:
        return ExplainConfig(scout=self.scout, kernel=self.kernel, ridge=self.ridge, seed=self.seed,
                             parallelism=self.parallelism, unlimited_samples=self.unlimited_samples,
                             proxy_explanation_samples=self.proxy_explanation_samples,
                             max_features=self.max_features, replacement=self.replacement)

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() or self.base_dir is None else self.base_dir / p
