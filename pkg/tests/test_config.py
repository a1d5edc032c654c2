import json

import pytest
from hypothesis import given, settings, strategies as st

from focuslime.config import RunConfig
from focuslime.errors import ConfigError
from focuslime.segmenter import Level

SYN = {"kind": "keyword_and", "keywords": ["law"]}


def base():
    return {"target": {"model_id": "t", "backend": "synthetic", "synthetic": SYN},
            "proxy": {"model_id": "p", "backend": "synthetic", "synthetic": SYN}}


def test_defaults_mirror_module_defaults():
    cfg = RunConfig.from_dict(base())
    assert cfg.kernel.width == 0.25 and cfg.ridge == 1e-3
    assert cfg.scout.k_schedule[Level.PARAGRAPH] == 3 and cfg.scout.k_schedule[Level.SENTENCE] == 5
    assert cfg.scout.density_floor == 5 and cfg.scout.max_iter == 3
    assert cfg.scout.deepest_level is Level.SENTENCE
    assert cfg.target_budget == 0


@pytest.mark.parametrize("patch", [
    {"bogus": 1},
    {"budget": {"target_tokens": -1}},
    {"budget": {"tokens": 5}},
    {"scout": {"density_floor": 0.5}},
    {"scout": {"max_iter": 1.5}},
    {"kernel": {"width": 0}},
    {"seed": "7"},
    {"recall_ratios": []},
    {"proxy": {"model_id": "t", "backend": "synthetic", "synthetic": SYN}},
    {"target": {"model_id": "t", "backend": "http_chat"}},
    {"target": {"model_id": "t", "backend": "synthetic"}},
    {"target": {"model_id": "t", "backend": "synthetic", "synthetic": {"kind": "nope"}}},
    {"target": {"model_id": "t", "backend": "http_chat", "endpoint": {"base_url": "http://x", "extra": 1}}},
])
def test_rejects_bad_configs(patch):
    d = base()
    d.update(patch)
    with pytest.raises(ConfigError):
        RunConfig.from_dict(d)


@settings(max_examples=50)
@given(st.integers(0, 10**9), st.integers(0, 10**6), st.floats(1, 50), st.integers(1, 5),
       st.sampled_from(["paragraph", "sentence", "word"]), st.floats(0.01, 2), st.booleans())
def test_round_trip(seed, budget, rho, max_iter, deepest, width, http):
    d = base()
    d.update(seed=seed, budget={"target_tokens": budget, "proxy_tokens": 0, "eval_tokens": 7},
             scout={"density_floor": rho, "max_iter": max_iter, "deepest_level": deepest,
                    "k_schedule": {"paragraph": 2, "sentence": 4, "word": 9}},
             kernel={"width": width}, narrow={"steps": 3, "samples_per_step": 40}, recall_ratios=[0.5, 2])
    if http:
        d["target"] = {"model_id": "gpt", "backend": "http_chat",
                       "endpoint": {"base_url": "http://localhost:8000", "api_key_env": "KEY"}}
    cfg = RunConfig.from_dict(d)
    again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    assert again.to_dict() == cfg.to_dict()


def test_synthetic_file_resolves_relative_to_config(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps(SYN))
    d = base()
    d["target"] = {"model_id": "t", "backend": "synthetic", "synthetic_file": "m.json"}
    (tmp_path / "c.json").write_text(json.dumps(d))
    cfg = RunConfig.load(tmp_path / "c.json")
    spec = cfg.target.to_spec("target", cfg.base_dir)
    assert spec.synthetic.keywords == ("law",)
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.json")
