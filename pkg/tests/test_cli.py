import csv
import json
from pathlib import Path

import numpy as np
import pytest

from focuslime.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from focuslime.dataio import read_dataset, validate
from focuslime.config import RunConfig
from focuslime.focus import explain
from focuslime.models import Budget, SyntheticModel
from focuslime.report import render_explanation

from conftest import synthetic


@pytest.fixture
def suite(tmp_path):
    spec = {"documents": 4, "words_per_document": 300, "paragraphs": 4, "control_documents": 1, "seed": 5}
    (tmp_path / "spec.json").write_text(json.dumps(spec))
    assert main(["synth", "--spec", str(tmp_path / "spec.json"), "--out", str(tmp_path / "suite")]) == EXIT_OK
    cfg_path = tmp_path / "suite" / "config.json"
    cfg = json.loads(cfg_path.read_text())
    cfg["unlimited_samples"] = 200
    cfg["narrow"] = {"steps": 1, "samples_per_step": 32}
    cfg_path.write_text(json.dumps(cfg))
    return tmp_path / "suite"


def run_explain(suite, method, out):
    return main(["explain", "--config", str(suite / "config.json"), "--data", str(suite / "dataset.jsonl"),
                 "--method", method, "--out", str(out)])


def test_synth_outputs(suite):
    records = [json.loads(line) for line in (suite / "dataset.jsonl").read_text().splitlines()]
    model = SyntheticModel.from_dict(json.loads((suite / "model.json").read_text()))
    for rec in records:
        validate(rec, "dataset_record")
        text = rec["document"]
        if rec["id"].startswith("synth"):
            words = {text[e["start"]:e["end"]].casefold() for e in rec["evidence"]}
            assert words == {"governing", "illinois", "law"}
            assert model.p_yes(text) == 0.95
        else:
            assert rec["evidence"] == [] and model.p_yes(text) == 0.05
    validate(model.to_dict(), "synthetic_model")


def test_synth_is_deterministic(suite, tmp_path):
    main(["synth", "--spec", str(tmp_path / "spec.json"), "--out", str(tmp_path / "again")])
    for name in ("dataset.jsonl", "model.json"):
        assert (suite / name).read_bytes() == (tmp_path / "again" / name).read_bytes()


def test_explain_outputs_validate_and_rerun_is_byte_identical(suite, tmp_path):
    assert run_explain(suite, "focus", tmp_path / "a") == EXIT_OK
    assert run_explain(suite, "focus", tmp_path / "b") == EXIT_OK
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        if name.endswith(".json"):
            data = json.loads((tmp_path / "a" / name).read_text())
            validate(data, "summary" if name == "summary.json" else "explanation")


def test_lime_is_explain_with_all_ones_mask(suite, tmp_path):
    assert run_explain(suite, "lime", tmp_path / "lime") == EXIT_OK
    assert run_explain(suite, "focus-no-proxy", tmp_path / "nop") == EXIT_OK
    docs = read_dataset(suite / "dataset.jsonl")
    model = SyntheticModel.from_dict(json.loads((suite / "model.json").read_text()))
    for doc in docs:
        rec = json.loads((tmp_path / "lime" / f"{doc.id}.json").read_text())
        assert rec["focus_mask"] == [1] * doc.n and rec["diagnostics"]["scout"] is None
        direct = explain(doc, synthetic("synthetic-target", model), None, Budget(0), Budget(0),
                         RunConfig.load(suite / "config.json").explain_config(), "lime")
        assert rec["scores"] == [float(x) for x in direct.attribution.scores]
        other = json.loads((tmp_path / "nop" / f"{doc.id}.json").read_text())
        assert other["scores"] == rec["scores"]


def test_evaluate_recall_and_aopc(suite, tmp_path):
    run_explain(suite, "focus", tmp_path / "exp")
    cfg, data = str(suite / "config.json"), str(suite / "dataset.jsonl")
    assert main(["evaluate", "--config", cfg, "--data", data, "--explanations", str(tmp_path / "exp"),
                 "--metric", "aopc", "--out", str(tmp_path / "ev")]) == EXIT_OK
    report = json.loads((tmp_path / "ev" / "aopc.json").read_text())
    validate(report, "aopc_report")
    with open(tmp_path / "ev" / "aopc_per_example.csv") as fh:
        rows = list(csv.DictReader(fh))
    col = [float(r["aopc"]) for r in rows]
    assert report["methods"]["focus"]["summary"]["aopc"] == pytest.approx(np.mean(col), abs=1e-12)
    assert (tmp_path / "ev" / "aopc_curve.png").stat().st_size > 0
    assert main(["evaluate", "--config", cfg, "--data", data, "--explanations", str(tmp_path / "exp"),
                 "--metric", "recall", "--out", str(tmp_path / "ev")]) == EXIT_OK
    rec = json.loads((tmp_path / "ev" / "recall.json").read_text())
    validate(rec, "recall_report")
    assert rec["methods"]["focus"]["skipped"] == ["control-0000"]


def test_evaluate_planted_attribution_and_constant_model(suite, tmp_path):
    docs = read_dataset(suite / "dataset.jsonl")
    exp_dir = tmp_path / "planted"
    exp_dir.mkdir()
    for doc in docs:
        scores = np.zeros(doc.n)
        scores[doc.evidence_units()] = 1.0
        rec = {"id": doc.id, "scores": scores.tolist(),
               "units": [{"start": u.start, "end": u.end, "surface": u.surface} for u in doc.units],
               "focus_mask": [1] * doc.n,
               "diagnostics": {"method": "lime", "seed": 0, "n": doc.n, "n_active": doc.n, "K_requested": 2,
                               "K_used": 2, "fit": {"intercept": 0, "ridge": 0, "r2": 1, "K": 2},
                               "budget": {"target_tokens": 0, "proxy_tokens": 0, "target_tokens_phase1": 0,
                                          "target_limit": 0, "proxy_limit": 0},
                               "scout": None, "warnings": []}}
        (exp_dir / f"{doc.id}.json").write_text(json.dumps(rec))
    cfg = json.loads((suite / "config.json").read_text())
    main(["evaluate", "--config", str(suite / "config.json"), "--data", str(suite / "dataset.jsonl"),
          "--explanations", str(exp_dir), "--metric", "recall", "--out", str(tmp_path / "r")])
    rep = json.loads((tmp_path / "r" / "recall.json").read_text())
    assert rep["methods"]["planted"]["mean"][0] == 1.0
    cfg["target"] = {"model_id": "const", "backend": "synthetic",
                     "synthetic": {"kind": "keyword_and", "keywords": ["zzzz"], "p_on": 0.9, "p_off": 0.4}}
    (suite / "const.json").write_text(json.dumps(cfg))
    main(["evaluate", "--config", str(suite / "const.json"), "--data", str(suite / "dataset.jsonl"),
          "--explanations", str(exp_dir), "--metric", "aopc", "--out", str(tmp_path / "c")])
    rep = json.loads((tmp_path / "c" / "aopc.json").read_text())
    assert set(rep["methods"]["planted"]["curve"]) == {0.0}


def test_evaluate_reports_missing_explanations(suite, tmp_path):
    run_explain(suite, "lime", tmp_path / "exp")
    (tmp_path / "exp" / "synth-0001.json").unlink()
    (tmp_path / "exp" / "synth-0002.json").write_text("{not json")
    code = main(["evaluate", "--config", str(suite / "config.json"), "--data", str(suite / "dataset.jsonl"),
                 "--explanations", str(tmp_path / "exp"), "--metric", "recall", "--out", str(tmp_path / "r")])
    assert code == EXIT_DATA
    rep = json.loads((tmp_path / "r" / "recall.json").read_text())
    assert {m["id"] for m in rep["missing"]} == {"synth-0001", "synth-0002"}
    assert len(rep["methods"]["lime"]["per_example"]) == 2


def test_narrow_one_step_gives_two_rows(suite, tmp_path):
    out = tmp_path / "nar"
    assert main(["narrow", "--config", str(suite / "config.json"), "--data", str(suite / "dataset.jsonl"),
                 "--steps", "1", "--out", str(out)]) == EXIT_OK
    with open(out / "narrow_path.csv") as fh:
        rows = list(csv.DictReader(fh))
    by_id = {}
    for r in rows:
        by_id.setdefault(r["id"], []).append(r)
    assert all(len(v) == 2 for v in by_id.values())
    for doc_id, rs in by_id.items():
        assert [int(r["n_active"]) for r in rs] == [int(rs[0]["n_active"]), int(rs[0]["n_active"]) - 1]
        trace = json.loads((out / f"{doc_id}_narrow.json").read_text())
        validate(trace, "narrowing_trace")
        a, b = (np.array(s["focus_mask"]) for s in trace["steps"])
        assert np.all(b <= a)
        opt = [r for r in rs if r["optimal"] == "1"][0]
        assert float(opt["mean_aopc"]) >= float(rs[0]["mean_aopc"])


def test_report_escapes_and_marks_frozen(tmp_path):
    text = '<script>alert("x")</script> & plain words here too'
    units, pos = [], 0
    for w in text.split(" "):
        units.append({"start": pos, "end": pos + len(w), "surface": w})
        pos += len(w) + 1
    rec = {"id": "evil<id>", "scores": [0.0] * 6, "units": units, "focus_mask": [1, 1, 0, 0, 1, 1],
           "diagnostics": {"method": "focus", "budget": {"target_tokens": 10}, "paragraph_breaks": []}}
    html = render_explanation(rec)
    assert "<script>" not in html and "&lt;script&gt;" in html and "evil&lt;id&gt;" in html
    assert "rgba(" not in html.split('<div class="doc">')[1].split("</div>")[0]
    assert html.count('class="w frozen"') == 2 and html.count('class="w active"') == 4
    assert "http://" not in html and "https://" not in html
    (tmp_path / "x.json").write_text(json.dumps(rec))
    (tmp_path / "broken.json").write_text("[1, 2")
    assert main(["report", "--explanations", str(tmp_path)]) == EXIT_DATA
    assert "could not render" in (tmp_path / "broken.html").read_text()
    assert "&lt;script&gt;" in (tmp_path / "x.html").read_text()


def test_report_colours_follow_sign():
    rec = {"id": "d", "scores": [1.0, -0.5, 0.0], "focus_mask": [1, 1, 1],
           "units": [{"start": 0, "end": 1, "surface": "a"}, {"start": 2, "end": 3, "surface": "b"},
                     {"start": 4, "end": 5, "surface": "c"}], "diagnostics": {}}
    doc = render_explanation(rec).split('<div class="doc">')[1]
    assert "rgba(178,24,43,1.000)" in doc and "rgba(33,102,172,0.500)" in doc and "transparent" in doc


def test_exit_codes(suite, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"target": {"model_id": "t", "backend": "synthetic",
                                          "synthetic": {"kind": "keyword_and", "keywords": ["a"]}},
                               "bogus": 1}))
    data = str(suite / "dataset.jsonl")
    assert main(["explain", "--config", str(bad), "--data", data, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["explain", "--config", str(suite / "config.json"), "--data", str(tmp_path / "nope.jsonl"),
                 "--out", str(tmp_path / "o")]) == EXIT_DATA
    cfg = json.loads((suite / "config.json").read_text())
    cfg["budget"]["target_tokens"] = 50
    (suite / "tiny.json").write_text(json.dumps(cfg))
    out = tmp_path / "tiny"
    assert main(["explain", "--config", str(suite / "tiny.json"), "--data", data, "--out", str(out)]) == EXIT_BUDGET
    summary = json.loads((out / "summary.json").read_text())
    assert summary["succeeded"] == 0 and {f["kind"] for f in summary["failures"]} == {"budget"}
    assert main(["explain", "--config", str(suite / "config.json"), "--data", data]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as info:
        main(["explain", "--data", data])
    assert info.value.code == 2


def test_bad_dataset_records(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text(json.dumps({"id": "a", "document": "x y", "question": "q", "answer": "maybe"}) + "\n")
    from focuslime.dataio import DatasetError
    with pytest.raises(DatasetError):
        read_dataset(path)
    rec = {"id": "a", "document": "x y", "question": "q", "answer": "yes", "evidence": [{"start": 0, "end": 9}]}
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(Exception):
        read_dataset(path)
    rec["evidence"] = []
    path.write_text((json.dumps(rec) + "\n") * 2)
    with pytest.raises(DatasetError):
        read_dataset(path)
