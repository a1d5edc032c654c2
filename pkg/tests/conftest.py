import numpy as np
import pytest

from focuslime.models import BlackBoxModel, ModelSpec, SyntheticModel
from focuslime.segmenter import Document


def synthetic(model_id, definition, role="target"):
    if isinstance(definition, dict):
        definition = SyntheticModel.from_dict(definition)
    return BlackBoxModel(ModelSpec(model_id, "synthetic", role, synthetic=definition))


@pytest.fixture
def keyword_model():
    return synthetic("kw-target", {"kind": "keyword_and", "keywords": ["governing", "illinois"],
                                   "p_on": 0.95, "p_off": 0.05})


@pytest.fixture
def contract_doc():
    text = ("This Agreement is made between the parties.\n\n"
            "Section 12. Governing Law. This Agreement shall be construed under the laws of Illinois.\n\n"
            "Notices must be sent in writing. Fees are due monthly.")
    return Document.from_text(text, "contract", "Is there a governing law clause?", "yes")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def suite_docs(**kw):
    from focuslime.dataio import record_to_document
    from focuslime.synth import SyntheticSuiteSpec, generate_suite
    recs, model = generate_suite(SyntheticSuiteSpec(**kw))
    return [record_to_document(r) for r in recs], model


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
