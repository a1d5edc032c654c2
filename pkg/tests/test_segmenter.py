import pytest
from hypothesis import given, strategies as st

from focuslime.errors import ContractViolation
from focuslime.segmenter import (Document, Level, Segment, build_tree, decompose, root_segment, tokenize)
from focuslime.synth import SyntheticSuiteSpec, generate_suite


def reconstruct(text, units):
    if not units:
        return text
    out = [text[:units[0].start]]
    for a, b in zip(units, units[1:]):
        out.append(a.surface)
        out.append(text[a.end:b.start])
    out.append(units[-1].surface)
    out.append(text[units[-1].end:])
    return "".join(out)


def test_tokenize_examples():
    assert tokenize("") == []
    units = tokenize("Governing Law.")
    assert [(u.start, u.end, u.surface) for u in units] == [(0, 9, "Governing"), (10, 14, "Law.")]
    text = "one\ttwo  three"
    units = tokenize(text)
    assert len(units) == 3
    assert reconstruct(text, units) == text


@given(st.text(alphabet=st.sampled_from("ab .\n\t!?é"), max_size=80))
def test_tokenize_invariants(text):
    units = tokenize(text)
    assert reconstruct(text, units) == text
    prev_end = -1
    for i, u in enumerate(units):
        assert u.index == i
        assert u.end > u.start > prev_end
        assert text[u.start:u.end] == u.surface
        assert not any(c.isspace() for c in u.surface)
        prev_end = u.end
    assert tokenize(text) == units


def test_decompose_paragraphs():
    doc = Document.from_text("A b.\n\nC d.")
    paras = decompose(doc, root_segment(doc), Level.PARAGRAPH)
    assert [(p.start, p.stop) for p in paras] == [(0, 2), (2, 4)]


def test_single_newline_is_not_a_paragraph_break():
    doc = Document.from_text("A b.\nC d.")
    assert len(decompose(doc, root_segment(doc), "paragraph")) == 1


def test_decompose_sentences():
    doc = Document.from_text("Yes. No? Maybe")
    para = decompose(doc, root_segment(doc), Level.PARAGRAPH)[0]
    sents = decompose(doc, para, Level.SENTENCE)
    assert [(s.start, s.stop) for s in sents] == [(0, 1), (1, 2), (2, 3)]


def test_colon_and_closing_quote_end_sentences():
    doc = Document.from_text('Terms: apply here "Done." next')
    para = decompose(doc, root_segment(doc), "paragraph")[0]
    assert [(s.start, s.stop) for s in decompose(doc, para, "sentence")] == [(0, 1), (1, 4), (4, 5)]


def test_decompose_words_and_bad_transition():
    doc = Document.from_text("one two three. four")
    sent = Segment(Level.SENTENCE, 0, 3)
    words = decompose(doc, sent, Level.WORD)
    assert [(w.start, w.stop) for w in words] == [(0, 1), (1, 2), (2, 3)]
    with pytest.raises(ContractViolation):
        decompose(doc, root_segment(doc), Level.SENTENCE)
    with pytest.raises(ContractViolation):
        decompose(doc, sent, Level.PARAGRAPH)


def test_build_tree_single_word():
    doc = Document.from_text("hello")
    tree = build_tree(doc, Level.WORD)
    (para,) = tree.root.children
    (sent,) = para.children
    (word,) = sent.children
    assert (para.level, sent.level, word.level) == (Level.PARAGRAPH, Level.SENTENCE, Level.WORD)
    assert word.width == 1


def test_build_tree_level_bound():
    doc = Document.from_text("A b. C.\n\nD e.\n\nF g h.")
    tree = build_tree(doc, Level.SENTENCE)
    assert len(tree.level(Level.PARAGRAPH)) == 3
    assert tree.level(Level.WORD) == []


def check_partition(tree, n):
    # direct span checker: every level present tiles [0, n) exactly once, in order
    def walk(seg):
        if seg.children:
            assert all(c.level < seg.level for c in seg.children)
            assert seg.children[0].start == seg.start and seg.children[-1].stop == seg.stop
            for a, b in zip(seg.children, seg.children[1:]):
                assert a.stop == b.start
            for c in seg.children:
                walk(c)
        if seg.level == Level.WORD:
            assert seg.width == 1
    walk(tree.root)
    for level in Level:
        segs = tree.level(level)
        if segs:
            covered = [i for s in segs for i in s.indices()]
            assert covered == list(range(n))


def test_partition_on_corpus_sample():
    recs, _ = generate_suite(SyntheticSuiteSpec(documents=1, words_per_document=500, paragraphs=5))
    doc = Document.from_text(recs[0]["document"])
    assert doc.n == 500
    check_partition(build_tree(doc, Level.WORD), doc.n)


@given(st.lists(st.sampled_from(["w", "x.", "y?", "\n\n", "z:", "\n"]), max_size=40))
def test_partition_property(tokens):
    doc = Document.from_text(" ".join(tokens))
    for deepest in (Level.PARAGRAPH, Level.SENTENCE, Level.WORD):
        tree = build_tree(doc, deepest)
        check_partition(tree, doc.n)
    for seg in build_tree(doc, Level.SENTENCE).level(Level.SENTENCE):
        assert len(decompose(doc, seg, Level.WORD)) == seg.width


def test_evidence_units_and_bounds():
    doc = Document.from_text("alpha beta gamma", evidence=[(6, 10)])
    assert doc.evidence_units() == [1]
    with pytest.raises(ContractViolation):
        Document.from_text("abc", evidence=[(0, 10)])
