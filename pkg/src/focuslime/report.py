"""Self-contained HTML heatmaps of explanation JSON files."""

from __future__ import annotations

import html
import json
from pathlib import Path
from string import Template

_PAGE = Template("""<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>$title</title>
<style>
body { font-family: Georgia, serif; max-width: 60rem; margin: 2rem auto; line-height: 1.7; color: #222; }
h1 { font-size: 1.3rem; } h2 { font-size: 1.05rem; margin-top: 2rem; }
.doc p { margin: 0 0 1rem 0; }
.w { padding: 0 1px; border-radius: 2px; }
.active { border-bottom: 2px solid #555; }
.frozen { color: #aaa; }
table { border-collapse: collapse; font-size: 0.85rem; font-family: monospace; }
td, th { border: 1px solid #ccc; padding: 2px 8px; text-align: right; }
.legend span { padding: 0 6px; margin-right: 6px; }
.error { color: #a00; }
</style>
</head>
<body>
$body
</body>
</html>
""")

_POS = (178, 24, 43)
_NEG = (33, 102, 172)


def _color(score: float, scale: float) -> str:
    if scale <= 0 or score == 0:
        return "transparent"
    alpha = min(abs(score) / scale, 1.0)
    r, g, b = _POS if score > 0 else _NEG
    return f"rgba({r},{g},{b},{alpha:.3f})"


def _table(header, rows) -> str:
    head = "".join(f"<th>{html.escape(str(h))}</th>" for h in header)
    body = "".join("<tr>" + "".join(f"<td>{html.escape(str(c))}</td>" for c in row) + "</tr>" for row in rows)
    return f"<table><tr>{head}</tr>{body}</table>"


def render_explanation(record: dict) -> str:
    """HTML page for one explanation record (the dict written by ``explain``)."""
    scores = record["scores"]
    focus = record["focus_mask"]
    units = record["units"]
    diag = record.get("diagnostics", {})
    breaks = set(diag.get("paragraph_breaks", []))
    scale = max((abs(s) for s in scores), default=0.0)

    paragraphs, words = [], []
    for i, unit in enumerate(units):
        cls = "w active" if focus[i] else "w frozen"
        words.append(f'<span class="{cls}" style="background:{_color(scores[i], scale)}" '
                     f'title="{scores[i]:+.4g}">{html.escape(unit["surface"])}</span>')
        if i in breaks:
            paragraphs.append(" ".join(words))
            words = []
    if words:
        paragraphs.append(" ".join(words))
    doc_html = "".join(f"<p>{p}</p>" for p in paragraphs)

    parts = [
        f"<h1>{html.escape(record['id'])} ({html.escape(str(diag.get('method', '?')))})</h1>",
        '<div class="legend"><span style="background:rgba(178,24,43,0.6)">supports answer</span>'
        '<span style="background:rgba(33,102,172,0.6)">opposes answer</span>'
        '<span class="active">active (perturbed)</span><span class="frozen">frozen</span></div>',
        f'<div class="doc">{doc_html}</div>',
    ]
    budget = diag.get("budget") or {}
    if budget:
        parts.append("<h2>Budget</h2>" + _table(["item", "tokens"], sorted(budget.items())))
    fit = diag.get("fit") or {}
    parts.append("<h2>Fit</h2>" + _table(
        ["n", "n_active", "K used", "intercept", "weighted R²"],
        [[diag.get("n"), diag.get("n_active"), diag.get("K_used"),
          f"{fit.get('intercept', float('nan')):.4g}", f"{fit.get('r2', float('nan')):.4g}"]]))
    scout = diag.get("scout")
    if scout:
        rows = [[it["iteration"], it["level"], len(it["units"]), len(it["kept"]), it["coverage"],
                 it["proxy_samples"]] for it in scout["iterations"]]
        parts.append(f"<h2>Scouting (stopped: {html.escape(scout['stop_reason'])})</h2>"
                     + _table(["iteration", "level", "units", "kept", "words kept", "proxy samples"], rows))
    for w in diag.get("warnings", []):
        parts.append(f'<p class="error">{html.escape(w)}</p>')
    return _PAGE.substitute(title=html.escape(record["id"]), body="\n".join(parts))


def render_error(name: str, message: str) -> str:
    return _PAGE.substitute(title=html.escape(name),
                            body=f'<h1>{html.escape(name)}</h1><p class="error">{html.escape(message)}</p>')


def render_file(path: Path) -> tuple[str, bool]:
    """``(html, ok)`` for an explanation file; malformed files yield an error page."""
    try:
        record = json.loads(Path(path).read_text(encoding="utf-8"))
        return render_explanation(record), True
    except (OSError, ValueError, KeyError, TypeError, IndexError) as exc:
        return render_error(Path(path).name, f"could not render explanation: {exc}"), False
